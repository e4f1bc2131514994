#include "stnn/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace stnn::sim {

namespace {

constexpr std::int64_t kEpochStart = 1330560000;  // midnight UTC
constexpr std::int64_t kStrideSeconds = 300;      // 288 steps per day
constexpr std::int64_t kStepsPerDay = 86400 / kStrideSeconds;
constexpr double kExitProbability = 0.18;  // per junction arrival
constexpr double kDemandAmplitude = 0.55;

// Diurnal demand profile; period matches the time-of-day feature exactly.
double demand_profile(std::int64_t t) {
  const double day_fraction = static_cast<double>(t % kStepsPerDay) / kStepsPerDay;
  return 1.0 + kDemandAmplitude * std::sin(2.0 * 3.14159265358979323846 * day_fraction - 1.5707963267948966);
}

std::string sensor_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%03zu", index);
  return buf;
}

}  // namespace

std::int32_t GridNetwork::find_segment(std::int32_t from, std::int32_t to) const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].from_junction == from && segments[i].to_junction == to) {
      return static_cast<std::int32_t>(i);
    }
  }
  fail(ErrorCode::NotFound, "no segment between junctions " + std::to_string(from) + " and " +
                                std::to_string(to));
}

std::vector<std::string> GridNetwork::adjacent_sensor_ids(std::int32_t segment) const {
  const Segment& s = segments[static_cast<std::size_t>(segment)];
  std::vector<std::string> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (static_cast<std::int32_t>(i) == segment) continue;
    const Segment& o = segments[i];
    if (o.from_junction == s.from_junction || o.from_junction == s.to_junction ||
        o.to_junction == s.from_junction || o.to_junction == s.to_junction) {
      out.push_back(o.sensor_id);
    }
  }
  return out;
}

GridNetwork build_grid(std::int32_t rows, std::int32_t cols) {
  if (rows < 2 || cols < 2) fail(ErrorCode::InvalidArgument, "grid needs at least 2x2 junctions");
  GridNetwork g;
  g.junction_rows = rows;
  g.junction_cols = cols;
  const std::int32_t junctions = rows * cols;
  g.outgoing.resize(static_cast<std::size_t>(junctions));
  g.boundary_junction.resize(static_cast<std::size_t>(junctions));
  for (std::int32_t r = 0; r < rows; ++r) {
    for (std::int32_t c = 0; c < cols; ++c) {
      g.boundary_junction[static_cast<std::size_t>(r * cols + c)] =
          r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
    }
  }

  std::int32_t pair_index = 0;
  auto add_pair = [&](std::int32_t a, std::int32_t b) {
    // deterministic length variety so the distance distribution has spread
    const double length = 350.0 + 40.0 * ((5 * pair_index + 3) % 7);
    ++pair_index;
    for (int dir = 0; dir < 2; ++dir) {
      Segment s;
      s.sensor_id = sensor_name(g.segments.size());
      s.from_junction = dir == 0 ? a : b;
      s.to_junction = dir == 0 ? b : a;
      s.length_m = length;
      s.capacity = 60;
      s.traversal_steps = std::max(1, static_cast<int>(std::lround(length / 300.0)));
      g.outgoing[static_cast<std::size_t>(s.from_junction)].push_back(
          static_cast<std::int32_t>(g.segments.size()));
      g.segments.push_back(std::move(s));
    }
  };

  for (std::int32_t r = 0; r < rows; ++r) {
    for (std::int32_t c = 0; c + 1 < cols; ++c) add_pair(r * cols + c, r * cols + c + 1);
  }
  for (std::int32_t r = 0; r + 1 < rows; ++r) {
    for (std::int32_t c = 0; c < cols; ++c) add_pair(r * cols + c, (r + 1) * cols + c);
  }

  // corner and mid-edge junctions feed the network
  std::vector<std::int32_t> feeders = {0, cols - 1, (rows - 1) * cols, rows * cols - 1,
                                       cols / 2, (rows - 1) * cols + cols / 2,
                                       (rows / 2) * cols, (rows / 2) * cols + cols - 1};
  std::sort(feeders.begin(), feeders.end());
  feeders.erase(std::unique(feeders.begin(), feeders.end()), feeders.end());
  int source_index = 0;
  for (std::int32_t feeder : feeders) {
    for (std::int32_t seg : g.outgoing[static_cast<std::size_t>(feeder)]) {
      Segment& s = g.segments[static_cast<std::size_t>(seg)];
      s.is_source = true;
      s.arrival_rate = 10.0 + 3.0 * (source_index % 4);
      ++source_index;
    }
  }
  return g;
}

GridNetwork build_default_grid() { return build_grid(3, 9); }

void ClosureSchedule::validate(const GridNetwork& network) const {
  for (const Closure& c : closures) {
    if (c.segment < 0 || c.segment >= network.num_segments()) {
      fail(ErrorCode::InvalidArgument, "closure names an unknown segment");
    }
    if (c.start >= c.end) fail(ErrorCode::InvalidArgument, "closure interval must be nonempty");
    for (const Closure& o : closures) {
      if (&o != &c && o.segment == c.segment && c.start < o.end && o.start < c.end) {
        fail(ErrorCode::InvalidArgument, "overlapping closures on one segment");
      }
    }
  }
}

bool ClosureSchedule::is_closed(std::int32_t segment, std::int64_t t) const {
  for (const Closure& c : closures) {
    if (c.segment == segment && t >= c.start && t < c.end) return true;
  }
  return false;
}

ClosureSchedule default_schedule(const GridNetwork& network, std::uint64_t seed,
                                 std::int32_t* central_segment_out) {
  // middle-row segment near the grid center, eastbound
  const std::int32_t mid_row = network.junction_rows / 2;
  const std::int32_t mid_col = (network.junction_cols - 1) / 2;
  const std::int32_t central = network.find_segment(mid_row * network.junction_cols + mid_col,
                                                    mid_row * network.junction_cols + mid_col + 1);
  if (central_segment_out != nullptr) *central_segment_out = central;

  ClosureSchedule schedule;
  schedule.closures.push_back({central, 400, 600});
  schedule.closures.push_back({central, 1500, 1900});

  Rng rng(mix_seed(seed, 0xc105edULL));
  for (int extra = 0; extra < 2; ++extra) {
    std::int32_t seg;
    do {
      seg = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(network.num_segments())));
    } while (seg == central);
    const std::int64_t start = 700 + static_cast<std::int64_t>(rng.below(600));
    const std::int64_t length = 120 + static_cast<std::int64_t>(rng.below(130));
    schedule.closures.push_back({seg, start, start + length});
  }
  schedule.validate(network);
  return schedule;
}

SimState make_state(const GridNetwork& network, std::uint64_t seed) {
  SimState state;
  state.vehicles.resize(static_cast<std::size_t>(network.num_segments()));
  state.rng = Rng(mix_seed(seed, 0x7261ffULL));
  return state;
}

std::int64_t SimState::in_flight() const {
  std::int64_t total = 0;
  for (const auto& q : vehicles) total += static_cast<std::int64_t>(q.size());
  return total;
}

std::vector<std::int64_t> step(SimState& state, const GridNetwork& network,
                               const ClosureSchedule& schedule, std::int64_t t) {
  const std::size_t n = static_cast<std::size_t>(network.num_segments());
  std::vector<bool> closed(n);
  for (std::size_t s = 0; s < n; ++s) {
    closed[s] = schedule.is_closed(static_cast<std::int32_t>(s), t);
  }

  // a segment that closes drops its occupants from the system
  for (std::size_t s = 0; s < n; ++s) {
    if (closed[s] && !state.vehicles[s].empty()) {
      state.exited += static_cast<std::int64_t>(state.vehicles[s].size());
      state.vehicles[s].clear();
    }
  }

  std::vector<std::int64_t> counts(n, 0);
  std::vector<std::int32_t> budget(n);
  for (std::size_t s = 0; s < n; ++s) {
    budget[s] = closed[s] ? 0 : network.segments[s].capacity;
  }

  for (auto& q : state.vehicles) {
    for (std::int32_t& remaining : q) {
      if (remaining > 0) --remaining;
    }
  }

  // vehicles at segment ends pick an open outgoing segment with entry budget
  std::vector<std::int32_t> candidates;
  for (std::size_t s = 0; s < n; ++s) {
    auto& q = state.vehicles[s];
    std::size_t write = 0;
    const std::int32_t junction = network.segments[s].to_junction;
    for (std::size_t v = 0; v < q.size(); ++v) {
      if (q[v] > 0) {
        q[write++] = q[v];
        continue;
      }
      if (state.rng.uniform() < kExitProbability) {
        ++state.exited;
        continue;
      }
      candidates.clear();
      for (std::int32_t out : network.outgoing[static_cast<std::size_t>(junction)]) {
        if (budget[static_cast<std::size_t>(out)] > 0) candidates.push_back(out);
      }
      if (candidates.empty()) {
        q[write++] = 0;  // wait and retry next step
        continue;
      }
      const std::int32_t pick =
          candidates[state.rng.below(static_cast<std::uint64_t>(candidates.size()))];
      --budget[static_cast<std::size_t>(pick)];
      ++counts[static_cast<std::size_t>(pick)];
      state.vehicles[static_cast<std::size_t>(pick)].push_back(
          network.segments[static_cast<std::size_t>(pick)].traversal_steps);
    }
    q.resize(write);
  }

  // seeded Poisson arrivals at source segments
  for (std::size_t s = 0; s < n; ++s) {
    const Segment& seg = network.segments[s];
    if (!seg.is_source || closed[s]) continue;
    const double rate = seg.arrival_rate * demand_profile(t);
    int arrivals = state.rng.poisson(rate);
    arrivals = std::min<int>(arrivals, budget[s]);
    for (int v = 0; v < arrivals; ++v) state.vehicles[s].push_back(seg.traversal_steps);
    budget[s] -= arrivals;
    counts[s] += arrivals;
    state.injected += arrivals;
  }
  return counts;
}

std::vector<double> recompute_distances(const GridNetwork& network,
                                        const std::vector<bool>& closed) {
  const std::size_t n = static_cast<std::size_t>(network.num_segments());
  const std::size_t junctions = network.outgoing.size();
  constexpr double inf = std::numeric_limits<double>::infinity();

  // junction-level shortest paths over open segments
  std::vector<double> junc_dist(junctions * junctions, inf);
  using Item = std::pair<double, std::int32_t>;
  for (std::size_t src = 0; src < junctions; ++src) {
    double* dist = junc_dist.data() + src * junctions;
    dist[src] = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.push({0.0, static_cast<std::int32_t>(src)});
    while (!heap.empty()) {
      auto [d, j] = heap.top();
      heap.pop();
      if (d > dist[j]) continue;
      for (std::int32_t seg : network.outgoing[static_cast<std::size_t>(j)]) {
        if (closed[static_cast<std::size_t>(seg)]) continue;
        const Segment& s = network.segments[static_cast<std::size_t>(seg)];
        const double nd = d + s.length_m;
        if (nd < dist[s.to_junction]) {
          dist[s.to_junction] = nd;
          heap.push({nd, s.to_junction});
        }
      }
    }
  }

  // sensor-to-sensor: half of each segment plus the junction path between
  std::vector<double> out(n * n, inf);
  for (std::size_t i = 0; i < n; ++i) {
    const Segment& si = network.segments[i];
    double* row = out.data() + i * n;
    row[i] = 0.0;
    if (closed[i]) continue;
    const double* jd = junc_dist.data() + static_cast<std::size_t>(si.to_junction) * junctions;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || closed[j]) continue;
      const Segment& sj = network.segments[j];
      const double between = jd[sj.from_junction];
      if (std::isfinite(between)) {
        row[j] = 0.5 * si.length_m + between + 0.5 * sj.length_m;
      }
    }
  }
  return out;
}

SimDataset run(const GridNetwork& network, const ClosureSchedule& schedule, std::int64_t steps,
               std::uint64_t seed) {
  if (steps < 1) fail(ErrorCode::InvalidArgument, "simulation needs at least one step");
  schedule.validate(network);
  const std::size_t n = static_cast<std::size_t>(network.num_segments());

  SimDataset ds;
  ds.network = network;
  ds.schedule = schedule;
  ds.x.num_sensors = static_cast<std::int64_t>(n);
  ds.x.num_features = 2;
  ds.x.num_steps = steps;
  ds.x.stride_seconds = kStrideSeconds;
  ds.x.values.assign(n * 2 * static_cast<std::size_t>(steps), 0.0);
  ds.x.sensor_ids.reserve(n);
  for (const Segment& s : network.segments) ds.x.sensor_ids.push_back(s.sensor_id);
  ds.x.timestamps.resize(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t) {
    ds.x.timestamps[static_cast<std::size_t>(t)] = kEpochStart + t * kStrideSeconds;
  }

  ds.q.num_sensors = static_cast<std::int64_t>(n);
  ds.q.num_steps = steps;
  ds.q.sensor_ids = ds.x.sensor_ids;

  SimState state = make_state(network, seed);
  std::vector<bool> closed(n, false), prev_closed(n, true);  // force snapshot at t=0
  for (std::int64_t t = 0; t < steps; ++t) {
    for (std::size_t s = 0; s < n; ++s) {
      closed[s] = schedule.is_closed(static_cast<std::int32_t>(s), t);
    }
    if (closed != prev_closed) {
      ds.q.blocks.push_back({t, recompute_distances(network, closed)});
      prev_closed = closed;
    }
    const std::vector<std::int64_t> counts = step(state, network, schedule, t);
    for (std::size_t s = 0; s < n; ++s) {
      ds.x.at(static_cast<std::int64_t>(s), 0, t) = static_cast<double>(counts[s]);
      ds.x.at(static_cast<std::int64_t>(s), 1, t) =
          static_cast<double>((ds.x.timestamps[static_cast<std::size_t>(t)] % 86400)) / 86400.0;
    }
  }
  ds.x.validate();
  ds.q.validate();
  return ds;
}

SimDataset run_default(std::uint64_t seed) {
  GridNetwork network = build_default_grid();
  std::int32_t central = -1;
  ClosureSchedule schedule = default_schedule(network, seed, &central);
  SimDataset ds = run(network, schedule, 2000, seed);
  ds.central_closure_segment = central;
  return ds;
}

}  // namespace stnn::sim
