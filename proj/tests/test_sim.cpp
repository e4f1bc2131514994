#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stnn/sim.hpp"

using namespace stnn;
using namespace stnn::sim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// three junctions in a one-way ring; every junction has exactly one way out
GridNetwork ring_network(std::int32_t traversal = 1) {
  GridNetwork g;
  g.junction_rows = 1;
  g.junction_cols = 3;
  g.outgoing.resize(3);
  g.boundary_junction = {false, false, false};
  for (std::int32_t i = 0; i < 3; ++i) {
    Segment s;
    s.sensor_id = "r" + std::to_string(i);
    s.from_junction = i;
    s.to_junction = (i + 1) % 3;
    s.length_m = 300.0;
    s.capacity = 10;
    s.traversal_steps = traversal;
    g.outgoing[static_cast<std::size_t>(i)].push_back(i);
    g.segments.push_back(std::move(s));
  }
  return g;
}

// independent Floyd-Warshall oracle over junctions, then the same
// half-segment composition applied by hand
std::vector<double> distance_oracle(const GridNetwork& g, const std::vector<bool>& closed) {
  const std::size_t j = g.outgoing.size();
  std::vector<double> dist(j * j, kInf);
  for (std::size_t i = 0; i < j; ++i) dist[i * j + i] = 0.0;
  for (std::size_t s = 0; s < g.segments.size(); ++s) {
    if (closed[s]) continue;
    const Segment& seg = g.segments[s];
    double& edge = dist[static_cast<std::size_t>(seg.from_junction) * j +
                        static_cast<std::size_t>(seg.to_junction)];
    edge = std::min(edge, seg.length_m);
  }
  for (std::size_t k = 0; k < j; ++k) {
    for (std::size_t a = 0; a < j; ++a) {
      for (std::size_t b = 0; b < j; ++b) {
        if (dist[a * j + k] + dist[k * j + b] < dist[a * j + b]) {
          dist[a * j + b] = dist[a * j + k] + dist[k * j + b];
        }
      }
    }
  }
  const std::size_t n = g.segments.size();
  std::vector<double> out(n * n, kInf);
  for (std::size_t a = 0; a < n; ++a) {
    out[a * n + a] = 0.0;
    if (closed[a]) continue;
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b || closed[b]) continue;
      const double mid = dist[static_cast<std::size_t>(g.segments[a].to_junction) * j +
                              static_cast<std::size_t>(g.segments[b].from_junction)];
      if (std::isfinite(mid)) {
        out[a * n + b] = 0.5 * g.segments[a].length_m + mid + 0.5 * g.segments[b].length_m;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("the default grid carries 84 sensors and is strongly connected") {
  GridNetwork g = build_default_grid();
  CHECK(g.num_segments() == 84);

  const std::vector<bool> open(static_cast<std::size_t>(g.num_segments()), false);
  const std::vector<double> d = recompute_distances(g, open);
  for (std::int64_t i = 0; i < 84; ++i) {
    for (std::int64_t j = 0; j < 84; ++j) {
      CHECK(std::isfinite(d[static_cast<std::size_t>(i * 84 + j)]));
    }
    CHECK(d[static_cast<std::size_t>(i * 84 + i)] == 0.0);
  }
}

TEST_CASE("corner and mid-edge junctions feed the default grid") {
  GridNetwork g = build_default_grid();
  int sources = 0;
  for (const Segment& s : g.segments) {
    if (!s.is_source) continue;
    ++sources;
    CHECK(g.boundary_junction[static_cast<std::size_t>(s.from_junction)]);
    CHECK(s.arrival_rate > 0.0);
  }
  // four corners with two outgoing segments, four mid-edge feeders with three
  CHECK(sources == 20);
}

TEST_CASE("no sources and an empty state stay silent forever") {
  GridNetwork g = ring_network();
  ClosureSchedule schedule;
  SimState state = make_state(g, 1);
  for (std::int64_t t = 0; t < 50; ++t) {
    const auto counts = step(state, g, schedule, t);
    for (std::int64_t c : counts) CHECK(c == 0);
  }
  CHECK(state.injected == 0);
  CHECK(state.exited == 0);
  CHECK(state.in_flight() == 0);
}

TEST_CASE("a single vehicle walks the ring one segment per step") {
  GridNetwork g = ring_network(1);
  ClosureSchedule schedule;
  SimState state = make_state(g, 1);
  state.vehicles[0].push_back(1);  // on r0, one step from the junction
  state.injected = 1;

  for (std::int64_t t = 0; t < 6; ++t) {
    const auto counts = step(state, g, schedule, t);
    // the vehicle enters exactly one segment per step, cycling r1, r2, r0, ...
    const std::size_t expected = static_cast<std::size_t>((t + 1) % 3);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(counts[s] == (s == expected ? 1 : 0));
    }
    CHECK(state.in_flight() == 1);
  }
}

TEST_CASE("vehicles wait at a closure and the closed sensor stays at zero") {
  GridNetwork g = ring_network(1);
  ClosureSchedule schedule;
  schedule.closures.push_back({1, 0, 100});  // r1 closed the whole run
  SimState state = make_state(g, 1);
  state.vehicles[0].push_back(1);
  state.injected = 1;

  for (std::int64_t t = 0; t < 20; ++t) {
    const auto counts = step(state, g, schedule, t);
    // the only way out of junction 1 is closed: no entries, ever
    CHECK(counts[1] == 0);
    CHECK(state.vehicles[1].empty());
    CHECK(state.injected == state.in_flight() + state.exited);
  }
}

TEST_CASE("closing a segment evacuates it and books the vehicles as exited") {
  GridNetwork g = ring_network(3);
  ClosureSchedule schedule;
  schedule.closures.push_back({0, 1, 10});  // closes while the vehicles are still on it
  SimState state = make_state(g, 1);
  state.vehicles[0].assign(4, 3);
  state.injected = 4;

  for (std::int64_t t = 0; t < 12; ++t) {
    step(state, g, schedule, t);
    CHECK(state.injected == state.in_flight() + state.exited);
  }
  CHECK(state.exited == 4);
  CHECK(state.in_flight() == 0);
}

TEST_CASE("recompute_distances matches a Floyd-Warshall oracle") {
  GridNetwork g = build_grid(3, 4);
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<bool> closed(static_cast<std::size_t>(g.num_segments()), false);
    for (std::size_t s = 0; s < closed.size(); ++s) closed[s] = rng.uniform() < 0.15;
    const std::vector<double> got = recompute_distances(g, closed);
    const std::vector<double> expected = distance_oracle(g, closed);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (std::isfinite(expected[i])) {
        CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
      } else {
        CHECK(!std::isfinite(got[i]));
      }
    }
  }
}

TEST_CASE("closing the only line between two sensors makes them unreachable") {
  GridNetwork g = ring_network();
  std::vector<bool> closed(3, false);
  closed[1] = true;  // junction 1 -> 2 gone; the ring is one-way
  const std::vector<double> d = recompute_distances(g, closed);
  CHECK(!std::isfinite(d[0 * 3 + 2]));  // r0 can no longer reach r2
  CHECK(d[0 * 3 + 0] == 0.0);
}

TEST_CASE("closing one of two parallel routes falls back to the longer one") {
  // junctions 0 -> 1 via a short segment and a long two-hop detour 0 -> 2 -> 1
  GridNetwork g;
  g.junction_rows = 1;
  g.junction_cols = 3;
  g.outgoing.resize(3);
  g.boundary_junction = {false, false, false};
  auto add = [&g](std::int32_t from, std::int32_t to, double length) {
    Segment s;
    s.sensor_id = "p" + std::to_string(g.segments.size());
    s.from_junction = from;
    s.to_junction = to;
    s.length_m = length;
    s.capacity = 10;
    s.traversal_steps = 1;
    g.outgoing[static_cast<std::size_t>(from)].push_back(
        static_cast<std::int32_t>(g.segments.size()));
    g.segments.push_back(std::move(s));
  };
  add(0, 1, 100.0);  // direct
  add(0, 2, 300.0);  // detour, leg one
  add(2, 1, 300.0);  // detour, leg two
  add(1, 0, 100.0);  // way back so pairs stay reachable

  std::vector<bool> open(4, false);
  const std::vector<double> before = recompute_distances(g, open);
  // s3 (1->0) to s0 (0->1): direct hop through junction 0
  CHECK(before[3 * 4 + 0] == doctest::Approx(0.5 * 100 + 0.5 * 100));

  std::vector<bool> closed(4, false);
  closed[0] = true;  // direct segment closed
  const std::vector<double> after = recompute_distances(g, closed);
  // alternate route for s3 to s2 (2->1): 1->0 half + 0->2 + half of 2->1
  CHECK(after[3 * 4 + 2] == doctest::Approx(50.0 + 300.0 + 150.0));
  const std::vector<double> oracle = distance_oracle(g, closed);
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    if (std::isfinite(oracle[i])) {
      CHECK(after[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
    } else {
      CHECK(!std::isfinite(after[i]));
    }
  }
}

TEST_CASE("a closure never shortens any travel distance") {
  GridNetwork g = build_grid(3, 5);
  std::vector<bool> open(static_cast<std::size_t>(g.num_segments()), false);
  std::vector<bool> closed = open;
  closed[7] = true;
  closed[20] = true;
  const std::vector<double> before = recompute_distances(g, open);
  const std::vector<double> after = recompute_distances(g, closed);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i] >= before[i]);
  }
}

TEST_CASE("the default run produces the documented tensor shape") {
  SimDataset ds = run_default(1);
  CHECK(ds.x.num_sensors == 84);
  CHECK(ds.x.num_features == 2);
  CHECK(ds.x.num_steps == 2000);
  CHECK(ds.x.values.size() == 84u * 2u * 2000u);
  CHECK(ds.q.blocks.size() >= 5);  // baseline plus closure transitions
  CHECK(ds.central_closure_segment >= 0);
}

TEST_CASE("the closed central sensor reads zero through both closure windows") {
  SimDataset ds = run_default(1);
  const std::int64_t central = ds.central_closure_segment;
  for (std::int64_t t = 400; t < 600; ++t) CHECK(ds.x.at(central, 0, t) == 0.0);
  for (std::int64_t t = 1500; t < 1900; ++t) CHECK(ds.x.at(central, 0, t) == 0.0);
  // and it does carry traffic outside them
  double outside = 0.0;
  for (std::int64_t t = 0; t < 400; ++t) outside += ds.x.at(central, 0, t);
  CHECK(outside > 0.0);
}

TEST_CASE("identical seeds reproduce the dataset bit for bit") {
  SimDataset a = run_default(7);
  SimDataset b = run_default(7);
  CHECK(a.x.values == b.x.values);
  REQUIRE(a.q.blocks.size() == b.q.blocks.size());
  for (std::size_t i = 0; i < a.q.blocks.size(); ++i) {
    CHECK(a.q.blocks[i].from_step == b.q.blocks[i].from_step);
    CHECK(a.q.blocks[i].values == b.q.blocks[i].values);
  }
  SimDataset c = run_default(8);
  CHECK(a.x.values != c.x.values);
}

TEST_CASE("vehicle conservation holds across a full default run") {
  GridNetwork g = build_default_grid();
  std::int32_t central = -1;
  ClosureSchedule schedule = default_schedule(g, 1, &central);
  SimState state = make_state(g, 1);
  for (std::int64_t t = 0; t < 500; ++t) {
    step(state, g, schedule, t);
    REQUIRE(state.injected == state.in_flight() + state.exited);
  }
  CHECK(state.injected > 0);
  CHECK(state.exited > 0);
}

TEST_CASE("default schedule closes the central segment on the documented windows") {
  GridNetwork g = build_default_grid();
  std::int32_t central = -1;
  ClosureSchedule schedule = default_schedule(g, 3, &central);
  REQUIRE(central >= 0);
  CHECK(schedule.is_closed(central, 400));
  CHECK(schedule.is_closed(central, 599));
  CHECK(!schedule.is_closed(central, 600));
  CHECK(schedule.is_closed(central, 1500));
  CHECK(schedule.is_closed(central, 1899));
  CHECK(!schedule.is_closed(central, 1400));
  CHECK(schedule.closures.size() == 4);  // two central windows plus two extras
}

TEST_CASE("adjacent sensors share a junction with the segment") {
  GridNetwork g = build_default_grid();
  const std::int32_t seg = g.find_segment(0, 1);
  const std::vector<std::string> adjacent = g.adjacent_sensor_ids(seg);
  CHECK(!adjacent.empty());
  // the reverse direction is always adjacent
  const std::int32_t reverse = g.find_segment(1, 0);
  const std::string reverse_id = g.segments[static_cast<std::size_t>(reverse)].sensor_id;
  CHECK(std::find(adjacent.begin(), adjacent.end(), reverse_id) != adjacent.end());
}

TEST_CASE("overlapping closures on one segment are rejected") {
  GridNetwork g = ring_network();
  ClosureSchedule schedule;
  schedule.closures.push_back({0, 10, 30});
  schedule.closures.push_back({0, 20, 40});
  CHECK_THROWS_AS(schedule.validate(g), Error);
}
