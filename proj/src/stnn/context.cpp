#include "stnn/context.hpp"

#include <algorithm>
#include <cmath>

namespace stnn::ctx {

namespace {

std::int64_t find_id(const std::vector<std::string>& ids, const std::string& id) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return static_cast<std::int64_t>(i);
  }
  fail(ErrorCode::NotFound, "unknown sensor id '" + id + "'");
}

std::size_t block_for_step(const std::vector<DistanceTensor::Block>& blocks, std::int64_t t) {
  // blocks are ordered by from_step; find the last block with from_step <= t
  std::size_t lo = 0, hi = blocks.size();
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (blocks[mid].from_step <= t)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

std::int64_t SensorFeatureTensor::index_of(const std::string& sensor_id) const {
  return find_id(sensor_ids, sensor_id);
}

void SensorFeatureTensor::validate() const {
  if (num_features < 1) fail(ErrorCode::InvalidArgument, "feature tensor needs F >= 1");
  if (static_cast<std::int64_t>(values.size()) != num_sensors * num_features * num_steps) {
    fail(ErrorCode::Dimension, "feature tensor storage does not match declared shape");
  }
  if (static_cast<std::int64_t>(sensor_ids.size()) != num_sensors) {
    fail(ErrorCode::Dimension, "sensor id list does not match sensor count");
  }
  if (static_cast<std::int64_t>(timestamps.size()) != num_steps) {
    fail(ErrorCode::Dimension, "timestamp list does not match step count");
  }
  for (std::size_t t = 1; t < timestamps.size(); ++t) {
    if (timestamps[t] - timestamps[t - 1] != stride_seconds || stride_seconds <= 0) {
      fail(ErrorCode::InvalidArgument,
           "timestamps must increase by the declared stride (" +
               std::to_string(stride_seconds) + "s) at row " + std::to_string(t));
    }
  }
  for (double v : values) {
    if (std::isnan(v)) fail(ErrorCode::Numeric, "feature tensor contains NaN");
  }
}

DistanceTensor DistanceTensor::static_network(std::vector<std::string> ids,
                                              std::vector<double> matrix,
                                              std::int64_t num_steps) {
  DistanceTensor q;
  q.num_sensors = static_cast<std::int64_t>(ids.size());
  q.num_steps = num_steps;
  q.sensor_ids = std::move(ids);
  q.blocks.push_back({0, std::move(matrix)});
  q.validate();
  return q;
}

std::size_t DistanceTensor::block_index(std::int64_t t) const {
  return block_for_step(blocks, t);
}

std::int64_t DistanceTensor::index_of(const std::string& sensor_id) const {
  return find_id(sensor_ids, sensor_id);
}

void DistanceTensor::validate() const {
  if (blocks.empty() || blocks.front().from_step != 0) {
    fail(ErrorCode::InvalidArgument, "distance tensor needs a block effective from step 0");
  }
  std::int64_t prev = -1;
  for (const Block& b : blocks) {
    if (b.from_step <= prev) {
      fail(ErrorCode::InvalidArgument, "distance blocks must be strictly ordered by step");
    }
    prev = b.from_step;
    if (static_cast<std::int64_t>(b.values.size()) != num_sensors * num_sensors) {
      fail(ErrorCode::Dimension, "distance block size does not match sensor count");
    }
    for (std::int64_t i = 0; i < num_sensors; ++i) {
      if (b.values[i * num_sensors + i] != 0.0) {
        fail(ErrorCode::InvalidArgument, "distance diagonal must be zero");
      }
      for (std::int64_t j = 0; j < num_sensors; ++j) {
        const double v = b.values[i * num_sensors + j];
        if (std::isnan(v) || v < 0.0) {
          fail(ErrorCode::Numeric, "distances must be nonnegative (inf allowed)");
        }
      }
    }
  }
}

std::size_t ConnectivityTensor::block_index(std::int64_t t) const {
  return block_for_step(blocks, t);
}

std::int64_t ConnectivityTensor::index_of(const std::string& sensor_id) const {
  return find_id(sensor_ids, sensor_id);
}

namespace {

// Welford accumulation over finite entries; each block entry counts once per
// step it covers.
void theta_accumulate(double v, double weight, double& count, double& mean, double& m2) {
  // single-pass weighted update
  count += weight;
  const double delta = v - mean;
  mean += delta * (weight / count);
  m2 += weight * delta * (v - mean);
}

}  // namespace

double estimate_theta_range(const DistanceTensor& q, std::int64_t t_begin, std::int64_t t_end) {
  if (t_begin < 0 || t_end > q.num_steps || t_begin >= t_end) {
    fail(ErrorCode::InvalidArgument, "theta range outside the distance tensor");
  }
  double count = 0.0, mean = 0.0, m2 = 0.0;
  for (std::size_t b = 0; b < q.blocks.size(); ++b) {
    const std::int64_t block_start = q.blocks[b].from_step;
    const std::int64_t block_end =
        b + 1 < q.blocks.size() ? q.blocks[b + 1].from_step : q.num_steps;
    const std::int64_t lo = std::max(block_start, t_begin);
    const std::int64_t hi = std::min(block_end, t_end);
    if (lo >= hi) continue;
    const double weight = static_cast<double>(hi - lo);
    for (double v : q.blocks[b].values) {
      if (std::isfinite(v)) theta_accumulate(v, weight, count, mean, m2);
    }
  }
  if (count < 2.0) {
    fail(ErrorCode::InvalidArgument, "degenerate bandwidth: fewer than two finite distances");
  }
  const double theta = std::sqrt(m2 / count);
  if (!(theta > 0.0)) {
    fail(ErrorCode::InvalidArgument, "degenerate bandwidth: all finite distances equal");
  }
  return theta;
}

double estimate_theta(const DistanceTensor& q) {
  return estimate_theta_range(q, 0, q.num_steps);
}

namespace {

double kernel_value(double distance, double theta) {
  if (!std::isfinite(distance)) return 0.0;
  const double r = distance / theta;
  return std::exp(-r * r);
}

}  // namespace

ConnectivityTensor gaussian_connectivity(const DistanceTensor& q, double theta) {
  if (!(theta > 0.0)) fail(ErrorCode::InvalidArgument, "connectivity: theta must be positive");
  ConnectivityTensor a;
  a.num_sensors = q.num_sensors;
  a.num_steps = q.num_steps;
  a.theta = theta;
  a.sensor_ids = q.sensor_ids;
  a.blocks.reserve(q.blocks.size());
  for (const DistanceTensor::Block& b : q.blocks) {
    DistanceTensor::Block out;
    out.from_step = b.from_step;
    out.values.resize(b.values.size());
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      out.values[i] = kernel_value(b.values[i], theta);
    }
    a.blocks.push_back(std::move(out));
  }
  // exp(0) == 1 on the diagonal by construction
  return a;
}

namespace {

struct Candidate {
  std::int64_t index;
  const std::string* id;
  double distance;
};

// Selection shared by the public op and the windowed fast path. Connectivity
// is evaluated lazily from distances so no N x N x T tensor is materialized.
NeighborSet select_from_distances(const DistanceTensor& q, double theta,
                                  std::int64_t target, double epsilon, std::int64_t alpha,
                                  std::int64_t t_begin, std::int64_t t_end) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    fail(ErrorCode::InvalidArgument, "neighbor threshold must lie in (0,1)");
  }
  if (alpha < 1) fail(ErrorCode::InvalidArgument, "alpha must be at least 1");

  const std::int64_t n = q.num_sensors;
  std::vector<Candidate> kept;
  kept.reserve(static_cast<std::size_t>(std::min<std::int64_t>(n, 4 * alpha)));
  for (std::int64_t i = 0; i < n; ++i) {
    if (i == target) continue;
    double best_conn = 0.0;       // max over time, both directions
    double best_to_target = kUnreachable;  // min over time of d(i -> target)
    for (std::size_t b = 0; b < q.blocks.size(); ++b) {
      const std::int64_t block_start = q.blocks[b].from_step;
      const std::int64_t block_end =
          b + 1 < q.blocks.size() ? q.blocks[b + 1].from_step : q.num_steps;
      if (std::min(block_end, t_end) <= std::max(block_start, t_begin)) continue;
      const double d_to = q.blocks[b].values[i * n + target];
      const double d_from = q.blocks[b].values[target * n + i];
      best_conn = std::max({best_conn, kernel_value(d_to, theta), kernel_value(d_from, theta)});
      best_to_target = std::min(best_to_target, d_to);
    }
    if (best_conn > epsilon) {
      kept.push_back({i, &q.sensor_ids[static_cast<std::size_t>(i)], best_to_target});
    }
  }
  std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return *a.id < *b.id;
  });

  NeighborSet ns;
  ns.target_index = target;
  ns.target_id = q.sensor_ids[static_cast<std::size_t>(target)];
  ns.members.reserve(static_cast<std::size_t>(alpha));
  ns.members.push_back({target, ns.target_id, 0.0});
  for (const Candidate& c : kept) {
    if (static_cast<std::int64_t>(ns.members.size()) >= alpha) break;
    ns.members.push_back({c.index, *c.id, c.distance});
  }
  while (static_cast<std::int64_t>(ns.members.size()) < alpha) {
    ns.members.push_back({-1, std::string(), kUnreachable});
  }
  return ns;
}

}  // namespace

NeighborSet select_neighbors(const ConnectivityTensor& a, const std::string& target_id,
                             double epsilon, std::int64_t alpha) {
  // Recover distances from the kernel so ordering matches min travel distance.
  const std::int64_t target = a.index_of(target_id);
  DistanceTensor q;
  q.num_sensors = a.num_sensors;
  q.num_steps = a.num_steps;
  q.sensor_ids = a.sensor_ids;
  q.blocks.reserve(a.blocks.size());
  for (const DistanceTensor::Block& b : a.blocks) {
    DistanceTensor::Block out;
    out.from_step = b.from_step;
    out.values.resize(b.values.size());
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double conn = b.values[i];
      out.values[i] = conn > 0.0 ? a.theta * std::sqrt(std::max(0.0, -std::log(conn)))
                                 : kUnreachable;
    }
    q.blocks.push_back(std::move(out));
  }
  return select_from_distances(q, a.theta, target, epsilon, alpha, 0, a.num_steps);
}

std::vector<double> build_snapshot(const SensorFeatureTensor& x, const ConnectivityTensor& a,
                                   const NeighborSet& neighbors, std::int64_t t) {
  if (t < 0 || t >= x.num_steps) fail(ErrorCode::InvalidArgument, "snapshot step out of range");
  const std::int64_t f = x.num_features;
  std::vector<double> snap(neighbors.members.size() * static_cast<std::size_t>(f + 1), 0.0);
  for (std::size_t m = 0; m < neighbors.members.size(); ++m) {
    const NeighborSet::Member& member = neighbors.members[m];
    if (member.dummy()) continue;
    double* row = snap.data() + m * static_cast<std::size_t>(f + 1);
    for (std::int64_t ft = 0; ft < f; ++ft) row[ft] = x.at(member.index, ft, t);
    row[f] = a.at(member.index, neighbors.target_index, t);
  }
  return snap;
}

LocalSpacetime build_local_spacetime_window(const SensorFeatureTensor& x,
                                            const DistanceTensor& q, std::int64_t target_index,
                                            double epsilon, std::int64_t alpha, double theta,
                                            std::int64_t t_begin, std::int64_t history_steps) {
  if (t_begin < 0 || t_begin + history_steps > x.num_steps || history_steps < 1) {
    fail(ErrorCode::InvalidArgument, "context window outside the observed range");
  }
  if (x.num_sensors != q.num_sensors) {
    fail(ErrorCode::Dimension, "feature and distance tensors disagree on sensor count");
  }
  if (!(theta > 0.0)) fail(ErrorCode::InvalidArgument, "theta must be positive");

  NeighborSet ns = select_from_distances(q, theta, target_index, epsilon, alpha, t_begin,
                                         t_begin + history_steps);

  LocalSpacetime d;
  d.alpha = alpha;
  d.channels = x.num_features + 1;
  d.steps = history_steps;
  d.target_id = ns.target_id;
  d.tensor.assign(static_cast<std::size_t>(alpha * d.channels * history_steps), 0.0);

  const std::int64_t n = q.num_sensors;
  for (std::int64_t m = 0; m < alpha; ++m) {
    const NeighborSet::Member& member = ns.members[static_cast<std::size_t>(m)];
    if (member.dummy()) continue;
    for (std::int64_t f = 0; f < x.num_features; ++f) {
      const double* src = x.values.data() +
                          (member.index * x.num_features + f) * x.num_steps + t_begin;
      double* dst = d.tensor.data() + (m * d.channels + f) * history_steps;
      std::copy(src, src + history_steps, dst);
    }
    double* conn = d.tensor.data() + (m * d.channels + x.num_features) * history_steps;
    for (std::int64_t t = 0; t < history_steps; ++t) {
      const double dist = q.matrix_at(t_begin + t)[member.index * n + target_index];
      conn[t] = kernel_value(dist, theta);
    }
  }
  d.neighbors = std::move(ns);
  return d;
}

LocalSpacetime build_local_spacetime(const SensorFeatureTensor& x, const DistanceTensor& q,
                                     const std::string& target_id, const ContextParams& params) {
  if (x.num_steps != q.num_steps) {
    fail(ErrorCode::Dimension, "feature and distance tensors disagree on step count");
  }
  const double theta = params.theta ? *params.theta : estimate_theta(q);
  const std::int64_t target = x.index_of(target_id);
  if (q.index_of(target_id) != target) {
    fail(ErrorCode::InvalidArgument, "sensor ordering differs between feature and distance data");
  }
  return build_local_spacetime_window(x, q, target, params.epsilon, params.alpha, theta, 0,
                                      x.num_steps);
}

}  // namespace stnn::ctx
