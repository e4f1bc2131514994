#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "stnn/common.hpp"

// Local-spacetime construction: turns network-wide observations and
// time-varying travel distances into fixed-size per-target context tensors.
namespace stnn::ctx {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

// N x F x T observations. Feature 0 is the traffic measurement (speed or
// volume in dataset units), feature 1 the time-of-day fraction in [0,1).
struct SensorFeatureTensor {
  std::int64_t num_sensors = 0;
  std::int64_t num_features = 0;
  std::int64_t num_steps = 0;
  std::vector<double> values;  // row-major (sensor, feature, step)
  std::vector<std::string> sensor_ids;
  std::vector<std::int64_t> timestamps;  // epoch seconds, uniform stride
  std::int64_t stride_seconds = 0;

  double at(std::int64_t s, std::int64_t f, std::int64_t t) const {
    return values[(s * num_features + f) * num_steps + t];
  }
  double& at(std::int64_t s, std::int64_t f, std::int64_t t) {
    return values[(s * num_features + f) * num_steps + t];
  }
  std::int64_t index_of(const std::string& sensor_id) const;  // throws NotFound
  void validate() const;
};

// N x N x T travel distances, stored as shared blocks: each block covers all
// steps from its from_step until the next block. A static network is one block.
struct DistanceTensor {
  struct Block {
    std::int64_t from_step = 0;
    std::vector<double> values;  // N*N row-major (from, to)
  };

  std::int64_t num_sensors = 0;
  std::int64_t num_steps = 0;
  std::vector<std::string> sensor_ids;
  std::vector<Block> blocks;  // ordered, first from_step == 0

  static DistanceTensor static_network(std::vector<std::string> ids,
                                       std::vector<double> matrix,
                                       std::int64_t num_steps);

  std::size_t block_index(std::int64_t t) const;
  const std::vector<double>& matrix_at(std::int64_t t) const {
    return blocks[block_index(t)].values;
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t t) const {
    return matrix_at(t)[i * num_sensors + j];
  }
  std::int64_t index_of(const std::string& sensor_id) const;
  void validate() const;
};

// Gaussian-kernel transform of a DistanceTensor: exp(-(d/theta)^2), with
// unreachable pairs pinned to 0. Shares the block layout of its source.
struct ConnectivityTensor {
  std::int64_t num_sensors = 0;
  std::int64_t num_steps = 0;
  double theta = 0.0;
  std::vector<std::string> sensor_ids;
  std::vector<DistanceTensor::Block> blocks;

  std::size_t block_index(std::int64_t t) const;
  double at(std::int64_t i, std::int64_t j, std::int64_t t) const {
    return blocks[block_index(t)].values[i * num_sensors + j];
  }
  std::int64_t index_of(const std::string& sensor_id) const;
};

// Population standard deviation over every finite entry of q (all i, j, t).
// Throws a degenerate-bandwidth error when fewer than two finite entries
// exist or when all finite entries are equal.
double estimate_theta(const DistanceTensor& q);
// Same, restricted to steps [t_begin, t_end) — used to fit theta on the
// training portion only.
double estimate_theta_range(const DistanceTensor& q, std::int64_t t_begin,
                            std::int64_t t_end);

ConnectivityTensor gaussian_connectivity(const DistanceTensor& q, double theta);

struct NeighborSet {
  struct Member {
    std::int64_t index = -1;  // -1 marks a dummy row
    std::string id;           // empty for dummies
    double distance = kUnreachable;  // min-over-time travel distance to target
    bool dummy() const { return index < 0; }
  };

  std::string target_id;
  std::int64_t target_index = -1;
  std::vector<Member> members;  // exactly alpha entries, target first
};

// Keeps sensors whose connectivity to or from the target exceeds epsilon at
// any step, sorts ascending by min-over-time distance to the target (ties by
// id), then truncates or pads with dummies to exactly alpha members.
NeighborSet select_neighbors(const ConnectivityTensor& a, const std::string& target_id,
                             double epsilon, std::int64_t alpha);

// One time slice: row i is [x_i(t); A(i,p)(t)], dummy rows all zero.
// Returned row-major alpha x (F+1).
std::vector<double> build_snapshot(const SensorFeatureTensor& x,
                                   const ConnectivityTensor& a,
                                   const NeighborSet& neighbors, std::int64_t t);

// The fixed-size context tensor for one target.
struct LocalSpacetime {
  std::int64_t alpha = 0;
  std::int64_t channels = 0;  // F+1, connectivity last
  std::int64_t steps = 0;     // T_h
  std::vector<double> tensor;  // row-major (member, channel, step)
  std::string target_id;
  NeighborSet neighbors;

  double at(std::int64_t m, std::int64_t c, std::int64_t t) const {
    return tensor[(m * channels + c) * steps + t];
  }
  double& at(std::int64_t m, std::int64_t c, std::int64_t t) {
    return tensor[(m * channels + c) * steps + t];
  }
};

struct ContextParams {
  double epsilon = 0.1;
  std::int64_t alpha = 15;
  std::optional<double> theta;  // estimated from q when absent
};

// Full pipeline over the whole span of x/q.
LocalSpacetime build_local_spacetime(const SensorFeatureTensor& x, const DistanceTensor& q,
                                     const std::string& target_id, const ContextParams& params);

// Windowed variant used by example generation: context over steps
// [t_begin, t_begin + history_steps). theta must be supplied (it is fitted
// once on the training range and then frozen).
LocalSpacetime build_local_spacetime_window(const SensorFeatureTensor& x,
                                            const DistanceTensor& q, std::int64_t target_index,
                                            double epsilon, std::int64_t alpha, double theta,
                                            std::int64_t t_begin, std::int64_t history_steps);

}  // namespace stnn::ctx
