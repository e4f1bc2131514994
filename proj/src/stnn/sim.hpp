#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stnn/common.hpp"
#include "stnn/context.hpp"

// Deterministic mesoscopic traffic generator on a junction grid with
// scheduled road closures. Produces per-sensor pass counts, time-varying
// travel distances and the closure schedule in the shared tensor types, so
// simulated data flows through the same pipeline as ingested data.
namespace stnn::sim {

struct Segment {
  std::string sensor_id;      // one mid-segment sensor per segment
  std::int32_t from_junction = 0;
  std::int32_t to_junction = 0;
  double length_m = 0.0;
  std::int32_t capacity = 0;         // max vehicle entries per step
  std::int32_t traversal_steps = 0;  // free-flow steps to cross
  bool is_source = false;
  double arrival_rate = 0.0;  // base Poisson rate, scaled by the demand profile
};

struct GridNetwork {
  std::int32_t junction_rows = 0;
  std::int32_t junction_cols = 0;
  std::vector<Segment> segments;
  std::vector<std::vector<std::int32_t>> outgoing;  // per junction
  std::vector<bool> boundary_junction;

  std::int64_t num_segments() const { return static_cast<std::int64_t>(segments.size()); }
  std::int32_t find_segment(std::int32_t from_junction, std::int32_t to_junction) const;
  // Segments sharing a junction with the given one (includes its reverse).
  std::vector<std::string> adjacent_sensor_ids(std::int32_t segment) const;
};

// Grid of rows x cols junctions with two directed segments per adjacent pair.
// Corner junctions feed source segments. The default 3x9 grid has 84 segments.
GridNetwork build_grid(std::int32_t junction_rows, std::int32_t junction_cols);
GridNetwork build_default_grid();

struct Closure {
  std::int32_t segment = 0;
  std::int64_t start = 0;  // inclusive
  std::int64_t end = 0;    // exclusive
};

struct ClosureSchedule {
  std::vector<Closure> closures;
  void validate(const GridNetwork& network) const;
  bool is_closed(std::int32_t segment, std::int64_t t) const;
};

// The central segment closed over [400,600) and [1500,1900), plus two seeded
// closures elsewhere for variety. central_segment_out reports the analog of
// the most-affected sensor for downstream analysis.
ClosureSchedule default_schedule(const GridNetwork& network, std::uint64_t seed,
                                 std::int32_t* central_segment_out = nullptr);

struct SimState {
  // per-segment vehicles, each the number of steps left to reach the far end
  std::vector<std::vector<std::int32_t>> vehicles;
  std::int64_t injected = 0;
  std::int64_t exited = 0;  // includes vehicles evacuated by a closure onset
  Rng rng{1};

  std::int64_t in_flight() const;
};

SimState make_state(const GridNetwork& network, std::uint64_t seed);

// Advances one step: moves vehicles, applies closures, injects arrivals.
// Returns per-sensor entry counts for this step.
std::vector<std::int64_t> step(SimState& state, const GridNetwork& network,
                               const ClosureSchedule& schedule, std::int64_t t);

// All-pairs sensor travel distances over open segments; unreachable pairs get
// +inf, the diagonal stays 0.
std::vector<double> recompute_distances(const GridNetwork& network,
                                        const std::vector<bool>& closed);

struct SimDataset {
  ctx::SensorFeatureTensor x;  // feature 0: vehicles passed, feature 1: time of day
  ctx::DistanceTensor q;
  ClosureSchedule schedule;
  GridNetwork network;
  std::int32_t central_closure_segment = -1;
};

// Runs the generator for the given number of steps. Distance matrices are
// snapshotted only when the closure set changes; fixed seed, fixed output.
SimDataset run(const GridNetwork& network, const ClosureSchedule& schedule,
               std::int64_t steps, std::uint64_t seed);

// Default experiment: 84 segments, 2000 steps, default closures.
SimDataset run_default(std::uint64_t seed);

}  // namespace stnn::sim
