#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stnn/context.hpp"
#include "stnn/model.hpp"

// Windowed example generation, the L1/Adam training loop, metric computation
// and the naive reference forecasters.
namespace stnn::train {

struct Range {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t size() const { return end - begin; }
};

struct SplitRanges {
  Range train, val, test;
};

// Contiguous 70/20/10 split in chronological order (floor rounding, remainder
// to test). Throws when the series cannot hold a single window.
SplitRanges chronological_split(std::int64_t t_total, std::int64_t history_steps,
                                std::int64_t horizon_steps);

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

// Mean/std of one feature over all sensors across [range.begin, range.end).
NormStats feature_stats(const ctx::SensorFeatureTensor& x, Range range, std::int64_t feature = 0);

struct WindowParams {
  std::int64_t history_steps = 12;
  std::int64_t horizon_steps = 12;
  std::int64_t alpha = 15;
  double epsilon = 0.1;
  double theta = 1.0;
};

struct Example {
  std::int64_t target_index = 0;
  std::int64_t window_start = 0;
};

// Stamped example windows. Contexts are rebuilt on demand (construction is
// cheap and pure), so the set stays small no matter how many windows it has.
class ExampleSet {
 public:
  const ctx::SensorFeatureTensor* x = nullptr;
  const ctx::DistanceTensor* q = nullptr;
  WindowParams params;
  std::vector<Example> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  struct Sample {
    ctx::LocalSpacetime context;      // raw (un-normalized) values
    std::vector<double> target;       // raw ground truth, horizon_steps long
    std::int64_t target_index = 0;
    std::int64_t window_start = 0;
  };
  Sample materialize(std::size_t i) const;
};

// Builds every valid window per target inside the range (input window and
// target window contiguous, non-overlapping, both fully inside the range).
// subsample_ratio < 1 keeps a seeded uniform draw of exactly
// llround(ratio * n) windows; pass 1.0 for validation/test, which are never
// subsampled. window_stride thins window starts deterministically (>= 1).
ExampleSet make_examples(const ctx::SensorFeatureTensor& x, const ctx::DistanceTensor& q,
                         const std::vector<std::int64_t>& target_indices, Range range,
                         const WindowParams& params, double subsample_ratio,
                         std::uint64_t seed, std::int64_t window_stride = 1);

struct TrainConfig {
  std::int64_t batch_size = 80;
  std::int64_t epochs = 50;
  double learning_rate = 0.001;
  double dropout = 0.3;
  double train_subsample_ratio = 0.2;
  std::uint64_t seed = 1;
  int threads = 0;  // <= 0: SF_THREADS / hardware
  bool val_exclude_zero_truth = false;

  void validate() const;
};

struct EpochLog {
  std::int64_t epoch = 0;
  double train_loss = 0.0;  // mean L1 on normalized values
  double val_mae = 0.0;     // raw-scale MAE on the validation examples
  double wall_sec = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  double best_val_mae = 0.0;
  std::int64_t best_epoch = -1;
};

// Seeded mini-batch L1/Adam loop. Inputs and targets are z-scored with the
// model's stored stats; metrics and logs are raw-scale. Keeps the parameters
// from the best-validation epoch. Deterministic for a fixed thread count.
TrainLog train(nn::STNNModel& model, const ExampleSet& train_set, const ExampleSet* val_set,
               const TrainConfig& config, std::ostream* log_stream = nullptr);

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape_pct = 0.0;
  std::int64_t points = 0;       // residuals behind mae/rmse
  std::int64_t mape_points = 0;  // nonzero-truth residuals behind mape
};

struct MetricsReport {
  Metrics overall;
  std::vector<std::pair<std::int64_t, Metrics>> horizons;  // (step, metrics)
};

struct EvalOptions {
  bool exclude_zero_truth = false;  // closure rule: drop zero-truth points everywhere
  std::vector<std::int64_t> horizon_marks = {3, 6, 12};
  int threads = 0;
};

using Predictor = std::function<std::vector<double>(const ExampleSet::Sample&)>;

MetricsReport evaluate_predictor(const ExampleSet& set, const Predictor& predictor,
                                 const EvalOptions& options);
MetricsReport evaluate(const nn::STNNModel& model, const ExampleSet& set,
                       const EvalOptions& options);

// Moving-average forecast: every horizon step equals the mean of the last
// `window` observations. Throws a length error on short series.
std::vector<double> baseline_ha(const std::vector<double>& series, std::int64_t window,
                                std::int64_t horizon);
// Every horizon step equals the last observation.
std::vector<double> baseline_persistence(const std::vector<double>& series, std::int64_t horizon);

// "ha" or "persistence" applied to each example's input window.
MetricsReport evaluate_baseline(const ExampleSet& set, const std::string& method,
                                const EvalOptions& options);

// --- end-to-end harness -------------------------------------------------------

struct DatasetView {
  const ctx::SensorFeatureTensor* x = nullptr;
  const ctx::DistanceTensor* q = nullptr;
  bool has_closures = false;  // enables the zero-truth exclusion rule
};

struct FitOptions {
  TrainConfig train;
  std::int64_t val_window_stride = 1;  // thins per-epoch validation for speed
};

struct FitResult {
  TrainLog log;
  SplitRanges splits;
};

// Fits theta and normalization stats on the training split (frozen
// afterwards), builds example sets and runs the training loop.
FitResult fit(nn::STNNModel& model, const DatasetView& data,
              const std::vector<std::int64_t>& targets, const FitOptions& options,
              std::ostream* log_stream = nullptr);

// Example set over one split using the model's frozen theta/epsilon/alpha.
ExampleSet split_examples(const nn::STNNModel& model, const DatasetView& data,
                          const std::vector<std::int64_t>& targets, const SplitRanges& splits,
                          const std::string& split_name, std::int64_t window_stride = 1);

}  // namespace stnn::train
