#include "stnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "stnn/tensor.hpp"

namespace stnn::train {

using ad::Tensor;

SplitRanges chronological_split(std::int64_t t_total, std::int64_t history_steps,
                                std::int64_t horizon_steps) {
  if (t_total < history_steps + horizon_steps) {
    fail(ErrorCode::InvalidArgument,
         "series of " + std::to_string(t_total) + " steps cannot hold a " +
             std::to_string(history_steps) + "+" + std::to_string(horizon_steps) + " window");
  }
  SplitRanges s;
  const std::int64_t train_end = t_total * 7 / 10;
  const std::int64_t val_end = train_end + t_total * 2 / 10;
  s.train = {0, train_end};
  s.val = {train_end, val_end};
  s.test = {val_end, t_total};
  return s;
}

NormStats feature_stats(const ctx::SensorFeatureTensor& x, Range range, std::int64_t feature) {
  if (range.begin < 0 || range.end > x.num_steps || range.begin >= range.end) {
    fail(ErrorCode::InvalidArgument, "stats range outside the observed steps");
  }
  double count = 0.0, mean = 0.0, m2 = 0.0;
  for (std::int64_t s = 0; s < x.num_sensors; ++s) {
    for (std::int64_t t = range.begin; t < range.end; ++t) {
      const double v = x.at(s, feature, t);
      count += 1.0;
      const double delta = v - mean;
      mean += delta / count;
      m2 += delta * (v - mean);
    }
  }
  NormStats stats;
  stats.mean = mean;
  stats.std = std::sqrt(m2 / count);
  if (!(stats.std > 0.0)) {
    fail(ErrorCode::InvalidArgument, "normalization needs a non-constant training feature");
  }
  return stats;
}

ExampleSet::Sample ExampleSet::materialize(std::size_t i) const {
  const Example& e = items[i];
  Sample sample;
  sample.target_index = e.target_index;
  sample.window_start = e.window_start;
  sample.context = ctx::build_local_spacetime_window(*x, *q, e.target_index, params.epsilon,
                                                     params.alpha, params.theta, e.window_start,
                                                     params.history_steps);
  sample.target.resize(static_cast<std::size_t>(params.horizon_steps));
  const std::int64_t target_start = e.window_start + params.history_steps;
  for (std::int64_t t = 0; t < params.horizon_steps; ++t) {
    sample.target[static_cast<std::size_t>(t)] = x->at(e.target_index, 0, target_start + t);
  }
  return sample;
}

ExampleSet make_examples(const ctx::SensorFeatureTensor& x, const ctx::DistanceTensor& q,
                         const std::vector<std::int64_t>& target_indices, Range range,
                         const WindowParams& params, double subsample_ratio, std::uint64_t seed,
                         std::int64_t window_stride) {
  if (!(subsample_ratio > 0.0 && subsample_ratio <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "subsample ratio must lie in (0,1]");
  }
  if (window_stride < 1) fail(ErrorCode::InvalidArgument, "window stride must be >= 1");
  if (range.begin < 0 || range.end > x.num_steps) {
    fail(ErrorCode::InvalidArgument, "window range outside the observed steps");
  }

  ExampleSet set;
  set.x = &x;
  set.q = &q;
  set.params = params;
  const std::int64_t window = params.history_steps + params.horizon_steps;
  for (std::int64_t target : target_indices) {
    if (target < 0 || target >= x.num_sensors) {
      fail(ErrorCode::NotFound, "target index " + std::to_string(target) + " out of range");
    }
    for (std::int64_t t = range.begin; t + window <= range.end; t += window_stride) {
      set.items.push_back({target, t});
    }
  }

  if (subsample_ratio < 1.0 && !set.items.empty()) {
    const std::int64_t keep =
        std::llround(subsample_ratio * static_cast<double>(set.items.size()));
    Rng rng(mix_seed(seed, 0x5ab5a3b1e5ULL));
    std::vector<std::size_t> order(set.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    order.resize(static_cast<std::size_t>(std::max<std::int64_t>(keep, 0)));
    std::sort(order.begin(), order.end());
    std::vector<Example> kept;
    kept.reserve(order.size());
    for (std::size_t idx : order) kept.push_back(set.items[idx]);
    set.items = std::move(kept);
  }
  return set;
}

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (epochs < 0) fail(ErrorCode::InvalidArgument, "epochs must be >= 0");
  if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::InvalidArgument, "dropout in [0,1)");
  if (!(train_subsample_ratio > 0.0 && train_subsample_ratio <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "subsample ratio must lie in (0,1]");
  }
}

namespace {

// Normalizes the measurement channel of real rows in place.
void normalize_context(ctx::LocalSpacetime& d, const nn::STNNModel& model) {
  for (std::int64_t m = 0; m < d.alpha; ++m) {
    if (d.neighbors.members[static_cast<std::size_t>(m)].dummy()) continue;
    for (std::int64_t t = 0; t < d.steps; ++t) {
      d.at(m, 0, t) = model.normalize(d.at(m, 0, t));
    }
  }
}

}  // namespace

TrainLog train(nn::STNNModel& model, const ExampleSet& train_set, const ExampleSet* val_set,
               const TrainConfig& config, std::ostream* log_stream) {
  config.validate();
  TrainLog log;
  if (config.epochs == 0) return log;
  if (train_set.empty()) fail(ErrorCode::InvalidArgument, "training example set is empty");
  if (!(model.norm_std > 0.0)) fail(ErrorCode::State, "model normalization stats not fitted");

  const int threads = resolve_threads(config.threads);
  std::vector<Tensor> params = model.parameters();
  ad::AdamState adam(params, config.learning_rate);

  // Worker replicas own separate storage; their grads fold into the master in
  // a fixed order so results are deterministic for a fixed thread count.
  std::vector<nn::STNNModel> replicas;
  std::vector<std::vector<Tensor>> replica_params;
  for (int w = 1; w < threads; ++w) {
    replicas.push_back(model.clone());
    replica_params.push_back(replicas.back().parameters());
  }

  const std::int64_t n = static_cast<std::int64_t>(train_set.size());
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::vector<double>> best_params;
  EvalOptions val_options;
  val_options.exclude_zero_truth = config.val_exclude_zero_truth;
  val_options.threads = config.threads;

  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    double epoch_loss = 0.0;
    for (std::int64_t batch_start = 0; batch_start < n; batch_start += config.batch_size) {
      const std::int64_t batch_end = std::min<std::int64_t>(n, batch_start + config.batch_size);
      const std::int64_t batch_count = batch_end - batch_start;
      const double inv_batch = 1.0 / static_cast<double>(batch_count);

      for (std::size_t w = 0; w < replicas.size(); ++w) {
        replicas[w].copy_parameters_from(model);
      }

      std::vector<double> worker_loss(static_cast<std::size_t>(threads), 0.0);
      parallel_ranges(batch_count, threads, [&](int w, std::int64_t lo, std::int64_t hi) {
        nn::STNNModel& net = w == 0 ? model : replicas[static_cast<std::size_t>(w - 1)];
        double local_loss = 0.0;
        for (std::int64_t bi = lo; bi < hi; ++bi) {
          const std::size_t item = order[static_cast<std::size_t>(batch_start + bi)];
          ExampleSet::Sample sample = train_set.materialize(item);
          normalize_context(sample.context, net);
          const std::int64_t horizon = static_cast<std::int64_t>(sample.target.size());
          std::vector<double> target_norm(sample.target.size());
          for (std::size_t t = 0; t < sample.target.size(); ++t) {
            target_norm[t] = net.normalize(sample.target[t]);
          }
          Tensor target = Tensor::from_data({horizon}, std::move(target_norm));

          ad::Tape tape;
          ad::TapeScope scope(tape);
          const std::uint64_t dropout_seed =
              mix_seed(config.seed, (static_cast<std::uint64_t>(epoch) << 32) ^
                                        static_cast<std::uint64_t>(item));
          Tensor out = net.forward(sample.context, true, dropout_seed);
          Tensor loss = ad::scale(ad::mean_all(ad::abs(ad::sub(out, target))), inv_batch);
          tape.backward(loss);
          local_loss += loss.item() * static_cast<double>(batch_count);
        }
        worker_loss[static_cast<std::size_t>(w)] = local_loss;
      });

      double batch_loss = 0.0;
      for (double l : worker_loss) batch_loss += l;
      if (!std::isfinite(batch_loss)) {
        fail(ErrorCode::Numeric,
             "training loss is not finite (epoch " + std::to_string(epoch) +
                 "); lower the learning rate or inspect the input data");
      }
      epoch_loss += batch_loss;

      for (auto& rp : replica_params) {
        for (std::size_t p = 0; p < params.size(); ++p) {
          const std::vector<double>& src = rp[p].grad();
          std::vector<double>& dst = params[p].grad();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        for (Tensor& t : rp) t.zero_grad();
      }
      adam.step(params);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(n);
    if (val_set != nullptr && !val_set->empty()) {
      entry.val_mae = evaluate(model, *val_set, val_options).overall.mae;
      if (log.best_epoch < 0 || entry.val_mae < log.best_val_mae) {
        log.best_val_mae = entry.val_mae;
        log.best_epoch = epoch;
        best_params.clear();
        for (const Tensor& p : params) best_params.push_back(p.vec());
      }
    }
    entry.wall_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    log.epochs.push_back(entry);
    if (log_stream != nullptr) {
      (*log_stream) << "epoch=" << entry.epoch << " train_loss=" << format_double(entry.train_loss)
                    << " val_mae=" << format_double(entry.val_mae)
                    << " wall_sec=" << format_double(entry.wall_sec) << "\n";
      log_stream->flush();
    }
  }

  if (!best_params.empty()) {
    for (std::size_t p = 0; p < params.size(); ++p) params[p].vec() = best_params[p];
    if (log_stream != nullptr) {
      (*log_stream) << "restored=best_epoch:" << log.best_epoch << "\n";
      log_stream->flush();
    }
  }
  return log;
}

// --- metrics -------------------------------------------------------------------

namespace {

struct Partial {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double ape_sum = 0.0;
  std::int64_t points = 0;
  std::int64_t ape_points = 0;
};

Metrics finish(const Partial& p) {
  Metrics m;
  m.points = p.points;
  m.mape_points = p.ape_points;
  if (p.points > 0) {
    m.mae = p.abs_sum / static_cast<double>(p.points);
    m.rmse = std::sqrt(p.sq_sum / static_cast<double>(p.points));
  }
  if (p.ape_points > 0) {
    m.mape_pct = 100.0 * p.ape_sum / static_cast<double>(p.ape_points);
  }
  return m;
}

}  // namespace

MetricsReport evaluate_predictor(const ExampleSet& set, const Predictor& predictor,
                                 const EvalOptions& options) {
  if (set.empty()) fail(ErrorCode::InvalidArgument, "evaluation example set is empty");
  const std::size_t buckets = options.horizon_marks.size();
  const std::size_t lanes = buckets + 1;  // overall first
  std::vector<Partial> partials(set.size() * lanes);

  const int threads = resolve_threads(options.threads);
  parallel_ranges(static_cast<std::int64_t>(set.size()), threads,
                  [&](int, std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const ExampleSet::Sample sample = set.materialize(static_cast<std::size_t>(i));
      const std::vector<double> pred = predictor(sample);
      Partial* lane = partials.data() + static_cast<std::size_t>(i) * lanes;
      for (std::size_t h = 0; h < sample.target.size(); ++h) {
        const double truth = sample.target[h];
        if (options.exclude_zero_truth && truth == 0.0) continue;
        const double err = pred[h] - truth;
        auto tally = [&](Partial& p) {
          p.abs_sum += std::fabs(err);
          p.sq_sum += err * err;
          ++p.points;
          if (truth != 0.0) {
            p.ape_sum += std::fabs(err) / std::fabs(truth);
            ++p.ape_points;
          }
        };
        tally(lane[0]);
        for (std::size_t b = 0; b < buckets; ++b) {
          if (static_cast<std::int64_t>(h) + 1 == options.horizon_marks[b]) tally(lane[b + 1]);
        }
      }
    }
  });

  // fixed-order reduction: bitwise identical for any thread count
  std::vector<Partial> totals(lanes);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t l = 0; l < lanes; ++l) {
      const Partial& p = partials[i * lanes + l];
      totals[l].abs_sum += p.abs_sum;
      totals[l].sq_sum += p.sq_sum;
      totals[l].ape_sum += p.ape_sum;
      totals[l].points += p.points;
      totals[l].ape_points += p.ape_points;
    }
  }

  MetricsReport report;
  report.overall = finish(totals[0]);
  for (std::size_t b = 0; b < buckets; ++b) {
    report.horizons.emplace_back(options.horizon_marks[b], finish(totals[b + 1]));
  }
  return report;
}

MetricsReport evaluate(const nn::STNNModel& model, const ExampleSet& set,
                       const EvalOptions& options) {
  return evaluate_predictor(
      set, [&model](const ExampleSet::Sample& s) { return model.predict(s.context); }, options);
}

std::vector<double> baseline_ha(const std::vector<double>& series, std::int64_t window,
                                std::int64_t horizon) {
  if (window < 1) fail(ErrorCode::InvalidArgument, "moving-average window must be >= 1");
  if (static_cast<std::int64_t>(series.size()) < window) {
    fail(ErrorCode::InvalidArgument, "series of " + std::to_string(series.size()) +
                                         " values is shorter than the window of " +
                                         std::to_string(window));
  }
  double sum = 0.0;
  for (std::size_t i = series.size() - static_cast<std::size_t>(window); i < series.size(); ++i) {
    sum += series[i];
  }
  return std::vector<double>(static_cast<std::size_t>(horizon),
                             sum / static_cast<double>(window));
}

std::vector<double> baseline_persistence(const std::vector<double>& series, std::int64_t horizon) {
  if (series.empty()) fail(ErrorCode::InvalidArgument, "persistence needs a nonempty series");
  return std::vector<double>(static_cast<std::size_t>(horizon), series.back());
}

MetricsReport evaluate_baseline(const ExampleSet& set, const std::string& method,
                                const EvalOptions& options) {
  const std::int64_t horizon = set.params.horizon_steps;
  const std::int64_t history = set.params.history_steps;
  Predictor predictor;
  if (method == "ha") {
    const std::int64_t window = std::min<std::int64_t>(12, history);
    predictor = [window, horizon, history](const ExampleSet::Sample& s) {
      std::vector<double> series(static_cast<std::size_t>(history));
      for (std::int64_t t = 0; t < history; ++t) series[static_cast<std::size_t>(t)] = s.context.at(0, 0, t);
      return baseline_ha(series, window, horizon);
    };
  } else if (method == "persistence") {
    predictor = [horizon, history](const ExampleSet::Sample& s) {
      std::vector<double> series(static_cast<std::size_t>(history));
      for (std::int64_t t = 0; t < history; ++t) series[static_cast<std::size_t>(t)] = s.context.at(0, 0, t);
      return baseline_persistence(series, horizon);
    };
  } else {
    fail(ErrorCode::InvalidArgument, "unknown baseline '" + method + "'");
  }
  return evaluate_predictor(set, predictor, options);
}

// --- harness ---------------------------------------------------------------------

FitResult fit(nn::STNNModel& model, const DatasetView& data,
              const std::vector<std::int64_t>& targets, const FitOptions& options,
              std::ostream* log_stream) {
  if (data.x == nullptr || data.q == nullptr) {
    fail(ErrorCode::InvalidArgument, "fit needs feature and distance tensors");
  }
  const nn::ModelConfig& mc = model.config();
  FitResult result;
  result.splits = chronological_split(data.x->num_steps, mc.history_steps, mc.horizon_steps);

  model.theta = ctx::estimate_theta_range(*data.q, result.splits.train.begin,
                                          result.splits.train.end);
  const NormStats stats = feature_stats(*data.x, result.splits.train);
  model.norm_mean = stats.mean;
  model.norm_std = stats.std;

  WindowParams wp;
  wp.history_steps = mc.history_steps;
  wp.horizon_steps = mc.horizon_steps;
  wp.alpha = mc.alpha;
  wp.epsilon = mc.epsilon;
  wp.theta = model.theta;

  ExampleSet train_set = make_examples(*data.x, *data.q, targets, result.splits.train, wp,
                                       options.train.train_subsample_ratio, options.train.seed);
  ExampleSet val_set = make_examples(*data.x, *data.q, targets, result.splits.val, wp, 1.0,
                                     options.train.seed, options.val_window_stride);

  TrainConfig tc = options.train;
  tc.val_exclude_zero_truth = data.has_closures;
  result.log = train(model, train_set, val_set.empty() ? nullptr : &val_set, tc, log_stream);
  return result;
}

ExampleSet split_examples(const nn::STNNModel& model, const DatasetView& data,
                          const std::vector<std::int64_t>& targets, const SplitRanges& splits,
                          const std::string& split_name, std::int64_t window_stride) {
  Range range;
  if (split_name == "train")
    range = splits.train;
  else if (split_name == "val")
    range = splits.val;
  else if (split_name == "test")
    range = splits.test;
  else if (split_name == "all")
    range = {0, data.x->num_steps};
  else
    fail(ErrorCode::InvalidArgument, "unknown split '" + split_name + "'");

  const nn::ModelConfig& mc = model.config();
  WindowParams wp;
  wp.history_steps = mc.history_steps;
  wp.horizon_steps = mc.horizon_steps;
  wp.alpha = mc.alpha;
  wp.epsilon = mc.epsilon;
  wp.theta = model.theta;
  return make_examples(*data.x, *data.q, targets, range, wp, 1.0, 1, window_stride);
}

}  // namespace stnn::train
