#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stnn/train.hpp"

using namespace stnn;
using namespace stnn::train;

namespace {

// tiny deterministic dataset: smooth per-sensor sinusoids over a small grid
struct TinyData {
  ctx::SensorFeatureTensor x;
  ctx::DistanceTensor q;
};

TinyData tiny_dataset(std::int64_t n = 4, std::int64_t t_total = 120) {
  TinyData d;
  d.x.num_sensors = n;
  d.x.num_features = 2;
  d.x.num_steps = t_total;
  d.x.stride_seconds = 300;
  d.x.values.resize(static_cast<std::size_t>(n * 2 * t_total));
  for (std::int64_t s = 0; s < n; ++s) {
    d.x.sensor_ids.push_back("s" + std::to_string(s));
    for (std::int64_t t = 0; t < t_total; ++t) {
      d.x.at(s, 0, t) = 20.0 + 5.0 * s + 8.0 * std::sin(0.15 * static_cast<double>(t + 7 * s));
      d.x.at(s, 1, t) = static_cast<double>(t % 288) / 288.0;
    }
  }
  d.x.timestamps.resize(static_cast<std::size_t>(t_total));
  for (std::int64_t t = 0; t < t_total; ++t) {
    d.x.timestamps[static_cast<std::size_t>(t)] = t * 300;
  }
  d.x.validate();

  std::vector<double> matrix(static_cast<std::size_t>(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      if (i != j) matrix[static_cast<std::size_t>(i * n + j)] = 90.0 * std::abs(i - j) + 40.0;
    }
  }
  std::vector<std::string> ids = d.x.sensor_ids;
  d.q = ctx::DistanceTensor::static_network(std::move(ids), std::move(matrix), t_total);
  return d;
}

nn::ModelConfig tiny_config() {
  nn::ModelConfig c;
  c.module_count = 2;
  c.channels = {4, 8};
  c.input_proj_channels = 4;
  c.alpha = 4;
  c.history_steps = 8;
  c.horizon_steps = 4;
  c.features = 2;
  c.dropout_rate = 0.0;
  c.epsilon = 0.1;
  return c;
}

WindowParams params_for(const nn::ModelConfig& c, double theta) {
  WindowParams wp;
  wp.history_steps = c.history_steps;
  wp.horizon_steps = c.horizon_steps;
  wp.alpha = c.alpha;
  wp.epsilon = c.epsilon;
  wp.theta = theta;
  return wp;
}

}  // namespace

TEST_CASE("chronological split is contiguous 70/20/10 with remainder to test") {
  SplitRanges s = chronological_split(100, 12, 12);
  CHECK(s.train.begin == 0);
  CHECK(s.train.end == 70);
  CHECK(s.val.begin == 70);
  CHECK(s.val.end == 90);
  CHECK(s.test.begin == 90);
  CHECK(s.test.end == 100);

  SplitRanges odd = chronological_split(101, 12, 12);
  CHECK(odd.train.end == 70);
  CHECK(odd.val.end == 90);
  CHECK(odd.test.end == 101);  // remainder goes to test

  CHECK_THROWS_AS(chronological_split(10, 12, 12), Error);
}

TEST_CASE("windows never straddle a split boundary") {
  TinyData d = tiny_dataset(2, 100);
  SplitRanges s = chronological_split(100, 12, 12);
  const WindowParams wp = params_for(tiny_config(), 100.0);

  for (const Range& range : {s.train, s.val, s.test}) {
    WindowParams local = wp;
    local.history_steps = 12;
    local.horizon_steps = 12;
    ExampleSet set = make_examples(d.x, d.q, {0, 1}, range, local, 1.0, 1);
    for (const Example& e : set.items) {
      CHECK(e.window_start >= range.begin);
      CHECK(e.window_start + 24 <= range.end);
      CHECK(e.window_start != 69);  // the straddling start is in no split
    }
  }
  // and the boundary start 69 belongs to no split at all
  ExampleSet train_set = make_examples(d.x, d.q, {0}, s.train,
                                       [&] {
                                         WindowParams local = wp;
                                         local.history_steps = 12;
                                         local.horizon_steps = 12;
                                         return local;
                                       }(),
                                       1.0, 1);
  CHECK(train_set.items.back().window_start == 70 - 24);
}

TEST_CASE("a range of exactly one window yields one example per target") {
  TinyData d = tiny_dataset(3, 60);
  const WindowParams wp = params_for(tiny_config(), 100.0);
  ExampleSet set = make_examples(d.x, d.q, {0, 1, 2}, {10, 10 + 8 + 4}, wp, 1.0, 1);
  CHECK(set.size() == 3);
  for (const Example& e : set.items) CHECK(e.window_start == 10);
}

TEST_CASE("subsampling keeps exactly the rounded share, reproducibly") {
  TinyData d = tiny_dataset(2, 120);
  nn::ModelConfig c = tiny_config();
  WindowParams wp = params_for(c, 100.0);
  // manufacture 1000 windows: 2 targets x 500 starts
  ExampleSet all = make_examples(d.x, d.q, {0, 1}, {0, 120}, wp, 1.0, 1);
  const std::size_t windows_per_target = 120 - 12 + 1;
  CHECK(all.size() == 2 * windows_per_target);

  ExampleSet fifth = make_examples(d.x, d.q, {0, 1}, {0, 120}, wp, 0.2, 1);
  CHECK(fifth.size() ==
        static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(all.size()))));

  ExampleSet again = make_examples(d.x, d.q, {0, 1}, {0, 120}, wp, 0.2, 1);
  REQUIRE(fifth.size() == again.size());
  for (std::size_t i = 0; i < fifth.size(); ++i) {
    CHECK(fifth.items[i].target_index == again.items[i].target_index);
    CHECK(fifth.items[i].window_start == again.items[i].window_start);
  }

  ExampleSet other_seed = make_examples(d.x, d.q, {0, 1}, {0, 120}, wp, 0.2, 2);
  bool any_difference = other_seed.size() != fifth.size();
  for (std::size_t i = 0; !any_difference && i < fifth.size(); ++i) {
    any_difference = other_seed.items[i].window_start != fifth.items[i].window_start ||
                     other_seed.items[i].target_index != fifth.items[i].target_index;
  }
  CHECK(any_difference);
}

TEST_CASE("normalization stats come from the requested range only") {
  TinyData d = tiny_dataset(2, 100);
  const NormStats before = feature_stats(d.x, {0, 70});
  // poison the validation/test region; training stats must not move
  for (std::int64_t s = 0; s < 2; ++s) {
    for (std::int64_t t = 70; t < 100; ++t) d.x.at(s, 0, t) = 1e6;
  }
  const NormStats after = feature_stats(d.x, {0, 70});
  CHECK(before.mean == after.mean);
  CHECK(before.std == after.std);
  CHECK(before.std > 0.0);
}

TEST_CASE("normalize/denormalize round-trips to within 1e-12") {
  nn::STNNModel model = nn::STNNModel::create(tiny_config(), 1);
  model.norm_mean = 23.75;
  model.norm_std = 7.5;
  for (double v : {-100.0, 0.0, 0.1, 17.3, 1e6}) {
    CHECK(model.denormalize(model.normalize(v)) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("training a single example drives the loss toward zero") {
  TinyData d = tiny_dataset(4, 60);
  nn::ModelConfig c = tiny_config();
  nn::STNNModel model = nn::STNNModel::create(c, 1);
  const NormStats stats = feature_stats(d.x, {0, 42});
  model.norm_mean = stats.mean;
  model.norm_std = stats.std;
  model.theta = ctx::estimate_theta(d.q);

  WindowParams wp = params_for(c, model.theta);
  ExampleSet one = make_examples(d.x, d.q, {1}, {5, 5 + 12}, wp, 1.0, 1);
  REQUIRE(one.size() == 1);

  TrainConfig tc;
  tc.epochs = 500;
  tc.batch_size = 1;
  tc.learning_rate = 0.0005;
  tc.seed = 1;
  tc.threads = 1;
  TrainLog log = stnn::train::train(model, one, nullptr, tc);
  REQUIRE(log.epochs.size() == 500);
  CHECK(log.epochs.back().train_loss < 0.01 * log.epochs.front().train_loss);
}

TEST_CASE("zero epochs leave the model untouched and the log empty") {
  TinyData d = tiny_dataset(3, 60);
  nn::ModelConfig c = tiny_config();
  nn::STNNModel model = nn::STNNModel::create(c, 1);
  model.norm_mean = 10;
  model.norm_std = 2;
  model.theta = 100;
  std::vector<std::vector<double>> before;
  for (const auto& p : model.parameters()) before.push_back(p.vec());

  WindowParams wp = params_for(c, model.theta);
  ExampleSet set = make_examples(d.x, d.q, {0}, {0, 40}, wp, 1.0, 1);
  TrainConfig tc;
  tc.epochs = 0;
  TrainLog log = stnn::train::train(model, set, nullptr, tc);
  CHECK(log.epochs.empty());
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i].vec() == before[i]);
}

TEST_CASE("fixed seeds reproduce loss curves and final parameters bitwise") {
  auto run = [] {
    TinyData d = tiny_dataset(4, 90);
    nn::ModelConfig c = tiny_config();
    c.dropout_rate = 0.2;  // exercise the seeded dropout path too
    nn::STNNModel model = nn::STNNModel::create(c, 1);
    const SplitRanges s = chronological_split(90, c.history_steps, c.horizon_steps);
    const NormStats stats = feature_stats(d.x, {s.train.begin, s.train.end});
    model.norm_mean = stats.mean;
    model.norm_std = stats.std;
    model.theta = ctx::estimate_theta(d.q);

    WindowParams wp = params_for(c, model.theta);
    ExampleSet train_set = make_examples(d.x, d.q, {0, 1, 2, 3}, s.train, wp, 0.5, 1);
    ExampleSet val_set = make_examples(d.x, d.q, {0, 1, 2, 3}, s.val, wp, 1.0, 1);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.threads = 1;
    tc.seed = 1;
    TrainLog log = stnn::train::train(model, train_set, &val_set, tc);
    std::vector<double> flat;
    for (const auto& p : model.parameters()) {
      flat.insert(flat.end(), p.vec().begin(), p.vec().end());
    }
    std::vector<double> losses;
    for (const auto& e : log.epochs) {
      losses.push_back(e.train_loss);
      losses.push_back(e.val_mae);
    }
    return std::pair{flat, losses};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("diverging training aborts with a numeric diagnostic") {
  TinyData d = tiny_dataset(3, 60);
  nn::ModelConfig c = tiny_config();
  nn::STNNModel model = nn::STNNModel::create(c, 1);
  model.norm_mean = 0.0;
  model.norm_std = 1e-300;  // overflow-scale inputs blow the activations up
  model.theta = 100.0;
  WindowParams wp = params_for(c, model.theta);
  ExampleSet set = make_examples(d.x, d.q, {0, 1}, {0, 40}, wp, 1.0, 1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.threads = 1;
  CHECK_THROWS_AS(stnn::train::train(model, set, nullptr, tc), Error);
}

TEST_CASE("perfect predictions score zero on every metric") {
  TinyData d = tiny_dataset(3, 80);
  WindowParams wp = params_for(tiny_config(), 100.0);
  ExampleSet set = make_examples(d.x, d.q, {0, 1, 2}, {0, 60}, wp, 1.0, 1);
  EvalOptions options;
  MetricsReport r = evaluate_predictor(
      set, [](const ExampleSet::Sample& s) { return s.target; }, options);
  CHECK(r.overall.mae == 0.0);
  CHECK(r.overall.rmse == 0.0);
  CHECK(r.overall.mape_pct == 0.0);
  CHECK(r.overall.points > 0);
}

TEST_CASE("closed-form metric arithmetic on a two-point example") {
  // predictions [2,4] against truth [1,2]
  TinyData d = tiny_dataset(1, 40);
  nn::ModelConfig c = tiny_config();
  c.horizon_steps = 2;
  WindowParams wp = params_for(c, 100.0);
  d.x.at(0, 0, 8) = 1.0;
  d.x.at(0, 0, 9) = 2.0;
  ExampleSet set = make_examples(d.x, d.q, {0}, {0, 10}, wp, 1.0, 1);
  REQUIRE(set.size() == 1);

  EvalOptions options;
  MetricsReport r = evaluate_predictor(
      set, [](const ExampleSet::Sample&) { return std::vector<double>{2.0, 4.0}; }, options);
  CHECK(r.overall.mae == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(r.overall.rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
  // mean of 1/1 and 2/2 in percent
  CHECK(r.overall.mape_pct == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("zero ground truth never enters the mape denominator") {
  TinyData d = tiny_dataset(1, 40);
  nn::ModelConfig c = tiny_config();
  c.horizon_steps = 2;
  WindowParams wp = params_for(c, 100.0);
  d.x.at(0, 0, 8) = 0.0;
  d.x.at(0, 0, 9) = 2.0;
  ExampleSet set = make_examples(d.x, d.q, {0}, {0, 10}, wp, 1.0, 1);

  EvalOptions options;
  MetricsReport r = evaluate_predictor(
      set, [](const ExampleSet::Sample&) { return std::vector<double>{1.0, 3.0}; }, options);
  CHECK(r.overall.points == 2);
  CHECK(r.overall.mape_points == 1);
  CHECK(r.overall.mape_pct == doctest::Approx(50.0));

  // with the closure rule the zero-truth point drops from mae/rmse too
  options.exclude_zero_truth = true;
  MetricsReport rx = evaluate_predictor(
      set, [](const ExampleSet::Sample&) { return std::vector<double>{1.0, 3.0}; }, options);
  CHECK(rx.overall.points == 1);
  CHECK(rx.overall.mae == doctest::Approx(1.0));
}

TEST_CASE("mae never exceeds rmse") {
  TinyData d = tiny_dataset(3, 80);
  WindowParams wp = params_for(tiny_config(), 100.0);
  ExampleSet set = make_examples(d.x, d.q, {0, 1, 2}, {0, 60}, wp, 1.0, 1);
  Rng rng(15);
  EvalOptions options;
  MetricsReport r = evaluate_predictor(
      set,
      [&rng](const ExampleSet::Sample& s) {
        std::vector<double> noise(s.target);
        for (double& v : noise) v += rng.uniform(-10.0, 10.0);
        return noise;
      },
      options);
  CHECK(r.overall.mae <= r.overall.rmse);
  for (const auto& [step, metrics] : r.horizons) CHECK(metrics.mae <= metrics.rmse);
}

TEST_CASE("horizon buckets pick out single forecast steps") {
  TinyData d = tiny_dataset(1, 60);
  nn::ModelConfig c = tiny_config();
  c.horizon_steps = 12;
  c.history_steps = 12;
  WindowParams wp = params_for(c, 100.0);
  ExampleSet set = make_examples(d.x, d.q, {0}, {0, 24}, wp, 1.0, 1);
  REQUIRE(set.size() == 1);

  EvalOptions options;  // default marks 3, 6, 12
  MetricsReport r = evaluate_predictor(
      set,
      [](const ExampleSet::Sample& s) {
        std::vector<double> pred(s.target);
        pred[2] += 1.0;  // step 3 off by one
        return pred;
      },
      options);
  REQUIRE(r.horizons.size() == 3);
  CHECK(r.horizons[0].first == 3);
  CHECK(r.horizons[0].second.mae == doctest::Approx(1.0));
  CHECK(r.horizons[1].second.mae == doctest::Approx(0.0));
  CHECK(r.horizons[2].second.mae == doctest::Approx(0.0));
  CHECK(r.overall.mae == doctest::Approx(1.0 / 12.0));
}

TEST_CASE("moving-average baseline closed forms") {
  CHECK(baseline_ha(std::vector<double>(20, 5.0), 12, 4) == std::vector<double>(4, 5.0));

  std::vector<double> ramp;
  for (int i = 1; i <= 12; ++i) ramp.push_back(static_cast<double>(i));
  const std::vector<double> pred = baseline_ha(ramp, 12, 3);
  for (double v : pred) CHECK(v == doctest::Approx(6.5));

  CHECK_THROWS_AS(baseline_ha(std::vector<double>(5, 1.0), 12, 3), Error);
}

TEST_CASE("moving-average lag on a linear ramp follows the closed form") {
  const double slope = 0.7;
  const std::int64_t window = 12, horizon = 12;
  std::vector<double> series;
  for (int t = 0; t < 50; ++t) series.push_back(slope * t);
  const std::vector<double> pred = baseline_ha(series, window, horizon);
  // truth at the last horizon step is slope*(49 + horizon); the average of the
  // final window sits at slope*(49 - (window-1)/2)
  const double truth_last = slope * (49 + horizon);
  const double expected_gap = slope * (horizon + (window - 1) / 2.0);
  CHECK(truth_last - pred.back() == doctest::Approx(expected_gap).epsilon(1e-12));
}

TEST_CASE("persistence repeats the last observation") {
  std::vector<double> series{3.0, 9.0, 7.0};
  CHECK(baseline_persistence(series, 5) == std::vector<double>(5, 7.0));
  CHECK_THROWS_AS(baseline_persistence({}, 3), Error);
}

TEST_CASE("fit freezes theta and stats from the training split and logs epochs") {
  TinyData d = tiny_dataset(4, 120);
  nn::ModelConfig c = tiny_config();
  nn::STNNModel model = nn::STNNModel::create(c, 1);

  std::ostringstream log_text;
  FitOptions options;
  options.train.epochs = 2;
  options.train.batch_size = 16;
  options.train.train_subsample_ratio = 0.5;
  options.train.threads = 1;
  DatasetView view{&d.x, &d.q, false};
  FitResult result = fit(model, view, {0, 1, 2, 3}, options, &log_text);

  CHECK(result.splits.train.end == 84);
  CHECK(model.theta == doctest::Approx(ctx::estimate_theta_range(d.q, 0, 84)));
  const NormStats stats = feature_stats(d.x, {0, 84});
  CHECK(model.norm_mean == stats.mean);
  CHECK(model.norm_std == stats.std);
  CHECK(result.log.epochs.size() == 2);
  CHECK(log_text.str().find("epoch=1 train_loss=") != std::string::npos);
  CHECK(log_text.str().find("val_mae=") != std::string::npos);
}

TEST_CASE("threaded training matches itself run to run") {
  if (thread_cap() < 2) return;  // nothing to compare on a single-core box
  auto run = [] {
    TinyData d = tiny_dataset(4, 90);
    nn::ModelConfig c = tiny_config();
    nn::STNNModel model = nn::STNNModel::create(c, 1);
    model.theta = ctx::estimate_theta(d.q);
    const NormStats stats = feature_stats(d.x, {0, 63});
    model.norm_mean = stats.mean;
    model.norm_std = stats.std;
    WindowParams wp = params_for(c, model.theta);
    ExampleSet train_set = make_examples(d.x, d.q, {0, 1, 2, 3}, {0, 63}, wp, 1.0, 1);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 16;
    tc.threads = 2;
    stnn::train::train(model, train_set, nullptr, tc);
    std::vector<double> flat;
    for (const auto& p : model.parameters()) {
      flat.insert(flat.end(), p.vec().begin(), p.vec().end());
    }
    return flat;
  };
  CHECK(run() == run());
}
