// Command-line front end for the forecasting library. Talks to the shared
// library exclusively through the public C API.
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "stnn/stnn.h"

namespace {

int fail_with(stnn_status status) {
  std::fprintf(stderr, "error: code=%s msg=\"%s\"\n", stnn_status_name(status),
               stnn_last_error());
  return static_cast<int>(status);
}

#define CHECK_OK(call)                            \
  do {                                            \
    const stnn_status status_ = (call);           \
    if (status_ != STNN_OK) return fail_with(status_); \
  } while (0)

struct DatasetGuard {
  stnn_dataset* handle = nullptr;
  ~DatasetGuard() { stnn_dataset_free(handle); }
};

struct ModelGuard {
  stnn_model* handle = nullptr;
  ~ModelGuard() { stnn_model_free(handle); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STNN traffic forecasting"};
  app.require_subcommand(1);

  // shared flag storage
  std::string manifest, checkpoint, targets = "all", out, log_path, split = "test";
  std::uint64_t seed = 1;
  std::int64_t alpha = 15, horizon_steps = 12, history_steps = 12;
  double epsilon = 0.1, lr = 0.001, subsample = 0.2;
  std::int64_t epochs = 50, batch_size = 80, window_start = -1, val_stride = 1;
  int threads = 0;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a dynamic-network dataset");
  std::string sim_name = "sim";
  std::int32_t rows = 3, cols = 9;
  std::int64_t steps = 2000;
  bool no_closures = false;
  simulate->add_option("--out", out, "output directory")->required();
  simulate->add_option("--seed", seed, "random seed");
  simulate->add_option("--name", sim_name, "dataset name");
  simulate->add_option("--rows", rows, "junction grid rows");
  simulate->add_option("--cols", cols, "junction grid columns");
  simulate->add_option("--steps", steps, "time steps to simulate");
  simulate->add_flag("--no-closures", no_closures, "disable the closure schedule");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
  train_cmd->add_option("--out", out, "checkpoint path")->required();
  train_cmd->add_option("--targets", targets, "comma-separated sensor ids or 'all'");
  train_cmd->add_option("--alpha", alpha, "local context size");
  train_cmd->add_option("--epsilon", epsilon, "neighbor threshold");
  train_cmd->add_option("--horizon-steps", horizon_steps, "forecast steps");
  train_cmd->add_option("--history-steps", history_steps, "input window steps");
  train_cmd->add_option("--seed", seed, "random seed");
  train_cmd->add_option("--epochs", epochs, "training epochs");
  train_cmd->add_option("--batch-size", batch_size, "mini-batch size");
  train_cmd->add_option("--lr", lr, "learning rate");
  train_cmd->add_option("--subsample", subsample, "training-window subsample ratio");
  train_cmd->add_option("--threads", threads, "worker threads (0 = auto)");
  train_cmd->add_option("--val-stride", val_stride, "validation window stride");
  train_cmd->add_option("--log", log_path, "epoch log path (default: <out>.log)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "compute forecast metrics");
  bool no_baselines = false;
  eval_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval_cmd->add_option("--targets", targets, "comma-separated sensor ids or 'all'");
  eval_cmd->add_option("--split", split, "test|val|train|all");
  eval_cmd->add_option("--out", out, "metrics report path (JSON)");
  eval_cmd->add_option("--threads", threads, "worker threads (0 = auto)");
  eval_cmd->add_flag("--no-baselines", no_baselines, "skip ha/persistence reference rows");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "forecast from the last window");
  predict_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
  predict_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  predict_cmd->add_option("--targets", targets, "comma-separated sensor ids or 'all'");
  predict_cmd->add_option("--out", out, "forecast CSV path")->required();

  // explain
  auto* explain_cmd = app.add_subcommand("explain", "export an attention map");
  explain_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
  explain_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  explain_cmd->add_option("--targets", targets, "single sensor id")->required();
  explain_cmd->add_option("--window-start", window_start, "window start step (-1 = last)");
  explain_cmd->add_option("--out", out, "attention CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) {
    stnn_sim_params params;
    stnn_sim_params_init(&params);
    params.junction_rows = rows;
    params.junction_cols = cols;
    params.steps = steps;
    params.seed = seed;
    params.with_default_closures = no_closures ? 0 : 1;
    params.name = sim_name.c_str();
    DatasetGuard dataset;
    CHECK_OK(stnn_simulate(&params, &dataset.handle));
    char manifest_path[4096];
    CHECK_OK(stnn_dataset_save(dataset.handle, out.c_str(), manifest_path,
                               sizeof(manifest_path)));
    std::printf("%s\n", manifest_path);
    return 0;
  }

  if (train_cmd->parsed()) {
    DatasetGuard dataset;
    CHECK_OK(stnn_dataset_open(manifest.c_str(), &dataset.handle));

    stnn_model_config config;
    stnn_model_config_init(&config);
    config.alpha = static_cast<int32_t>(alpha);
    config.epsilon = epsilon;
    config.horizon_steps = static_cast<int32_t>(horizon_steps);
    config.history_steps = static_cast<int32_t>(history_steps);
    ModelGuard model;
    CHECK_OK(stnn_model_create(&config, seed, &model.handle));

    stnn_train_options options;
    stnn_train_options_init(&options);
    options.epochs = epochs;
    options.batch_size = batch_size;
    options.learning_rate = lr;
    options.subsample_ratio = subsample;
    options.seed = seed;
    options.threads = threads;
    options.val_window_stride = val_stride;
    options.targets = targets.c_str();
    const std::string log_file = log_path.empty() ? out + ".log" : log_path;
    options.log_path = log_file.c_str();
    CHECK_OK(stnn_train(model.handle, dataset.handle, &options));
    CHECK_OK(stnn_model_save(model.handle, out.c_str()));
    std::printf("checkpoint=%s params=%lld log=%s\n", out.c_str(),
                static_cast<long long>(stnn_model_param_count(model.handle)), log_file.c_str());
    return 0;
  }

  if (eval_cmd->parsed()) {
    DatasetGuard dataset;
    CHECK_OK(stnn_dataset_open(manifest.c_str(), &dataset.handle));
    ModelGuard model;
    CHECK_OK(stnn_model_load(checkpoint.c_str(), &model.handle));

    stnn_eval_options options;
    stnn_eval_options_init(&options);
    options.split = split.c_str();
    options.targets = targets.c_str();
    options.threads = threads;
    options.with_baselines = no_baselines ? 0 : 1;
    stnn_metrics overall;
    CHECK_OK(stnn_evaluate(model.handle, dataset.handle, &options,
                           out.empty() ? nullptr : out.c_str(), &overall));
    std::printf("split=%s mae=%.6f rmse=%.6f mape_pct=%.4f points=%lld\n", split.c_str(),
                overall.mae, overall.rmse, overall.mape_pct,
                static_cast<long long>(overall.points));
    return 0;
  }

  if (predict_cmd->parsed()) {
    DatasetGuard dataset;
    CHECK_OK(stnn_dataset_open(manifest.c_str(), &dataset.handle));
    ModelGuard model;
    CHECK_OK(stnn_model_load(checkpoint.c_str(), &model.handle));
    CHECK_OK(stnn_predict(model.handle, dataset.handle, targets.c_str(), out.c_str()));
    std::printf("%s\n", out.c_str());
    return 0;
  }

  if (explain_cmd->parsed()) {
    DatasetGuard dataset;
    CHECK_OK(stnn_dataset_open(manifest.c_str(), &dataset.handle));
    ModelGuard model;
    CHECK_OK(stnn_model_load(checkpoint.c_str(), &model.handle));
    CHECK_OK(stnn_explain(model.handle, dataset.handle, targets.c_str(), window_start,
                          out.c_str()));
    std::printf("%s\n", out.c_str());
    return 0;
  }
  return 0;
}
