#include "stnn/stnn.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "stnn/io.hpp"
#include "stnn/model.hpp"
#include "stnn/sim.hpp"
#include "stnn/train.hpp"

using namespace stnn;

struct stnn_dataset {
  io::Dataset data;
};

struct stnn_model {
  nn::STNNModel model;
};

namespace {

thread_local std::string g_last_error = "";

stnn_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return STNN_ERROR_INVALID_ARGUMENT;
    case ErrorCode::Dimension: return STNN_ERROR_DIMENSION;
    case ErrorCode::Io: return STNN_ERROR_IO;
    case ErrorCode::Parse: return STNN_ERROR_PARSE;
    case ErrorCode::NotFound: return STNN_ERROR_NOT_FOUND;
    case ErrorCode::State: return STNN_ERROR_STATE;
    case ErrorCode::Numeric: return STNN_ERROR_NUMERIC;
    case ErrorCode::Internal: return STNN_ERROR_INTERNAL;
  }
  return STNN_ERROR_INTERNAL;
}

template <typename Fn>
stnn_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return STNN_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return STNN_ERROR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return STNN_ERROR_INTERNAL;
  }
}

stnn_status invalid(const char* message) {
  g_last_error = message;
  return STNN_ERROR_INVALID_ARGUMENT;
}

void copy_string(const std::string& value, char* buf, size_t buf_len) {
  if (buf == nullptr || buf_len == 0) return;
  const size_t n = value.size() < buf_len - 1 ? value.size() : buf_len - 1;
  std::memcpy(buf, value.data(), n);
  buf[n] = '\0';
}

nn::ModelConfig convert(const stnn_model_config& c) {
  nn::ModelConfig mc;
  mc.module_count = c.module_count;
  mc.channels.assign(c.channels, c.channels + (c.module_count < 8 ? c.module_count : 8));
  mc.input_proj_channels = c.input_proj_channels;
  mc.kernel_size = c.kernel_size;
  mc.leaky_slope = c.leaky_slope;
  mc.dropout_rate = c.dropout_rate;
  mc.alpha = c.alpha;
  mc.history_steps = c.history_steps;
  mc.horizon_steps = c.horizon_steps;
  mc.features = c.features;
  mc.epsilon = c.epsilon;
  mc.use_attention = c.use_attention != 0;
  mc.use_conv = c.use_conv != 0;
  mc.use_spacetime_kernel = c.use_spacetime_kernel != 0;
  mc.use_temporal_kernel = c.use_temporal_kernel != 0;
  mc.use_spatial_kernel = c.use_spatial_kernel != 0;
  mc.attention_scale = c.attention_scale != 0;
  mc.mask_dummy_events = c.mask_dummy_events != 0;
  mc.head_target_row_only = c.head_target_row_only != 0;
  return mc;
}

// Builds the forecast context ending right before prediction time.
ctx::LocalSpacetime forecast_context(const stnn_model* model, const stnn_dataset* dataset,
                                     std::int64_t target_index, std::int64_t window_start) {
  const nn::ModelConfig& mc = model->model.config();
  const io::Dataset& ds = dataset->data;
  if (window_start < 0) window_start = ds.x.num_steps - mc.history_steps;
  if (window_start < 0 || window_start + mc.history_steps > ds.x.num_steps) {
    fail(ErrorCode::InvalidArgument, "window start outside the dataset");
  }
  return ctx::build_local_spacetime_window(ds.x, ds.q, target_index, mc.epsilon, mc.alpha,
                                           model->model.theta, window_start, mc.history_steps);
}

}  // namespace

extern "C" {

const char* stnn_version(void) { return "1.0.0"; }

const char* stnn_last_error(void) { return g_last_error.c_str(); }

const char* stnn_status_name(stnn_status status) {
  switch (status) {
    case STNN_OK: return "OK";
    case STNN_ERROR_INVALID_ARGUMENT: return "INVALID_ARGUMENT";
    case STNN_ERROR_DIMENSION: return "DIMENSION";
    case STNN_ERROR_IO: return "IO";
    case STNN_ERROR_PARSE: return "PARSE";
    case STNN_ERROR_NOT_FOUND: return "NOT_FOUND";
    case STNN_ERROR_STATE: return "STATE";
    case STNN_ERROR_NUMERIC: return "NUMERIC";
    case STNN_ERROR_INTERNAL: return "INTERNAL";
  }
  return "UNKNOWN";
}

stnn_status stnn_dataset_open(const char* manifest_path, stnn_dataset** out) {
  if (manifest_path == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    auto handle = std::make_unique<stnn_dataset>();
    handle->data = io::load_dataset(manifest_path);
    *out = handle.release();
  });
}

stnn_status stnn_dataset_save(const stnn_dataset* dataset, const char* directory,
                              char* manifest_path_out, size_t manifest_path_len) {
  if (dataset == nullptr || directory == nullptr) return invalid("null argument");
  return guarded([&] {
    const std::string path = io::save_dataset(dataset->data, directory);
    copy_string(path, manifest_path_out, manifest_path_len);
  });
}

void stnn_dataset_free(stnn_dataset* dataset) { delete dataset; }

stnn_status stnn_dataset_info(const stnn_dataset* dataset, int64_t* num_sensors,
                              int64_t* num_features, int64_t* num_steps) {
  if (dataset == nullptr) return invalid("null dataset");
  if (num_sensors != nullptr) *num_sensors = dataset->data.x.num_sensors;
  if (num_features != nullptr) *num_features = dataset->data.x.num_features;
  if (num_steps != nullptr) *num_steps = dataset->data.x.num_steps;
  return STNN_OK;
}

stnn_status stnn_dataset_sensor_id(const stnn_dataset* dataset, int64_t index, char* buf,
                                   size_t buf_len) {
  if (dataset == nullptr || buf == nullptr) return invalid("null argument");
  return guarded([&] {
    if (index < 0 || index >= dataset->data.x.num_sensors) {
      fail(ErrorCode::InvalidArgument, "sensor index out of range");
    }
    copy_string(dataset->data.x.sensor_ids[static_cast<std::size_t>(index)], buf, buf_len);
  });
}

void stnn_sim_params_init(stnn_sim_params* params) {
  if (params == nullptr) return;
  params->junction_rows = 3;
  params->junction_cols = 9;
  params->steps = 2000;
  params->seed = 1;
  params->with_default_closures = 1;
  params->name = nullptr;
}

stnn_status stnn_simulate(const stnn_sim_params* params, stnn_dataset** out) {
  if (params == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    const std::int32_t rows = params->junction_rows > 0 ? params->junction_rows : 3;
    const std::int32_t cols = params->junction_cols > 0 ? params->junction_cols : 9;
    const std::int64_t steps = params->steps > 0 ? params->steps : 2000;
    sim::GridNetwork network = sim::build_grid(rows, cols);
    sim::ClosureSchedule schedule;
    std::int32_t central = -1;
    if (params->with_default_closures != 0) {
      schedule = sim::default_schedule(network, params->seed, &central);
    }
    sim::SimDataset run = sim::run(network, schedule, steps, params->seed);
    run.central_closure_segment = central;
    auto handle = std::make_unique<stnn_dataset>();
    handle->data = io::from_sim(std::move(run), params->name != nullptr ? params->name : "sim");
    *out = handle.release();
  });
}

void stnn_model_config_init(stnn_model_config* config) {
  if (config == nullptr) return;
  std::memset(config, 0, sizeof(*config));
  config->module_count = 2;
  config->channels[0] = 32;
  config->channels[1] = 64;
  config->input_proj_channels = 32;
  config->kernel_size = 3;
  config->leaky_slope = 0.2;
  config->dropout_rate = 0.3;
  config->alpha = 15;
  config->history_steps = 12;
  config->horizon_steps = 12;
  config->features = 2;
  config->epsilon = 0.1;
  config->use_attention = 1;
  config->use_conv = 1;
  config->use_spacetime_kernel = 1;
  config->use_temporal_kernel = 1;
  config->use_spatial_kernel = 1;
}

stnn_status stnn_model_create(const stnn_model_config* config, uint64_t seed, stnn_model** out) {
  if (config == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    auto handle = std::make_unique<stnn_model>();
    handle->model = nn::STNNModel::create(convert(*config), seed);
    *out = handle.release();
  });
}

stnn_status stnn_model_load(const char* checkpoint_path, stnn_model** out) {
  if (checkpoint_path == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    auto handle = std::make_unique<stnn_model>();
    handle->model = nn::load_checkpoint(checkpoint_path);
    *out = handle.release();
  });
}

stnn_status stnn_model_save(const stnn_model* model, const char* checkpoint_path) {
  if (model == nullptr || checkpoint_path == nullptr) return invalid("null argument");
  return guarded([&] { nn::save_checkpoint(model->model, checkpoint_path); });
}

void stnn_model_free(stnn_model* model) { delete model; }

int64_t stnn_model_param_count(const stnn_model* model) {
  return model == nullptr ? 0 : model->model.param_count();
}

stnn_status stnn_model_get_config(const stnn_model* model, stnn_model_config* out) {
  if (model == nullptr || out == nullptr) return invalid("null argument");
  const nn::ModelConfig& mc = model->model.config();
  stnn_model_config_init(out);
  out->module_count = static_cast<int32_t>(mc.module_count);
  for (std::size_t i = 0; i < mc.channels.size() && i < 8; ++i) {
    out->channels[i] = static_cast<int32_t>(mc.channels[i]);
  }
  out->input_proj_channels = static_cast<int32_t>(mc.input_proj_channels);
  out->kernel_size = static_cast<int32_t>(mc.kernel_size);
  out->leaky_slope = mc.leaky_slope;
  out->dropout_rate = mc.dropout_rate;
  out->alpha = static_cast<int32_t>(mc.alpha);
  out->history_steps = static_cast<int32_t>(mc.history_steps);
  out->horizon_steps = static_cast<int32_t>(mc.horizon_steps);
  out->features = static_cast<int32_t>(mc.features);
  out->epsilon = mc.epsilon;
  out->use_attention = mc.use_attention ? 1 : 0;
  out->use_conv = mc.use_conv ? 1 : 0;
  out->use_spacetime_kernel = mc.use_spacetime_kernel ? 1 : 0;
  out->use_temporal_kernel = mc.use_temporal_kernel ? 1 : 0;
  out->use_spatial_kernel = mc.use_spatial_kernel ? 1 : 0;
  out->attention_scale = mc.attention_scale ? 1 : 0;
  out->mask_dummy_events = mc.mask_dummy_events ? 1 : 0;
  out->head_target_row_only = mc.head_target_row_only ? 1 : 0;
  return STNN_OK;
}

void stnn_train_options_init(stnn_train_options* options) {
  if (options == nullptr) return;
  std::memset(options, 0, sizeof(*options));
  options->epochs = 50;
  options->batch_size = 80;
  options->learning_rate = 0.001;
  options->subsample_ratio = 0.2;
  options->seed = 1;
  options->threads = 0;
  options->val_window_stride = 1;
  options->targets = nullptr;
  options->log_path = nullptr;
}

stnn_status stnn_train(stnn_model* model, const stnn_dataset* dataset,
                       const stnn_train_options* options) {
  if (model == nullptr || dataset == nullptr || options == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const std::vector<std::int64_t> targets = io::resolve_targets(
        dataset->data.x, options->targets != nullptr ? options->targets : "all");
    train::FitOptions fit_options;
    fit_options.train.epochs = options->epochs;
    fit_options.train.batch_size = options->batch_size;
    fit_options.train.learning_rate = options->learning_rate;
    fit_options.train.train_subsample_ratio = options->subsample_ratio;
    fit_options.train.seed = options->seed;
    fit_options.train.threads = options->threads;
    fit_options.train.dropout = model->model.config().dropout_rate;
    fit_options.val_window_stride =
        options->val_window_stride > 0 ? options->val_window_stride : 1;

    std::ofstream log;
    std::ostream* log_stream = nullptr;
    if (options->log_path != nullptr) {
      log.open(options->log_path, std::ios::app);
      if (!log) fail(ErrorCode::Io, std::string("cannot open log '") + options->log_path + "'");
      log_stream = &log;
    }
    train::fit(model->model, dataset->data.view(), targets, fit_options, log_stream);
  });
}

void stnn_eval_options_init(stnn_eval_options* options) {
  if (options == nullptr) return;
  std::memset(options, 0, sizeof(*options));
  options->split = "test";
  options->targets = nullptr;
  options->threads = 0;
  options->with_baselines = 1;
  options->window_stride = 1;
}

namespace {

stnn_metrics to_c_metrics(const train::Metrics& m) {
  return {m.mae, m.rmse, m.mape_pct, m.points};
}

}  // namespace

stnn_status stnn_evaluate(const stnn_model* model, const stnn_dataset* dataset,
                          const stnn_eval_options* options, const char* report_path,
                          stnn_metrics* overall_out) {
  if (model == nullptr || dataset == nullptr || options == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const io::Dataset& ds = dataset->data;
    const nn::ModelConfig& mc = model->model.config();
    const std::vector<std::int64_t> targets =
        io::resolve_targets(ds.x, options->targets != nullptr ? options->targets : "all");
    const train::SplitRanges splits =
        train::chronological_split(ds.x.num_steps, mc.history_steps, mc.horizon_steps);
    const std::string split = options->split != nullptr ? options->split : "test";
    const train::ExampleSet examples =
        train::split_examples(model->model, ds.view(), targets, splits, split,
                              options->window_stride > 0 ? options->window_stride : 1);

    train::EvalOptions eval_options;
    eval_options.exclude_zero_truth = ds.has_closures();
    eval_options.threads = options->threads;

    std::map<std::string, train::MetricsReport> reports;
    reports["model"] = train::evaluate(model->model, examples, eval_options);
    if (options->with_baselines != 0) {
      reports["ha"] = train::evaluate_baseline(examples, "ha", eval_options);
      reports["persistence"] = train::evaluate_baseline(examples, "persistence", eval_options);
    }
    if (overall_out != nullptr) *overall_out = to_c_metrics(reports["model"].overall);
    if (report_path != nullptr) {
      std::map<std::string, std::string> metadata;
      metadata["dataset"] = ds.name;
      metadata["split"] = split;
      metadata["targets"] = options->targets != nullptr ? options->targets : "all";
      io::write_text_file(report_path, io::metrics_json(reports, metadata));
    }
  });
}

stnn_status stnn_baseline_metrics(const stnn_dataset* dataset, const char* method,
                                  const stnn_eval_options* options, int64_t history_steps,
                                  int64_t horizon_steps, stnn_metrics* overall_out) {
  if (dataset == nullptr || method == nullptr || options == nullptr || overall_out == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const io::Dataset& ds = dataset->data;
    const std::vector<std::int64_t> targets =
        io::resolve_targets(ds.x, options->targets != nullptr ? options->targets : "all");
    const train::SplitRanges splits =
        train::chronological_split(ds.x.num_steps, history_steps, horizon_steps);
    train::Range range;
    const std::string split = options->split != nullptr ? options->split : "test";
    if (split == "train") range = splits.train;
    else if (split == "val") range = splits.val;
    else if (split == "test") range = splits.test;
    else if (split == "all") range = {0, ds.x.num_steps};
    else fail(ErrorCode::InvalidArgument, "unknown split '" + split + "'");

    train::WindowParams wp;
    wp.history_steps = history_steps;
    wp.horizon_steps = horizon_steps;
    wp.alpha = 1;  // baselines only read the target row
    wp.epsilon = 0.5;
    wp.theta = 1.0;
    const train::ExampleSet examples = train::make_examples(
        ds.x, ds.q, targets, range, wp, 1.0, 1,
        options->window_stride > 0 ? options->window_stride : 1);

    train::EvalOptions eval_options;
    eval_options.exclude_zero_truth = ds.has_closures();
    eval_options.threads = options->threads;
    *overall_out = to_c_metrics(train::evaluate_baseline(examples, method, eval_options).overall);
  });
}

stnn_status stnn_predict(const stnn_model* model, const stnn_dataset* dataset,
                         const char* targets, const char* out_csv_path) {
  if (model == nullptr || dataset == nullptr || out_csv_path == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const io::Dataset& ds = dataset->data;
    const std::vector<std::int64_t> index_list =
        io::resolve_targets(ds.x, targets != nullptr ? targets : "all");
    const nn::ModelConfig& mc = model->model.config();

    std::vector<std::vector<double>> forecasts(index_list.size());
    parallel_ranges(static_cast<std::int64_t>(index_list.size()), resolve_threads(0),
                    [&](int, std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        const ctx::LocalSpacetime context =
            forecast_context(model, dataset, index_list[static_cast<std::size_t>(i)], -1);
        forecasts[static_cast<std::size_t>(i)] = model->model.predict(context);
      }
    });

    std::ostringstream out;
    out << "sensor_id";
    for (std::int64_t h = 1; h <= mc.horizon_steps; ++h) out << ",y" << h;
    out << '\n';
    for (std::size_t i = 0; i < index_list.size(); ++i) {
      out << ds.x.sensor_ids[static_cast<std::size_t>(index_list[i])];
      for (double v : forecasts[i]) out << ',' << format_double(v);
      out << '\n';
    }
    io::write_text_file(out_csv_path, out.str());
  });
}

stnn_status stnn_predict_window(const stnn_model* model, const stnn_dataset* dataset,
                                const char* target_id, int64_t window_start, double* out,
                                int64_t out_len) {
  if (model == nullptr || dataset == nullptr || target_id == nullptr || out == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const nn::ModelConfig& mc = model->model.config();
    if (out_len < mc.horizon_steps) {
      fail(ErrorCode::InvalidArgument, "output buffer shorter than the forecast horizon");
    }
    const std::int64_t target = dataset->data.x.index_of(target_id);
    const ctx::LocalSpacetime context = forecast_context(model, dataset, target, window_start);
    const std::vector<double> pred = model->model.predict(context);
    std::memcpy(out, pred.data(), pred.size() * sizeof(double));
  });
}

stnn_status stnn_explain(const stnn_model* model, const stnn_dataset* dataset,
                         const char* target_id, int64_t window_start, const char* out_csv_path) {
  if (model == nullptr || dataset == nullptr || target_id == nullptr || out_csv_path == nullptr) {
    return invalid("null argument");
  }
  return guarded([&] {
    const nn::ModelConfig& mc = model->model.config();
    const std::int64_t target = dataset->data.x.index_of(target_id);
    const ctx::LocalSpacetime context = forecast_context(model, dataset, target, window_start);
    const std::vector<double> map = model->model.extract_attention(context);

    std::ostringstream out;
    out << "sensor_id";
    for (std::int64_t t = 0; t < mc.history_steps; ++t) out << ",t" << t;
    out << '\n';
    for (std::int64_t m = 0; m < mc.alpha; ++m) {
      const ctx::NeighborSet::Member& member =
          context.neighbors.members[static_cast<std::size_t>(m)];
      out << (member.dummy() ? "dummy" : member.id);
      for (std::int64_t t = 0; t < mc.history_steps; ++t) {
        out << ',' << format_double(map[static_cast<std::size_t>(m * mc.history_steps + t)]);
      }
      out << '\n';
    }
    io::write_text_file(out_csv_path, out.str());
  });
}

}  // extern "C"
