#include "stnn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace stnn::nn {

using ad::Tensor;
using json = nlohmann::json;

void ModelConfig::validate() const {
  if (module_count < 0) fail(ErrorCode::InvalidArgument, "module_count must be >= 0");
  if (static_cast<std::int64_t>(channels.size()) != module_count) {
    fail(ErrorCode::InvalidArgument, "channels list must have one entry per module");
  }
  for (std::int64_t c : channels) {
    if (c < 1) fail(ErrorCode::InvalidArgument, "module channels must be >= 1");
  }
  if (input_proj_channels < 1) fail(ErrorCode::InvalidArgument, "input_proj_channels must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    fail(ErrorCode::InvalidArgument, "kernel_size must be odd");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    fail(ErrorCode::InvalidArgument, "leaky_slope must be in (0,1)");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail(ErrorCode::InvalidArgument, "dropout_rate must be in [0,1)");
  }
  if (alpha < 1 || history_steps < 1 || horizon_steps < 1 || features < 1) {
    fail(ErrorCode::InvalidArgument, "alpha, history, horizon and features must be >= 1");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    fail(ErrorCode::InvalidArgument, "epsilon must lie in (0,1)");
  }
  if (use_conv && !(use_spacetime_kernel || use_temporal_kernel || use_spatial_kernel)) {
    fail(ErrorCode::InvalidArgument, "conv block enabled but all kernels disabled");
  }
}

std::string ModelConfig::to_json() const {
  json j;
  j["module_count"] = module_count;
  j["channels"] = channels;
  j["input_proj_channels"] = input_proj_channels;
  j["kernel_size"] = kernel_size;
  j["leaky_slope"] = leaky_slope;
  j["dropout_rate"] = dropout_rate;
  j["alpha"] = alpha;
  j["history_steps"] = history_steps;
  j["horizon_steps"] = horizon_steps;
  j["features"] = features;
  j["epsilon"] = epsilon;
  j["use_attention"] = use_attention;
  j["use_conv"] = use_conv;
  j["use_spacetime_kernel"] = use_spacetime_kernel;
  j["use_temporal_kernel"] = use_temporal_kernel;
  j["use_spatial_kernel"] = use_spatial_kernel;
  j["attention_scale"] = attention_scale;
  j["mask_dummy_events"] = mask_dummy_events;
  j["head_target_row_only"] = head_target_row_only;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("model config: ") + e.what());
  }
  ModelConfig c;
  try {
    c.module_count = j.at("module_count").get<std::int64_t>();
    c.channels = j.at("channels").get<std::vector<std::int64_t>>();
    c.input_proj_channels = j.at("input_proj_channels").get<std::int64_t>();
    c.kernel_size = j.at("kernel_size").get<std::int64_t>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.alpha = j.at("alpha").get<std::int64_t>();
    c.history_steps = j.at("history_steps").get<std::int64_t>();
    c.horizon_steps = j.at("horizon_steps").get<std::int64_t>();
    c.features = j.at("features").get<std::int64_t>();
    c.epsilon = j.at("epsilon").get<double>();
    c.use_attention = j.at("use_attention").get<bool>();
    c.use_conv = j.at("use_conv").get<bool>();
    c.use_spacetime_kernel = j.at("use_spacetime_kernel").get<bool>();
    c.use_temporal_kernel = j.at("use_temporal_kernel").get<bool>();
    c.use_spatial_kernel = j.at("use_spatial_kernel").get<bool>();
    c.attention_scale = j.at("attention_scale").get<bool>();
    c.mask_dummy_events = j.at("mask_dummy_events").get<bool>();
    c.head_target_row_only = j.at("head_target_row_only").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::int64_t conv_branches(const ModelConfig& c) {
  return (c.use_spacetime_kernel ? 1 : 0) + (c.use_temporal_kernel ? 1 : 0) +
         (c.use_spatial_kernel ? 1 : 0);
}

}  // namespace

STNNModel STNNModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  STNNModel m;
  m.config_ = config;
  Rng rng(mix_seed(seed, 0x73746e6eULL));

  const std::int64_t f = config.kernel_size;
  const std::int64_t in0 = config.features + 1;
  m.input_proj_ = Tensor::uniform_init({config.input_proj_channels, in0, 1, 1}, in0, rng);

  std::int64_t prev = config.input_proj_channels;
  for (std::int64_t i = 0; i < config.module_count; ++i) {
    const std::int64_t out = config.channels[static_cast<std::size_t>(i)];
    STModule mod;
    mod.in_channels = prev;
    mod.out_channels = out;
    std::int64_t conv_in = prev;
    if (config.use_attention) {
      mod.attn.w_query = Tensor::uniform_init({out, prev}, prev, rng);
      mod.attn.w_key = Tensor::uniform_init({out, prev}, prev, rng);
      mod.attn.w_value = Tensor::uniform_init({out, prev}, prev, rng);
      conv_in = out;
    }
    if (config.use_conv) {
      if (config.use_spacetime_kernel) {
        mod.conv.k_spacetime = Tensor::uniform_init({out, conv_in, f, f}, conv_in * f * f, rng);
      }
      if (config.use_temporal_kernel) {
        mod.conv.k_temporal = Tensor::uniform_init({out, conv_in, 1, f}, conv_in * f, rng);
      }
      if (config.use_spatial_kernel) {
        mod.conv.k_spatial = Tensor::uniform_init({out, conv_in, f, 1}, conv_in * f, rng);
      }
      const std::int64_t stacked = conv_branches(config) * out;
      mod.conv.k_combine = Tensor::uniform_init({out, stacked, 1, 1}, stacked, rng);
    }
    if (prev != out) {
      mod.residual_proj = Tensor::uniform_init({out, prev, 1, 1}, prev, rng);
    }
    m.modules_.push_back(std::move(mod));
    prev = out;
  }

  const std::int64_t head_in = m.head_inputs();
  m.head_weight_ = Tensor::uniform_init({config.horizon_steps, head_in}, head_in, rng);
  m.head_bias_ = Tensor::zeros({config.horizon_steps, 1}, true);
  return m;
}

std::int64_t STNNModel::head_inputs() const {
  const std::int64_t final_channels = config_.module_count > 0
                                          ? config_.channels.back()
                                          : config_.input_proj_channels;
  if (config_.head_target_row_only) return final_channels * config_.history_steps;
  return final_channels * config_.alpha * config_.history_steps;
}

std::vector<ad::Tensor> STNNModel::parameters() {
  std::vector<Tensor> out;
  out.push_back(input_proj_);
  for (STModule& mod : modules_) {
    if (mod.attn.w_query.defined()) {
      out.push_back(mod.attn.w_query);
      out.push_back(mod.attn.w_key);
      out.push_back(mod.attn.w_value);
    }
    if (mod.conv.k_combine.defined()) {
      if (mod.conv.k_spacetime.defined()) out.push_back(mod.conv.k_spacetime);
      if (mod.conv.k_temporal.defined()) out.push_back(mod.conv.k_temporal);
      if (mod.conv.k_spatial.defined()) out.push_back(mod.conv.k_spatial);
      out.push_back(mod.conv.k_combine);
    }
    if (mod.residual_proj.defined()) out.push_back(mod.residual_proj);
  }
  out.push_back(head_weight_);
  out.push_back(head_bias_);
  return out;
}

std::vector<ad::Tensor> STNNModel::parameters() const {
  return const_cast<STNNModel*>(this)->parameters();
}

std::vector<std::string> STNNModel::parameter_names() const {
  std::vector<std::string> names;
  names.push_back("input_proj");
  for (std::size_t i = 0; i < modules_.size(); ++i) {
    const std::string p = "module" + std::to_string(i) + ".";
    const STModule& mod = modules_[i];
    if (mod.attn.w_query.defined()) {
      names.push_back(p + "attn.w_query");
      names.push_back(p + "attn.w_key");
      names.push_back(p + "attn.w_value");
    }
    if (mod.conv.k_combine.defined()) {
      if (mod.conv.k_spacetime.defined()) names.push_back(p + "conv.k_spacetime");
      if (mod.conv.k_temporal.defined()) names.push_back(p + "conv.k_temporal");
      if (mod.conv.k_spatial.defined()) names.push_back(p + "conv.k_spatial");
      names.push_back(p + "conv.k_combine");
    }
    if (mod.residual_proj.defined()) names.push_back(p + "residual_proj");
  }
  names.push_back("head.weight");
  names.push_back("head.bias");
  return names;
}

std::int64_t STNNModel::param_count() const {
  std::int64_t n = 0;
  for (const Tensor& p : parameters()) n += p.size();
  return n;
}

std::int64_t STNNModel::forward_macs() const {
  const ModelConfig& c = config_;
  const std::int64_t u = c.alpha * c.history_steps;
  const std::int64_t f = c.kernel_size;
  std::int64_t macs = 0;
  macs += c.input_proj_channels * (c.features + 1) * u;  // 1x1 projection
  std::int64_t prev = c.input_proj_channels;
  for (std::int64_t i = 0; i < c.module_count; ++i) {
    const std::int64_t out = c.channels[static_cast<std::size_t>(i)];
    std::int64_t conv_in = prev;
    if (c.use_attention) {
      macs += 3 * out * prev * u;  // query/key/value projections
      macs += 2 * u * u * out;     // logits and weighted values
      conv_in = out;
    }
    if (c.use_conv) {
      if (c.use_spacetime_kernel) macs += out * conv_in * f * f * u;
      if (c.use_temporal_kernel) macs += out * conv_in * f * u;
      if (c.use_spatial_kernel) macs += out * conv_in * f * u;
      macs += out * conv_branches(c) * out * u;  // 1x1 combine
    }
    if (prev != out) macs += out * prev * u;  // residual projection
    prev = out;
  }
  macs += head_inputs() * c.horizon_steps;
  return macs;
}

Tensor attention_block_forward(const STAttnBlock& block, const Tensor& d,
                               const ModelConfig& config, const ctx::NeighborSet* neighbors,
                               AttnCapture* capture) {
  const std::int64_t c_in = d.dim(0);
  const std::int64_t rows = d.dim(1);
  const std::int64_t cols = d.dim(2);
  const std::int64_t u = rows * cols;
  if (block.w_query.dim(1) != c_in) {
    fail(ErrorCode::Dimension, "attention: input channels " + std::to_string(c_in) +
                                   " do not match weights " + shape_str(block.w_query.shape()));
  }
  const std::int64_t c_out = block.w_query.dim(0);

  Tensor flat = ad::reshape(d, {c_in, u});
  Tensor queries = ad::matmul(block.w_query, flat);
  Tensor keys = ad::matmul(block.w_key, flat);
  Tensor logits = ad::matmul(ad::transpose(queries), keys);
  if (config.attention_scale) {
    logits = ad::scale(logits, 1.0 / std::sqrt(static_cast<double>(c_out)));
  }
  if (config.mask_dummy_events && neighbors != nullptr) {
    // push dummy-event columns to effectively -inf before the softmax
    Tensor bias = Tensor::zeros({u, u});
    double* pb = bias.data();
    for (std::int64_t m = 0; m < rows; ++m) {
      if (!neighbors->members[static_cast<std::size_t>(m)].dummy()) continue;
      for (std::int64_t t = 0; t < cols; ++t) {
        const std::int64_t col = m * cols + t;
        for (std::int64_t r = 0; r < u; ++r) pb[r * u + col] = -1e30;
      }
    }
    logits = ad::add_const(logits, bias);
  }
  Tensor weights = ad::softmax_rows(logits);
  if (capture != nullptr) {
    capture->rows = u;
    capture->weights = weights.vec();
  }
  Tensor values = ad::matmul(block.w_value, flat);
  Tensor mixed = ad::matmul(values, ad::transpose(weights));
  return ad::reshape(mixed, {c_out, rows, cols});
}

Tensor conv_block_forward(const STConvBlock& block, const Tensor& d,
                          const ModelConfig& config) {
  std::vector<Tensor> branches;
  branches.reserve(3);
  if (block.k_spacetime.defined()) branches.push_back(ad::conv2d_same(d, block.k_spacetime));
  if (block.k_temporal.defined()) branches.push_back(ad::conv2d_same(d, block.k_temporal));
  if (block.k_spatial.defined()) branches.push_back(ad::conv2d_same(d, block.k_spatial));
  Tensor stacked = ad::leaky_relu(ad::concat_channels(branches), config.leaky_slope);
  return ad::leaky_relu(ad::conv2d_same(stacked, block.k_combine), config.leaky_slope);
}

Tensor module_forward(const STModule& mod, const Tensor& d, const ModelConfig& config,
                      bool training, std::uint64_t dropout_seed,
                      const ctx::NeighborSet* neighbors, AttnCapture* capture) {
  Tensor h = d;
  if (mod.attn.w_query.defined()) {
    h = attention_block_forward(mod.attn, h, config, neighbors, capture);
  }
  if (mod.conv.k_combine.defined()) {
    h = conv_block_forward(mod.conv, h, config);
  }
  Tensor residual = mod.residual_proj.defined() ? ad::conv2d_same(d, mod.residual_proj) : d;
  Tensor out = ad::add(h, residual);
  if (training && config.dropout_rate > 0.0) {
    out = ad::dropout(out, config.dropout_rate, true, dropout_seed);
  }
  return out;
}

Tensor STNNModel::forward(const ctx::LocalSpacetime& d, bool training,
                          std::uint64_t dropout_seed, AttnCapture* capture) const {
  if (d.alpha != config_.alpha || d.steps != config_.history_steps ||
      d.channels != config_.features + 1) {
    fail(ErrorCode::Dimension,
         "context " + std::to_string(d.alpha) + "x" + std::to_string(d.channels) + "x" +
             std::to_string(d.steps) + " does not match model config " +
             std::to_string(config_.alpha) + "x" + std::to_string(config_.features + 1) + "x" +
             std::to_string(config_.history_steps));
  }

  // permute (member, channel, step) -> channel-first
  const std::int64_t a = d.alpha, ch = d.channels, t = d.steps;
  Tensor input = Tensor::zeros({ch, a, t});
  double* pi = input.data();
  for (std::int64_t m = 0; m < a; ++m)
    for (std::int64_t c = 0; c < ch; ++c)
      for (std::int64_t s = 0; s < t; ++s)
        pi[(c * a + m) * t + s] = d.tensor[(m * ch + c) * t + s];

  Tensor x = ad::conv2d_same(input, input_proj_);
  for (std::size_t i = 0; i < modules_.size(); ++i) {
    AttnCapture* cap = (i == 0) ? capture : nullptr;
    x = module_forward(modules_[i], x, config_, training,
                       mix_seed(dropout_seed, static_cast<std::uint64_t>(i + 1)),
                       &d.neighbors, cap);
  }
  if (config_.head_target_row_only) {
    x = ad::pick_row(x, 0);
  }
  Tensor flat = ad::reshape(x, {x.size(), 1});
  Tensor out = ad::add(ad::matmul(head_weight_, flat), head_bias_);
  return ad::reshape(out, {config_.horizon_steps});
}

std::vector<double> STNNModel::predict(const ctx::LocalSpacetime& d) const {
  ctx::LocalSpacetime scaled = d;
  for (std::int64_t m = 0; m < scaled.alpha; ++m) {
    if (scaled.neighbors.members[static_cast<std::size_t>(m)].dummy()) continue;
    for (std::int64_t t = 0; t < scaled.steps; ++t) {
      scaled.at(m, 0, t) = normalize(scaled.at(m, 0, t));
    }
  }
  Tensor out = forward(scaled, false, 0);
  std::vector<double> result(out.vec());
  for (double& v : result) v = denormalize(v);
  return result;
}

std::vector<double> STNNModel::extract_attention(const ctx::LocalSpacetime& d) const {
  if (modules_.empty() || !modules_.front().attn.w_query.defined()) {
    fail(ErrorCode::State, "model has no attention block to read");
  }
  ctx::LocalSpacetime scaled = d;
  for (std::int64_t m = 0; m < scaled.alpha; ++m) {
    if (scaled.neighbors.members[static_cast<std::size_t>(m)].dummy()) continue;
    for (std::int64_t t = 0; t < scaled.steps; ++t) {
      scaled.at(m, 0, t) = normalize(scaled.at(m, 0, t));
    }
  }
  AttnCapture capture;
  forward(scaled, false, 0, &capture);

  // target is member 0, so its events occupy the first T_h attention rows
  const std::int64_t t_h = config_.history_steps;
  const std::int64_t u = capture.rows;
  std::vector<double> map(static_cast<std::size_t>(u), 0.0);
  for (std::int64_t r = 0; r < t_h; ++r) {
    const double* row = capture.weights.data() + r * u;
    for (std::int64_t j = 0; j < u; ++j) map[static_cast<std::size_t>(j)] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(t_h);
  for (double& v : map) v *= inv;
  return map;  // alpha x T_h row-major, rows in neighbor order
}

STNNModel STNNModel::clone() const {
  STNNModel copy;
  copy.config_ = config_;
  copy.norm_mean = norm_mean;
  copy.norm_std = norm_std;
  copy.theta = theta;
  auto dup = [](const Tensor& t) {
    if (!t.defined()) return Tensor();
    return Tensor::from_data(t.shape(), t.vec(), true);
  };
  copy.input_proj_ = dup(input_proj_);
  for (const STModule& mod : modules_) {
    STModule m;
    m.in_channels = mod.in_channels;
    m.out_channels = mod.out_channels;
    m.attn.w_query = dup(mod.attn.w_query);
    m.attn.w_key = dup(mod.attn.w_key);
    m.attn.w_value = dup(mod.attn.w_value);
    m.conv.k_spacetime = dup(mod.conv.k_spacetime);
    m.conv.k_temporal = dup(mod.conv.k_temporal);
    m.conv.k_spatial = dup(mod.conv.k_spatial);
    m.conv.k_combine = dup(mod.conv.k_combine);
    m.residual_proj = dup(mod.residual_proj);
    copy.modules_.push_back(std::move(m));
  }
  copy.head_weight_ = dup(head_weight_);
  copy.head_bias_ = dup(head_bias_);
  return copy;
}

void STNNModel::copy_parameters_from(const STNNModel& other) {
  std::vector<Tensor> dst = parameters();
  std::vector<Tensor> src = other.parameters();
  if (dst.size() != src.size()) fail(ErrorCode::State, "parameter layout mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) fail(ErrorCode::State, "parameter shape mismatch");
    dst[i].vec() = src[i].vec();
  }
  norm_mean = other.norm_mean;
  norm_std = other.norm_std;
  theta = other.theta;
}

// --- checkpoint container -----------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'T', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) fail(ErrorCode::Parse, "checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const STNNModel& model, const std::string& path) {
  json meta;
  meta["config"] = json::parse(model.config_.to_json());
  meta["norm_mean"] = model.norm_mean;
  meta["norm_std"] = model.norm_std;
  meta["theta"] = model.theta;
  const std::string meta_text = meta.dump();

  std::string payload;
  put<std::uint64_t>(payload, meta_text.size());
  payload += meta_text;

  auto params = model.parameters();
  auto names = model.parameter_names();
  put<std::uint32_t>(payload, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(names[i].size()));
    payload += names[i];
    const auto& shape = params[i].shape();
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(shape.size()));
    for (std::int64_t d : shape) put<std::int64_t>(payload, d);
    const std::vector<double>& data = params[i].vec();
    payload.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  const std::uint64_t checksum = fnv1a64(payload);
  out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  if (!out) fail(ErrorCode::Io, "short write on checkpoint '" + path + "'");
}

STNNModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
    fail(ErrorCode::Parse, "checkpoint too small: '" + path + "'");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::Parse, "not a checkpoint file: '" + path + "'");
  }
  std::size_t pos = sizeof(kMagic);
  const std::uint32_t version = take<std::uint32_t>(bytes, pos);
  if (version != kVersion) {
    fail(ErrorCode::Parse, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::string payload = bytes.substr(pos, bytes.size() - pos - sizeof(std::uint64_t));
  std::size_t tail = bytes.size() - sizeof(std::uint64_t);
  const std::uint64_t stored = take<std::uint64_t>(bytes, tail);
  if (fnv1a64(payload) != stored) {
    fail(ErrorCode::Parse, "checkpoint checksum mismatch: '" + path + "'");
  }

  pos = 0;
  const std::uint64_t meta_len = take<std::uint64_t>(payload, pos);
  if (pos + meta_len > payload.size()) fail(ErrorCode::Parse, "checkpoint truncated");
  const std::string meta_text = payload.substr(pos, meta_len);
  pos += meta_len;

  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("checkpoint metadata: ") + e.what());
  }
  ModelConfig config = ModelConfig::from_json(meta.at("config").dump());

  // Rebuild the layout from config, then fill values; this validates shapes.
  STNNModel model = STNNModel::create(config, 0);
  model.norm_mean = meta.at("norm_mean").get<double>();
  model.norm_std = meta.at("norm_std").get<double>();
  model.theta = meta.at("theta").get<double>();

  auto params = model.parameters();
  auto names = model.parameter_names();
  const std::uint32_t count = take<std::uint32_t>(payload, pos);
  if (count != params.size()) {
    fail(ErrorCode::Parse, "checkpoint holds " + std::to_string(count) + " arrays, config implies " +
                               std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::uint32_t name_len = take<std::uint32_t>(payload, pos);
    if (pos + name_len > payload.size()) fail(ErrorCode::Parse, "checkpoint truncated");
    const std::string name = payload.substr(pos, name_len);
    pos += name_len;
    if (name != names[i]) {
      fail(ErrorCode::Parse, "checkpoint array '" + name + "' does not match expected '" +
                                 names[i] + "'");
    }
    const std::uint32_t ndim = take<std::uint32_t>(payload, pos);
    ad::Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = take<std::int64_t>(payload, pos);
    if (shape != params[i].shape()) {
      fail(ErrorCode::Parse, "checkpoint shape " + shape_str(shape) + " for '" + name +
                                 "' does not match config shape " + shape_str(params[i].shape()));
    }
    const std::size_t bytes_needed = params[i].vec().size() * sizeof(double);
    if (pos + bytes_needed > payload.size()) fail(ErrorCode::Parse, "checkpoint truncated");
    std::memcpy(params[i].vec().data(), payload.data() + pos, bytes_needed);
    pos += bytes_needed;
  }
  if (pos != payload.size()) fail(ErrorCode::Parse, "checkpoint has trailing bytes");
  return model;
}

}  // namespace stnn::nn
