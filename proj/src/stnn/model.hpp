#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stnn/context.hpp"
#include "stnn/tensor.hpp"

// The spacetime neural network: a 1x1 input projection, a stack of spacetime
// modules (attention block + triple-kernel convolution block with residual
// connections), and a linear output head emitting all horizon steps at once.
namespace stnn::nn {

struct ModelConfig {
  std::int64_t module_count = 2;
  std::vector<std::int64_t> channels = {32, 64};  // one entry per module
  std::int64_t input_proj_channels = 32;
  std::int64_t kernel_size = 3;  // odd
  double leaky_slope = 0.2;
  double dropout_rate = 0.3;
  std::int64_t alpha = 15;
  std::int64_t history_steps = 12;  // T_h
  std::int64_t horizon_steps = 12;  // T_r
  std::int64_t features = 2;        // F; the model input has F+1 channels
  double epsilon = 0.1;             // neighbor pre-filter threshold

  // ablation & variant switches
  bool use_attention = true;
  bool use_conv = true;
  bool use_spacetime_kernel = true;
  bool use_temporal_kernel = true;
  bool use_spatial_kernel = true;
  bool attention_scale = false;      // optional 1/sqrt(C) logit scaling
  bool mask_dummy_events = false;    // optional -inf logits for dummy columns
  bool head_target_row_only = false; // head reads only the target row features

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct STAttnBlock {
  ad::Tensor w_query;  // C_out x C_in
  ad::Tensor w_key;
  ad::Tensor w_value;
};

struct STConvBlock {
  // Kernels over the (space=alpha) x (time=T_h) plane. The temporal kernel
  // spans the time axis, the spatial kernel the space axis.
  ad::Tensor k_spacetime;  // C_mid x C_in x f x f
  ad::Tensor k_temporal;   // C_mid x C_in x 1 x f
  ad::Tensor k_spatial;    // C_mid x C_in x f x 1
  ad::Tensor k_combine;    // C_out x (branches*C_mid) x 1 x 1
};

struct STModule {
  STAttnBlock attn;
  STConvBlock conv;
  ad::Tensor residual_proj;  // 1x1, present only when channels change
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
};

// Optional capture of the first module's attention map during a forward pass.
struct AttnCapture {
  std::int64_t rows = 0;  // U
  std::vector<double> weights;  // U x U row-major, rows sum to 1
};

// Attention over the flattened event axis U = alpha * T_h: softmaxed
// query-key logits weight the value projections of every event.
ad::Tensor attention_block_forward(const STAttnBlock& block, const ad::Tensor& d,
                                   const ModelConfig& config,
                                   const ctx::NeighborSet* neighbors = nullptr,
                                   AttnCapture* capture = nullptr);

// Three same-padded kernels (spacetime, temporal, spatial), concatenated and
// condensed by a 1x1 convolution, LeakyReLU after each stage.
ad::Tensor conv_block_forward(const STConvBlock& block, const ad::Tensor& d,
                              const ModelConfig& config);

// Attention -> convolution -> residual sum (1x1-projected when channels
// change), with dropout on the sum in training mode.
ad::Tensor module_forward(const STModule& mod, const ad::Tensor& d, const ModelConfig& config,
                          bool training, std::uint64_t dropout_seed,
                          const ctx::NeighborSet* neighbors = nullptr,
                          AttnCapture* capture = nullptr);

class STNNModel {
 public:
  STNNModel() = default;
  static STNNModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Flat parameter list, fixed order; handles share storage with the model.
  std::vector<ad::Tensor> parameters();
  std::vector<ad::Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;

  std::int64_t param_count() const;
  // Multiply-accumulate count of one forward pass; depends only on config.
  std::int64_t forward_macs() const;

  // Forward over a context tensor whose measurement channel is already
  // normalized. Returns a T_r tensor. Training mode applies dropout seeded
  // from dropout_seed.
  ad::Tensor forward(const ctx::LocalSpacetime& d, bool training, std::uint64_t dropout_seed,
                     AttnCapture* capture = nullptr) const;

  // Convenience: raw context in, raw-scale forecast out (eval mode).
  std::vector<double> predict(const ctx::LocalSpacetime& d) const;

  // First-module attention rows of the target's events, averaged over the
  // target's time positions and reshaped to alpha x T_h (neighbor order).
  std::vector<double> extract_attention(const ctx::LocalSpacetime& d) const;

  // Measurement normalization, fitted on the training split and stored with
  // the checkpoint so a model transfers as a self-contained artifact.
  double norm_mean = 0.0;
  double norm_std = 1.0;
  double theta = 1.0;  // connectivity bandwidth, frozen at fit time

  double normalize(double raw) const { return (raw - norm_mean) / norm_std; }
  double denormalize(double scaled) const { return scaled * norm_std + norm_mean; }

  // Deep copy (fresh storage for every parameter).
  STNNModel clone() const;
  // Copies parameter values from another model with identical config.
  void copy_parameters_from(const STNNModel& other);

  friend void save_checkpoint(const STNNModel& model, const std::string& path);
  friend STNNModel load_checkpoint(const std::string& path);

 private:
  ModelConfig config_;
  ad::Tensor input_proj_;  // C0 x (F+1) x 1 x 1
  std::vector<STModule> modules_;
  ad::Tensor head_weight_;  // T_r x D
  ad::Tensor head_bias_;    // T_r x 1
  std::int64_t head_inputs() const;
};

// Versioned binary container: config JSON + shape-tagged parameter arrays +
// content checksum. Loading validates the checksum and every shape.
void save_checkpoint(const STNNModel& model, const std::string& path);
STNNModel load_checkpoint(const std::string& path);

}  // namespace stnn::nn
