// Independent dense reimplementations of the model blocks, used as oracles.
// Deliberately written as plain nested loops over raw arrays with none of the
// production code paths.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stnn/model.hpp"

namespace oracles {

inline double leaky(double v, double slope) { return v > 0.0 ? v : slope * v; }

// attention block: logits from query/key projections over the flattened event
// axis, row softmax, value mixing
inline std::vector<double> attention_oracle(const std::vector<double>& d, std::int64_t c_in,
                                            std::int64_t rows, std::int64_t cols,
                                            const std::vector<double>& wq,
                                            const std::vector<double>& wk,
                                            const std::vector<double>& wv, std::int64_t c_out,
                                            bool scale_logits) {
  const std::int64_t u = rows * cols;
  auto project = [&](const std::vector<double>& w) {
    std::vector<double> out(static_cast<std::size_t>(c_out * u), 0.0);
    for (std::int64_t o = 0; o < c_out; ++o) {
      for (std::int64_t e = 0; e < u; ++e) {
        double acc = 0.0;
        for (std::int64_t c = 0; c < c_in; ++c) {
          acc += w[static_cast<std::size_t>(o * c_in + c)] * d[static_cast<std::size_t>(c * u + e)];
        }
        out[static_cast<std::size_t>(o * u + e)] = acc;
      }
    }
    return out;
  };
  const std::vector<double> q = project(wq);
  const std::vector<double> k = project(wk);
  const std::vector<double> v = project(wv);

  std::vector<double> logits(static_cast<std::size_t>(u * u), 0.0);
  for (std::int64_t i = 0; i < u; ++i) {
    for (std::int64_t j = 0; j < u; ++j) {
      double acc = 0.0;
      for (std::int64_t o = 0; o < c_out; ++o) {
        acc += q[static_cast<std::size_t>(o * u + i)] * k[static_cast<std::size_t>(o * u + j)];
      }
      logits[static_cast<std::size_t>(i * u + j)] =
          scale_logits ? acc / std::sqrt(static_cast<double>(c_out)) : acc;
    }
  }

  std::vector<double> weights(static_cast<std::size_t>(u * u), 0.0);
  for (std::int64_t i = 0; i < u; ++i) {
    double mx = logits[static_cast<std::size_t>(i * u)];
    for (std::int64_t j = 1; j < u; ++j) {
      mx = std::max(mx, logits[static_cast<std::size_t>(i * u + j)]);
    }
    double sum = 0.0;
    for (std::int64_t j = 0; j < u; ++j) {
      const double e = std::exp(logits[static_cast<std::size_t>(i * u + j)] - mx);
      weights[static_cast<std::size_t>(i * u + j)] = e;
      sum += e;
    }
    for (std::int64_t j = 0; j < u; ++j) weights[static_cast<std::size_t>(i * u + j)] /= sum;
  }

  std::vector<double> out(static_cast<std::size_t>(c_out * u), 0.0);
  for (std::int64_t o = 0; o < c_out; ++o) {
    for (std::int64_t e = 0; e < u; ++e) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < u; ++j) {
        acc += v[static_cast<std::size_t>(o * u + j)] * weights[static_cast<std::size_t>(e * u + j)];
      }
      out[static_cast<std::size_t>(o * u + e)] = acc;
    }
  }
  return out;
}

inline std::vector<double> conv2d_oracle(const std::vector<double>& x, std::int64_t ci,
                                         std::int64_t h, std::int64_t w,
                                         const std::vector<double>& k, std::int64_t co,
                                         std::int64_t kh, std::int64_t kw) {
  std::vector<double> out(static_cast<std::size_t>(co * h * w), 0.0);
  for (std::int64_t oc = 0; oc < co; ++oc) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (std::int64_t ic = 0; ic < ci; ++ic) {
          for (std::int64_t r = 0; r < kh; ++r) {
            for (std::int64_t c = 0; c < kw; ++c) {
              const std::int64_t sy = y + r - (kh - 1) / 2;
              const std::int64_t sx = xx + c - (kw - 1) / 2;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += x[static_cast<std::size_t>((ic * h + sy) * w + sx)] *
                     k[static_cast<std::size_t>(((oc * ci + ic) * kh + r) * kw + c)];
            }
          }
        }
        out[static_cast<std::size_t>((oc * h + y) * w + xx)] = acc;
      }
    }
  }
  return out;
}

// full convolution block: three branches, concatenation, LeakyReLU, 1x1
// combine, LeakyReLU
inline std::vector<double> conv_block_oracle(const std::vector<double>& d, std::int64_t c_in,
                                             std::int64_t h, std::int64_t w,
                                             const stnn::nn::STConvBlock& block,
                                             double slope) {
  std::vector<double> stacked;
  auto append_branch = [&](const stnn::ad::Tensor& kernel) {
    if (!kernel.defined()) return;
    const std::vector<double> branch =
        conv2d_oracle(d, c_in, h, w, kernel.vec(), kernel.dim(0), kernel.dim(2), kernel.dim(3));
    stacked.insert(stacked.end(), branch.begin(), branch.end());
  };
  append_branch(block.k_spacetime);
  append_branch(block.k_temporal);
  append_branch(block.k_spatial);
  for (double& v : stacked) v = leaky(v, slope);

  const std::int64_t stacked_channels = block.k_combine.dim(1);
  std::vector<double> out = conv2d_oracle(stacked, stacked_channels, h, w, block.k_combine.vec(),
                                          block.k_combine.dim(0), 1, 1);
  for (double& v : out) v = leaky(v, slope);
  return out;
}

}  // namespace oracles
