#include "stnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace stnn::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.vec()) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::Numeric,
           std::string(op) + ": non-finite value in result");
    }
  }
}

bool grad_wanted(const Tensor& t) {
  return g_active_tape != nullptr && t.requires_grad();
}

Tensor make_output(Shape shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad && g_active_tape != nullptr);
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  const std::int64_t n = numel(shape);
  if (n < 0) fail(ErrorCode::InvalidArgument, "tensor shape has negative extent");
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<std::size_t>(n), 0.0);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(static_cast<std::size_t>(n), 0.0);
  return wrap(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.vec().begin(), t.vec().end(), value);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  const std::int64_t n = numel(shape);
  if (n != static_cast<std::int64_t>(data.size())) {
    fail(ErrorCode::Dimension, "tensor data length " + std::to_string(data.size()) +
                                   " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
  return wrap(std::move(impl));
}

Tensor Tensor::uniform_init(Shape shape, std::int64_t fan_in, Rng& rng) {
  if (fan_in <= 0) fail(ErrorCode::InvalidArgument, "fan_in must be positive");
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Tensor t = zeros(std::move(shape), true);
  for (double& v : t.vec()) v = rng.uniform(-bound, bound);
  return t;
}

void Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  if (value) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    impl_->grad.clear();
  }
}

const std::vector<double>& Tensor::grad() const {
  if (!impl_->requires_grad) fail(ErrorCode::State, "tensor has no grad");
  return impl_->grad;
}

std::vector<double>& Tensor::grad() {
  if (!impl_->requires_grad) fail(ErrorCode::State, "tensor has no grad");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) fail(ErrorCode::Dimension, "item() on non-scalar tensor");
  return impl_->data[0];
}

void Tape::backward(const Tensor& scalar_output) {
  if (scalar_output.size() != 1) {
    fail(ErrorCode::Dimension, "backward requires a scalar output");
  }
  if (!scalar_output.requires_grad()) {
    fail(ErrorCode::State, "backward on an output that was not recorded");
  }
  auto impl = scalar_output.impl_ptr();
  impl->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

// --- op helpers --------------------------------------------------------------

namespace {

void record(std::function<void()> fn) { g_active_tape->record(std::move(fn)); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0)) {
    fail(ErrorCode::Dimension, "matmul: incompatible shapes " + shape_str(a.shape()) +
                                   " and " + shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool rq = grad_wanted(a) || grad_wanted(b);
  Tensor out = make_output({m, n}, rq);

  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      const double* brow = pb + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  check_finite(out, "matmul");

  if (rq) {
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record([ai, bi, oi, m, k, n] {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* da = ai->grad.data();
        const double* pb2 = bi->data.data();
        for (std::int64_t i = 0; i < m; ++i) {
          for (std::int64_t kk = 0; kk < k; ++kk) {
            const double* grow = g + i * n;
            const double* brow = pb2 + kk * n;
            double acc = 0.0;
            for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[i * k + kk] += acc;
          }
        }
      }
      if (bi->requires_grad) {
        double* db = bi->grad.data();
        const double* pa2 = ai->data.data();
        for (std::int64_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = pa2[i * k + kk];
            double* drow = db + kk * n;
            for (std::int64_t j = 0; j < n; ++j) drow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) {
    fail(ErrorCode::Dimension, "transpose: expected 2D, got " + shape_str(a.shape()));
  }
  const std::int64_t m = a.dim(0), n = a.dim(1);
  const bool rq = grad_wanted(a);
  Tensor out = make_output({n, m}, rq);
  const double* pa = a.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];

  if (rq) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    record([ai, oi, m, n] {
      double* da = ai->grad.data();
      const double* g = oi->grad.data();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor conv2d_same(const Tensor& x, const Tensor& kernel) {
  if (x.shape().size() != 3 || kernel.shape().size() != 4) {
    fail(ErrorCode::Dimension, "conv2d_same: expected CxHxW input and OxCxKhxKw kernel, got " +
                                   shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  const std::int64_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::int64_t co = kernel.dim(0), kci = kernel.dim(1), kh = kernel.dim(2),
                     kw = kernel.dim(3);
  if (kci != ci) {
    fail(ErrorCode::Dimension, "conv2d_same: kernel expects " + std::to_string(kci) +
                                   " input channels, input has " + std::to_string(ci));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    fail(ErrorCode::InvalidArgument, "conv2d_same: unsupported even kernel size " +
                                         std::to_string(kh) + "x" + std::to_string(kw));
  }
  const std::int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const bool rq = grad_wanted(x) || grad_wanted(kernel);
  Tensor out = make_output({co, h, w}, rq);

  const double* px = x.data();
  const double* pk = kernel.data();
  double* po = out.data();
  for (std::int64_t oc = 0; oc < co; ++oc) {
    double* oplane = po + oc * h * w;
    for (std::int64_t ic = 0; ic < ci; ++ic) {
      const double* xplane = px + ic * h * w;
      const double* kbase = pk + (oc * ci + ic) * kh * kw;
      for (std::int64_t r = 0; r < kh; ++r) {
        const std::int64_t dy = r - ph;
        const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
        const std::int64_t y1 = std::min<std::int64_t>(h, h - dy);
        for (std::int64_t c = 0; c < kw; ++c) {
          const double kv = kbase[r * kw + c];
          if (kv == 0.0) continue;
          const std::int64_t dx = c - pw;
          const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
          const std::int64_t x1 = std::min<std::int64_t>(w, w - dx);
          for (std::int64_t y = y0; y < y1; ++y) {
            double* orow = oplane + y * w;
            const double* xrow = xplane + (y + dy) * w + dx;
            for (std::int64_t xx = x0; xx < x1; ++xx) orow[xx] += kv * xrow[xx];
          }
        }
      }
    }
  }
  check_finite(out, "conv2d_same");

  if (rq) {
    auto xi = x.impl_ptr(), ki = kernel.impl_ptr(), oi = out.impl_ptr();
    record([xi, ki, oi, ci, co, h, w, kh, kw, ph, pw] {
      const double* g = oi->grad.data();
      if (xi->requires_grad) {
        double* dx = xi->grad.data();
        const double* pk2 = ki->data.data();
        for (std::int64_t oc = 0; oc < co; ++oc) {
          const double* gplane = g + oc * h * w;
          for (std::int64_t ic = 0; ic < ci; ++ic) {
            double* dxplane = dx + ic * h * w;
            const double* kbase = pk2 + (oc * ci + ic) * kh * kw;
            for (std::int64_t r = 0; r < kh; ++r) {
              const std::int64_t dy = r - ph;
              const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
              const std::int64_t y1 = std::min<std::int64_t>(h, h - dy);
              for (std::int64_t c = 0; c < kw; ++c) {
                const double kv = kbase[r * kw + c];
                if (kv == 0.0) continue;
                const std::int64_t dx_off = c - pw;
                const std::int64_t x0 = std::max<std::int64_t>(0, -dx_off);
                const std::int64_t x1 = std::min<std::int64_t>(w, w - dx_off);
                for (std::int64_t y = y0; y < y1; ++y) {
                  const double* grow = gplane + y * w;
                  double* dxrow = dxplane + (y + dy) * w + dx_off;
                  for (std::int64_t xx = x0; xx < x1; ++xx) dxrow[xx] += kv * grow[xx];
                }
              }
            }
          }
        }
      }
      if (ki->requires_grad) {
        double* dk = ki->grad.data();
        const double* px2 = xi->data.data();
        for (std::int64_t oc = 0; oc < co; ++oc) {
          const double* gplane = g + oc * h * w;
          for (std::int64_t ic = 0; ic < ci; ++ic) {
            const double* xplane = px2 + ic * h * w;
            double* kbase = dk + (oc * ci + ic) * kh * kw;
            for (std::int64_t r = 0; r < kh; ++r) {
              const std::int64_t dy = r - ph;
              const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
              const std::int64_t y1 = std::min<std::int64_t>(h, h - dy);
              for (std::int64_t c = 0; c < kw; ++c) {
                const std::int64_t dx_off = c - pw;
                const std::int64_t x0 = std::max<std::int64_t>(0, -dx_off);
                const std::int64_t x1 = std::min<std::int64_t>(w, w - dx_off);
                double acc = 0.0;
                for (std::int64_t y = y0; y < y1; ++y) {
                  const double* grow = gplane + y * w;
                  const double* xrow = xplane + (y + dy) * w + dx_off;
                  for (std::int64_t xx = x0; xx < x1; ++xx) acc += grow[xx] * xrow[xx];
                }
                kbase[r * kw + c] += acc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& s) {
  if (s.shape().size() != 2) {
    fail(ErrorCode::Dimension, "softmax_rows: expected 2D, got " + shape_str(s.shape()));
  }
  const std::int64_t m = s.dim(0), n = s.dim(1);
  const bool rq = grad_wanted(s);
  Tensor out = make_output({m, n}, rq);
  const double* ps = s.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const double* row = ps + i * n;
    double* orow = po + i * n;
    double mx = row[0];
    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      const double e = std::exp(row[j] - mx);
      orow[j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::int64_t j = 0; j < n; ++j) orow[j] *= inv;
  }
  check_finite(out, "softmax_rows");

  if (rq) {
    auto si = s.impl_ptr(), oi = out.impl_ptr();
    record([si, oi, m, n] {
      double* ds = si->grad.data();
      const double* y = oi->data.data();
      const double* g = oi->grad.data();
      for (std::int64_t i = 0; i < m; ++i) {
        const double* yrow = y + i * n;
        const double* grow = g + i * n;
        double dot = 0.0;
        for (std::int64_t j = 0; j < n; ++j) dot += yrow[j] * grow[j];
        double* drow = ds + i * n;
        for (std::int64_t j = 0; j < n; ++j) drow[j] += yrow[j] * (grow[j] - dot);
      }
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    fail(ErrorCode::InvalidArgument, "leaky_relu: slope must be in (0,1)");
  }
  const bool rq = grad_wanted(x);
  Tensor out = make_output(x.shape(), rq);
  const double* px = x.data();
  double* po = out.data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = px[i];
    po[i] = v > 0.0 ? v : slope * v;
  }

  if (rq) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    record([xi, oi, slope, n] {
      double* dx = xi->grad.data();
      const double* px2 = xi->data.data();
      const double* g = oi->grad.data();
      // derivative at exactly 0 is taken as 1
      for (std::int64_t i = 0; i < n; ++i) dx[i] += px2[i] >= 0.0 ? g[i] : slope * g[i];
    });
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail(ErrorCode::InvalidArgument, "concat_channels: empty input list");
  const std::int64_t h = xs[0].dim(1), w = xs[0].dim(2);
  std::int64_t channels = 0;
  bool rq = false;
  for (const Tensor& t : xs) {
    if (t.shape().size() != 3 || t.dim(1) != h || t.dim(2) != w) {
      fail(ErrorCode::Dimension, "concat_channels: spatial mismatch, expected ?x" +
                                     std::to_string(h) + "x" + std::to_string(w) + ", got " +
                                     shape_str(t.shape()));
    }
    channels += t.dim(0);
    rq = rq || grad_wanted(t);
  }
  Tensor out = make_output({channels, h, w}, rq);
  double* po = out.data();
  std::int64_t offset = 0;
  for (const Tensor& t : xs) {
    std::memcpy(po + offset, t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
    offset += t.size();
  }

  if (rq) {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    inputs.reserve(xs.size());
    for (const Tensor& t : xs) inputs.push_back(t.impl_ptr());
    auto oi = out.impl_ptr();
    record([inputs, oi] {
      const double* g = oi->grad.data();
      std::int64_t off = 0;
      for (const auto& in : inputs) {
        const std::int64_t n = static_cast<std::int64_t>(in->data.size());
        if (in->requires_grad) {
          double* d = in->grad.data();
          for (std::int64_t i = 0; i < n; ++i) d[i] += g[off + i];
        }
        off += n;
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    fail(ErrorCode::InvalidArgument, "dropout: rate must be in [0,1)");
  }
  if (!training || rate == 0.0) {
    // identity, bit for bit
    const bool rq_id = grad_wanted(x);
    Tensor out = make_output(x.shape(), rq_id);
    out.vec() = x.vec();
    if (rq_id) {
      auto xi = x.impl_ptr(), oi = out.impl_ptr();
      record([xi, oi] {
        double* dx = xi->grad.data();
        const double* g = oi->grad.data();
        for (std::size_t i = 0; i < xi->grad.size(); ++i) dx[i] += g[i];
      });
    }
    return out;
  }

  const bool rq = grad_wanted(x);
  Tensor out = make_output(x.shape(), rq);
  const std::int64_t n = x.size();
  auto mask = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n));
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  const double* px = x.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const bool keep = rng.uniform() >= rate;
    (*mask)[static_cast<std::size_t>(i)] = keep ? 1.0f : 0.0f;
    po[i] = keep ? px[i] * keep_scale : 0.0;
  }

  if (rq) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    record([xi, oi, mask, keep_scale, n] {
      double* dx = xi->grad.data();
      const double* g = oi->grad.data();
      for (std::int64_t i = 0; i < n; ++i) {
        dx[i] += (*mask)[static_cast<std::size_t>(i)] != 0.0f ? g[i] * keep_scale : 0.0;
      }
    });
  }
  return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::Dimension, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                   " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const bool rq = grad_wanted(a) || grad_wanted(b);
  Tensor out = make_output(a.shape(), rq);
  const std::int64_t n = a.size();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite(out, "add");

  if (rq) {
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record([ai, bi, oi, n] {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* d = ai->grad.data();
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
      }
      if (bi->requires_grad) {
        double* d = bi->grad.data();
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const bool rq = grad_wanted(a) || grad_wanted(b);
  Tensor out = make_output(a.shape(), rq);
  const std::int64_t n = a.size();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  check_finite(out, "sub");

  if (rq) {
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record([ai, bi, oi, n] {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        double* d = ai->grad.data();
        for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
      }
      if (bi->requires_grad) {
        double* d = bi->grad.data();
        for (std::int64_t i = 0; i < n; ++i) d[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  const bool rq = grad_wanted(a);
  Tensor out = make_output(a.shape(), rq);
  const std::int64_t n = a.size();
  const double* pa = a.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * factor;
  check_finite(out, "scale");

  if (rq) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    record([ai, oi, factor, n] {
      double* d = ai->grad.data();
      const double* g = oi->grad.data();
      for (std::int64_t i = 0; i < n; ++i) d[i] += factor * g[i];
    });
  }
  return out;
}

Tensor abs(const Tensor& a) {
  const bool rq = grad_wanted(a);
  Tensor out = make_output(a.shape(), rq);
  const std::int64_t n = a.size();
  const double* pa = a.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = std::fabs(pa[i]);

  if (rq) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    record([ai, oi, n] {
      double* d = ai->grad.data();
      const double* v = ai->data.data();
      const double* g = oi->grad.data();
      for (std::int64_t i = 0; i < n; ++i) {
        if (v[i] > 0.0)
          d[i] += g[i];
        else if (v[i] < 0.0)
          d[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  const bool rq = grad_wanted(a);
  Tensor out = make_output({1}, rq);
  double acc = 0.0;
  for (double v : a.vec()) acc += v;
  out.data()[0] = acc;
  check_finite(out, "sum_all");

  if (rq) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    record([ai, oi] {
      const double g = oi->grad[0];
      for (double& d : ai->grad) d += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) {
  const std::int64_t n = a.size();
  if (n == 0) fail(ErrorCode::InvalidArgument, "mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    fail(ErrorCode::Dimension, "reshape: cannot view " + shape_str(a.shape()) + " as " +
                                   shape_str(shape));
  }
  const bool rq = grad_wanted(a);
  Tensor out = make_output(std::move(shape), rq);
  out.vec() = a.vec();

  if (rq) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    record([ai, oi] {
      double* d = ai->grad.data();
      const double* g = oi->grad.data();
      for (std::size_t i = 0; i < ai->grad.size(); ++i) d[i] += g[i];
    });
  }
  return out;
}

Tensor pick_row(const Tensor& x, std::int64_t row) {
  if (x.shape().size() != 3) {
    fail(ErrorCode::Dimension, "pick_row: expected CxHxW, got " + shape_str(x.shape()));
  }
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (row < 0 || row >= h) fail(ErrorCode::InvalidArgument, "pick_row: row out of range");
  const bool rq = grad_wanted(x);
  Tensor out = make_output({c, 1, w}, rq);
  const double* px = x.data();
  double* po = out.data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    std::memcpy(po + ch * w, px + (ch * h + row) * w, static_cast<std::size_t>(w) * sizeof(double));

  if (rq) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    record([xi, oi, c, h, w, row] {
      double* dx = xi->grad.data();
      const double* g = oi->grad.data();
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < w; ++i) dx[(ch * h + row) * w + i] += g[ch * w + i];
    });
  }
  return out;
}

Tensor add_const(const Tensor& a, const Tensor& constant) {
  check_same_shape(a, constant, "add_const");
  const bool rq = grad_wanted(a);
  Tensor out = make_output(a.shape(), rq);
  const std::int64_t n = a.size();
  const double* pa = a.data();
  const double* pc = constant.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pc[i];

  if (rq) {
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    record([ai, oi, n] {
      double* d = ai->grad.data();
      const double* g = oi->grad.data();
      for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
    });
  }
  return out;
}

// --- Adam --------------------------------------------------------------------

AdamState::AdamState(const std::vector<Tensor>& params, double lr) : learning_rate(lr) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const Tensor& p : params) {
    first_moment.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    second_moment.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
}

void AdamState::step(std::vector<Tensor>& params) {
  if (params.size() != first_moment.size()) {
    fail(ErrorCode::State, "adam: parameter list changed size");
  }
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    if (!p.requires_grad()) fail(ErrorCode::State, "adam: parameter without grad");
    std::vector<double>& g = p.grad();
    std::vector<double>& m = first_moment[pi];
    std::vector<double>& v = second_moment[pi];
    if (g.size() != m.size()) fail(ErrorCode::State, "adam: moment size mismatch");
    double* pd = p.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      pd[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
      g[i] = 0.0;
    }
  }
}

// --- finite differences -------------------------------------------------------

double finite_diff_check(const std::function<Tensor()>& f, Tensor& x, double h) {
  if (!x.requires_grad()) fail(ErrorCode::State, "finite_diff_check: x has no grad");
  x.zero_grad();
  std::vector<double> tape_grad;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    tape.backward(out);
    tape_grad = x.grad();
    x.zero_grad();
  }

  double max_rel = 0.0;
  double* data = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double f_plus = f().item();
    data[i] = saved - h;
    const double f_minus = f().item();
    data[i] = saved;
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double tg = tape_grad[static_cast<std::size_t>(i)];
    const double denom = std::max({std::fabs(fd), std::fabs(tg), 1e-8});
    max_rel = std::max(max_rel, std::fabs(fd - tg) / denom);
  }
  return max_rel;
}

}  // namespace stnn::ad
