#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stnn/common.hpp"

// Dense 64-bit tensors with reverse-mode differentiation. Only the shapes and
// operations the forecasting model needs are supported; there is no
// broadcasting and no device abstraction.
namespace stnn::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  // Uniform init in +-sqrt(1/fan_in), the scheme used for every learnable map.
  static Tensor uniform_init(Shape shape, std::int64_t fan_in, Rng& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }
  std::int64_t dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }

  const double* data() const { return impl_->data.data(); }
  double* data() { return impl_->data.data(); }
  const std::vector<double>& vec() const { return impl_->data; }
  std::vector<double>& vec() { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value);
  const std::vector<double>& grad() const;
  std::vector<double>& grad();
  void zero_grad();

  double item() const;

  // Identity of the underlying storage; two handles to one tensor compare equal.
  const TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor wrap(std::shared_ptr<TensorImpl>);
};

Tensor wrap(std::shared_ptr<TensorImpl> impl);

// Recorded forward ops, replayed strictly in reverse for backward.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds the scalar output with gradient 1 and replays the tape backwards.
  void backward(const Tensor& scalar_output);

 private:
  std::vector<std::function<void()>> ops_;
};

// RAII activation of a tape on the current thread. Ops record themselves only
// while a tape is active and an input requires grad.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// --- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Same-size 2D cross-correlation with zero padding; kernel dims must be odd.
Tensor conv2d_same(const Tensor& x, const Tensor& kernel);
Tensor softmax_rows(const Tensor& s);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor abs(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// Selects one row of the middle axis of a CxHxW tensor, keeping Cx1xW.
Tensor pick_row(const Tensor& x, std::int64_t row);
// Adds a constant (non-learnable) bias tensor elementwise.
Tensor add_const(const Tensor& a, const Tensor& constant);

// --- optimizer --------------------------------------------------------------

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState(const std::vector<Tensor>& params, double lr);
  // Standard bias-corrected update; zeroes every grad afterwards.
  void step(std::vector<Tensor>& params);
};

// --- gradient checking ------------------------------------------------------

// Compares the tape gradient of f() w.r.t. x against central differences.
// f must rebuild its graph from the current contents of x on every call.
// Returns the max over coordinates of |fd - tape| / max(|fd|, |tape|, 1e-8).
double finite_diff_check(const std::function<Tensor()>& f, Tensor& x, double h);

}  // namespace stnn::ad
