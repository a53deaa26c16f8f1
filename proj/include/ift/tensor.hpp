#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <type_traits>
#include <vector>

#include "ift/common.hpp"
#include "ift/rng.hpp"

namespace ift {

template <typename S>
struct TensorImpl {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

// Dense row-major tensor, templated on scalar (float for training, double for
// gradient-check suites). Copying a Tensor copies the handle: two copies see
// the same storage and the same gradient accumulator, which is what parameter
// registries and the autodiff tape need.
template <typename S>
class Tensor {
  static_assert(std::is_floating_point_v<S>, "Tensor scalar must be f32 or f64");

 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : p_(std::make_shared<TensorImpl<S>>()) {
    p_->shape = std::move(shape);
    p_->data.assign(static_cast<std::size_t>(ift::numel(p_->shape)), S(0));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.p_->data.begin(), t.p_->data.end(), v);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

  static Tensor from(Shape shape, std::vector<S> values) {
    require(ift::numel(shape) == static_cast<index_t>(values.size()),
            "Tensor::from: " + shape_str(shape) + " does not hold " +
                std::to_string(values.size()) + " values");
    Tensor t;
    t.p_ = std::make_shared<TensorImpl<S>>();
    t.p_->shape = std::move(shape);
    t.p_->data = std::move(values);
    return t;
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  static Tensor rand_uniform(Shape shape, Rng& rng, S lo = S(0), S hi = S(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.p_->data) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor rand_normal(Shape shape, Rng& rng, S mean = S(0), S stddev = S(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.p_->data) v = static_cast<S>(mean + stddev * rng.normal());
    return t;
  }

  bool defined() const { return static_cast<bool>(p_); }
  const Shape& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  index_t dim(int i) const { return p_->shape[static_cast<std::size_t>(normalize_axis(i, rank()))]; }
  index_t numel() const { return static_cast<index_t>(p_->data.size()); }

  S* data() { return p_->data.data(); }
  const S* data() const { return p_->data.data(); }
  std::vector<S>& vec() { return p_->data; }
  const std::vector<S>& vec() const { return p_->data; }

  S& operator[](index_t i) { return p_->data[static_cast<std::size_t>(i)]; }
  S operator[](index_t i) const { return p_->data[static_cast<std::size_t>(i)]; }

  S item() const {
    require(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
    return p_->data[0];
  }

  bool requires_grad() const { return p_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    p_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !p_->grad.empty(); }

  std::vector<S>& grad_vec() {
    ensure_grad();
    return p_->grad;
  }

  S* grad() {
    ensure_grad();
    return p_->grad.data();
  }
  const S* grad() const { return p_->grad.data(); }

  void ensure_grad() {
    if (p_->grad.empty()) p_->grad.assign(p_->data.size(), S(0));
  }

  void zero_grad() { p_->grad.clear(); }

  // Deep copy; the result is detached from any graph.
  Tensor clone() const {
    Tensor t;
    t.p_ = std::make_shared<TensorImpl<S>>();
    t.p_->shape = p_->shape;
    t.p_->data = p_->data;
    return t;
  }

  Tensor detach() const { return clone(); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> t{p_->shape};
    for (std::size_t i = 0; i < p_->data.size(); ++i) t.data()[i] = static_cast<T>(p_->data[i]);
    return t;
  }

  bool same_impl(const Tensor& o) const { return p_ == o.p_; }
  TensorImpl<S>* impl() const { return p_.get(); }

 private:
  std::shared_ptr<TensorImpl<S>> p_;
};

template <typename S>
bool same_data(const Tensor<S>& a, const Tensor<S>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), sizeof(S) * static_cast<std::size_t>(a.numel())) == 0;
}

}  // namespace ift
