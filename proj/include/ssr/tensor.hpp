#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 arrays.
//
// A Tensor is an immutable (shape, values) pair. Tensors created through
// Tape::variable, or produced by an op that consumed at least one such
// tensor, carry a handle into that tape; everything else is a constant.
// Ops on constants run eagerly and record nothing.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ssr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

/// Raised for contract violations inside the AD engine (shape mismatches,
/// mixed tapes, non-scalar losses, repeated backward).
class AdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor {
 public:
  Tensor();  // scalar 0
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_->size(); }
  std::span<const double> values() const { return *data_; }
  const std::vector<double>& vec() const { return *data_; }
  /// Shared immutable storage; lets backward rules keep inputs alive without copying.
  std::shared_ptr<const std::vector<double>> storage() const { return data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  /// Value of a single-element tensor.
  double item() const;

  bool tracked() const { return node_.has_value(); }
  std::optional<std::size_t> grad_id() const { return node_; }
  Tape* tape() const { return tape_; }

  /// Same values, no tape handle.
  Tensor detach() const;

 private:
  friend class Tape;
  friend class Gradients;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::optional<std::size_t> node_;
};

/// Gradient of a scalar loss with respect to every tensor on a tape.
class Gradients {
 public:
  /// Gradient for t; zeros of t's shape if t was never reached (or is a constant).
  Tensor of(const Tensor& t) const;
  bool reached(const Tensor& t) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::shared_ptr<const std::vector<double>>> grads_;
};

/// Per-input accumulation targets handed to a backward rule. An empty span
/// means the input is a constant and needs no gradient.
using GradSinks = std::vector<std::span<double>>;
using BackwardFn =
    std::function<void(std::span<const double> grad_out, GradSinks& grad_in)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf.
  Tensor variable(const Tensor& value);

  /// Records an op whose forward value has already been computed. If no input
  /// is tracked, the output is returned as a constant and nothing is stored.
  static Tensor record(std::string_view op, const std::vector<Tensor>& inputs,
                       Tensor output, BackwardFn backward);

  Gradients backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::string op;
    std::vector<std::optional<std::size_t>> inputs;
    std::size_t numel;
    Shape shape;
    BackwardFn backward;
  };
  std::size_t push(Node node);
  std::vector<Node> nodes_;
  bool consumed_ = false;
  friend class Gradients;
};

// ---- primitives ------------------------------------------------------------
//
// Binary elementwise ops accept equal shapes, or shapes where one is a
// trailing suffix of the other (a scalar is the empty suffix); the shorter
// operand is repeated.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Denominator magnitudes below kDivGuard are pushed out to +/-kDivGuard.
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);

/// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
/// Inputs below kLogGuard are clamped to kLogGuard (zero gradient there).
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor pow(const Tensor& x, double p);
Tensor abs(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};
/// x (N,C,H,W), weight (O,C,K,K), bias (O) -> (N,O,Ho,Wo)
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dOptions opt = {});
/// x (N,C,H,W) -> (N,C,Ho,Wo); no padding.
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
/// Elements [begin, end) along axis.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);

inline constexpr double kLogGuard = 1e-12;
inline constexpr double kDivGuard = 1e-12;

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& x);
Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);

}  // namespace ssr::ad
