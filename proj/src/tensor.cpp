#include "ssr/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace ssr::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)) {
  if (numel(shape_) != values.size()) {
    throw AdError("tensor: shape " + shape_str(shape_) + " needs " +
                  std::to_string(numel(shape_)) + " values, got " +
                  std::to_string(values.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }
Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::full(Shape shape, double v) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

double Tensor::item() const {
  if (size() != 1) {
    throw AdError("item: tensor of shape " + shape_str(shape_) +
                  " is not a single element");
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

// ---------------------------------------------------------------------------

std::size_t Tape::push(Node node) {
  if (consumed_) throw AdError("tape: recording after backward");
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tensor Tape::variable(const Tensor& value) {
  Tensor t = value.detach();
  t.tape_ = this;
  t.node_ = push(Node{"leaf", {}, value.size(), value.shape(), nullptr});
  return t;
}

Tensor Tape::record(std::string_view op, const std::vector<Tensor>& inputs,
                    Tensor output, BackwardFn backward) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (!in.tracked()) continue;
    if (tape && in.tape() != tape) {
      throw AdError(std::string(op) + ": inputs recorded on different tapes");
    }
    tape = in.tape();
  }
  if (!tape) return output;

  Node node;
  node.op = std::string(op);
  node.numel = output.size();
  node.shape = output.shape();
  node.backward = std::move(backward);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.grad_id());
  output.tape_ = tape;
  output.node_ = tape->push(std::move(node));
  return output;
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw AdError("backward: tape already consumed");
  if (loss.size() != 1) {
    throw AdError("backward: loss must be scalar, got shape " +
                  shape_str(loss.shape()));
  }
  Gradients out;
  out.tape_ = this;
  out.grads_.resize(nodes_.size());
  if (!loss.tracked() || loss.tape() != this) {
    consumed_ = true;
    return out;
  }
  consumed_ = true;

  std::vector<std::vector<double>> buf(nodes_.size());
  auto sink = [&](std::size_t id) -> std::span<double> {
    if (buf[id].empty()) buf[id].assign(nodes_[id].numel, 0.0);
    return buf[id];
  };
  sink(*loss.grad_id())[0] = 1.0;

  for (std::size_t id = *loss.grad_id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (buf[id].empty()) continue;
    if (node.backward) {
      GradSinks sinks;
      sinks.reserve(node.inputs.size());
      for (const auto& in : node.inputs) {
        sinks.push_back(in ? sink(*in) : std::span<double>{});
      }
      node.backward(buf[id], sinks);
      node.backward = nullptr;  // releases captured activations
    }
    out.grads_[id] =
        std::make_shared<const std::vector<double>>(std::move(buf[id]));
    buf[id] = {};
  }
  return out;
}

Tensor Gradients::of(const Tensor& t) const {
  if (t.tracked() && t.tape() == tape_ && *t.grad_id() < grads_.size() &&
      grads_[*t.grad_id()]) {
    Tensor g;
    g.shape_ = t.shape();
    g.data_ = grads_[*t.grad_id()];
    return g;
  }
  return Tensor::zeros(t.shape());
}

bool Gradients::reached(const Tensor& t) const {
  return t.tracked() && t.tape() == tape_ && *t.grad_id() < grads_.size() &&
         grads_[*t.grad_id()] != nullptr;
}

}  // namespace ssr::ad
