#pragma once

// Dense f64 tensors with tape-based reverse-mode differentiation.
//
// Graphs here are tiny (one training step at a time), so every node owns its
// parents through shared_ptr and backward() does a topological replay over the
// reachable subgraph. A result only records parents and a backward closure
// when some input requires gradients; a frozen model therefore builds no tape
// at all during forward passes.
//
// Broadcasting is restricted to identical shapes and scalars (numel == 1).

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "csg/error.hpp"
#include "csg/rng.hpp"

namespace csg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily; same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const { return shape().size(); }
  bool requires_grad() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double item() const;  // scalar tensors only
  double at(std::initializer_list<std::size_t> idx) const;

  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad();

  Tensor detached() const;                      // shares nothing with the tape
  Tensor clone(bool requires_grad = false) const;

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse-mode sweep from a scalar loss. Repeated calls accumulate into
// existing gradients; call zero_grad on leaves between steps.
void backward(const Tensor& loss);

// elementwise; shapes must match exactly or one side must be scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
// input C_in×H×W, kernel C_out×C_in×k×k, zero padding `pad` on each border
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);
// map C×h×w plus a per-channel bias [C]
Tensor channel_bias_add(const Tensor& map, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);

// v / max(||v||_2, 1e-12)
Tensor l2_normalize(const Tensor& v);
// sum(mul(a, b)) over identical shapes
Tensor dot(const Tensor& a, const Tensor& b);

constexpr double kEps = 1e-12;

}  // namespace csg
