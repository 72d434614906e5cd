#include "csg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace csg {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr new_node(Shape shape, std::vector<double> value, bool requires_grad) {
  CSG_CHECK(shape_numel(shape) == value.size(), Dimension,
            "tensor: shape " + shape_str(shape) + " does not match data length " +
                std::to_string(value.size()));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

// Result node; parents and the backward closure are recorded only when some
// input participates in the tape.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                   std::function<void(TensorNode&)> fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || (p && p->requires_grad);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Tensor(std::move(n));
}

void check_defined(const Tensor& t, const char* name) {
  CSG_CHECK(t.defined(), Contract, std::string(name) + ": undefined tensor");
}

template <class F, class DA, class DB>
Tensor ew_binary(const Tensor& a, const Tensor& b, const char* name, F f, DA dfda, DB dfdb) {
  check_defined(a, name);
  check_defined(b, name);
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  CSG_CHECK(a.shape() == b.shape() || a_scalar || b_scalar, Dimension,
            std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  const Shape& os = (a_scalar && !b_scalar) ? b.shape() : a.shape();
  const std::size_t n = shape_numel(os);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  return make_result(
      os, std::move(out), {a.node(), b.node()},
      [a_scalar, b_scalar, dfda, dfdb](TensorNode& self) {
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        const std::size_t n = self.value.size();
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            const double x = pa.value[a_scalar ? 0 : i];
            const double y = pb.value[b_scalar ? 0 : i];
            pa.grad[a_scalar ? 0 : i] += self.grad[i] * dfda(x, y);
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            const double x = pa.value[a_scalar ? 0 : i];
            const double y = pb.value[b_scalar ? 0 : i];
            pb.grad[b_scalar ? 0 : i] += self.grad[i] * dfdb(x, y);
          }
        }
      });
}

template <class F, class DF>
Tensor ew_unary(const Tensor& a, const char* name, F f, DF dfdx) {
  check_defined(a, name);
  const std::size_t n = a.numel();
  const auto& av = a.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
  return make_result(a.shape(), std::move(out), {a.node()}, [dfdx](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const std::size_t n = self.value.size();
    for (std::size_t i = 0; i < n; ++i) p.grad[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
  });
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(new_node({1}, {v}, requires_grad));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (auto& x : data) x = rng.gaussian() * stddev;
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

const Shape& Tensor::shape() const {
  CSG_CHECK(node_ != nullptr, Contract, "shape(): undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::vector<double>& Tensor::values() {
  CSG_CHECK(node_ != nullptr, Contract, "values(): undefined tensor");
  return node_->value;
}

const std::vector<double>& Tensor::values() const {
  CSG_CHECK(node_ != nullptr, Contract, "values(): undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  CSG_CHECK(numel() == 1, Contract, "item(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  const Shape& s = shape();
  CSG_CHECK(idx.size() == s.size(), Contract, "at(): rank mismatch");
  std::size_t off = 0;
  std::size_t d = 0;
  for (std::size_t i : idx) {
    CSG_CHECK(i < s[d], Contract, "at(): index out of range");
    off = off * s[d] + i;
    ++d;
  }
  return node_->value[off];
}

std::vector<double>& Tensor::grad() {
  CSG_CHECK(node_ != nullptr, Contract, "grad(): undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
  CSG_CHECK(node_ != nullptr, Contract, "grad(): undefined tensor");
  const_cast<TensorNode*>(node_.get())->ensure_grad();
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detached() const {
  CSG_CHECK(node_ != nullptr, Contract, "detached(): undefined tensor");
  return Tensor(new_node(node_->shape, node_->value, false));
}

Tensor Tensor::clone(bool requires_grad) const {
  CSG_CHECK(node_ != nullptr, Contract, "clone(): undefined tensor");
  return Tensor(new_node(node_->shape, node_->value, requires_grad));
}

void backward(const Tensor& loss) {
  check_defined(loss, "backward");
  CSG_CHECK(loss.numel() == 1, Contract,
            "backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  NodePtr root = loss.node();
  if (!root->requires_grad) return;

  // reverse post-order over the requires_grad subgraph
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      TensorNode* p = top.first->parents[top.second++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  // Interior grads are scratch for one sweep; only leaves accumulate across
  // repeated backward() calls.
  for (TensorNode* n : order)
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

namespace {
// Divisors get an epsilon floor on magnitude; values indistinguishable from
// zero are a hard error rather than a silent clamp.
double guarded_divisor(double y) {
  CSG_CHECK(std::fabs(y) >= 1e-300, NumericDomain, "div: divisor magnitude below 1e-300");
  if (std::fabs(y) < kEps) return std::copysign(kEps, y);
  return y;
}
}  // namespace

Tensor div(const Tensor& a, const Tensor& b) {
  return ew_binary(
      a, b, "div", [](double x, double y) { return x / guarded_divisor(y); },
      [](double, double y) { return 1.0 / guarded_divisor(y); },
      [](double x, double y) {
        if (std::fabs(y) < kEps) return 0.0;  // clamp active: output constant in y
        return -x / (y * y);
      });
}

Tensor scale(const Tensor& a, double c) {
  return ew_unary(
      a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return ew_unary(
      a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return ew_unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return ew_unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& a) {
  return ew_unary(
      a, "log", [](double x) { return std::log(x < kEps ? kEps : x); },
      [](double x, double) { return x < kEps ? 0.0 : 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return ew_unary(
      a, "sqrt",
      [](double x) {
        CSG_CHECK(x >= 0.0, NumericDomain, "sqrt: negative operand");
        return std::sqrt(x);
      },
      [](double, double out) { return 0.5 / (out < kEps ? kEps : out); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  CSG_CHECK(a.rank() == 2 && b.rank() == 2, Dimension,
            "matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  CSG_CHECK(k == k2, Dimension,
            "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                shape_str(b.shape()));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      pa.ensure_grad();
      // dA = g . B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g + i * n;
          const double* brow = pb.value.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          pa.grad[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      // dB = A^T . g
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.value[i * k + p];
          double* brow = pb.grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
  check_defined(input, "conv2d");
  check_defined(kernel, "conv2d");
  CSG_CHECK(input.rank() == 3, Dimension,
            "conv2d: input must be C×H×W, got " + shape_str(input.shape()));
  CSG_CHECK(kernel.rank() == 4, Dimension,
            "conv2d: kernel must be O×C×k×k, got " + shape_str(kernel.shape()));
  CSG_CHECK(stride >= 1, Contract, "conv2d: stride must be >= 1");
  CSG_CHECK(pad >= 0, Contract, "conv2d: pad must be >= 0");
  const std::size_t C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
  const std::size_t O = kernel.shape()[0], KC = kernel.shape()[1];
  const std::size_t kh = kernel.shape()[2], kw = kernel.shape()[3];
  CSG_CHECK(KC == C, Dimension, "conv2d: kernel channel count " + std::to_string(KC) +
                                    " does not match input channels " + std::to_string(C));
  CSG_CHECK(kh == kw, Dimension, "conv2d: kernel must be square");
  CSG_CHECK(kh <= H + 2 * static_cast<std::size_t>(pad) && kw <= W + 2 * static_cast<std::size_t>(pad),
            Dimension, "conv2d: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
  const std::size_t R = C * kh * kw;
  const std::size_t P = Ho * Wo;

  // im2col; kept alive for the backward closure
  auto cols = std::make_shared<std::vector<double>>(R * P, 0.0);
  {
    const double* in = input.values().data();
    double* cp = cols->data();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < kh; ++ki)
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const std::size_t r = (c * kh + ki) * kw + kj;
          double* crow = cp + r * P;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy) * stride + static_cast<long>(ki) - pad;
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            const double* irow = in + (c * H + iy) * W;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox) * stride + static_cast<long>(kj) - pad;
              if (ix < 0 || ix >= static_cast<long>(W)) continue;
              crow[oy * Wo + ox] = irow[ix];
            }
          }
        }
  }

  std::vector<double> out(O * P, 0.0);
  {
    const double* kv = kernel.values().data();
    for (std::size_t o = 0; o < O; ++o) {
      double* orow = out.data() + o * P;
      for (std::size_t r = 0; r < R; ++r) {
        const double kor = kv[o * R + r];
        const double* crow = cols->data() + r * P;
        for (std::size_t p = 0; p < P; ++p) orow[p] += kor * crow[p];
      }
    }
  }

  const int s = stride, pd = pad;
  return make_result(
      {O, Ho, Wo}, std::move(out), {input.node(), kernel.node()},
      [cols, C, H, W, O, kh, kw, Ho, Wo, R, P, s, pd](TensorNode& self) {
        TensorNode& pin = *self.parents[0];
        TensorNode& pker = *self.parents[1];
        const double* g = self.grad.data();
        if (pker.requires_grad) {
          pker.ensure_grad();
          for (std::size_t o = 0; o < O; ++o) {
            const double* grow = g + o * P;
            for (std::size_t r = 0; r < R; ++r) {
              const double* crow = cols->data() + r * P;
              double acc = 0.0;
              for (std::size_t p = 0; p < P; ++p) acc += grow[p] * crow[p];
              pker.grad[o * R + r] += acc;
            }
          }
        }
        if (pin.requires_grad) {
          pin.ensure_grad();
          std::vector<double> dcols(R * P, 0.0);
          const double* kv = pker.value.data();
          for (std::size_t o = 0; o < O; ++o) {
            const double* grow = g + o * P;
            for (std::size_t r = 0; r < R; ++r) {
              const double kor = kv[o * R + r];
              double* drow = dcols.data() + r * P;
              for (std::size_t p = 0; p < P; ++p) drow[p] += kor * grow[p];
            }
          }
          // col2im scatter
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < kh; ++ki)
              for (std::size_t kj = 0; kj < kw; ++kj) {
                const std::size_t r = (c * kh + ki) * kw + kj;
                const double* drow = dcols.data() + r * P;
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                  const long iy = static_cast<long>(oy) * s + static_cast<long>(ki) - pd;
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  double* irow = pin.grad.data() + (c * H + iy) * W;
                  for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const long ix = static_cast<long>(ox) * s + static_cast<long>(kj) - pd;
                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                    irow[ix] += drow[oy * Wo + ox];
                  }
                }
              }
        }
      });
}

Tensor channel_bias_add(const Tensor& map, const Tensor& bias) {
  check_defined(map, "channel_bias_add");
  check_defined(bias, "channel_bias_add");
  CSG_CHECK(map.rank() == 3 && bias.rank() == 1 && map.shape()[0] == bias.shape()[0], Dimension,
            "channel_bias_add: expects C×h×w map and [C] bias, got " + shape_str(map.shape()) +
                " and " + shape_str(bias.shape()));
  const std::size_t C = map.shape()[0];
  const std::size_t hw = map.shape()[1] * map.shape()[2];
  std::vector<double> out(map.values());
  const auto& bv = bias.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < hw; ++p) out[c * hw + p] += bv[c];
  return make_result(map.shape(), std::move(out), {map.node(), bias.node()},
                     [C, hw](TensorNode& self) {
                       TensorNode& pm = *self.parents[0];
                       TensorNode& pb = *self.parents[1];
                       if (pm.requires_grad) {
                         pm.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           pm.grad[i] += self.grad[i];
                       }
                       if (pb.requires_grad) {
                         pb.ensure_grad();
                         for (std::size_t c = 0; c < C; ++c) {
                           double acc = 0.0;
                           for (std::size_t p = 0; p < hw; ++p) acc += self.grad[c * hw + p];
                           pb.grad[c] += acc;
                         }
                       }
                     });
}

namespace {

Tensor reduce_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool take_mean,
                   const char* name) {
  check_defined(a, name);
  const Shape& in_shape = a.shape();
  std::vector<bool> reduced(in_shape.size(), false);
  for (auto ax : axes) {
    CSG_CHECK(ax < in_shape.size(), Contract,
              std::string(name) + ": axis " + std::to_string(ax) + " out of range for shape " +
                  shape_str(in_shape));
    reduced[ax] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < in_shape.size(); ++d)
    if (!reduced[d]) out_shape.push_back(in_shape[d]);
  if (out_shape.empty()) out_shape = {1};

  const std::size_t n_in = a.numel();
  const std::size_t n_out = shape_numel(out_shape);
  const std::size_t count = n_in / n_out;
  const double factor = take_mean ? 1.0 / static_cast<double>(count) : 1.0;

  // map each input flat index to its output flat index
  std::vector<std::size_t> in_strides(in_shape.size(), 1);
  for (std::size_t d = in_shape.size(); d-- > 1;) in_strides[d - 1] = in_strides[d] * in_shape[d];
  std::vector<std::size_t> map(n_in);
  for (std::size_t i = 0; i < n_in; ++i) {
    std::size_t out = 0;
    for (std::size_t d = 0; d < in_shape.size(); ++d) {
      const std::size_t coord = (i / in_strides[d]) % in_shape[d];
      if (!reduced[d]) out = out * in_shape[d] + coord;
    }
    map[i] = out;
  }

  std::vector<double> out(n_out, 0.0);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n_in; ++i) out[map[i]] += av[i];
  if (take_mean)
    for (auto& v : out) v *= factor;

  auto map_ptr = std::make_shared<std::vector<std::size_t>>(std::move(map));
  return make_result(out_shape, std::move(out), {a.node()}, [map_ptr, factor](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const auto& m = *map_ptr;
    for (std::size_t i = 0; i < m.size(); ++i) p.grad[i] += self.grad[m[i]] * factor;
  });
}

}  // namespace

Tensor sum(const Tensor& a) {
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t d = 0; d < axes.size(); ++d) axes[d] = d;
  return reduce_axes(a, axes, false, "sum");
}

Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes) {
  return reduce_axes(a, axes, false, "sum");
}

Tensor mean(const Tensor& a) {
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t d = 0; d < axes.size(); ++d) axes[d] = d;
  return reduce_axes(a, axes, true, "mean");
}

Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes) {
  return reduce_axes(a, axes, true, "mean");
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_defined(a, "reshape");
  CSG_CHECK(shape_numel(shape) == a.numel(), Dimension,
            "reshape: element count mismatch, " + shape_str(a.shape()) + " -> " +
                shape_str(shape));
  return make_result(std::move(shape), a.values(), {a.node()}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor l2_normalize(const Tensor& v) {
  check_defined(v, "l2_normalize");
  double norm_sq = 0.0;
  for (double x : v.values()) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  if (norm < kEps) return scale(v, 1.0 / kEps);
  Tensor n = sqrt(sum(mul(v, v)));
  return div(v, n);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  CSG_CHECK(a.shape() == b.shape(), Dimension,
            "dot: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return sum(mul(a, b));
}

}  // namespace csg
