#include "csg/pooling.hpp"

#include <cmath>
#include <fstream>

#include "csg/tensor_io.hpp"

namespace csg {

namespace {

void check_map(const Tensor& v, const char* name) {
  CSG_CHECK(v.defined() && v.rank() == 3, Dimension,
            std::string(name) + ": expects a C×h×w feature map, got " +
                (v.defined() ? shape_str(v.shape()) : std::string("undefined")));
  CSG_CHECK(v.shape()[1] >= 1 && v.shape()[2] >= 1, Contract,
            std::string(name) + ": empty spatial extent");
}

}  // namespace

Tensor gap(const Tensor& v) {
  check_map(v, "gap");
  return mean(v, {1, 2});
}

APoolResult apool(const Tensor& v, const Tensor& attention_source, PoolingStats* stats) {
  check_map(v, "apool");
  check_map(attention_source, "apool");
  CSG_CHECK(v.shape() == attention_source.shape(), Dimension,
            "apool: attention source shape " + shape_str(attention_source.shape()) +
                " does not match value map " + shape_str(v.shape()));
  const std::size_t C = v.shape()[0], h = v.shape()[1], w = v.shape()[2];
  const std::size_t hw = h * w;

  Tensor src_mat = reshape(attention_source, {C, hw});
  Tensor avg_row = reshape(gap(attention_source), {1, C});
  Tensor scores = matmul(avg_row, src_mat);  // 1×hw, raw inner products
  Tensor denom = sum(scores);

  Tensor weights;
  bool fallback = false;
  if (std::fabs(denom.item()) < 1e-8) {
    weights = Tensor::full({1, hw}, 1.0 / static_cast<double>(hw));
    fallback = true;
  } else {
    weights = div(scores, denom);
  }

  Tensor pooled = reshape(matmul(reshape(v, {C, hw}), reshape(weights, {hw, 1})), {C});

  APoolResult res;
  res.pooled = pooled;
  res.attention.h = h;
  res.attention.w = w;
  res.attention.weights = weights.values();
  res.attention.uniform_fallback = fallback;
  res.attention.ratio.resize(hw);
  double wsum = 0.0;
  for (std::size_t i = 0; i < hw; ++i) {
    const double a = res.attention.weights[i];
    wsum += a;
    res.attention.ratio[i] = fallback ? 1.0 : a * static_cast<double>(hw);
    if (a < 0.0) res.attention.has_negative = true;
  }
  if (stats) {
    ++stats->apool_calls;
    if (res.attention.has_negative) ++stats->negative_attention_calls;
    if (fallback) ++stats->fallback_calls;
    if (std::fabs(wsum - 1.0) > 1e-10) ++stats->weight_sum_violations;
  }
  return res;
}

APoolResult apool(const Tensor& v, PoolingStats* stats) { return apool(v, v, stats); }

std::vector<Tensor> patch_pool(const Tensor& v, std::size_t rows, std::size_t cols) {
  check_map(v, "patch_pool");
  CSG_CHECK(rows * cols > 0, Contract, "patch_pool: empty grid");
  const std::size_t C = v.shape()[0], h = v.shape()[1], w = v.shape()[2];
  CSG_CHECK(rows <= h && cols <= w, Contract,
            "patch_pool: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                " larger than map " + std::to_string(h) + "x" + std::to_string(w));

  const std::size_t base_h = h / rows, base_w = w / cols;
  std::vector<Tensor> cells;
  cells.reserve(rows * cols);
  for (std::size_t ri = 0; ri < rows; ++ri) {
    const std::size_t y0 = ri * base_h;
    const std::size_t y1 = (ri + 1 == rows) ? h : y0 + base_h;
    for (std::size_t ci = 0; ci < cols; ++ci) {
      const std::size_t x0 = ci * base_w;
      const std::size_t x1 = (ci + 1 == cols) ? w : x0 + base_w;
      const std::size_t count = (y1 - y0) * (x1 - x0);
      const double inv = 1.0 / static_cast<double>(count);

      std::vector<double> out(C, 0.0);
      const auto& in = v.values();
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) acc += in[(c * h + y) * w + x];
        out[c] = acc * inv;
      }

      auto node = std::make_shared<TensorNode>();
      node->shape = {C};
      node->value = std::move(out);
      node->requires_grad = v.requires_grad();
      if (node->requires_grad) {
        node->parents = {v.node()};
        node->backward_fn = [C, h, w, y0, y1, x0, x1, inv](TensorNode& self) {
          TensorNode& p = *self.parents[0];
          if (!p.requires_grad) return;
          p.ensure_grad();
          for (std::size_t c = 0; c < C; ++c) {
            const double g = self.grad[c] * inv;
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t x = x0; x < x1; ++x) p.grad[(c * h + y) * w + x] += g;
          }
        };
      }
      cells.emplace_back(Tensor(std::move(node)));
    }
  }
  return cells;
}

void write_attention_csv(const AttentionMap& map, const std::string& path) {
  Tensor t = Tensor::from_data({map.h, map.w}, map.ratio);
  write_csv_2d(t, path);
}

}  // namespace csg
