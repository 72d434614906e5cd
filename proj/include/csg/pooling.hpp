#pragma once

// Spatial-to-vector pooling. gap() is plain global average pooling; apool()
// weights each position by the normalized inner product between its feature
// column and the map's average feature, with a uniform fallback when the score
// normalizer degenerates. Both are differentiable through the tape, apool
// through the value and the attention path.

#include <cstddef>
#include <string>
#include <vector>

#include "csg/tensor.hpp"

namespace csg {

enum class PoolingKind { Gap, APool };

struct AttentionMap {
  std::size_t h = 0, w = 0;
  std::vector<double> weights;  // h*w, sums to 1
  std::vector<double> ratio;    // weights * h * w; exactly 1 everywhere for uniform attention
  bool uniform_fallback = false;
  bool has_negative = false;
};

// Counters a training run threads through its forward passes.
struct PoolingStats {
  long long apool_calls = 0;
  long long negative_attention_calls = 0;  // calls with any weight < 0
  long long fallback_calls = 0;
  long long weight_sum_violations = 0;  // |sum(weights) - 1| > 1e-10
};

struct APoolResult {
  Tensor pooled;  // [C]
  AttentionMap attention;
};

// v: C×h×w -> [C]
Tensor gap(const Tensor& v);

// Attention computed from attention_source (defaults to v itself); pooled
// values always come from v. Under spatial augmentation the teacher path
// passes the student's feature map as the source.
APoolResult apool(const Tensor& v, const Tensor& attention_source, PoolingStats* stats = nullptr);
APoolResult apool(const Tensor& v, PoolingStats* stats = nullptr);

// Near-equal r×s partition of the spatial extent (remainder pixels go to the
// last row/column of cells), each cell average-pooled. Row-major cell order.
std::vector<Tensor> patch_pool(const Tensor& v, std::size_t rows, std::size_t cols);

// CSV matrix of the attention ratio, one row per map row.
void write_attention_csv(const AttentionMap& map, const std::string& path);

}  // namespace csg
