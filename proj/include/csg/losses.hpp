#pragma once

// InfoNCE in image-level, multi-layer and dense-patch forms, plus the task
// cross-entropies and the total objective. All losses are scalar tensors on
// the tape; callers decide what requires gradients.

#include <functional>
#include <map>
#include <set>
#include <vector>

#include "csg/pooling.hpp"
#include "csg/tensor.hpp"

namespace csg {

enum class NceMode { Image, Dense };

struct NceConfig {
  double temperature = 0.07;
  double lambda = 0.1;
  std::set<int> layers = {3, 4};
  std::size_t grid_rows = 8, grid_cols = 8;
  NceMode mode = NceMode::Image;
  // dense mode: also use the other cells of the anchor's own image as negatives
  bool intra_image_negatives = false;

  void validate() const;
};

// Embeddings for one anchor at one layer: student view, teacher view of the
// same image, teacher views of the negatives.
struct LayerEmbeddings {
  Tensor anchor;
  Tensor positive;
  std::vector<Tensor> negatives;
};

struct ContrastiveBatch {
  std::map<int, LayerEmbeddings> layers;
};

// -log( e^{a.p/t} / (e^{a.p/t} + sum_k e^{a.n_k/t}) ), log-sum-exp stabilized.
// K=0 returns exactly 0. Inputs are assumed pre-normalized by the caller.
Tensor info_nce(const Tensor& anchor, const Tensor& positive,
                const std::vector<Tensor>& negatives, double temperature);

// Unweighted sum of per-layer info_nce over cfg.layers.
Tensor multi_layer_nce(const ContrastiveBatch& batch, const NceConfig& cfg);

// Per-cell InfoNCE averaged over an r×s partition of the feature maps. Cells
// are passed through the projection closures and l2-normalized here.
// Negatives for cell i are the same-index cells of the negative maps (plus,
// with cfg.intra_image_negatives, the remaining cells of the anchor's image
// through the positive path).
using Projection = std::function<Tensor(const Tensor&)>;
Tensor dense_nce(const Tensor& anchor_map, const Tensor& positive_map,
                 const std::vector<Tensor>& negative_maps, const Projection& project_student,
                 const Projection& project_teacher, const NceConfig& cfg);

// task + lambda * nce
Tensor total_loss(const Tensor& task, const Tensor& nce, double lambda);

// -log softmax at the target, averaged over rows. logits: [n] with a single
// label, or [B,n] with one label per row.
Tensor cross_entropy(const Tensor& logits, int label);
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// logit_map: K×h×w, labels row-major h*w, averaged over pixels whose label is
// not ignore_index.
Tensor pixel_cross_entropy(const Tensor& logit_map, const std::vector<int>& labels,
                           int ignore_index = -1);

}  // namespace csg
