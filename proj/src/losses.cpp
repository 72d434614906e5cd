#include "csg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace csg {

void NceConfig::validate() const {
  CSG_CHECK(temperature > 0.0, Contract, "nce: temperature must be positive");
  CSG_CHECK(lambda >= 0.0, Contract, "nce: lambda must be nonnegative");
  CSG_CHECK(!layers.empty(), Contract, "nce: layer set must not be empty");
  for (int l : layers)
    CSG_CHECK(l >= 1 && l <= 4, Contract, "nce: layer ids must be in 1..4");
  CSG_CHECK(grid_rows * grid_cols >= 1, Contract, "nce: dense grid must be nonempty");
}

Tensor info_nce(const Tensor& anchor, const Tensor& positive,
                const std::vector<Tensor>& negatives, double temperature) {
  CSG_CHECK(temperature > 0.0, Contract, "info_nce: temperature must be positive");
  CSG_CHECK(anchor.defined() && positive.defined(), Contract, "info_nce: undefined embedding");
  CSG_CHECK(anchor.shape() == positive.shape(), Dimension,
            "info_nce: anchor/positive dimension mismatch");
  if (negatives.empty()) return Tensor::scalar(0.0);

  const double inv_t = 1.0 / temperature;
  Tensor logit_pos = scale(dot(anchor, positive), inv_t);
  std::vector<Tensor> logit_negs;
  logit_negs.reserve(negatives.size());
  double max_logit = logit_pos.item();
  for (const auto& n : negatives) {
    CSG_CHECK(n.shape() == anchor.shape(), Dimension,
              "info_nce: negative dimension mismatch");
    logit_negs.push_back(scale(dot(anchor, n), inv_t));
    max_logit = std::max(max_logit, logit_negs.back().item());
  }

  Tensor total = exp(add_scalar(logit_pos, -max_logit));
  for (const auto& ln : logit_negs) total = add(total, exp(add_scalar(ln, -max_logit)));
  // log(sum e^{l_i - m}) + m - l_pos
  return sub(add_scalar(log(total), max_logit), logit_pos);
}

Tensor multi_layer_nce(const ContrastiveBatch& batch, const NceConfig& cfg) {
  cfg.validate();
  Tensor acc;
  for (int l : cfg.layers) {
    auto it = batch.layers.find(l);
    CSG_CHECK(it != batch.layers.end(), Contract,
              "multi_layer_nce: batch is missing layer " + std::to_string(l));
    Tensor term = info_nce(it->second.anchor, it->second.positive, it->second.negatives,
                           cfg.temperature);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

Tensor dense_nce(const Tensor& anchor_map, const Tensor& positive_map,
                 const std::vector<Tensor>& negative_maps, const Projection& project_student,
                 const Projection& project_teacher, const NceConfig& cfg) {
  cfg.validate();
  CSG_CHECK(anchor_map.defined() && anchor_map.rank() == 3, Dimension,
            "dense_nce: anchor map must be C×h×w");
  CSG_CHECK(anchor_map.shape() == positive_map.shape(), Dimension,
            "dense_nce: positive map shape mismatch");
  const std::size_t r = cfg.grid_rows, s = cfg.grid_cols;
  CSG_CHECK(r <= anchor_map.shape()[1] && s <= anchor_map.shape()[2], Contract,
            "dense_nce: grid larger than feature map");

  auto cells_a = patch_pool(anchor_map, r, s);
  auto cells_p = patch_pool(positive_map, r, s);
  std::vector<std::vector<Tensor>> cells_n;
  cells_n.reserve(negative_maps.size());
  for (const auto& nm : negative_maps) {
    CSG_CHECK(nm.shape() == anchor_map.shape(), Dimension,
              "dense_nce: negative map shape mismatch");
    cells_n.push_back(patch_pool(nm, r, s));
  }

  const std::size_t n_cells = cells_a.size();
  std::vector<Tensor> z_a(n_cells), z_p(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) {
    z_a[i] = l2_normalize(project_student(cells_a[i]));
    z_p[i] = l2_normalize(project_teacher(cells_p[i]));
  }

  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < n_cells; ++i) {
    std::vector<Tensor> negs;
    for (auto& nc : cells_n) negs.push_back(l2_normalize(project_teacher(nc[i])));
    if (cfg.intra_image_negatives)
      for (std::size_t j = 0; j < n_cells; ++j)
        if (j != i) negs.push_back(z_p[j]);
    acc = add(acc, info_nce(z_a[i], z_p[i], negs, cfg.temperature));
  }
  return scale(acc, 1.0 / static_cast<double>(n_cells));
}

Tensor total_loss(const Tensor& task, const Tensor& nce, double lambda) {
  CSG_CHECK(task.defined() && task.numel() == 1, Contract, "total_loss: task loss must be scalar");
  CSG_CHECK(nce.defined() && nce.numel() == 1, Contract, "total_loss: nce loss must be scalar");
  CSG_CHECK(std::isfinite(task.item()), NumericDomain, "total_loss: task loss is not finite");
  CSG_CHECK(std::isfinite(nce.item()), NumericDomain, "total_loss: nce loss is not finite");
  CSG_CHECK(lambda >= 0.0, Contract, "total_loss: lambda must be nonnegative");
  if (lambda == 0.0) return task;
  return add(task, scale(nce, lambda));
}

namespace {

// fused cross entropy over rows: value and softmax-minus-onehot backward
Tensor ce_rows(const Tensor& logits, const std::vector<int>& labels) {
  CSG_CHECK(logits.defined() && logits.rank() == 2, Dimension,
            "cross_entropy: logits must be [B,n]");
  const std::size_t B = logits.shape()[0], n = logits.shape()[1];
  CSG_CHECK(labels.size() == B, Contract, "cross_entropy: one label per row required");
  for (int l : labels)
    CSG_CHECK(l >= 0 && static_cast<std::size_t>(l) < n, Contract,
              "cross_entropy: label " + std::to_string(l) + " out of range 0.." +
                  std::to_string(n - 1));

  const auto& lv = logits.values();
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = lv.data() + b * n;
    double m = row[0];
    for (std::size_t c = 1; c < n; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - m);
    loss += std::log(z) + m - row[labels[b]];
  }
  loss /= static_cast<double>(B);

  auto node = std::make_shared<TensorNode>();
  node->shape = {1};
  node->value = {loss};
  node->requires_grad = logits.requires_grad();
  if (node->requires_grad) {
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    node->parents = {logits.node()};
    node->backward_fn = [B, n, labels_copy](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      const double g = self.grad[0] / static_cast<double>(B);
      for (std::size_t b = 0; b < B; ++b) {
        const double* row = p.value.data() + b * n;
        double m = row[0];
        for (std::size_t c = 1; c < n; ++c) m = std::max(m, row[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - m);
        for (std::size_t c = 0; c < n; ++c) {
          const double soft = std::exp(row[c] - m) / z;
          const double onehot = (static_cast<std::size_t>((*labels_copy)[b]) == c) ? 1.0 : 0.0;
          p.grad[b * n + c] += g * (soft - onehot);
        }
      }
    };
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, int label) {
  CSG_CHECK(logits.defined() && logits.rank() == 1, Dimension,
            "cross_entropy: logits must be a vector");
  return ce_rows(reshape(logits, {1, logits.numel()}), {label});
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  return ce_rows(logits, labels);
}

Tensor pixel_cross_entropy(const Tensor& logit_map, const std::vector<int>& labels,
                           int ignore_index) {
  CSG_CHECK(logit_map.defined() && logit_map.rank() == 3, Dimension,
            "pixel_cross_entropy: logit map must be K×h×w");
  const std::size_t K = logit_map.shape()[0];
  const std::size_t hw = logit_map.shape()[1] * logit_map.shape()[2];
  CSG_CHECK(labels.size() == hw, Contract, "pixel_cross_entropy: label map size mismatch");

  std::size_t n_valid = 0;
  for (int l : labels) {
    if (l == ignore_index) continue;
    CSG_CHECK(l >= 0 && static_cast<std::size_t>(l) < K, Contract,
              "pixel_cross_entropy: label " + std::to_string(l) + " out of range");
    ++n_valid;
  }
  if (n_valid == 0) return Tensor::scalar(0.0);

  const auto& lv = logit_map.values();
  auto at = [&](std::size_t c, std::size_t p) { return lv[c * hw + p]; };
  double loss = 0.0;
  for (std::size_t p = 0; p < hw; ++p) {
    if (labels[p] == ignore_index) continue;
    double m = at(0, p);
    for (std::size_t c = 1; c < K; ++c) m = std::max(m, at(c, p));
    double z = 0.0;
    for (std::size_t c = 0; c < K; ++c) z += std::exp(at(c, p) - m);
    loss += std::log(z) + m - at(labels[p], p);
  }
  loss /= static_cast<double>(n_valid);

  auto node = std::make_shared<TensorNode>();
  node->shape = {1};
  node->value = {loss};
  node->requires_grad = logit_map.requires_grad();
  if (node->requires_grad) {
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    const int ign = ignore_index;
    node->parents = {logit_map.node()};
    node->backward_fn = [K, hw, labels_copy, ign, n_valid](TensorNode& self) {
      TensorNode& par = *self.parents[0];
      if (!par.requires_grad) return;
      par.ensure_grad();
      const double g = self.grad[0] / static_cast<double>(n_valid);
      for (std::size_t p = 0; p < hw; ++p) {
        const int lbl = (*labels_copy)[p];
        if (lbl == ign) continue;
        double m = par.value[p];
        for (std::size_t c = 1; c < K; ++c) m = std::max(m, par.value[c * hw + p]);
        double z = 0.0;
        for (std::size_t c = 0; c < K; ++c) z += std::exp(par.value[c * hw + p] - m);
        for (std::size_t c = 0; c < K; ++c) {
          const double soft = std::exp(par.value[c * hw + p] - m) / z;
          const double onehot = (static_cast<std::size_t>(lbl) == c) ? 1.0 : 0.0;
          par.grad[c * hw + p] += g * (soft - onehot);
        }
      }
    };
  }
  return Tensor(std::move(node));
}

}  // namespace csg
