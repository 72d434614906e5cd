#pragma once

// Model assembly: a 4-stage conv backbone with addressable layer groups, a
// frozen teacher copy, per-layer projection heads with EMA shadows, and the
// task heads. The teacher and the shadow heads never require gradients, so
// their forward passes stay off the tape entirely.

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "csg/losses.hpp"
#include "csg/pooling.hpp"
#include "csg/rng.hpp"
#include "csg/tensor.hpp"

namespace csg {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct BackboneConfig {
  int in_channels = 3;
  std::array<int, 4> channels{16, 32, 64, 64};
  int kernel = 3;  // stride 1 on stage 1, stride 2 on stages 2-4, "same" padding
};

class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, Rng& rng, bool trainable);
  static Backbone from_weights(const BackboneConfig& cfg, std::array<Tensor, 4> weights,
                               std::array<Tensor, 4> biases, bool trainable);

  // feature map v^l for every layer group l in 1..4, one pass
  std::array<Tensor, 4> forward(const Tensor& image) const;

  std::vector<NamedParam> named_params(const std::string& prefix) const;
  const BackboneConfig& config() const { return cfg_; }
  bool trainable() const;
  Backbone clone(bool trainable) const;
  const Tensor& stage_weight(int stage) const;  // stage in 1..4
  const Tensor& stage_bias(int stage) const;

 private:
  BackboneConfig cfg_;
  std::array<Tensor, 4> weights_;  // O×C×k×k per stage
  std::array<Tensor, 4> biases_;   // [O] per stage
};

// two linear layers with a ReLU between; hidden width equals the input width
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(int in_dim, int out_dim, Rng& rng, bool trainable);
  static ProjectionHead from_weights(Tensor w1, Tensor b1, Tensor w2, Tensor b2);

  Tensor forward(const Tensor& vec) const;  // [C] -> [out]
  std::vector<NamedParam> named_params(const std::string& prefix) const;
  ProjectionHead clone(bool trainable) const;
  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  Tensor w1, b1, w2, b2;

 private:
  int in_dim_ = 0, out_dim_ = 0;
};

enum class TaskKind { Classify, Dense };
const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

class TaskHead {
 public:
  TaskHead() = default;
  // classify: pooled stage-4 vector -> n_out logits; dense: 1×1 conv labeler
  TaskHead(TaskKind kind, int in_channels, int n_out, Rng& rng, bool trainable);

  TaskKind kind() const { return kind_; }
  int n_out() const { return n_out_; }

  // classify path; pooling may be swapped to A-pool behind a config flag
  Tensor logits(const Tensor& stage4_map, PoolingKind pooling = PoolingKind::Gap,
                PoolingStats* stats = nullptr) const;
  // dense path: (n_classes+1)×h×w logit map
  Tensor logit_map(const Tensor& stage4_map) const;

  std::vector<NamedParam> named_params(const std::string& prefix) const;
  TaskHead clone(bool trainable) const;

  Tensor fc_w, fc_b;   // classify
  Tensor conv_k, conv_b;  // dense

 private:
  TaskKind kind_ = TaskKind::Classify;
  int n_out_ = 0;
};

struct CsgModelConfig {
  BackboneConfig backbone;
  int n_classes = 4;
  int proj_dim = 32;
  double ema_momentum = 0.99;
  TaskKind task = TaskKind::Classify;
};

struct CsgModel {
  CsgModelConfig cfg;
  Backbone student;                           // trainable
  Backbone teacher;                           // frozen pretrain snapshot
  std::map<int, ProjectionHead> heads;        // h^l, trainable
  std::map<int, ProjectionHead> shadow_heads; // EMA of h^l, never gradient-updated
  TaskHead task_head;

  // student and teacher both start from the teacher snapshot; heads are fresh
  static CsgModel create(const CsgModelConfig& cfg, const Backbone& teacher_snapshot,
                         std::uint64_t init_seed);

  std::vector<NamedParam> trainable_params() const;
  void zero_grad() const;
};

// shadow <- m*shadow + (1-m)*head, parameter-wise
void ema_update(CsgModel& model);

struct AugmentedView {
  Tensor image;
  bool spatial_warp = false;
};

// Embeddings for one anchor against K negatives at every layer in `layers`.
// Student path: student backbone + h^l. Positive/negative path: frozen teacher
// + shadow head. Under A-pool with a spatially warped view, the teacher's
// attention comes from the student's feature map of the same image (detached,
// so the contrastive targets stay constants). negatives_via_student switches
// the negative branch to the student path.
ContrastiveBatch forward_embeddings(const CsgModel& model, const AugmentedView& anchor,
                                    const std::vector<AugmentedView>& negatives,
                                    const std::set<int>& layers, PoolingKind pooling,
                                    PoolingStats* stats = nullptr,
                                    bool negatives_via_student = false);

class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<NamedParam> params, double lr, double weight_decay, double momentum);
  // classic momentum update with the L2 term folded into the gradient
  void step();
  void zero_grad();

  double lr;
  double weight_decay;
  double momentum;

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> velocity_;
};

// checkpoint = directory of named tensors + JSON manifest
struct Checkpoint {
  std::string kind;  // "teacher" | "student"
  CsgModelConfig model;
  std::set<int> layers;  // G used by the producing run (student checkpoints)
  Backbone backbone;
  TaskHead task_head;
  std::map<int, ProjectionHead> heads;
  std::map<int, ProjectionHead> shadow_heads;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace csg
