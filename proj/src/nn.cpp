#include "csg/nn.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "csg/tensor_io.hpp"

namespace csg {

namespace {

constexpr std::array<int, 4> kStrides{1, 2, 2, 2};

Tensor he_init(Shape shape, std::size_t fan_in, Rng& rng, bool trainable) {
  return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)),
                       trainable);
}

}  // namespace

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng, bool trainable) : cfg_(cfg) {
  int in_c = cfg.in_channels;
  const std::size_t k = cfg.kernel;
  for (int s = 0; s < 4; ++s) {
    const std::size_t out_c = cfg.channels[s];
    weights_[s] = he_init({out_c, static_cast<std::size_t>(in_c), k, k},
                          static_cast<std::size_t>(in_c) * k * k, rng, trainable);
    biases_[s] = Tensor::zeros({out_c}, trainable);
    in_c = cfg.channels[s];
  }
}

Backbone Backbone::from_weights(const BackboneConfig& cfg, std::array<Tensor, 4> weights,
                                std::array<Tensor, 4> biases, bool trainable) {
  Backbone b;
  b.cfg_ = cfg;
  for (int s = 0; s < 4; ++s) {
    b.weights_[s] = weights[s].clone(trainable);
    b.biases_[s] = biases[s].clone(trainable);
  }
  return b;
}

std::array<Tensor, 4> Backbone::forward(const Tensor& image) const {
  CSG_CHECK(image.defined() && image.rank() == 3, Dimension, "backbone: image must be C×H×W");
  CSG_CHECK(image.shape()[0] == static_cast<std::size_t>(cfg_.in_channels), Dimension,
            "backbone: image has " + std::to_string(image.shape()[0]) + " channels, expected " +
                std::to_string(cfg_.in_channels));
  const int pad = (cfg_.kernel - 1) / 2;
  std::array<Tensor, 4> maps;
  // images arrive in [0,1]; center them so stage-1 filters see signed inputs
  Tensor cur = add_scalar(image, -0.5);
  for (int s = 0; s < 4; ++s) {
    cur = relu(channel_bias_add(conv2d(cur, weights_[s], kStrides[s], pad), biases_[s]));
    maps[s] = cur;
  }
  return maps;
}

std::vector<NamedParam> Backbone::named_params(const std::string& prefix) const {
  std::vector<NamedParam> out;
  for (int s = 0; s < 4; ++s) {
    out.push_back({prefix + ".stage" + std::to_string(s + 1) + ".weight", weights_[s]});
    out.push_back({prefix + ".stage" + std::to_string(s + 1) + ".bias", biases_[s]});
  }
  return out;
}

bool Backbone::trainable() const { return weights_[0].defined() && weights_[0].requires_grad(); }

Backbone Backbone::clone(bool trainable) const {
  Backbone b;
  b.cfg_ = cfg_;
  for (int s = 0; s < 4; ++s) {
    b.weights_[s] = weights_[s].clone(trainable);
    b.biases_[s] = biases_[s].clone(trainable);
  }
  return b;
}

const Tensor& Backbone::stage_weight(int stage) const {
  CSG_CHECK(stage >= 1 && stage <= 4, Contract, "backbone: stage must be in 1..4");
  return weights_[stage - 1];
}

const Tensor& Backbone::stage_bias(int stage) const {
  CSG_CHECK(stage >= 1 && stage <= 4, Contract, "backbone: stage must be in 1..4");
  return biases_[stage - 1];
}

ProjectionHead::ProjectionHead(int in_dim, int out_dim, Rng& rng, bool trainable)
    : in_dim_(in_dim), out_dim_(out_dim) {
  const std::size_t c = in_dim, o = out_dim;
  w1 = he_init({c, c}, c, rng, trainable);
  b1 = Tensor::zeros({1, c}, trainable);
  w2 = he_init({c, o}, c, rng, trainable);
  b2 = Tensor::zeros({1, o}, trainable);
}

ProjectionHead ProjectionHead::from_weights(Tensor w1_, Tensor b1_, Tensor w2_, Tensor b2_) {
  ProjectionHead h;
  h.w1 = w1_;
  h.b1 = b1_;
  h.w2 = w2_;
  h.b2 = b2_;
  h.in_dim_ = static_cast<int>(h.w1.shape()[0]);
  h.out_dim_ = static_cast<int>(h.w2.shape()[1]);
  return h;
}

Tensor ProjectionHead::forward(const Tensor& vec) const {
  CSG_CHECK(vec.defined() && vec.rank() == 1, Dimension, "projection head: expects a vector");
  CSG_CHECK(vec.numel() == static_cast<std::size_t>(in_dim_), Dimension,
            "projection head: input dim " + std::to_string(vec.numel()) + ", expected " +
                std::to_string(in_dim_));
  Tensor row = reshape(vec, {1, static_cast<std::size_t>(in_dim_)});
  Tensor hidden = relu(add(matmul(row, w1), b1));
  Tensor out = add(matmul(hidden, w2), b2);
  return reshape(out, {static_cast<std::size_t>(out_dim_)});
}

std::vector<NamedParam> ProjectionHead::named_params(const std::string& prefix) const {
  return {{prefix + ".fc1.weight", w1},
          {prefix + ".fc1.bias", b1},
          {prefix + ".fc2.weight", w2},
          {prefix + ".fc2.bias", b2}};
}

ProjectionHead ProjectionHead::clone(bool trainable) const {
  ProjectionHead h;
  h.in_dim_ = in_dim_;
  h.out_dim_ = out_dim_;
  h.w1 = w1.clone(trainable);
  h.b1 = b1.clone(trainable);
  h.w2 = w2.clone(trainable);
  h.b2 = b2.clone(trainable);
  return h;
}

const char* task_name(TaskKind t) { return t == TaskKind::Classify ? "classify" : "dense"; }

TaskKind task_from_name(const std::string& name) {
  if (name == "classify") return TaskKind::Classify;
  if (name == "dense") return TaskKind::Dense;
  raise(ErrorKind::Config, "unknown task '" + name + "'");
}

TaskHead::TaskHead(TaskKind kind, int in_channels, int n_out, Rng& rng, bool trainable)
    : kind_(kind), n_out_(n_out) {
  const std::size_t c = in_channels, o = n_out;
  if (kind == TaskKind::Classify) {
    fc_w = he_init({c, o}, c, rng, trainable);
    fc_b = Tensor::zeros({1, o}, trainable);
  } else {
    conv_k = he_init({o, c, 1, 1}, c, rng, trainable);
    conv_b = Tensor::zeros({o}, trainable);
  }
}

Tensor TaskHead::logits(const Tensor& stage4_map, PoolingKind pooling,
                        PoolingStats* stats) const {
  CSG_CHECK(kind_ == TaskKind::Classify, Contract, "task head: logits() is the classify path");
  Tensor pooled =
      pooling == PoolingKind::Gap ? gap(stage4_map) : apool(stage4_map, stats).pooled;
  Tensor row = reshape(pooled, {1, pooled.numel()});
  return reshape(add(matmul(row, fc_w), fc_b), {static_cast<std::size_t>(n_out_)});
}

Tensor TaskHead::logit_map(const Tensor& stage4_map) const {
  CSG_CHECK(kind_ == TaskKind::Dense, Contract, "task head: logit_map() is the dense path");
  return channel_bias_add(conv2d(stage4_map, conv_k, 1, 0), conv_b);
}

std::vector<NamedParam> TaskHead::named_params(const std::string& prefix) const {
  if (kind_ == TaskKind::Classify)
    return {{prefix + ".fc.weight", fc_w}, {prefix + ".fc.bias", fc_b}};
  return {{prefix + ".conv.weight", conv_k}, {prefix + ".conv.bias", conv_b}};
}

TaskHead TaskHead::clone(bool trainable) const {
  TaskHead t;
  t.kind_ = kind_;
  t.n_out_ = n_out_;
  if (fc_w.defined()) t.fc_w = fc_w.clone(trainable);
  if (fc_b.defined()) t.fc_b = fc_b.clone(trainable);
  if (conv_k.defined()) t.conv_k = conv_k.clone(trainable);
  if (conv_b.defined()) t.conv_b = conv_b.clone(trainable);
  return t;
}

CsgModel CsgModel::create(const CsgModelConfig& cfg, const Backbone& teacher_snapshot,
                          std::uint64_t init_seed) {
  CSG_CHECK(cfg.ema_momentum >= 0.0 && cfg.ema_momentum <= 1.0, Config,
            "model: ema_momentum must be in [0,1]");
  CsgModel m;
  m.cfg = cfg;
  m.teacher = teacher_snapshot.clone(false);
  m.student = teacher_snapshot.clone(true);
  Rng rng(Rng::mix(init_seed, 0xC56));
  for (int l = 1; l <= 4; ++l) {
    const int c_l = cfg.backbone.channels[l - 1];
    m.heads.emplace(l, ProjectionHead(c_l, cfg.proj_dim, rng, true));
    m.shadow_heads.emplace(l, m.heads.at(l).clone(false));
  }
  const int n_out = cfg.task == TaskKind::Classify ? cfg.n_classes : cfg.n_classes + 1;
  m.task_head = TaskHead(cfg.task, cfg.backbone.channels[3], n_out, rng, true);
  return m;
}

std::vector<NamedParam> CsgModel::trainable_params() const {
  std::vector<NamedParam> out = student.named_params("student");
  for (const auto& [l, head] : heads)
    for (auto& p : head.named_params("heads.l" + std::to_string(l))) out.push_back(p);
  for (auto& p : task_head.named_params("task_head")) out.push_back(p);
  return out;
}

void CsgModel::zero_grad() const {
  for (auto& p : trainable_params()) p.tensor.zero_grad();
}

void ema_update(CsgModel& model) {
  const double m = model.cfg.ema_momentum;
  for (auto& [l, shadow] : model.shadow_heads) {
    const ProjectionHead& head = model.heads.at(l);
    const Tensor* src[] = {&head.w1, &head.b1, &head.w2, &head.b2};
    Tensor* dst[] = {&shadow.w1, &shadow.b1, &shadow.w2, &shadow.b2};
    for (int i = 0; i < 4; ++i) {
      auto& sv = dst[i]->values();
      const auto& hv = src[i]->values();
      CSG_CHECK(sv.size() == hv.size(), Dimension, "ema_update: parameter size mismatch");
      for (std::size_t j = 0; j < sv.size(); ++j) sv[j] = m * sv[j] + (1.0 - m) * hv[j];
    }
  }
}

namespace {

Tensor pool_map(const Tensor& map, PoolingKind pooling, const Tensor& attention_source,
                PoolingStats* stats) {
  if (pooling == PoolingKind::Gap) return gap(map);
  return apool(map, attention_source.defined() ? attention_source : map, stats).pooled;
}

}  // namespace

ContrastiveBatch forward_embeddings(const CsgModel& model, const AugmentedView& anchor,
                                    const std::vector<AugmentedView>& negatives,
                                    const std::set<int>& layers, PoolingKind pooling,
                                    PoolingStats* stats, bool negatives_via_student) {
  CSG_CHECK(!layers.empty(), Contract, "forward_embeddings: empty layer set");
  for (int l : layers)
    CSG_CHECK(l >= 1 && l <= 4, Contract, "forward_embeddings: layer ids must be in 1..4");
  for (const auto& n : negatives)
    CSG_CHECK(n.image.shape() == anchor.image.shape(), Dimension,
              "forward_embeddings: negative image shape mismatch");

  const bool apool_mode = pooling == PoolingKind::APool;
  auto student_maps = model.student.forward(anchor.image);
  auto teacher_maps = model.teacher.forward(anchor.image);

  ContrastiveBatch batch;
  for (int l : layers) {
    LayerEmbeddings emb;
    const Tensor& smap = student_maps[l - 1];
    const Tensor& tmap = teacher_maps[l - 1];

    emb.anchor = l2_normalize(model.heads.at(l).forward(pool_map(smap, pooling, smap, stats)));

    // contrastive targets are constants: when the student supplies the
    // attention it does so through a detached copy
    Tensor t_attn;
    if (apool_mode && anchor.spatial_warp) t_attn = smap.detached();
    emb.positive =
        l2_normalize(model.shadow_heads.at(l).forward(pool_map(tmap, pooling, t_attn, stats)));
    batch.layers.emplace(l, std::move(emb));
  }

  for (const auto& neg : negatives) {
    if (negatives_via_student) {
      auto maps = model.student.forward(neg.image);
      for (int l : layers) {
        const Tensor& m = maps[l - 1];
        batch.layers.at(l).negatives.push_back(
            l2_normalize(model.heads.at(l).forward(pool_map(m, pooling, m, stats))));
      }
    } else {
      auto maps = model.teacher.forward(neg.image);
      std::array<Tensor, 4> attn_maps;
      if (apool_mode && neg.spatial_warp) {
        auto s = model.student.forward(neg.image);
        for (int i = 0; i < 4; ++i) attn_maps[i] = s[i].detached();
      }
      for (int l : layers) {
        batch.layers.at(l).negatives.push_back(l2_normalize(model.shadow_heads.at(l).forward(
            pool_map(maps[l - 1], pooling, attn_maps[l - 1], stats))));
      }
    }
  }
  return batch;
}

SgdOptimizer::SgdOptimizer(std::vector<NamedParam> params, double lr_, double weight_decay_,
                           double momentum_)
    : lr(lr_), weight_decay(weight_decay_), momentum(momentum_), params_(std::move(params)) {
  velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    velocity_[i].assign(params_[i].tensor.numel(), 0.0);
}

void SgdOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto& values = p.tensor.values();
    const bool has_grad = p.tensor.has_grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      double g = has_grad ? p.tensor.grad()[j] : 0.0;
      CSG_CHECK(std::isfinite(g), NumericDomain,
                "sgd: non-finite gradient in parameter '" + p.name + "'");
      g += weight_decay * values[j];
      velocity_[i][j] = momentum * velocity_[i][j] + g;
      values[j] -= lr * velocity_[i][j];
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

namespace {

std::map<std::string, Tensor> collect_tensors(const Checkpoint& ckpt) {
  std::map<std::string, Tensor> out;
  for (auto& p : ckpt.backbone.named_params("backbone")) out.emplace(p.name, p.tensor);
  for (auto& p : ckpt.task_head.named_params("task_head")) out.emplace(p.name, p.tensor);
  for (auto& [l, h] : ckpt.heads)
    for (auto& p : h.named_params("heads.l" + std::to_string(l))) out.emplace(p.name, p.tensor);
  for (auto& [l, h] : ckpt.shadow_heads)
    for (auto& p : h.named_params("shadow_heads.l" + std::to_string(l)))
      out.emplace(p.name, p.tensor);
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["format"] = "csg-checkpoint-v1";
  manifest["kind"] = ckpt.kind;
  manifest["arch"] = {{"in_channels", ckpt.model.backbone.in_channels},
                      {"channels", ckpt.model.backbone.channels},
                      {"kernel", ckpt.model.backbone.kernel}};
  manifest["n_classes"] = ckpt.model.n_classes;
  manifest["proj_dim"] = ckpt.model.proj_dim;
  manifest["ema_momentum"] = ckpt.model.ema_momentum;
  manifest["task"] = task_name(ckpt.model.task);
  manifest["layers"] = ckpt.layers;

  nlohmann::json files = nlohmann::json::object();
  for (auto& [name, tensor] : collect_tensors(ckpt)) {
    const std::string file = name + ".csgt";
    save_tensor(tensor, dir + "/" + file);
    files[name] = file;
  }
  manifest["tensors"] = files;

  std::ofstream os(dir + "/manifest.json");
  CSG_CHECK(os.good(), Io, "save_checkpoint: cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  CSG_CHECK(is.good(), Io, "load_checkpoint: missing manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  CSG_CHECK(manifest.value("format", "") == "csg-checkpoint-v1", Io,
            "load_checkpoint: unsupported format in " + dir);

  Checkpoint ckpt;
  ckpt.kind = manifest["kind"].get<std::string>();
  ckpt.model.backbone.in_channels = manifest["arch"]["in_channels"].get<int>();
  auto chans = manifest["arch"]["channels"].get<std::vector<int>>();
  CSG_CHECK(chans.size() == 4, Io, "load_checkpoint: bad channel plan");
  std::copy(chans.begin(), chans.end(), ckpt.model.backbone.channels.begin());
  ckpt.model.backbone.kernel = manifest["arch"]["kernel"].get<int>();
  ckpt.model.n_classes = manifest["n_classes"].get<int>();
  ckpt.model.proj_dim = manifest["proj_dim"].get<int>();
  ckpt.model.ema_momentum = manifest["ema_momentum"].get<double>();
  ckpt.model.task = task_from_name(manifest["task"].get<std::string>());
  for (int l : manifest["layers"].get<std::vector<int>>()) ckpt.layers.insert(l);

  auto want = [&](const std::string& name) {
    CSG_CHECK(manifest["tensors"].contains(name), Io,
              "load_checkpoint: manifest is missing tensor '" + name + "'");
    return load_tensor(dir + "/" + manifest["tensors"][name].get<std::string>());
  };

  std::array<Tensor, 4> stage_w, stage_b;
  for (int s = 1; s <= 4; ++s) {
    stage_w[s - 1] = want("backbone.stage" + std::to_string(s) + ".weight");
    stage_b[s - 1] = want("backbone.stage" + std::to_string(s) + ".bias");
  }
  ckpt.backbone = Backbone::from_weights(ckpt.model.backbone, stage_w, stage_b, false);

  const int n_out =
      ckpt.model.task == TaskKind::Classify ? ckpt.model.n_classes : ckpt.model.n_classes + 1;
  {
    Rng dummy(0);
    TaskHead th(ckpt.model.task, ckpt.model.backbone.channels[3], n_out, dummy, false);
    if (ckpt.model.task == TaskKind::Classify) {
      th.fc_w = want("task_head.fc.weight");
      th.fc_b = want("task_head.fc.bias");
    } else {
      th.conv_k = want("task_head.conv.weight");
      th.conv_b = want("task_head.conv.bias");
    }
    ckpt.task_head = th;
  }

  if (ckpt.kind == "student") {
    for (int l = 1; l <= 4; ++l) {
      const std::string hp = "heads.l" + std::to_string(l);
      const std::string sp = "shadow_heads.l" + std::to_string(l);
      ckpt.heads.emplace(l, ProjectionHead::from_weights(want(hp + ".fc1.weight"),
                                                         want(hp + ".fc1.bias"),
                                                         want(hp + ".fc2.weight"),
                                                         want(hp + ".fc2.bias")));
      ckpt.shadow_heads.emplace(l, ProjectionHead::from_weights(want(sp + ".fc1.weight"),
                                                                want(sp + ".fc1.bias"),
                                                                want(sp + ".fc2.weight"),
                                                                want(sp + ".fc2.bias")));
    }
  }
  return ckpt;
}

}  // namespace csg
