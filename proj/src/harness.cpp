#include "csg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>

#include "csg/tensor_io.hpp"

namespace csg::harness {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  CSG_CHECK(os.good(), Io, "cannot open " + path);
  os << text;
  CSG_CHECK(os.good(), Io, "write failed for " + path);
}

void persist_config(const ExperimentConfig& cfg, const std::string& dir) {
  write_text(dir + "/config.json", cfg.to_json().dump(2) + "\n");
}

int argmax(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// stage-l spatial extent for an image_size input (stride-2 stages 2..4)
std::size_t stage_extent(int image_size, int layer) {
  return static_cast<std::size_t>(image_size) >> (layer - 1);
}

std::vector<int> mask_labels(const Tensor& mask) {
  std::vector<int> out(mask.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(mask.values()[i]);
  return out;
}

// nearest (cell-center) label sample at feature-map resolution
std::vector<int> downsample_labels(const Tensor& mask, std::size_t map_h, std::size_t map_w) {
  const std::size_t H = mask.shape()[0], W = mask.shape()[1];
  const std::size_t sy = H / map_h, sx = W / map_w;
  std::vector<int> out(map_h * map_w);
  for (std::size_t y = 0; y < map_h; ++y)
    for (std::size_t x = 0; x < map_w; ++x) {
      const std::size_t yy = std::min(y * sy + sy / 2, H - 1);
      const std::size_t xx = std::min(x * sx + sx / 2, W - 1);
      out[y * map_w + x] = static_cast<int>(mask.at({yy, xx}));
    }
  return out;
}

// per-pixel argmax of a K×h×w logit map, nearest-upsampled to H×W
std::vector<int> dense_predict_full(const Tensor& logit_map, std::size_t H, std::size_t W) {
  const std::size_t K = logit_map.shape()[0];
  const std::size_t h = logit_map.shape()[1], w = logit_map.shape()[2];
  std::vector<int> small(h * w);
  const auto& lv = logit_map.values();
  for (std::size_t p = 0; p < h * w; ++p) {
    int best = 0;
    for (std::size_t c = 1; c < K; ++c)
      if (lv[c * h * w + p] > lv[best * h * w + p]) best = static_cast<int>(c);
    small[p] = best;
  }
  const std::size_t sy = H / h, sx = W / w;
  std::vector<int> full(H * W);
  for (std::size_t Y = 0; Y < H; ++Y)
    for (std::size_t X = 0; X < W; ++X)
      full[Y * W + X] = small[std::min(Y / sy, h - 1) * w + std::min(X / sx, w - 1)];
  return full;
}

struct EvalOutcome {
  std::string metric;
  double value = 0.0;
  long long n = 0;
  std::vector<double> per_class;  // dense only; -1 marks labels absent from the split
};

EvalOutcome eval_model(const Backbone& bb, const TaskHead& th, const ExperimentConfig& cfg,
                       Split split) {
  const auto& ds = cfg.dataset;
  const int count = ds.count(split);
  const PoolingKind task_pool = cfg.apool_task_head ? PoolingKind::APool : PoolingKind::Gap;

  EvalOutcome out;
  out.n = count;
  if (cfg.task == TaskKind::Classify) {
    long long hits = 0;
    for (int i = 0; i < count; ++i) {
      Sample s = generate(ds, split, i);
      auto maps = bb.forward(s.image);
      if (argmax(th.logits(maps[3], task_pool).values()) == s.label) ++hits;
    }
    out.metric = "accuracy";
    out.value = count ? static_cast<double>(hits) / count : 0.0;
  } else {
    IouAccumulator iou(cfg.model.n_classes + 1);
    const std::size_t S = ds.image_size;
    for (int i = 0; i < count; ++i) {
      Sample s = generate(ds, split, i);
      auto maps = bb.forward(s.image);
      iou.add(dense_predict_full(th.logit_map(maps[3]), S, S), mask_labels(s.mask));
    }
    out.metric = "miou";
    out.value = iou.miou(&out.per_class);
  }
  return out;
}

json outcome_json(const EvalOutcome& o, Split split) {
  json j{{"split", split_name(split)}, {"metric", o.metric}, {"value", o.value}, {"n", o.n}};
  if (!o.per_class.empty()) j["per_class_iou"] = o.per_class;
  return j;
}

void check_teacher_compatible(const Checkpoint& teacher, const ExperimentConfig& cfg) {
  CSG_CHECK(teacher.model.backbone.channels == cfg.model.backbone.channels &&
                teacher.model.backbone.kernel == cfg.model.backbone.kernel &&
                teacher.model.backbone.in_channels == cfg.model.backbone.in_channels,
            Config, "train: teacher checkpoint architecture does not match the config");
  CSG_CHECK(teacher.model.n_classes == cfg.model.n_classes, Config,
            "train: teacher checkpoint class count does not match the config");
  CSG_CHECK(teacher.model.task == cfg.task, Config,
            "train: teacher checkpoint task does not match the config");
}

Checkpoint snapshot_student(const CsgModel& model, const ExperimentConfig& cfg) {
  Checkpoint c;
  c.kind = "student";
  c.model = cfg.model;
  c.layers = cfg.nce.layers;
  c.backbone = model.student.clone(false);
  c.task_head = model.task_head.clone(false);
  for (auto& [l, h] : model.heads) c.heads.emplace(l, h.clone(false));
  for (auto& [l, h] : model.shadow_heads) c.shadow_heads.emplace(l, h.clone(false));
  return c;
}

void write_embeddings_csv(const Backbone& bb, const ExperimentConfig& cfg, Split split,
                          const std::string& path) {
  const int count = cfg.dataset.count(split);
  std::ofstream os(path);
  CSG_CHECK(os.good(), Io, "cannot open " + path);
  const std::size_t c4 = cfg.model.backbone.channels[3];
  os << "index,label";
  for (std::size_t k = 0; k < c4; ++k) os << ",f" << k;
  os << "\n";
  for (int i = 0; i < count; ++i) {
    Sample s = generate(cfg.dataset, split, i);
    auto maps = bb.forward(s.image);
    Tensor g = gap(maps[3]);
    os << i << "," << s.label;
    for (double v : g.values()) os << "," << format_double(v);
    os << "\n";
  }
}

std::string sanitize_label(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  return out;
}

}  // namespace

void IouAccumulator::add(const std::vector<int>& pred, const std::vector<int>& gt) {
  CSG_CHECK(pred.size() == gt.size(), Contract, "iou: prediction/label size mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = gt[i];
    CSG_CHECK(p >= 0 && p < static_cast<int>(inter_.size()) && g >= 0 &&
                  g < static_cast<int>(inter_.size()),
              Contract, "iou: label id out of range");
    if (p == g) {
      ++inter_[p];
      ++uni_[p];
    } else {
      ++uni_[p];
      ++uni_[g];
    }
  }
}

double IouAccumulator::miou(std::vector<double>* per_class) const {
  double acc = 0.0;
  int present = 0;
  if (per_class) per_class->assign(inter_.size(), -1.0);
  for (std::size_t c = 0; c < inter_.size(); ++c) {
    if (uni_[c] == 0) continue;
    const double iou = static_cast<double>(inter_[c]) / static_cast<double>(uni_[c]);
    if (per_class) (*per_class)[c] = iou;
    acc += iou;
    ++present;
  }
  return present ? acc / present : 0.0;
}

std::vector<std::vector<double>> extract_gap_features(const Backbone& backbone,
                                                      const ShapesSpec& spec, Split split,
                                                      const std::vector<std::size_t>& indices) {
  std::vector<std::vector<double>> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    Sample s = generate(spec, split, idx);
    auto maps = backbone.forward(s.image);
    out.push_back(gap(maps[3]).values());
  }
  return out;
}

json run_pretrain(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  persist_config(cfg, out_dir);

  const auto& ds = cfg.dataset;
  const int n = ds.realproxy_train_count;
  const int B = cfg.train.batch_size;
  const PoolingKind task_pool = cfg.apool_task_head ? PoolingKind::APool : PoolingKind::Gap;

  Rng init_rng(derived_seed(cfg.seed, SeedPurpose::Init));
  Backbone bb(cfg.model.backbone, init_rng, true);
  const int n_out = cfg.task == TaskKind::Classify ? cfg.model.n_classes : cfg.model.n_classes + 1;
  TaskHead th(cfg.task, cfg.model.backbone.channels[3], n_out, init_rng, true);

  std::vector<NamedParam> params = bb.named_params("backbone");
  for (auto& p : th.named_params("task_head")) params.push_back(p);
  SgdOptimizer opt(std::move(params), cfg.optimizer.lr, cfg.optimizer.weight_decay,
                   cfg.optimizer.momentum);

  json epochs_log = json::array();
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    double loss_sum = 0.0;
    long long n_batches = 0, hits = 0, seen = 0;
    IouAccumulator iou(n_out);
    for (const auto& batch : epoch_batches(n, B, derived_seed(cfg.seed, SeedPurpose::Shuffle),
                                           epoch)) {
      Tensor acc;
      for (std::size_t idx : batch) {
        Sample s = generate(ds, Split::RealProxyTrain, idx);
        auto maps = bb.forward(s.image);
        Tensor loss_i;
        if (cfg.task == TaskKind::Classify) {
          Tensor logits = th.logits(maps[3], task_pool);
          loss_i = cross_entropy(logits, s.label);
          if (argmax(logits.values()) == s.label) ++hits;
          ++seen;
        } else {
          Tensor lm = th.logit_map(maps[3]);
          loss_i = pixel_cross_entropy(lm, downsample_labels(s.mask, lm.shape()[1],
                                                             lm.shape()[2]));
          iou.add(dense_predict_full(lm, ds.image_size, ds.image_size), mask_labels(s.mask));
        }
        acc = acc.defined() ? add(acc, loss_i) : loss_i;
      }
      Tensor batch_loss = scale(acc, 1.0 / static_cast<double>(batch.size()));
      backward(batch_loss);
      opt.step();
      opt.zero_grad();
      loss_sum += batch_loss.item();
      ++n_batches;
    }
    json e{{"epoch", epoch + 1},
           {"task_loss", n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0}};
    if (cfg.task == TaskKind::Classify)
      e["train_accuracy"] = seen ? static_cast<double>(hits) / static_cast<double>(seen) : 0.0;
    else
      e["train_miou"] = iou.miou();
    epochs_log.push_back(e);
  }

  EvalOutcome held = eval_model(bb, th, cfg, Split::RealProxyTest);
  const bool flagged =
      cfg.task == TaskKind::Classify ? held.value < 0.70 : held.value < 0.35;

  Checkpoint ckpt;
  ckpt.kind = "teacher";
  ckpt.model = cfg.model;
  ckpt.layers = cfg.nce.layers;
  ckpt.backbone = bb.clone(false);
  ckpt.task_head = th.clone(false);
  const std::string ckpt_dir = out_dir + "/checkpoint";
  save_checkpoint(ckpt, ckpt_dir);
  persist_config(cfg, ckpt_dir);

  json metrics{{"command", "pretrain"},
               {"task", task_name(cfg.task)},
               {"epochs", epochs_log},
               {"final", outcome_json(held, Split::RealProxyTest)},
               {"flagged_low_accuracy", flagged},
               {"checkpoint", "checkpoint"}};
  write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
  return metrics;
}

json run_train(const ExperimentConfig& cfg, const std::string& teacher_dir,
               const std::string& out_dir) {
  cfg.validate();
  Checkpoint teacher = load_checkpoint(teacher_dir);
  check_teacher_compatible(teacher, cfg);

  fs::create_directories(out_dir);
  persist_config(cfg, out_dir);

  CsgModel model = CsgModel::create(cfg.model, teacher.backbone,
                                    derived_seed(cfg.seed, SeedPurpose::Init));
  SgdOptimizer opt(model.trainable_params(), cfg.optimizer.lr, cfg.optimizer.weight_decay,
                   cfg.optimizer.momentum);

  const auto& ds = cfg.dataset;
  const int n = ds.synthetic_train_count;
  const int B = cfg.train.batch_size;
  const bool apply_nce = cfg.nce.lambda > 0.0;
  const bool apool_mode = cfg.pooling == PoolingKind::APool;
  const PoolingKind task_pool = cfg.apool_task_head ? PoolingKind::APool : PoolingKind::Gap;
  const int n_out = cfg.task == TaskKind::Classify ? cfg.model.n_classes : cfg.model.n_classes + 1;

  if (cfg.nce.mode == NceMode::Dense)
    for (int l : cfg.nce.layers)
      CSG_CHECK(cfg.nce.grid_rows <= stage_extent(ds.image_size, l) &&
                    cfg.nce.grid_cols <= stage_extent(ds.image_size, l),
                Config, "train: dense grid exceeds the stage-" + std::to_string(l) +
                            " feature map");

  std::map<int, std::deque<std::vector<double>>> queue;  // layer -> past teacher embeddings

  PoolingStats stats;
  long long prev_neg_attn = 0, prev_violations = 0;
  json epochs_log = json::array();
  Checkpoint last_good = snapshot_student(model, cfg);

  auto abort_run = [&](int epoch, const std::string& reason) -> void {
    save_checkpoint(last_good, out_dir + "/checkpoint");
    persist_config(cfg, out_dir + "/checkpoint");
    json metrics{{"command", "train"}, {"task", task_name(cfg.task)},
                 {"epochs", epochs_log}, {"aborted", true},
                 {"abort_reason", reason},       {"abort_epoch", epoch + 1},
                 {"checkpoint", "checkpoint"}};
    write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
    raise(ErrorKind::NumericDomain, "train: " + reason);
  };

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    double task_sum = 0.0;
    long long n_batches = 0, hits = 0, seen = 0;
    std::map<int, double> nce_sum;
    long long nce_anchors = 0;
    IouAccumulator iou(n_out);

    for (const auto& batch : epoch_batches(n, B, derived_seed(cfg.seed, SeedPurpose::Shuffle),
                                           epoch)) {
      std::string numeric_failure;
      try {
        const std::size_t nb = batch.size();
        std::vector<AugmentedImage> views(nb);
        std::vector<int> labels(nb);
        std::vector<Tensor> masks(nb);
        std::vector<std::array<Tensor, 4>> smaps(nb), tmaps(nb);

        for (std::size_t i = 0; i < nb; ++i) {
          Sample s = generate(ds, Split::SyntheticTrain, batch[i]);
          views[i] = apply(cfg.augment, s.image, augment_stream_id(epoch, batch[i]));
          labels[i] = s.label;
          if (cfg.task == TaskKind::Dense) masks[i] = s.mask;
          smaps[i] = model.student.forward(views[i].image);
          tmaps[i] = model.teacher.forward(views[i].image);
        }

        // task loss on the augmented student view
        Tensor task_acc;
        for (std::size_t i = 0; i < nb; ++i) {
          Tensor loss_i;
          if (cfg.task == TaskKind::Classify) {
            Tensor logits = model.task_head.logits(smaps[i][3], task_pool, &stats);
            loss_i = cross_entropy(logits, labels[i]);
            if (argmax(logits.values()) == labels[i]) ++hits;
            ++seen;
          } else {
            Tensor lm = model.task_head.logit_map(smaps[i][3]);
            loss_i = pixel_cross_entropy(lm, downsample_labels(masks[i], lm.shape()[1],
                                                               lm.shape()[2]));
            iou.add(dense_predict_full(lm, ds.image_size, ds.image_size), mask_labels(masks[i]));
          }
          task_acc = task_acc.defined() ? add(task_acc, loss_i) : loss_i;
        }
        Tensor task_batch = scale(task_acc, 1.0 / static_cast<double>(nb));

        // contrastive branch (always computed for logging; applied iff lambda>0)
        Tensor nce_batch = Tensor::scalar(0.0);
        if (cfg.nce.mode == NceMode::Image) {
          // per image, per layer: student anchor / teacher target embeddings
          std::map<int, std::vector<Tensor>> za, zt;
          for (int l : cfg.nce.layers) {
            za[l].resize(nb);
            zt[l].resize(nb);
            for (std::size_t i = 0; i < nb; ++i) {
              const Tensor& smap = smaps[i][l - 1];
              const Tensor& tmap = tmaps[i][l - 1];
              Tensor student_src = apply_nce ? smap : smap.detached();
              Tensor spooled = apool_mode ? apool(student_src, &stats).pooled : gap(student_src);
              za[l][i] = l2_normalize(model.heads.at(l).forward(spooled));
              Tensor t_attn;  // teacher attention follows the student under warps
              if (apool_mode && views[i].spatial_warp) t_attn = smap.detached();
              Tensor tpooled = apool_mode
                                   ? apool(tmap, t_attn.defined() ? t_attn : tmap, &stats).pooled
                                   : gap(tmap);
              zt[l][i] = l2_normalize(model.shadow_heads.at(l).forward(tpooled));
            }
          }
          Tensor nce_acc;
          for (std::size_t i = 0; i < nb; ++i) {
            for (int l : cfg.nce.layers) {
              std::vector<Tensor> negs;
              if (cfg.negatives == NegativeSource::Batch) {
                for (std::size_t j = 0; j < nb; ++j)
                  if (j != i) negs.push_back(zt.at(l)[j]);
              } else {
                for (const auto& v : queue[l])
                  negs.push_back(Tensor::from_data({v.size()}, v));
              }
              Tensor nce_il = info_nce(za.at(l)[i], zt.at(l)[i], negs, cfg.nce.temperature);
              nce_sum[l] += nce_il.item();
              nce_acc = nce_acc.defined() ? add(nce_acc, nce_il) : nce_il;
            }
            ++nce_anchors;
          }
          if (nce_acc.defined()) nce_batch = scale(nce_acc, 1.0 / static_cast<double>(nb));
          if (cfg.negatives == NegativeSource::Queue) {
            for (int l : cfg.nce.layers) {
              for (std::size_t i = 0; i < nb; ++i) queue[l].push_back(zt.at(l)[i].values());
              while (queue[l].size() > static_cast<std::size_t>(cfg.queue_capacity))
                queue[l].pop_front();
            }
          }
        } else {
          Tensor nce_acc;
          for (std::size_t i = 0; i < nb; ++i) {
            for (int l : cfg.nce.layers) {
              std::vector<Tensor> neg_maps;
              for (std::size_t j = 0; j < nb; ++j)
                if (j != i) neg_maps.push_back(tmaps[j][l - 1]);
              const auto& head = model.heads.at(l);
              const auto& shadow = model.shadow_heads.at(l);
              Tensor anchor_map = apply_nce ? smaps[i][l - 1] : smaps[i][l - 1].detached();
              Tensor dn = dense_nce(
                  anchor_map, tmaps[i][l - 1], neg_maps,
                  [&head](const Tensor& cell) { return head.forward(cell); },
                  [&shadow](const Tensor& cell) { return shadow.forward(cell); }, cfg.nce);
              nce_sum[l] += dn.item();
              nce_acc = nce_acc.defined() ? add(nce_acc, dn) : dn;
            }
            ++nce_anchors;
          }
          if (nce_acc.defined()) nce_batch = scale(nce_acc, 1.0 / static_cast<double>(nb));
        }

        Tensor total = apply_nce ? total_loss(task_batch, nce_batch, cfg.nce.lambda) : task_batch;
        if (!std::isfinite(total.item()))
          raise(ErrorKind::NumericDomain, "non-finite loss at epoch " + std::to_string(epoch + 1));
        backward(total);
        opt.step();
        task_sum += task_batch.item();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NumericDomain) throw;
        numeric_failure = e.what();
      }
      if (!numeric_failure.empty()) abort_run(epoch, numeric_failure);
      ema_update(model);
      opt.zero_grad();
      ++n_batches;
    }

    json e{{"epoch", epoch + 1},
           {"task_loss", n_batches ? task_sum / static_cast<double>(n_batches) : 0.0}};
    json per_layer = json::object();
    for (int l : cfg.nce.layers)
      per_layer[std::to_string(l)] =
          nce_anchors ? nce_sum[l] / static_cast<double>(nce_anchors) : 0.0;
    e["nce_loss"] = per_layer;
    if (cfg.task == TaskKind::Classify)
      e["source_accuracy"] = seen ? static_cast<double>(hits) / static_cast<double>(seen) : 0.0;
    else
      e["source_miou"] = iou.miou();
    e["negative_attention"] = stats.negative_attention_calls - prev_neg_attn;
    e["attention_sum_violations"] = stats.weight_sum_violations - prev_violations;
    prev_neg_attn = stats.negative_attention_calls;
    prev_violations = stats.weight_sum_violations;
    epochs_log.push_back(e);

    last_good = snapshot_student(model, cfg);
  }

  EvalOutcome source = eval_model(model.student, model.task_head, cfg, Split::SyntheticTest);
  EvalOutcome target = eval_model(model.student, model.task_head, cfg, Split::RealProxyTest);

  const std::string ckpt_dir = out_dir + "/checkpoint";
  save_checkpoint(last_good, ckpt_dir);
  persist_config(cfg, ckpt_dir);
  write_embeddings_csv(model.student, cfg, Split::RealProxyTest, out_dir + "/embeddings.csv");

  json metrics{{"command", "train"},
               {"task", task_name(cfg.task)},
               {"lambda", cfg.nce.lambda},
               {"layers", cfg.nce.layers},
               {"epochs", epochs_log},
               {"final",
                {{"source", outcome_json(source, Split::SyntheticTest)},
                 {"target", outcome_json(target, Split::RealProxyTest)},
                 {"negative_attention_total", stats.negative_attention_calls},
                 {"attention_sum_violations_total", stats.weight_sum_violations},
                 {"apool_fallbacks_total", stats.fallback_calls}}},
               {"aborted", false},
               {"checkpoint", "checkpoint"},
               {"embeddings_csv", "embeddings.csv"}};
  write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
  return metrics;
}

json run_eval(const std::string& checkpoint_dir, Split split, const ExperimentConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  EvalOutcome out = eval_model(ckpt.backbone, ckpt.task_head, cfg, split);
  json j = outcome_json(out, split);
  j["command"] = "eval";
  j["checkpoint"] = checkpoint_dir;
  return j;
}

json run_eval(const std::string& checkpoint_dir, Split split) {
  CSG_CHECK(fs::exists(checkpoint_dir + "/manifest.json"), Io,
            "eval: no checkpoint at " + checkpoint_dir);
  return run_eval(checkpoint_dir, split,
                  ExperimentConfig::from_file(checkpoint_dir + "/config.json"));
}

json run_diagnose(const std::string& checkpoint_dir, Split split, const std::string& out_dir,
                  const ExperimentConfig& cfg) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  fs::create_directories(out_dir);

  const int count = cfg.dataset.count(split);
  std::vector<std::size_t> indices(count);
  for (int i = 0; i < count; ++i) indices[i] = i;
  if (count > cfg.diagnostics.subsample) {
    Rng rng(derived_seed(cfg.seed, SeedPurpose::Diagnose));
    for (int i = 0; i < cfg.diagnostics.subsample; ++i) {
      const std::size_t j = i + rng.below(count - i);
      std::swap(indices[i], indices[j]);
    }
    indices.resize(cfg.diagnostics.subsample);
  }

  auto feats = extract_gap_features(ckpt.backbone, cfg.dataset, split, indices);
  DiversityReport report =
      diversity_report(feats, cfg.diagnostics.kde_lon, cfg.diagnostics.kde_lat);

  json j = report_to_json(report);
  j["command"] = "diagnose";
  j["split"] = split_name(split);
  j["checkpoint"] = checkpoint_dir;
  j["subsample"] = cfg.diagnostics.subsample;
  j["kde_csv"] = "kde_grid.csv";
  write_text(out_dir + "/report.json", j.dump(2) + "\n");
  write_kde_csv(report.kde, out_dir + "/kde_grid.csv");

  // Fig.5-style attention-ratio exports for the first few images
  const std::set<int>& layers = ckpt.layers.empty() ? cfg.nce.layers : ckpt.layers;
  for (int i = 0; i < cfg.diagnostics.export_attention && i < count; ++i) {
    Sample s = generate(cfg.dataset, split, i);
    auto maps = ckpt.backbone.forward(s.image);
    for (int l : layers) {
      auto res = apool(maps[l - 1]);
      write_attention_csv(res.attention, out_dir + "/attn_" + std::string(split_name(split)) +
                                             "_" + std::to_string(i) + "_" + std::to_string(l) +
                                             ".csv");
    }
  }
  return j;
}

json run_diagnose(const std::string& checkpoint_dir, Split split, const std::string& out_dir) {
  CSG_CHECK(fs::exists(checkpoint_dir + "/manifest.json"), Io,
            "diagnose: no checkpoint at " + checkpoint_dir);
  return run_diagnose(checkpoint_dir, split, out_dir,
                      ExperimentConfig::from_file(checkpoint_dir + "/config.json"));
}

json run_sweep(const ExperimentConfig& base, const std::string& axis, const json& values,
               const std::string& teacher_dir, const std::string& out_dir) {
  CSG_CHECK(axis == "M" || axis == "G" || axis == "pooling" || axis == "lambda", Config,
            "sweep: axis must be one of M, G, pooling, lambda");
  CSG_CHECK(values.is_array() && !values.empty(), Config,
            "sweep: values must be a nonempty array");
  fs::create_directories(out_dir);

  struct Planned {
    std::string label;
    ExperimentConfig cfg;
  };
  std::vector<Planned> runs;

  {
    // self-relative tables: the vanilla baseline always rides along
    ExperimentConfig b = base;
    b.nce.lambda = 0.0;
    b.augment.magnitude = 0;
    b.pooling = PoolingKind::Gap;
    b.apool_task_head = false;
    runs.push_back({"baseline", b});
  }

  for (const auto& v : values) {
    ExperimentConfig cfg = base;
    std::string label;
    if (axis == "M") {
      cfg.augment.magnitude = v.get<int>();
      label = std::to_string(cfg.augment.magnitude);
    } else if (axis == "lambda") {
      cfg.nce.lambda = v.get<double>();
      label = json(cfg.nce.lambda).dump();
    } else if (axis == "pooling") {
      cfg.pooling = pooling_from_name(v.get<std::string>());
      label = v.get<std::string>();
    } else {
      cfg.nce.layers.clear();
      for (int l : v.get<std::vector<int>>()) cfg.nce.layers.insert(l);
      for (int l : cfg.nce.layers) label += (label.empty() ? "" : "+") + std::to_string(l);
    }
    runs.push_back({label, cfg});
  }

  json rows = json::array();
  std::string csv = "value,source_acc,target_acc,e0\n";
  for (auto& run : runs) {
    const std::string run_dir = out_dir + "/run_" + sanitize_label(run.label);
    run.cfg.output_dir = run_dir;
    json row{{"value", run.label}, {"dir", run_dir}};
    try {
      run_train(run.cfg, teacher_dir, run_dir);
      const std::string ckpt = run_dir + "/checkpoint";
      const double src = run_eval(ckpt, Split::SyntheticTest, run.cfg)["value"].get<double>();
      const double tgt = run_eval(ckpt, Split::RealProxyTest, run.cfg)["value"].get<double>();
      json diag = run_diagnose(ckpt, Split::RealProxyTest, run_dir + "/diagnose", run.cfg);
      const double e0 = diag["energies"]["0"].get<double>();
      row["source"] = src;
      row["target"] = tgt;
      row["e0"] = e0;
      row["status"] = "ok";
      csv += run.label + "," + format_double(src) + "," + format_double(tgt) + "," +
             format_double(e0) + "\n";
    } catch (const Error& e) {
      row["status"] = "failed";
      row["error"] = e.what();
      csv += run.label + ",nan,nan,nan\n";
    }
    rows.push_back(row);
  }

  json summary{{"command", "sweep"}, {"axis", axis}, {"rows", rows}, {"csv", "sweep.csv"}};
  write_text(out_dir + "/sweep.csv", csv);
  write_text(out_dir + "/sweep.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace csg::harness
