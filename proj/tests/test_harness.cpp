#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csg/harness.hpp"

using namespace csg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "csg_harness_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// tiny, fast experiment setup shared by the harness tests
ExperimentConfig tiny_config(std::uint64_t seed) {
  ExperimentConfig cfg = ExperimentConfig::defaults(TaskKind::Classify);
  cfg.seed = seed;
  cfg.dataset.seed = derived_seed(seed, SeedPurpose::Dataset);
  cfg.augment.seed = derived_seed(seed, SeedPurpose::Augment);
  cfg.dataset.synthetic_train_count = 24;
  cfg.dataset.synthetic_test_count = 16;
  cfg.dataset.realproxy_train_count = 32;
  cfg.dataset.realproxy_test_count = 16;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 8;
  cfg.optimizer.lr = 0.02;
  cfg.diagnostics.subsample = 12;
  cfg.diagnostics.kde_lon = 16;
  cfg.diagnostics.kde_lat = 8;
  return cfg;
}

std::string teacher_checkpoint_for(const ExperimentConfig& cfg, const std::string& name) {
  static std::map<std::string, std::string> cache;
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  fs::path dir = fresh_dir(name);
  harness::run_pretrain(cfg, dir.string());
  cache[name] = (dir / "checkpoint").string();
  return cache[name];
}

}  // namespace

TEST_CASE("pretrain writes a checkpoint with all four stages and reruns byte-identically") {
  ExperimentConfig cfg = tiny_config(3);
  fs::path a = fresh_dir("pre_a");
  fs::path b = fresh_dir("pre_b");
  json ma = harness::run_pretrain(cfg, a.string());
  json mb = harness::run_pretrain(cfg, b.string());

  json manifest = json::parse(slurp(a / "checkpoint" / "manifest.json"));
  CHECK(manifest["kind"] == "teacher");
  for (int s = 1; s <= 4; ++s) {
    CHECK(manifest["tensors"].contains("backbone.stage" + std::to_string(s) + ".weight"));
    CHECK(manifest["tensors"].contains("backbone.stage" + std::to_string(s) + ".bias"));
  }
  CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));
  CHECK(ma == mb);
}

TEST_CASE("pretrain with zero epochs equals the seeded initialization") {
  ExperimentConfig cfg = tiny_config(5);
  cfg.train.epochs = 0;
  fs::path dir = fresh_dir("pre_zero");
  harness::run_pretrain(cfg, dir.string());
  Checkpoint ckpt = load_checkpoint((dir / "checkpoint").string());

  Rng rng(derived_seed(cfg.seed, SeedPurpose::Init));
  Backbone fresh(cfg.model.backbone, rng, true);
  for (int s = 1; s <= 4; ++s)
    CHECK(ckpt.backbone.stage_weight(s).values() == fresh.stage_weight(s).values());
}

TEST_CASE("train with lambda=0 matches a hand-written supervised loop") {
  ExperimentConfig cfg = tiny_config(7);
  cfg.nce.lambda = 0.0;
  cfg.augment.magnitude = 0;
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_l0");

  fs::path run = fresh_dir("train_l0");
  harness::run_train(cfg, teacher_dir, run.string());
  Checkpoint got = load_checkpoint((run / "checkpoint").string());

  // independent supervised loop with the same seeds, order and update rule
  Checkpoint teacher = load_checkpoint(teacher_dir);
  CsgModel model =
      CsgModel::create(cfg.model, teacher.backbone, derived_seed(cfg.seed, SeedPurpose::Init));
  SgdOptimizer opt(model.trainable_params(), cfg.optimizer.lr, cfg.optimizer.weight_decay,
                   cfg.optimizer.momentum);
  const int n = cfg.dataset.synthetic_train_count;
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    for (const auto& batch :
         epoch_batches(n, cfg.train.batch_size, derived_seed(cfg.seed, SeedPurpose::Shuffle),
                       epoch)) {
      Tensor acc;
      for (std::size_t idx : batch) {
        Sample s = generate(cfg.dataset, Split::SyntheticTrain, idx);
        auto view = apply(cfg.augment, s.image, augment_stream_id(epoch, idx));
        auto maps = model.student.forward(view.image);
        Tensor loss = cross_entropy(model.task_head.logits(maps[3]), s.label);
        acc = acc.defined() ? add(acc, loss) : loss;
      }
      backward(scale(acc, 1.0 / static_cast<double>(batch.size())));
      opt.step();
      ema_update(model);
      opt.zero_grad();
    }
  }

  for (int s = 1; s <= 4; ++s) {
    const auto& a = got.backbone.stage_weight(s).values();
    const auto& b = model.student.stage_weight(s).values();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) < 1e-12);
  }
  const auto& fa = got.task_head.fc_w.values();
  const auto& fb = model.task_head.fc_w.values();
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(std::fabs(fa[i] - fb[i]) < 1e-12);
}

TEST_CASE("per-layer nce losses are logged exactly for the configured layers") {
  ExperimentConfig cfg = tiny_config(9);
  cfg.train.epochs = 1;
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_layers");

  cfg.nce.layers = {4};
  json m4 = harness::run_train(cfg, teacher_dir, fresh_dir("train_g4").string());
  CHECK(m4["epochs"][0]["nce_loss"].size() == 1);
  CHECK(m4["epochs"][0]["nce_loss"].contains("4"));

  cfg.nce.layers = {3, 4};
  json m34 = harness::run_train(cfg, teacher_dir, fresh_dir("train_g34").string());
  CHECK(m34["epochs"][0]["nce_loss"].size() == 2);
  CHECK(m34["epochs"][0]["nce_loss"].contains("3"));
  CHECK(m34["epochs"][0]["nce_loss"].contains("4"));
}

TEST_CASE("one epoch at lr=0 leaves parameters unchanged") {
  ExperimentConfig cfg = tiny_config(11);
  cfg.train.epochs = 1;
  cfg.optimizer.lr = 0.0;
  cfg.optimizer.weight_decay = 0.0;
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_lr0");

  fs::path run = fresh_dir("train_lr0");
  harness::run_train(cfg, teacher_dir, run.string());
  Checkpoint got = load_checkpoint((run / "checkpoint").string());
  Checkpoint teacher = load_checkpoint(teacher_dir);
  for (int s = 1; s <= 4; ++s)
    CHECK(got.backbone.stage_weight(s).values() == teacher.backbone.stage_weight(s).values());
}

TEST_CASE("train rerun reproduces the metrics file byte-identically") {
  ExperimentConfig cfg = tiny_config(13);
  cfg.pooling = PoolingKind::APool;
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_det");
  fs::path a = fresh_dir("train_det_a");
  fs::path b = fresh_dir("train_det_b");
  harness::run_train(cfg, teacher_dir, a.string());
  harness::run_train(cfg, teacher_dir, b.string());
  CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));
  CHECK(slurp(a / "embeddings.csv") == slurp(b / "embeddings.csv"));
}

TEST_CASE("numeric blow-up aborts with the last good checkpoint retained") {
  ExperimentConfig cfg = tiny_config(15);
  cfg.train.epochs = 1;
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_nan");
  cfg.optimizer.lr = 1e30;

  fs::path run = fresh_dir("train_nan");
  bool threw = false;
  try {
    harness::run_train(cfg, teacher_dir, run.string());
  } catch (const Error& e) {
    threw = true;
    CHECK(e.kind() == ErrorKind::NumericDomain);
  }
  CHECK(threw);
  json metrics = json::parse(slurp(run / "metrics.json"));
  CHECK(metrics["aborted"] == true);
  // retained checkpoint is the pre-epoch state, i.e. the initialization
  Checkpoint kept = load_checkpoint((run / "checkpoint").string());
  Checkpoint teacher = load_checkpoint(teacher_dir);
  CHECK(kept.backbone.stage_weight(1).values() == teacher.backbone.stage_weight(1).values());
}

TEST_CASE("eval reaches 1.0 on a memorized train split") {
  ExperimentConfig cfg = tiny_config(17);
  cfg.dataset.synthetic_train_count = 8;
  cfg.nce.lambda = 0.0;
  cfg.augment.magnitude = 0;
  cfg.train.epochs = 30;
  cfg.train.batch_size = 8;
  cfg.optimizer.lr = 0.05;
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_memo");

  fs::path run = fresh_dir("train_memo");
  harness::run_train(cfg, teacher_dir, run.string());
  json ev = harness::run_eval((run / "checkpoint").string(), Split::SyntheticTrain, cfg);
  CHECK(ev["metric"] == "accuracy");
  CHECK(ev["value"].get<double>() == 1.0);
}

TEST_CASE("random-init model scores near chance on a balanced split") {
  ExperimentConfig cfg = tiny_config(19);
  cfg.train.epochs = 0;
  cfg.dataset.realproxy_test_count = 1000;
  fs::path dir = fresh_dir("pre_chance");
  harness::run_pretrain(cfg, dir.string());
  json ev = harness::run_eval((dir / "checkpoint").string(), Split::RealProxyTest, cfg);
  const double acc = ev["value"].get<double>();
  CHECK(acc >= 0.20);
  CHECK(acc <= 0.30);
}

TEST_CASE("miou of an all-background predictor follows the definition") {
  // 4 shape classes + background over a 4x4 map; all classes present in gt
  harness::IouAccumulator iou(5);
  std::vector<int> gt{0, 1, 2, 3, 4, 4, 4, 4, 0, 1, 2, 3, 4, 4, 4, 4};
  std::vector<int> pred(16, 4);
  iou.add(pred, gt);
  std::vector<double> per_class;
  const double miou = iou.miou(&per_class);
  // background: 8 correct, union 16 -> 0.5; all four shape classes 0
  CHECK(per_class[4] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(miou == doctest::Approx(0.5 / 5.0).epsilon(1e-12));
}

TEST_CASE("diagnose is deterministic and reports exactly s in {0,1,2}") {
  ExperimentConfig cfg = tiny_config(21);
  cfg.train.epochs = 0;
  cfg.diagnostics.export_attention = 2;
  fs::path dir = fresh_dir("pre_diag");
  harness::run_pretrain(cfg, dir.string());
  fs::path da = fresh_dir("diag_a");
  fs::path db = fresh_dir("diag_b");
  json ra = harness::run_diagnose((dir / "checkpoint").string(), Split::RealProxyTest,
                                  da.string(), cfg);
  json rb = harness::run_diagnose((dir / "checkpoint").string(), Split::RealProxyTest,
                                  db.string(), cfg);
  CHECK(slurp(da / "report.json") == slurp(db / "report.json"));
  CHECK(slurp(da / "kde_grid.csv") == slurp(db / "kde_grid.csv"));
  CHECK(ra["energies"].size() == 3);
  for (const char* s : {"0", "1", "2"}) CHECK(ra["energies"].contains(s));
  // attention-ratio exports follow the documented filename pattern
  CHECK(fs::exists(da / "attn_realproxy-test_0_3.csv"));
  CHECK(fs::exists(da / "attn_realproxy-test_0_4.csv"));
  CHECK(fs::exists(da / "attn_realproxy-test_1_3.csv"));
}

TEST_CASE("sweep emits one row per value plus the baseline") {
  ExperimentConfig cfg = tiny_config(23);
  cfg.train.epochs = 1;
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_sweep");
  fs::path dir = fresh_dir("sweep_pool");
  json summary = harness::run_sweep(cfg, "pooling", json::parse(R"(["gap","apool"])"),
                                    teacher_dir, dir.string());
  CHECK(summary["rows"].size() == 3);
  CHECK(summary["rows"][0]["value"] == "baseline");
  CHECK(summary["rows"][1]["value"] == "gap");
  CHECK(summary["rows"][2]["value"] == "apool");
  for (auto& row : summary["rows"]) CHECK(row["status"] == "ok");

  std::string csv = slurp(dir / "sweep.csv");
  CHECK(csv.rfind("value,source_acc,target_acc,e0\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  CHECK_THROWS_AS(harness::run_sweep(cfg, "gamma", json::parse("[1]"), teacher_dir,
                                     fresh_dir("sweep_bad").string()),
                  Error);
}

TEST_CASE("dense task trains end to end") {
  ExperimentConfig cfg = ExperimentConfig::defaults(TaskKind::Dense);
  cfg.seed = 25;
  cfg.dataset.seed = derived_seed(cfg.seed, SeedPurpose::Dataset);
  cfg.augment.seed = derived_seed(cfg.seed, SeedPurpose::Augment);
  cfg.dataset.synthetic_train_count = 16;
  cfg.dataset.synthetic_test_count = 8;
  cfg.dataset.realproxy_train_count = 16;
  cfg.dataset.realproxy_test_count = 8;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 8;
  cfg.diagnostics.subsample = 8;

  fs::path pre = fresh_dir("dense_pre");
  harness::run_pretrain(cfg, pre.string());
  fs::path run = fresh_dir("dense_train");
  json m = harness::run_train(cfg, (pre / "checkpoint").string(), run.string());
  CHECK(m["final"]["target"]["metric"] == "miou");
  CHECK(m["final"]["target"].contains("per_class_iou"));
  json ev = harness::run_eval((run / "checkpoint").string(), Split::SyntheticTest, cfg);
  CHECK(ev["metric"] == "miou");
}

TEST_CASE("train requires a compatible teacher checkpoint") {
  ExperimentConfig cfg = tiny_config(27);
  const std::string teacher_dir = teacher_checkpoint_for(cfg, "teacher_compat");
  ExperimentConfig other = cfg;
  other.model.backbone.channels = {8, 16, 32, 32};
  try {
    harness::run_train(other, teacher_dir, fresh_dir("train_badteacher").string());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}
