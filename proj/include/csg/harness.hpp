#pragma once

// Experiment orchestration behind the CLI commands. Every run is fully
// deterministic given its config: rerunning a command with the same config
// and seed reproduces the metric files byte-identically. Each command writes
// its artifacts under an output directory and also returns the metrics JSON.

#include <string>
#include <vector>

#include <json.hpp>

#include "csg/config.hpp"
#include "csg/diagnostics.hpp"

namespace csg::harness {

// Trains backbone+task head on realproxy-train, writes checkpoint/ and
// metrics.json; flags (but does not fail) low held-out accuracy.
nlohmann::json run_pretrain(const ExperimentConfig& cfg, const std::string& out_dir);

// Full CSG loop: augment, student/teacher forward, task + contrastive loss,
// SGD step, EMA head update. Writes checkpoint/, metrics.json and
// embeddings.csv (student GAP features on realproxy-test).
nlohmann::json run_train(const ExperimentConfig& cfg, const std::string& teacher_dir,
                         const std::string& out_dir);

// Accuracy (classify) or mean IoU (dense) of a checkpoint on a split. The
// config is read from the checkpoint directory unless supplied.
nlohmann::json run_eval(const std::string& checkpoint_dir, Split split);
nlohmann::json run_eval(const std::string& checkpoint_dir, Split split,
                        const ExperimentConfig& cfg);

// Feature-diversity report on a split: hyperspherical energies s=0,1,2 and a
// KDE grid, from a seeded subsample of backbone GAP features. Writes
// report.json, kde_grid.csv and optional attention-ratio CSVs.
nlohmann::json run_diagnose(const std::string& checkpoint_dir, Split split,
                            const std::string& out_dir);
nlohmann::json run_diagnose(const std::string& checkpoint_dir, Split split,
                            const std::string& out_dir, const ExperimentConfig& cfg);

// Trains/evaluates one run per axis value (plus the vanilla lambda=0, M=0,
// GAP baseline row) and writes sweep.csv / sweep.json. Individual run
// failures are recorded and the sweep continues.
nlohmann::json run_sweep(const ExperimentConfig& base, const std::string& axis,
                         const nlohmann::json& values, const std::string& teacher_dir,
                         const std::string& out_dir);

// Backbone final-stage GAP features for the given samples.
std::vector<std::vector<double>> extract_gap_features(const Backbone& backbone,
                                                      const ShapesSpec& spec, Split split,
                                                      const std::vector<std::size_t>& indices);

// Dense-prediction IoU bookkeeping (exposed for tests).
class IouAccumulator {
 public:
  explicit IouAccumulator(int n_labels) : inter_(n_labels, 0), uni_(n_labels, 0) {}
  void add(const std::vector<int>& pred, const std::vector<int>& gt);
  double miou(std::vector<double>* per_class = nullptr) const;

 private:
  std::vector<long long> inter_, uni_;
};

}  // namespace csg::harness
