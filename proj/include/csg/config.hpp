#pragma once

// Experiment configuration. One JSON file fully determines a run; every
// command persists the config it ran with next to its outputs. Parsing is
// strict: unknown keys are a config error.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "csg/augment.hpp"
#include "csg/data.hpp"
#include "csg/losses.hpp"
#include "csg/nn.hpp"

namespace csg {

struct OptimizerConfig {
  double lr = 1e-2;
  double weight_decay = 5e-4;
  double momentum = 0.9;
};

struct TrainLoopConfig {
  int epochs = 20;
  int batch_size = 16;
};

struct DiagnosticsConfig {
  int subsample = 512;      // seeded feature subsample for the energy loop
  int kde_lon = 64, kde_lat = 32;
  int export_attention = 0;  // attention-ratio CSVs for the first k images
};

enum class NegativeSource { Batch, Queue };

struct ExperimentConfig {
  TaskKind task = TaskKind::Classify;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/out";

  ShapesSpec dataset;        // dataset.seed derived from seed unless given
  CsgModelConfig model;      // model.task/n_classes kept in sync with task/dataset
  NceConfig nce;
  PoolingKind pooling = PoolingKind::Gap;
  bool apool_task_head = false;
  AugmentPolicy augment;     // augment.seed derived from seed unless given
  OptimizerConfig optimizer;
  TrainLoopConfig train;
  DiagnosticsConfig diagnostics;

  NegativeSource negatives = NegativeSource::Batch;
  int queue_capacity = 256;
  bool negatives_via_student = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig defaults(TaskKind task);
};

// Independent seeded streams derived from the experiment seed.
enum class SeedPurpose : std::uint64_t {
  Dataset = 1,
  Augment = 2,
  Init = 3,
  Shuffle = 4,
  Diagnose = 5,
};
std::uint64_t derived_seed(std::uint64_t base, SeedPurpose purpose);

// Stream id for augmenting sample `index` during `epoch`.
inline std::uint64_t augment_stream_id(std::uint64_t epoch, std::uint64_t index) {
  return Rng::mix(epoch + 1, index);
}

const char* pooling_name(PoolingKind k);
PoolingKind pooling_from_name(const std::string& name);

}  // namespace csg
