// csg command-line front end. Links the C API only.

#include <cstdio>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "csg/csg.h"

namespace {

struct ConfigHandle {
  csg_config* ptr = nullptr;
  ~ConfigHandle() { csg_config_free(ptr); }
};

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { csg_string_free(ptr); }
};

int exit_code(csg_status status) {
  switch (status) {
    case CSG_OK: return 0;
    case CSG_ERROR_CONFIG: return 2;
    case CSG_ERROR_NUMERIC: return 3;
    default: return 1;
  }
}

int finish(csg_status status, const OwnedString& out) {
  if (status != CSG_OK) {
    std::fprintf(stderr, "csg: %s\n", csg_last_error());
    return exit_code(status);
  }
  if (out.ptr) std::printf("%s\n", out.ptr);
  return 0;
}

// load config (required), apply --seed / --out overrides
csg_status load_config(const std::string& path, bool has_seed, unsigned long long seed,
                       const std::string& out_dir, ConfigHandle& handle) {
  csg_status s = csg_config_from_file(path.c_str(), &handle.ptr);
  if (s != CSG_OK) return s;
  if (has_seed) {
    s = csg_config_set_seed(handle.ptr, seed);
    if (s != CSG_OK) return s;
  }
  if (!out_dir.empty()) {
    s = csg_config_set_output_dir(handle.ptr, out_dir.c_str());
    if (s != CSG_OK) return s;
  }
  return CSG_OK;
}

std::string output_dir_of(const ConfigHandle& handle) {
  OwnedString js;
  if (csg_config_to_json(handle.ptr, &js.ptr) != CSG_OK || !js.ptr) return "runs/out";
  // minimal extraction to avoid pulling a JSON parser into the CLI
  const std::string text(js.ptr);
  const std::string key = "\"output_dir\": \"";
  const auto pos = text.find(key);
  if (pos == std::string::npos) return "runs/out";
  const auto start = pos + key.size();
  const auto end = text.find('"', start);
  return text.substr(start, end - start);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive synthetic-to-real generalization experiments"};
  app.require_subcommand(1);

  std::string config_path, teacher_dir, checkpoint_dir, split, out_dir, axis, values_json;
  unsigned long long seed = 0;
  bool has_seed = false;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* copt = cmd->add_option("--config", config_path, "experiment config JSON");
    if (config_required) copt->required();
    cmd->add_option("--seed", seed, "override the experiment seed")
        ->each([&](const std::string&) { has_seed = true; });
    cmd->add_option("--out", out_dir, "output directory (default: config output_dir)");
  };

  auto* cmd_pretrain = app.add_subcommand("pretrain", "train the real-proxy teacher");
  add_common(cmd_pretrain, true);

  auto* cmd_train = app.add_subcommand("train", "baseline or contrastive student training");
  add_common(cmd_train, true);
  cmd_train->add_option("--teacher", teacher_dir, "teacher checkpoint directory")->required();

  auto* cmd_eval = app.add_subcommand("eval", "accuracy / mIoU of a checkpoint on a split");
  cmd_eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  cmd_eval->add_option("--split", split, "dataset split")->required();
  cmd_eval->add_option("--config", config_path, "config override (default: checkpoint config)");

  auto* cmd_diagnose = app.add_subcommand("diagnose", "feature-diversity report on a split");
  cmd_diagnose->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  cmd_diagnose->add_option("--split", split, "dataset split")->required();
  cmd_diagnose->add_option("--out", out_dir, "report directory (default: <checkpoint>/diagnose)");
  cmd_diagnose->add_option("--config", config_path, "config override");

  auto* cmd_sweep = app.add_subcommand("sweep", "ablation sweep over one axis");
  add_common(cmd_sweep, true);
  cmd_sweep->add_option("--axis", axis, "M | G | pooling | lambda")->required();
  cmd_sweep->add_option("--values", values_json, "JSON array of axis values")->required();
  cmd_sweep->add_option("--teacher", teacher_dir, "teacher checkpoint directory")->required();

  CLI11_PARSE(app, argc, argv);

  OwnedString out;
  if (cmd_pretrain->parsed()) {
    ConfigHandle cfg;
    csg_status s = load_config(config_path, has_seed, seed, out_dir, cfg);
    if (s == CSG_OK) s = csg_pretrain(cfg.ptr, output_dir_of(cfg).c_str(), &out.ptr);
    return finish(s, out);
  }
  if (cmd_train->parsed()) {
    ConfigHandle cfg;
    csg_status s = load_config(config_path, has_seed, seed, out_dir, cfg);
    if (s == CSG_OK)
      s = csg_train(cfg.ptr, teacher_dir.c_str(), output_dir_of(cfg).c_str(), &out.ptr);
    return finish(s, out);
  }
  if (cmd_eval->parsed()) {
    ConfigHandle cfg;
    csg_status s = CSG_OK;
    if (!config_path.empty()) s = csg_config_from_file(config_path.c_str(), &cfg.ptr);
    if (s == CSG_OK) s = csg_eval(checkpoint_dir.c_str(), split.c_str(), cfg.ptr, &out.ptr);
    return finish(s, out);
  }
  if (cmd_diagnose->parsed()) {
    ConfigHandle cfg;
    csg_status s = CSG_OK;
    if (!config_path.empty()) s = csg_config_from_file(config_path.c_str(), &cfg.ptr);
    const std::string dir = out_dir.empty() ? checkpoint_dir + "/diagnose" : out_dir;
    if (s == CSG_OK)
      s = csg_diagnose(checkpoint_dir.c_str(), split.c_str(), dir.c_str(), cfg.ptr, &out.ptr);
    return finish(s, out);
  }
  if (cmd_sweep->parsed()) {
    ConfigHandle cfg;
    csg_status s = load_config(config_path, has_seed, seed, out_dir, cfg);
    if (s == CSG_OK)
      s = csg_sweep(cfg.ptr, axis.c_str(), values_json.c_str(), teacher_dir.c_str(),
                    output_dir_of(cfg).c_str(), &out.ptr);
    return finish(s, out);
  }
  return 1;
}
