#include "csg/csg.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "csg/config.hpp"
#include "csg/harness.hpp"

struct csg_config {
  csg::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

csg_status status_of(const csg::Error& e) {
  switch (e.kind()) {
    case csg::ErrorKind::Config: return CSG_ERROR_CONFIG;
    case csg::ErrorKind::NumericDomain: return CSG_ERROR_NUMERIC;
    case csg::ErrorKind::Io: return CSG_ERROR_IO;
    default: return CSG_ERROR;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class Fn>
csg_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CSG_OK;
  } catch (const csg::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CSG_ERROR;
  } catch (...) {
    g_last_error = "unknown failure";
    return CSG_ERROR;
  }
}

csg_status require(bool cond, const char* msg) {
  if (cond) return CSG_OK;
  g_last_error = msg;
  return CSG_ERROR_CONFIG;
}

void emit(char** out_json, const nlohmann::json& j) {
  if (out_json) *out_json = dup_string(j.dump(2));
}

}  // namespace

extern "C" {

csg_status csg_config_default(const char* task, csg_config** out) {
  if (csg_status s = require(task && out, "csg_config_default: NULL argument")) return s;
  return guarded([&] {
    auto* cfg = new csg_config{csg::ExperimentConfig::defaults(csg::task_from_name(task))};
    *out = cfg;
  });
}

csg_status csg_config_from_file(const char* path, csg_config** out) {
  if (csg_status s = require(path && out, "csg_config_from_file: NULL argument")) return s;
  return guarded([&] { *out = new csg_config{csg::ExperimentConfig::from_file(path)}; });
}

csg_status csg_config_from_json(const char* json_text, csg_config** out) {
  if (csg_status s = require(json_text && out, "csg_config_from_json: NULL argument")) return s;
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      csg::raise(csg::ErrorKind::Config, std::string("config: JSON parse error: ") + e.what());
    }
    *out = new csg_config{csg::ExperimentConfig::from_json(j)};
  });
}

csg_status csg_config_set_seed(csg_config* cfg, unsigned long long seed) {
  if (csg_status s = require(cfg != nullptr, "csg_config_set_seed: NULL config")) return s;
  return guarded([&] {
    cfg->cfg.seed = seed;
    // derived streams follow the new seed
    cfg->cfg.dataset.seed = csg::derived_seed(seed, csg::SeedPurpose::Dataset);
    cfg->cfg.augment.seed = csg::derived_seed(seed, csg::SeedPurpose::Augment);
  });
}

csg_status csg_config_set_output_dir(csg_config* cfg, const char* dir) {
  if (csg_status s = require(cfg && dir, "csg_config_set_output_dir: NULL argument")) return s;
  return guarded([&] { cfg->cfg.output_dir = dir; });
}

csg_status csg_config_to_json(const csg_config* cfg, char** out_json) {
  if (csg_status s = require(cfg && out_json, "csg_config_to_json: NULL argument")) return s;
  return guarded([&] { *out_json = dup_string(cfg->cfg.to_json().dump(2)); });
}

void csg_config_free(csg_config* cfg) { delete cfg; }

csg_status csg_pretrain(const csg_config* cfg, const char* out_dir, char** out_json) {
  if (csg_status s = require(cfg && out_dir, "csg_pretrain: NULL argument")) return s;
  return guarded([&] { emit(out_json, csg::harness::run_pretrain(cfg->cfg, out_dir)); });
}

csg_status csg_train(const csg_config* cfg, const char* teacher_checkpoint, const char* out_dir,
                     char** out_json) {
  if (csg_status s = require(cfg && teacher_checkpoint && out_dir, "csg_train: NULL argument"))
    return s;
  return guarded(
      [&] { emit(out_json, csg::harness::run_train(cfg->cfg, teacher_checkpoint, out_dir)); });
}

csg_status csg_eval(const char* checkpoint_dir, const char* split, const csg_config* cfg,
                    char** out_json) {
  if (csg_status s = require(checkpoint_dir && split, "csg_eval: NULL argument")) return s;
  return guarded([&] {
    const csg::Split sp = csg::split_from_name(split);
    nlohmann::json j = cfg ? csg::harness::run_eval(checkpoint_dir, sp, cfg->cfg)
                           : csg::harness::run_eval(checkpoint_dir, sp);
    emit(out_json, j);
  });
}

csg_status csg_diagnose(const char* checkpoint_dir, const char* split, const char* out_dir,
                        const csg_config* cfg, char** out_json) {
  if (csg_status s = require(checkpoint_dir && split && out_dir, "csg_diagnose: NULL argument"))
    return s;
  return guarded([&] {
    const csg::Split sp = csg::split_from_name(split);
    nlohmann::json j = cfg ? csg::harness::run_diagnose(checkpoint_dir, sp, out_dir, cfg->cfg)
                           : csg::harness::run_diagnose(checkpoint_dir, sp, out_dir);
    emit(out_json, j);
  });
}

csg_status csg_sweep(const csg_config* cfg, const char* axis, const char* values_json,
                     const char* teacher_checkpoint, const char* out_dir, char** out_json) {
  if (csg_status s = require(cfg && axis && values_json && teacher_checkpoint && out_dir,
                             "csg_sweep: NULL argument"))
    return s;
  return guarded([&] {
    nlohmann::json values;
    try {
      values = nlohmann::json::parse(values_json);
    } catch (const nlohmann::json::exception& e) {
      csg::raise(csg::ErrorKind::Config, std::string("sweep: bad values JSON: ") + e.what());
    }
    emit(out_json,
         csg::harness::run_sweep(cfg->cfg, axis, values, teacher_checkpoint, out_dir));
  });
}

const char* csg_last_error(void) { return g_last_error.c_str(); }

void csg_string_free(char* s) { std::free(s); }

const char* csg_version(void) { return "1.0.0"; }

}  // extern "C"
