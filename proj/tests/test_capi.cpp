// Exercises the extern-C surface the CLI is built on: opaque config handles,
// status codes, error reporting, and a miniature end-to-end experiment chain.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "csg/csg.h"

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "task": "classify",
  "seed": 31,
  "output_dir": "unused",
  "dataset": {"synthetic_train": 16, "synthetic_test": 8, "realproxy_train": 24, "realproxy_test": 8},
  "train": {"epochs": 1, "batch_size": 8},
  "optimizer": {"lr": 0.02, "weight_decay": 0.0005, "momentum": 0.9},
  "diagnostics": {"subsample": 8, "kde_grid": [16, 8]}
})";

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "csg_capi_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config lifecycle and validation errors") {
  csg_config* cfg = nullptr;
  REQUIRE(csg_config_default("classify", &cfg) == CSG_OK);
  REQUIRE(cfg != nullptr);

  char* js = nullptr;
  REQUIRE(csg_config_to_json(cfg, &js) == CSG_OK);
  CHECK(std::strstr(js, "\"temperature\": 0.07") != nullptr);
  csg_string_free(js);

  CHECK(csg_config_set_seed(cfg, 99) == CSG_OK);
  CHECK(csg_config_set_output_dir(cfg, "somewhere") == CSG_OK);
  csg_config_free(cfg);

  csg_config* bad = nullptr;
  CHECK(csg_config_default("segmentation", &bad) == CSG_ERROR_CONFIG);
  CHECK(bad == nullptr);
  CHECK(std::strlen(csg_last_error()) > 0);

  CHECK(csg_config_from_json("{ not json", &bad) == CSG_ERROR_CONFIG);
  CHECK(csg_config_from_json(R"({"bogus_key": 1})", &bad) == CSG_ERROR_CONFIG);
  CHECK(csg_config_from_file("/nonexistent/cfg.json", &bad) == CSG_ERROR_CONFIG);

  CHECK(csg_config_default(nullptr, &bad) == CSG_ERROR_CONFIG);
  CHECK(csg_pretrain(nullptr, "x", nullptr) == CSG_ERROR_CONFIG);
}

TEST_CASE("missing checkpoints surface as IO errors") {
  char* out = nullptr;
  CHECK(csg_eval("/nonexistent/ckpt", "realproxy-test", nullptr, &out) == CSG_ERROR_IO);
  CHECK(out == nullptr);
  CHECK(std::strlen(csg_last_error()) > 0);
}

TEST_CASE("miniature experiment chain through the shared library") {
  csg_config* cfg = nullptr;
  REQUIRE(csg_config_from_json(kTinyConfig, &cfg) == CSG_OK);

  fs::path teacher_dir = fresh_dir("teacher");
  char* metrics = nullptr;
  REQUIRE(csg_pretrain(cfg, teacher_dir.c_str(), &metrics) == CSG_OK);
  REQUIRE(metrics != nullptr);
  CHECK(std::strstr(metrics, "\"command\": \"pretrain\"") != nullptr);
  csg_string_free(metrics);
  const std::string teacher_ckpt = (teacher_dir / "checkpoint").string();

  fs::path run_dir = fresh_dir("train");
  metrics = nullptr;
  REQUIRE(csg_train(cfg, teacher_ckpt.c_str(), run_dir.c_str(), &metrics) == CSG_OK);
  REQUIRE(metrics != nullptr);
  CHECK(std::strstr(metrics, "\"aborted\": false") != nullptr);
  csg_string_free(metrics);
  const std::string student_ckpt = (run_dir / "checkpoint").string();

  // eval without an explicit config: the checkpoint's persisted config applies
  metrics = nullptr;
  REQUIRE(csg_eval(student_ckpt.c_str(), "realproxy-test", nullptr, &metrics) == CSG_OK);
  CHECK(std::strstr(metrics, "\"metric\": \"accuracy\"") != nullptr);
  csg_string_free(metrics);

  CHECK(csg_eval(student_ckpt.c_str(), "no-such-split", nullptr, nullptr) == CSG_ERROR_CONFIG);

  fs::path diag_dir = fresh_dir("diagnose");
  metrics = nullptr;
  REQUIRE(csg_diagnose(student_ckpt.c_str(), "realproxy-test", diag_dir.c_str(), cfg,
                       &metrics) == CSG_OK);
  CHECK(std::strstr(metrics, "\"energies\"") != nullptr);
  csg_string_free(metrics);
  CHECK(fs::exists(diag_dir / "report.json"));
  CHECK(fs::exists(diag_dir / "kde_grid.csv"));

  fs::path sweep_dir = fresh_dir("sweep");
  metrics = nullptr;
  REQUIRE(csg_sweep(cfg, "lambda", "[0.1]", teacher_ckpt.c_str(), sweep_dir.c_str(),
                    &metrics) == CSG_OK);
  CHECK(std::strstr(metrics, "\"command\": \"sweep\"") != nullptr);
  csg_string_free(metrics);
  CHECK(fs::exists(sweep_dir / "sweep.csv"));

  CHECK(csg_sweep(cfg, "gamma", "[1]", teacher_ckpt.c_str(), sweep_dir.c_str(), nullptr) ==
        CSG_ERROR_CONFIG);
  CHECK(csg_sweep(cfg, "M", "not json", teacher_ckpt.c_str(), sweep_dir.c_str(), nullptr) ==
        CSG_ERROR_CONFIG);

  csg_config_free(cfg);
  CHECK(std::string(csg_version()) == "1.0.0");
}
