#pragma once

// Procedural two-domain shapes dataset. SyntheticFlat renders one flat-filled
// shape per image on a uniform background with a per-class base palette;
// RealProxy renders the same shape classes with textured backgrounds,
// class-independent colors, per-sample jitter, Gaussian noise and randomized
// scale/position. Generation is a pure function of (spec, split, index).

#include <cstdint>
#include <string>
#include <vector>

#include "csg/tensor.hpp"

namespace csg {

enum class Domain { SyntheticFlat, RealProxy };
enum class Split { SyntheticTrain, SyntheticTest, RealProxyTrain, RealProxyTest };

Domain split_domain(Split s);
const char* split_name(Split s);           // "synthetic-train", ...
Split split_from_name(const std::string&);  // Config error on unknown names

struct ShapesSpec {
  int n_classes = 4;  // circle, square, triangle, cross
  int image_size = 32;
  bool dense = false;  // also emit per-pixel masks (background id == n_classes)
  std::uint64_t seed = 1;
  int synthetic_train_count = 256;
  int synthetic_test_count = 256;
  int realproxy_train_count = 512;
  int realproxy_test_count = 512;

  int count(Split s) const;
  void validate() const;
};

struct Sample {
  Tensor image;  // 3×S×S in [0,1]
  int label = 0;
  Tensor mask;  // S×S class ids, defined iff spec.dense
  // analytic geometry the shape was rasterized from, in unit coordinates
  double cx = 0.5, cy = 0.5, radius = 0.0;
};

Sample generate(const ShapesSpec& spec, Split split, std::size_t index);

// Epoch-shuffled index batches; deterministic in (shuffle_seed, epoch); the
// final short batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch);

// Analytic rasterization test used both by the renderer and by mask checks.
bool inside_shape(int label, double dx, double dy, double radius);

// Optional on-disk cache: one tensor file per array plus a JSON index.
void write_split_cache(const ShapesSpec& spec, Split split, const std::string& dir);
struct CachedSplit {
  Tensor images;            // N×3×S×S
  std::vector<int> labels;  // N
  Tensor masks;             // N×S×S, defined iff dense
};
CachedSplit read_split_cache(const std::string& dir, Split split);

}  // namespace csg
