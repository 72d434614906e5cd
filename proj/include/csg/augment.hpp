#pragma once

// RandAugment-style image augmentation driven by a single magnitude M in
// 0..30. Each application samples n_ops operators uniformly; operator
// parameters scale linearly with M (documented in the README config
// reference). Geometric ops resample nearest-neighbor so results are
// bit-exact and M=0 reproduces the input exactly. Per-image streams are
// derived from (policy seed, stream id), so augmentation is reproducible
// and parallelizable.

#include <cstdint>
#include <string>
#include <vector>

#include "csg/rng.hpp"
#include "csg/tensor.hpp"

namespace csg {

enum class AugmentOp {
  Identity,
  HorizontalFlip,
  Translate,
  Rotate,
  Brightness,
  Contrast,
  ColorJitter,
  Cutout,
  GaussianNoise,
};

const char* op_name(AugmentOp op);

struct AugmentPolicy {
  int magnitude = 6;  // 0..30
  int n_ops = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AugmentedImage {
  Tensor image;
  std::vector<AugmentOp> ops;
  bool spatial_warp = false;
};

// image: channels-first, values in [0,1]
AugmentedImage apply(const AugmentPolicy& policy, const Tensor& image, std::uint64_t stream_id);

// True iff a flip/translate/rotate/cutout was sampled at nonzero magnitude;
// the pooling layer uses this to switch the teacher's attention source.
bool spatially_warping(const std::vector<AugmentOp>& ops, int magnitude);

// Single operator at a given level = M/30, consuming draws from rng. The
// draw count per operator does not depend on the level.
Tensor apply_op(AugmentOp op, const Tensor& image, double level, Rng& rng);

}  // namespace csg
