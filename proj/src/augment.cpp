#include "csg/augment.hpp"

#include <cmath>

namespace csg {

namespace {

constexpr int kOpCount = 9;
constexpr double kPi = 3.14159265358979323846;

struct Dims {
  std::size_t c, h, w;
};

Dims dims_of(const Tensor& img, const char* name) {
  CSG_CHECK(img.defined() && img.rank() == 3, Dimension,
            std::string(name) + ": image must be C×H×W");
  return {img.shape()[0], img.shape()[1], img.shape()[2]};
}

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

Tensor horizontal_flip(const Tensor& img) {
  auto [c, h, w] = dims_of(img, "flip");
  std::vector<double> out(img.numel());
  const auto& in = img.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(ch * h + y) * w + x] = in[(ch * h + y) * w + (w - 1 - x)];
  return Tensor::from_data(img.shape(), std::move(out));
}

Tensor translate(const Tensor& img, long dx, long dy) {
  auto [c, h, w] = dims_of(img, "translate");
  std::vector<double> out(img.numel(), 0.0);
  const auto& in = img.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y) {
      const long sy = static_cast<long>(y) - dy;
      if (sy < 0 || sy >= static_cast<long>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const long sx = static_cast<long>(x) - dx;
        if (sx < 0 || sx >= static_cast<long>(w)) continue;
        out[(ch * h + y) * w + x] = in[(ch * h + sy) * w + sx];
      }
    }
  return Tensor::from_data(img.shape(), std::move(out));
}

Tensor rotate_nn(const Tensor& img, double degrees) {
  if (degrees == 0.0) return img.clone();
  auto [c, h, w] = dims_of(img, "rotate");
  const double rad = degrees * kPi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  std::vector<double> out(img.numel(), 0.0);
  const auto& in = img.values();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double ry = static_cast<double>(y) - cy;
      const double rx = static_cast<double>(x) - cx;
      const long sy = std::llround(cs * ry + sn * rx + cy);
      const long sx = std::llround(-sn * ry + cs * rx + cx);
      if (sy < 0 || sy >= static_cast<long>(h) || sx < 0 || sx >= static_cast<long>(w)) continue;
      for (std::size_t ch = 0; ch < c; ++ch)
        out[(ch * h + y) * w + x] = in[(ch * h + sy) * w + sx];
    }
  return Tensor::from_data(img.shape(), std::move(out));
}

Tensor cutout(const Tensor& img, long side, double uy, double ux) {
  if (side <= 0) return img.clone();
  auto [c, h, w] = dims_of(img, "cutout");
  const long cy = static_cast<long>(uy * static_cast<double>(h));
  const long cx = static_cast<long>(ux * static_cast<double>(w));
  std::vector<double> out = img.values();
  const long half = side / 2;
  for (long y = cy - half; y < cy - half + side; ++y) {
    if (y < 0 || y >= static_cast<long>(h)) continue;
    for (long x = cx - half; x < cx - half + side; ++x) {
      if (x < 0 || x >= static_cast<long>(w)) continue;
      for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] = 0.5;
    }
  }
  return Tensor::from_data(img.shape(), std::move(out));
}

}  // namespace

const char* op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::Identity: return "identity";
    case AugmentOp::HorizontalFlip: return "horizontal-flip";
    case AugmentOp::Translate: return "translate";
    case AugmentOp::Rotate: return "rotate";
    case AugmentOp::Brightness: return "brightness";
    case AugmentOp::Contrast: return "contrast";
    case AugmentOp::ColorJitter: return "color-jitter";
    case AugmentOp::Cutout: return "cutout";
    case AugmentOp::GaussianNoise: return "gaussian-noise";
  }
  return "?";
}

void AugmentPolicy::validate() const {
  CSG_CHECK(magnitude >= 0 && magnitude <= 30, Config, "augment: magnitude must be in 0..30");
  CSG_CHECK(n_ops >= 0, Config, "augment: n_ops must be nonnegative");
}

bool spatially_warping(const std::vector<AugmentOp>& ops, int magnitude) {
  if (magnitude <= 0) return false;
  for (AugmentOp op : ops)
    switch (op) {
      case AugmentOp::HorizontalFlip:
      case AugmentOp::Translate:
      case AugmentOp::Rotate:
      case AugmentOp::Cutout: return true;
      default: break;
    }
  return false;
}

Tensor apply_op(AugmentOp op, const Tensor& image, double level, Rng& rng) {
  auto [c, h, w] = dims_of(image, "augment");
  switch (op) {
    case AugmentOp::Identity:
      return image.clone();
    case AugmentOp::HorizontalFlip:
      return level > 0.0 ? horizontal_flip(image) : image.clone();
    case AugmentOp::Translate: {
      const double ux = rng.next_double(), uy = rng.next_double();
      const long dx = std::llround((2.0 * ux - 1.0) * level * 0.5 * static_cast<double>(w));
      const long dy = std::llround((2.0 * uy - 1.0) * level * 0.5 * static_cast<double>(h));
      return translate(image, dx, dy);
    }
    case AugmentOp::Rotate: {
      const double u = rng.next_double();
      return rotate_nn(image, (2.0 * u - 1.0) * level * 60.0);
    }
    case AugmentOp::Brightness: {
      const double delta = (2.0 * rng.next_double() - 1.0) * level * 0.7;
      std::vector<double> out = image.values();
      if (delta != 0.0)
        for (auto& x : out) x = clamp01(x + delta);
      return Tensor::from_data(image.shape(), std::move(out));
    }
    case AugmentOp::Contrast: {
      const double factor = 1.0 + (2.0 * rng.next_double() - 1.0) * level * 0.95;
      std::vector<double> out = image.values();
      if (factor != 1.0)
        for (auto& x : out) x = clamp01(0.5 + (x - 0.5) * factor);
      return Tensor::from_data(image.shape(), std::move(out));
    }
    case AugmentOp::ColorJitter: {
      std::vector<double> deltas(c);
      for (std::size_t ch = 0; ch < c; ++ch)
        deltas[ch] = (2.0 * rng.next_double() - 1.0) * level * 0.5;
      std::vector<double> out = image.values();
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (deltas[ch] == 0.0) continue;
        for (std::size_t p = 0; p < h * w; ++p)
          out[ch * h * w + p] = clamp01(out[ch * h * w + p] + deltas[ch]);
      }
      return Tensor::from_data(image.shape(), std::move(out));
    }
    case AugmentOp::Cutout: {
      const double uy = rng.next_double(), ux = rng.next_double();
      const long side =
          std::llround(level * 0.85 * static_cast<double>(h < w ? h : w));
      return cutout(image, side, uy, ux);
    }
    case AugmentOp::GaussianNoise: {
      const double sigma = level * 0.30;
      std::vector<double> out = image.values();
      for (auto& x : out) {
        const double g = rng.gaussian();
        if (sigma != 0.0) x = clamp01(x + g * sigma);
      }
      return Tensor::from_data(image.shape(), std::move(out));
    }
  }
  raise(ErrorKind::Contract, "augment: unknown operator");
}

AugmentedImage apply(const AugmentPolicy& policy, const Tensor& image, std::uint64_t stream_id) {
  policy.validate();
  Rng rng(Rng::mix(policy.seed, stream_id));
  const double level = static_cast<double>(policy.magnitude) / 30.0;

  AugmentedImage out;
  out.ops.reserve(policy.n_ops);
  for (int i = 0; i < policy.n_ops; ++i)
    out.ops.push_back(static_cast<AugmentOp>(rng.below(kOpCount)));

  Tensor cur = image;
  for (AugmentOp op : out.ops) cur = apply_op(op, cur, level, rng);
  out.image = cur.defined() ? cur : image.clone();
  out.spatial_warp = spatially_warping(out.ops, policy.magnitude);
  return out;
}

}  // namespace csg
