#include "csg/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "csg/rng.hpp"
#include "csg/tensor_io.hpp"

namespace csg {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

std::uint64_t split_tag(Split s) {
  switch (s) {
    case Split::SyntheticTrain: return 0xA1;
    case Split::SyntheticTest: return 0xA2;
    case Split::RealProxyTrain: return 0xB1;
    case Split::RealProxyTest: return 0xB2;
  }
  return 0;
}

}  // namespace

Domain split_domain(Split s) {
  return (s == Split::SyntheticTrain || s == Split::SyntheticTest) ? Domain::SyntheticFlat
                                                                   : Domain::RealProxy;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::SyntheticTrain: return "synthetic-train";
    case Split::SyntheticTest: return "synthetic-test";
    case Split::RealProxyTrain: return "realproxy-train";
    case Split::RealProxyTest: return "realproxy-test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  for (Split s : {Split::SyntheticTrain, Split::SyntheticTest, Split::RealProxyTrain,
                  Split::RealProxyTest})
    if (name == split_name(s)) return s;
  raise(ErrorKind::Config, "unknown split '" + name + "'");
}

int ShapesSpec::count(Split s) const {
  switch (s) {
    case Split::SyntheticTrain: return synthetic_train_count;
    case Split::SyntheticTest: return synthetic_test_count;
    case Split::RealProxyTrain: return realproxy_train_count;
    case Split::RealProxyTest: return realproxy_test_count;
  }
  return 0;
}

void ShapesSpec::validate() const {
  CSG_CHECK(n_classes >= 2 && n_classes <= 4, Config, "dataset: n_classes must be in 2..4");
  CSG_CHECK(image_size >= 8, Config, "dataset: image_size must be >= 8");
  CSG_CHECK(synthetic_train_count > 0 && synthetic_test_count > 0 && realproxy_train_count > 0 &&
                realproxy_test_count > 0,
            Config, "dataset: split counts must be positive");
}

bool inside_shape(int label, double dx, double dy, double r) {
  switch (label) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::fabs(dx) <= 0.82 * r && std::fabs(dy) <= 0.82 * r;
    case 2: {  // equilateral triangle, apex up (negative dy)
      const double x0 = 0.0, y0 = -r;
      const double x1 = -0.8660254037844386 * r, y1 = 0.5 * r;
      const double x2 = 0.8660254037844386 * r, y2 = 0.5 * r;
      auto side = [&](double ax, double ay, double bx, double by) {
        return (bx - ax) * (dy - ay) - (by - ay) * (dx - ax);
      };
      const double s0 = side(x0, y0, x1, y1);
      const double s1 = side(x1, y1, x2, y2);
      const double s2 = side(x2, y2, x0, y0);
      return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
    }
    case 3:  // cross
      return (std::fabs(dx) <= 0.33 * r && std::fabs(dy) <= r) ||
             (std::fabs(dx) <= r && std::fabs(dy) <= 0.33 * r);
    default:
      raise(ErrorKind::Contract, "inside_shape: unsupported label " + std::to_string(label));
  }
}

Sample generate(const ShapesSpec& spec, Split split, std::size_t index) {
  spec.validate();
  CSG_CHECK(index < static_cast<std::size_t>(spec.count(split)), Contract,
            "generate: index " + std::to_string(index) + " out of range for " +
                split_name(split));
  const int S = spec.image_size;
  const int label = static_cast<int>(index % static_cast<std::size_t>(spec.n_classes));
  Rng rng(Rng::mix(Rng::mix(spec.seed, split_tag(split)), index));

  double cx = 0.5, cy = 0.5, radius = 0.34;
  double fill[3];
  double bg_base[3], bg_amp1[3], bg_fx1[3], bg_fy1[3], bg_ph1[3];
  double bg_amp2[3], bg_fx2[3], bg_fy2[3], bg_ph2[3];
  double jitter[3] = {0, 0, 0};
  double noise_sigma = 0.0;
  const bool real = split_domain(split) == Domain::RealProxy;

  if (!real) {
    // one flat fill over one flat background, centered fixed-size shape;
    // colors carry no class information in either domain
    const double g = rng.uniform(0.15, 0.45);
    for (int c = 0; c < 3; ++c) {
      bg_base[c] = g;
      bg_amp1[c] = bg_amp2[c] = 0.0;
      bg_fx1[c] = bg_fy1[c] = bg_ph1[c] = bg_fx2[c] = bg_fy2[c] = bg_ph2[c] = 0.0;
      fill[c] = rng.below(2) ? rng.uniform(0.72, 0.95) : rng.uniform(0.05, 0.28);
    }
  } else {
    cx = rng.uniform(0.38, 0.62);
    cy = rng.uniform(0.38, 0.62);
    radius = rng.uniform(0.24, 0.38);
    // saturated fills over mid-tone textured backgrounds keep the shape
    // visible while the color itself stays uninformative about the class
    for (int c = 0; c < 3; ++c)
      fill[c] = rng.below(2) ? rng.uniform(0.72, 0.95) : rng.uniform(0.05, 0.28);
    for (int c = 0; c < 3; ++c) {
      bg_base[c] = rng.uniform(0.35, 0.55);
      bg_amp1[c] = rng.uniform(0.06, 0.14);
      bg_fx1[c] = rng.uniform(1.0, 4.0);
      bg_fy1[c] = rng.uniform(1.0, 4.0);
      bg_ph1[c] = rng.uniform(0.0, 2.0 * kPi);
      bg_amp2[c] = rng.uniform(0.03, 0.08);
      bg_fx2[c] = rng.uniform(3.0, 7.0);
      bg_fy2[c] = rng.uniform(3.0, 7.0);
      bg_ph2[c] = rng.uniform(0.0, 2.0 * kPi);
    }
    for (int c = 0; c < 3; ++c) jitter[c] = rng.uniform(-0.10, 0.10);
    noise_sigma = 0.05;
  }

  std::vector<double> img(3 * S * S);
  std::vector<double> mask;
  if (spec.dense) mask.assign(static_cast<std::size_t>(S) * S, static_cast<double>(spec.n_classes));

  for (int y = 0; y < S; ++y) {
    const double v = (y + 0.5) / S;
    for (int x = 0; x < S; ++x) {
      const double u = (x + 0.5) / S;
      const bool in = inside_shape(label, u - cx, v - cy, radius);
      if (in && spec.dense) mask[static_cast<std::size_t>(y) * S + x] = label;
      for (int c = 0; c < 3; ++c) {
        double val;
        if (in) {
          val = fill[c];
        } else {
          val = bg_base[c] +
                bg_amp1[c] * std::sin(2.0 * kPi * (bg_fx1[c] * u + bg_fy1[c] * v) + bg_ph1[c]) +
                bg_amp2[c] * std::sin(2.0 * kPi * (bg_fx2[c] * u + bg_fy2[c] * v) + bg_ph2[c]);
        }
        img[(static_cast<std::size_t>(c) * S + y) * S + x] = clamp01(val + jitter[c]);
      }
    }
  }

  if (noise_sigma > 0.0)
    for (auto& p : img) p = clamp01(p + noise_sigma * rng.gaussian());

  Sample sample;
  sample.image = Tensor::from_data({3, static_cast<std::size_t>(S), static_cast<std::size_t>(S)},
                                   std::move(img));
  sample.label = label;
  sample.cx = cx;
  sample.cy = cy;
  sample.radius = radius;
  if (spec.dense)
    sample.mask = Tensor::from_data({static_cast<std::size_t>(S), static_cast<std::size_t>(S)},
                                    std::move(mask));
  return sample;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch) {
  CSG_CHECK(batch_size >= 1, Contract, "epoch_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::mix(shuffle_seed, epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

void write_split_cache(const ShapesSpec& spec, Split split, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int n = spec.count(split);
  const std::size_t S = spec.image_size;

  Tensor images = Tensor::zeros({static_cast<std::size_t>(n), 3, S, S});
  Tensor labels = Tensor::zeros({static_cast<std::size_t>(n)});
  Tensor masks;
  if (spec.dense) masks = Tensor::zeros({static_cast<std::size_t>(n), S, S});

  for (int i = 0; i < n; ++i) {
    Sample s = generate(spec, split, i);
    std::copy(s.image.values().begin(), s.image.values().end(),
              images.values().begin() + static_cast<std::size_t>(i) * 3 * S * S);
    labels.values()[i] = s.label;
    if (spec.dense)
      std::copy(s.mask.values().begin(), s.mask.values().end(),
                masks.values().begin() + static_cast<std::size_t>(i) * S * S);
  }

  const std::string stem = split_name(split);
  save_tensor(images, dir + "/" + stem + "_images.csgt");
  save_tensor(labels, dir + "/" + stem + "_labels.csgt");
  if (spec.dense) save_tensor(masks, dir + "/" + stem + "_masks.csgt");

  nlohmann::json idx{{"split", stem},
                     {"count", n},
                     {"image_size", spec.image_size},
                     {"n_classes", spec.n_classes},
                     {"dense", spec.dense},
                     {"seed", spec.seed},
                     {"files",
                      {{"images", stem + "_images.csgt"},
                       {"labels", stem + "_labels.csgt"},
                       {"masks", spec.dense ? stem + "_masks.csgt" : ""}}}};
  std::ofstream os(dir + "/" + stem + "_index.json");
  CSG_CHECK(os.good(), Io, "write_split_cache: cannot open index for " + dir);
  os << idx.dump(2) << "\n";
}

CachedSplit read_split_cache(const std::string& dir, Split split) {
  const std::string stem = split_name(split);
  std::ifstream is(dir + "/" + stem + "_index.json");
  CSG_CHECK(is.good(), Io, "read_split_cache: missing index for " + stem + " in " + dir);
  nlohmann::json idx = nlohmann::json::parse(is);

  CachedSplit out;
  out.images = load_tensor(dir + "/" + idx["files"]["images"].get<std::string>());
  Tensor labels = load_tensor(dir + "/" + idx["files"]["labels"].get<std::string>());
  out.labels.reserve(labels.numel());
  for (double v : labels.values()) out.labels.push_back(static_cast<int>(v));
  if (idx["dense"].get<bool>())
    out.masks = load_tensor(dir + "/" + idx["files"]["masks"].get<std::string>());
  CSG_CHECK(out.images.shape()[0] == out.labels.size(), Io,
            "read_split_cache: image/label count mismatch");
  return out;
}

}  // namespace csg
