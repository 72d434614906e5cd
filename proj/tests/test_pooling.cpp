#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "csg/pooling.hpp"
#include "gradcheck.hpp"

using namespace csg;
using csg_test::gradcheck;

namespace {

Tensor seeded_map(Shape shape, std::uint64_t seed, bool rg = false, double offset = 0.0) {
  Rng rng(seed);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-1.0, 1.0) + offset;
  return Tensor::from_data(std::move(shape), std::move(data), rg);
}

}  // namespace

TEST_CASE("gap basics") {
  Tensor c3 = Tensor::full({5, 3, 3}, 3.0);
  Tensor g = gap(c3);
  CHECK(g.shape() == Shape{5});
  for (double v : g.values()) CHECK(v == 3.0);

  Tensor m = Tensor::from_data({1, 2, 2}, {1, 3, 5, 7});
  CHECK(gap(m).values()[0] == 4.0);

  auto res = gradcheck([](std::vector<Tensor>& t) { return sum(mul(gap(t[0]), gap(t[0]))); },
                       {seeded_map({3, 4, 4}, 1, true)});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("apool hand-computed 2x2 example") {
  Tensor v = Tensor::from_data({1, 2, 2}, {1, 3, 1, 3});
  auto r = apool(v);
  CHECK(r.pooled.values()[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(r.attention.weights[0] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(r.attention.weights[1] == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(r.attention.weights[2] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(r.attention.weights[3] == doctest::Approx(0.375).epsilon(1e-15));
  CHECK_FALSE(r.attention.uniform_fallback);
}

TEST_CASE("apool equals gap on spatially constant maps, ratio is one") {
  Tensor v = Tensor::from_data({2, 2, 2}, {4, 4, 4, 4, -1, -1, -1, -1});
  auto r = apool(v);
  Tensor g = gap(v);
  for (std::size_t c = 0; c < 2; ++c)
    CHECK(std::fabs(r.pooled.values()[c] - g.values()[c]) < 1e-12);
  for (double x : r.attention.ratio) CHECK(x == 1.0);
}

TEST_CASE("apool degenerate map falls back to uniform") {
  Tensor v = Tensor::zeros({3, 2, 2});
  PoolingStats stats;
  auto r = apool(v, &stats);
  CHECK(r.attention.uniform_fallback);
  CHECK(stats.fallback_calls == 1);
  CHECK(stats.weight_sum_violations == 0);
  for (double x : r.pooled.values()) CHECK(x == 0.0);
  for (double x : r.attention.ratio) CHECK(x == 1.0);
  double s = 0;
  for (double x : r.attention.weights) s += x;
  CHECK(std::fabs(s - 1.0) < 1e-10);
}

TEST_CASE("attention weights sum to one, negative weights are counted") {
  PoolingStats stats;
  int negatives = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Tensor v = seeded_map({4, 3, 5}, seed);
    auto r = apool(v, &stats);
    double s = 0;
    for (double x : r.attention.weights) s += x;
    CHECK(std::fabs(s - 1.0) < 1e-10);
    if (r.attention.has_negative) ++negatives;
  }
  CHECK(stats.weight_sum_violations == 0);
  CHECK(stats.negative_attention_calls == negatives);
  CHECK(negatives > 0);  // raw inner products do go negative on random maps
}

TEST_CASE("apool positive homogeneity") {
  Tensor v = seeded_map({3, 4, 4}, 7, false, 0.5);
  auto base = apool(v);
  for (double alpha : {0.5, 2.0, 7.25}) {
    Tensor scaled = scale(v, alpha);
    auto r = apool(scaled);
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(r.pooled.values()[c] ==
            doctest::Approx(alpha * base.pooled.values()[c]).epsilon(1e-12));
  }
}

TEST_CASE("apool gradient through value and attention paths") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor v = seeded_map({2, 3, 3}, 100 + seed, true, 0.7);
    auto res = gradcheck(
        [](std::vector<Tensor>& t) {
          auto r = apool(t[0]);
          return sum(mul(r.pooled, t[1]));
        },
        {v, seeded_map({2}, 200 + seed)});
    worst = std::max(worst, res.max_rel_err);
  }
  CHECK(worst < 1e-4);

  // separate attention source: gradient flows through both tensors
  auto res = gradcheck(
      [](std::vector<Tensor>& t) {
        auto r = apool(t[0], t[1]);
        return sum(mul(r.pooled, r.pooled));
      },
      {seeded_map({2, 3, 3}, 300, true, 0.6), seeded_map({2, 3, 3}, 301, true, 0.6)});
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("patch_pool grids") {
  Tensor v = seeded_map({3, 4, 4}, 9);
  auto one = patch_pool(v, 1, 1);
  REQUIRE(one.size() == 1);
  Tensor g = gap(v);
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(std::fabs(one[0].values()[c] - g.values()[c]) < 1e-15);

  // 1×4×4 map whose value is the row index
  std::vector<double> rows(16);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) rows[y * 4 + x] = static_cast<double>(y);
  auto cells = patch_pool(Tensor::from_data({1, 4, 4}, rows), 2, 2);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].values()[0] == 0.5);
  CHECK(cells[1].values()[0] == 0.5);
  CHECK(cells[2].values()[0] == 2.5);
  CHECK(cells[3].values()[0] == 2.5);

  // full-resolution grid reconstructs the map
  auto pix = patch_pool(v, 4, 4);
  REQUIRE(pix.size() == 16);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(pix[y * 4 + x].values()[c] == v.at({c, y, x}));

  CHECK_THROWS_AS(patch_pool(v, 0, 2), Error);
  CHECK_THROWS_AS(patch_pool(v, 5, 1), Error);
}

TEST_CASE("mean of equal-size patch cells equals gap") {
  Tensor v = seeded_map({2, 6, 4}, 17);
  auto cells = patch_pool(v, 3, 2);
  Tensor g = gap(v);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0;
    for (auto& cell : cells) m += cell.values()[c];
    m /= static_cast<double>(cells.size());
    CHECK(std::fabs(m - g.values()[c]) < 1e-12);
  }
}

TEST_CASE("patch_pool remainder goes to last row and column") {
  Tensor v = seeded_map({1, 5, 7}, 23);
  auto cells = patch_pool(v, 2, 3);
  REQUIRE(cells.size() == 6);
  // row split: [0,2) and [2,5); col split: [0,2), [2,4), [4,7)
  double acc = 0;
  for (std::size_t y = 2; y < 5; ++y)
    for (std::size_t x = 4; x < 7; ++x) acc += v.at({0, y, x});
  CHECK(cells[5].values()[0] == doctest::Approx(acc / 9.0).epsilon(1e-14));
}

TEST_CASE("patch_pool gradient") {
  auto res = gradcheck(
      [](std::vector<Tensor>& t) {
        auto cells = patch_pool(t[0], 2, 2);
        Tensor acc = Tensor::scalar(0.0);
        for (auto& c : cells) acc = add(acc, sum(mul(c, c)));
        return acc;
      },
      {seeded_map({2, 5, 5}, 31, true)});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("attention csv export") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "csg_pool_test";
  fs::create_directories(dir);
  Tensor v = Tensor::from_data({1, 2, 2}, {1, 3, 1, 3});
  auto r = apool(v);
  auto path = (dir / "attn_test_0_4.csv").string();
  write_attention_csv(r.attention, path);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "0.5,1.5");
  fs::remove_all(dir);
}
