#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <cstdio>
#include <filesystem>

#include "csg/tensor.hpp"
#include "csg/tensor_io.hpp"
#include "gradcheck.hpp"

using namespace csg;
using csg_test::gradcheck;

namespace {

Tensor seeded(Shape shape, std::uint64_t seed, bool rg = true, double offset = 0.0) {
  Rng rng(seed);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-1.0, 1.0) + offset;
  return Tensor::from_data(std::move(shape), std::move(data), rg);
}

}  // namespace

TEST_CASE("matmul identity and small products") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, m);
  CHECK(r.values() == std::vector<double>{1, 2, 3, 4});

  Tensor a = Tensor::from_data({1, 2}, {1, 2});
  Tensor b = Tensor::from_data({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0);

  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("matmul gradient matches finite differences") {
  auto a = seeded({3, 4}, 11);
  auto b = seeded({4, 2}, 12);
  auto res = gradcheck(
      [](std::vector<Tensor>& in) { return sum(mul(matmul(in[0], in[1]), in[2])); },
      {a, b, seeded({3, 2}, 13, false)});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("conv2d examples") {
  Tensor ones_in = Tensor::full({1, 3, 3}, 1.0);
  Tensor ones_k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor r = conv2d(ones_in, ones_k, 1, 0);
  CHECK(r.shape() == Shape{1, 1, 1});
  CHECK(r.item() == 9.0);

  Tensor in = seeded({2, 4, 4}, 5, false);
  Tensor ident = Tensor::zeros({2, 2, 1, 1});
  ident.values()[0] = 1.0;  // out0 <- in0
  ident.values()[3] = 1.0;  // out1 <- in1
  Tensor out = conv2d(in, ident, 1, 0);
  CHECK(out.shape() == in.shape());
  for (std::size_t i = 0; i < in.numel(); ++i) CHECK(out.values()[i] == in.values()[i]);

  // kernel larger than padded input
  CHECK_THROWS_AS(conv2d(Tensor::full({1, 2, 2}, 1.0), ones_k, 1, 0), Error);
}

TEST_CASE("conv2d gradient matches finite differences") {
  auto in = seeded({2, 5, 5}, 21);
  auto k = seeded({3, 2, 3, 3}, 22);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      auto res = gradcheck(
          [stride, pad](std::vector<Tensor>& t) {
            return sum(mul(conv2d(t[0], t[1], stride, pad), exp(scale(conv2d(t[0], t[1], stride, pad), 0.1))));
          },
          {in, k});
      CAPTURE(stride);
      CAPTURE(pad);
      CHECK(res.max_rel_err < 1e-6);
    }
  }
}

TEST_CASE("elementwise forward rules") {
  Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  CHECK(relu(x).values() == std::vector<double>{0, 0, 2});

  Tensor y = Tensor::from_data({3}, {0.5, 1, 2});
  Tensor round_trip = exp(log(y));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(round_trip.values()[i] == doctest::Approx(y.values()[i]).epsilon(1e-12));

  Tensor tiny = Tensor::scalar(1e-301);
  CHECK_THROWS_AS(div(Tensor::scalar(1.0), tiny), Error);
}

TEST_CASE("elementwise gradients match finite differences") {
  // inputs kept away from relu/log kinks
  auto a = seeded({4, 3}, 31, true, 2.0);
  auto b = seeded({4, 3}, 32, true, 2.0);

  auto check1 = [&](const char* name, std::function<Tensor(Tensor&)> op) {
    auto res = gradcheck([op](std::vector<Tensor>& t) { return sum(op(t[0])); }, {a});
    CAPTURE(name);
    CHECK(res.max_rel_err < 1e-6);
  };
  check1("relu", [](Tensor& t) { return relu(t); });
  check1("exp", [](Tensor& t) { return exp(t); });
  check1("log", [](Tensor& t) { return log(t); });
  check1("sqrt", [](Tensor& t) { return sqrt(t); });
  check1("scale", [](Tensor& t) { return scale(t, -2.5); });

  auto check2 = [&](const char* name, std::function<Tensor(Tensor&, Tensor&)> op) {
    auto res = gradcheck([op](std::vector<Tensor>& t) { return sum(mul(op(t[0], t[1]), t[0])); },
                         {a, b});
    CAPTURE(name);
    CHECK(res.max_rel_err < 1e-6);
  };
  check2("add", [](Tensor& x, Tensor& y) { return add(x, y); });
  check2("sub", [](Tensor& x, Tensor& y) { return sub(x, y); });
  check2("mul", [](Tensor& x, Tensor& y) { return mul(x, y); });
  check2("div", [](Tensor& x, Tensor& y) { return div(x, y); });

  // scalar broadcast path
  auto s = seeded({1}, 33, true, 3.0);
  auto res = gradcheck(
      [](std::vector<Tensor>& t) { return sum(div(mul(t[0], t[1]), t[1])); }, {a, s});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("reductions") {
  Tensor m = seeded({4, 4}, 41, false);
  double total = 0;
  for (double v : m.values()) total += v;
  CHECK(mean(m).item() == doctest::Approx(total / 16.0).epsilon(1e-15));

  Tensor v = Tensor::from_data({2}, {3, 4});
  Tensor n = l2_normalize(v);
  CHECK(n.values()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.values()[1] == doctest::Approx(0.8).epsilon(1e-15));

  Tensor z = Tensor::from_data({2}, {0, 0});
  CHECK(l2_normalize(z).values() == std::vector<double>{0, 0});

  // axis reduction keeps remaining dims in order
  Tensor cube = Tensor::from_data({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor s12 = sum(cube, {1, 2});
  CHECK(s12.shape() == Shape{2});
  CHECK(s12.values() == std::vector<double>{10, 26});
  Tensor s0 = sum(cube, {0});
  CHECK(s0.shape() == Shape{2, 2});
  CHECK(s0.values() == std::vector<double>{6, 8, 10, 12});

  auto g = gradcheck(
      [](std::vector<Tensor>& t) { return sum(mul(mean(t[0], {1}), mean(t[0], {1}))); },
      {seeded({3, 5}, 42)});
  CHECK(g.max_rel_err < 1e-6);
}

TEST_CASE("l2_normalize properties") {
  auto v = seeded({6}, 51, false);
  Tensor once = l2_normalize(v);
  Tensor twice = l2_normalize(once);
  double norm = 0;
  for (double x : once.values()) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::fabs(once.values()[i] - twice.values()[i]) < 1e-12);

  auto g = gradcheck(
      [](std::vector<Tensor>& t) { return sum(mul(l2_normalize(t[0]), t[1])); },
      {seeded({6}, 52), seeded({6}, 53, false)});
  CHECK(g.max_rel_err < 1e-6);
}

TEST_CASE("backward contract and accumulation") {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(x, x)), Error);  // non-scalar loss

  Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4});
  backward(loss);  // accumulates
  CHECK(x.grad() == std::vector<double>{4, 8});
  x.zero_grad();
  backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4});
}

TEST_CASE("backward linearity") {
  auto make_loss1 = [](Tensor& x) { return sum(mul(x, x)); };
  auto make_loss2 = [](Tensor& x) { return sum(exp(scale(x, 0.5))); };
  Tensor x = seeded({5}, 61);

  x.zero_grad();
  backward(make_loss1(x));
  auto g1 = x.grad();
  x.zero_grad();
  backward(make_loss2(x));
  auto g2 = x.grad();
  x.zero_grad();
  backward(add(scale(make_loss1(x), 2.0), scale(make_loss2(x), -3.0)));
  auto gc = x.grad();
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(std::fabs(gc[i] - (2.0 * g1[i] - 3.0 * g2[i])) < 1e-10);
}

TEST_CASE("gradients stay off frozen branches") {
  Tensor frozen = seeded({3}, 71, false);
  Tensor live = seeded({3}, 72, true);
  Tensor mid = mul(frozen, frozen);  // no tape
  CHECK_FALSE(mid.requires_grad());
  Tensor loss = sum(mul(mid, live));
  backward(loss);
  CHECK(live.has_grad());
  CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("tensor binary roundtrip and csv export") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "csg_tensor_io_test";
  fs::create_directories(dir);

  Tensor t = seeded({2, 3, 4}, 81, false);
  auto path = (dir / "t.csgt").string();
  save_tensor(t, path);
  Tensor back = load_tensor(path);
  CHECK(back.shape() == t.shape());
  CHECK(back.values() == t.values());

  Tensor m = Tensor::from_data({2, 2}, {1.5, -2.25, 1.0 / 3.0, 0});
  auto csv = (dir / "m.csv").string();
  write_csv_2d(m, csv);
  std::ifstream is(csv);
  std::string line1, line2;
  std::getline(is, line1);
  std::getline(is, line2);
  CHECK(line1 == "1.5,-2.25");
  CHECK(line2.substr(0, 7) == "0.33333");

  CHECK_THROWS_AS(load_tensor((dir / "missing.csgt").string()), Error);
  fs::remove_all(dir);
}

TEST_CASE("finite-difference sweep across the op suite on many seeds") {
  // 20+ seeded inputs per differentiable op family
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 21; ++s) {
    auto a = seeded({3, 4}, 100 + s, true, 1.5);
    auto b = seeded({3, 3}, 200 + s, true, 1.5);
    auto w = seeded({4, 3}, 300 + s);
    auto res = gradcheck(
        [](std::vector<Tensor>& t) {
          Tensor h = matmul(relu(t[0]), t[2]);  // {3,3}
          Tensor e = exp(scale(h, 0.3));
          Tensor l = log(add(e, t[1]));
          return mean(mul(l, div(t[1], add_scalar(t[1], 3.0))));
        },
        {a, b, w});
    worst = std::max(worst, res.max_rel_err);
  }
  CHECK(worst < 1e-4);
}
