#pragma once

// Finite-difference oracle used by the unit and acceptance suites. Central
// differences with eps=1e-5 against whatever scalar-valued graph the caller
// builds; intentionally independent of the tape internals it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "csg/tensor.hpp"

namespace csg_test {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "input i, element j"
};

// f builds a scalar Tensor from the given leaf inputs. Leaves must have
// requires_grad=true. Inputs are perturbed in place for the numeric side.
inline GradCheckResult gradcheck(
    const std::function<csg::Tensor(std::vector<csg::Tensor>&)>& f,
    std::vector<csg::Tensor> inputs, double eps = 1e-5) {
  using csg::Tensor;
  GradCheckResult res;

  for (auto& in : inputs) in.zero_grad();
  csg::Tensor loss = f(inputs);
  csg::backward(loss);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& in = inputs[i];
    if (!in.requires_grad()) continue;
    const std::vector<double> analytic = in.grad();
    for (std::size_t j = 0; j < in.numel(); ++j) {
      const double orig = in.values()[j];
      in.values()[j] = orig + eps;
      const double up = f(inputs).item();
      in.values()[j] = orig - eps;
      const double down = f(inputs).item();
      in.values()[j] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[j];
      const double abs_err = std::fabs(a - numeric);
      const double rel = abs_err / std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = "input " + std::to_string(i) + ", element " + std::to_string(j);
      }
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace csg_test
