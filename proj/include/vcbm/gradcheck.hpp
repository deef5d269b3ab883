#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vcbm/errors.hpp"
#include "vcbm/tensor.hpp"

namespace vcbm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Central-difference check of the tape gradients. f() must rebuild the graph
// from the current parameter values on every call and return a scalar loss.
// Relative error uses max(1, |analytic|) in the denominator so tiny gradients
// are compared absolutely.
inline GradCheckReport grad_check(const std::function<Tensor()>& f,
                                  const std::vector<Tensor>& params,
                                  double eps = 1e-5) {
  if (eps <= 0.0) {
    throw error("grad_check: eps must be positive, got " + std::to_string(eps));
  }
  for (const auto& p : params) {
    if (!p.requires_grad()) {
      throw error("grad_check: parameter does not require grad");
    }
    const_cast<Tensor&>(p).zero_grad();
  }

  Tensor loss = f();
  if (!std::isfinite(loss.value())) {
    throw numeric_error("grad_check: loss is not finite");
  }
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = const_cast<Tensor&>(params[pi]).data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().value();
      values[i] = saved - eps;
      const double down = f().value();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw numeric_error("grad_check: perturbed loss is not finite");
      }
      const double fd = (up - down) / (2.0 * eps);
      const double an = analytic[pi][i];
      const double abs_err = std::fabs(fd - an);
      const double rel_err = abs_err / std::max(1.0, std::fabs(an));
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.max_abs_err = abs_err;
        report.worst_param = pi;
        report.worst_index = i;
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace vcbm
