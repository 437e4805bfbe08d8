#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lpvae/core/autodiff.hpp"

namespace lpvae::testing {

struct GradCheckReport {
  bool ok = true;
  double max_rel = 0.0;
  std::string worst;
};

// Central-difference gradient check. `loss` must rebuild the graph on every
// call and be a deterministic function of the parameter values (fixed seeds,
// fixed noise). Runs in double precision throughout.
inline GradCheckReport grad_check(const std::function<Var()>& loss, const std::vector<Var>& params,
                                  double step = 1e-5, double rel_tol = 1e-4,
                                  double abs_tol = 1e-7) {
  for (const auto& p : params) p->zero_grad();
  Var l0 = loss();
  backward(l0);

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Node& p = *params[pi];
    Tensor analytic = p.grad.empty() ? Tensor(p.value.shape()) : p.grad;
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double fp = loss()->value[0];
      p.value[i] = saved - step;
      const double fm = loss()->value[0];
      p.value[i] = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double ad = analytic[i];
      const double diff = std::abs(fd - ad);
      const double denom = std::max(std::abs(fd), std::abs(ad));
      const double rel = denom > 0 ? diff / denom : 0.0;
      const bool pass = diff <= abs_tol || rel <= rel_tol;
      if (rel > report.max_rel && diff > abs_tol) {
        report.max_rel = rel;
        std::ostringstream os;
        os << "param " << pi << " elem " << i << ": ad=" << ad << " fd=" << fd;
        report.worst = os.str();
      }
      if (!pass) report.ok = false;
    }
  }
  for (const auto& p : params) p->zero_grad();
  return report;
}

}  // namespace lpvae::testing
