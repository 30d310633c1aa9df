#pragma once
// Central finite-difference gradient checker.

#include "lmsd/core/tensor.hpp"

#include <algorithm>
#include <functional>

namespace lmsd::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[i]" of the worst entry
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps finite-difference roundoff
/// (~1e-10 at h=1e-5) on exactly-zero gradients from reading as large error.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference at v. Estimates at h and h/2 agree to O(h^2) on smooth
/// pieces; when they do not, the probe straddles a ReLU kink and the step is
/// shrunk (up to three times).
inline double probe(double& v, const std::function<double()>& loss, double h) {
  const double saved = v;
  auto central = [&](double step) {
    v = saved + step;
    const double up = loss();
    v = saved - step;
    const double down = loss();
    v = saved;
    return (up - down) / (2 * step);
  };
  double num = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
    const double full = central(h);
    num = central(h / 2);
    if (std::abs(full - num) <= 1e-7 * std::max(1.0, std::abs(num))) break;
  }
  return num;
}

/// `loss` must be a deterministic function of the current parameter values.
/// `analytic` must run forward+backward once and leave dL/dp in every grad.
/// Up to `max_per_param` entries per tensor are probed (evenly strided).
inline GradCheckResult check_gradients(const ParamRefs& ps, const std::function<double()>& loss,
                                       const std::function<void()>& analytic, double h = 1e-5,
                                       int max_per_param = 24) {
  for (Param* p : ps) p->zero_grad();
  analytic();
  GradCheckResult r;
  for (Param* p : ps) {
    const Eigen::Index n = p->value.size();
    const Eigen::Index step = std::max<Eigen::Index>(1, n / max_per_param);
    for (Eigen::Index i = 0; i < n; i += step) {
      const double num = probe(p->value.data()[i], loss, h);
      const double e = relative_error(p->grad.data()[i], num);
      ++r.checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

/// Same check for the gradient with respect to an input matrix.
inline GradCheckResult check_input_gradient(Mat& x, const Mat& dx_analytic, const std::function<double()>& loss,
                                            double h = 1e-5) {
  GradCheckResult r;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double e = relative_error(dx_analytic.data()[i], probe(x.data()[i], loss, h));
    ++r.checked;
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst = "x[" + std::to_string(i) + "]";
    }
  }
  return r;
}

}  // namespace lmsd::nn
