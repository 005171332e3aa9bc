#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "moodbridge/error.hpp"

namespace moodbridge {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are
/// numerically zero from being judged on finite-difference round-off.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic[i]` against the central difference of `loss` in
/// `*params[i]`. Each parameter is restored after probing.
template <class LossFn>
GradCheckResult check_gradient(std::span<double* const> params, std::span<const double> analytic, LossFn&& loss,
                               double h = 1e-5) {
  if (params.size() != analytic.size()) fail(ErrorKind::Dimension, "check_gradient: size mismatch");
  GradCheckResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& p = *params[i];
    const double saved = p;
    p = saved + h;
    const double up = loss();
    p = saved - h;
    const double down = loss();
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_index = i;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace moodbridge
