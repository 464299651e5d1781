#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "zinbsf/errors.hpp"

namespace zinbsf {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool excludes_zero() const { return lo > 0.0 || hi < 0.0; }
};

/// Number of sorted samples an HPD window at `level` must contain.
inline std::size_t hpd_window(std::size_t n, double level) {
  return static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
}

/// Shortest interval spanning ceil(level * n) sorted samples; ties go to the
/// smallest lower bound.
inline Interval hpd(std::span<const double> samples, double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("HPD level must lie in (0, 1)");
  const std::size_t n = samples.size();
  if (n < 10) throw InputError("HPD interval needs at least 10 samples");
  const std::size_t k = std::max<std::size_t>(1, hpd_window(n, level));
  if (k > n) throw InputError("HPD window larger than sample");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  std::size_t best = 0;
  double best_width = s[k - 1] - s[0];
  for (std::size_t i = 1; i + k <= n; ++i) {
    const double w = s[i + k - 1] - s[i];
    if (w < best_width) {
      best_width = w;
      best = i;
    }
  }
  return {s[best], s[best + k - 1]};
}

} // namespace zinbsf
