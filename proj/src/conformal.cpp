#include "bsc/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bsc {

RiskLevel::RiskLevel(double delta) : delta_(delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("risk level must lie in (0, 1)");
}

std::size_t RiskLevel::min_samples() const noexcept {
  return static_cast<std::size_t>(std::ceil((1.0 - delta_) / delta_ - 1e-12));
}

std::size_t conformal_rank(std::size_t k, RiskLevel delta) {
  // r = (k + 1) - floor((k + 1) * delta), with the product split into its
  // rounded value and exact error term so the floor is exact.
  const double n = static_cast<double>(k + 1);
  const double prod = n * delta.value();
  const double err = std::fma(n, delta.value(), -prod);
  double floor_prod = std::floor(prod);
  if (floor_prod == prod && err < 0.0) floor_prod -= 1.0;
  const auto r = static_cast<std::size_t>(n - floor_prod);
  return std::clamp<std::size_t>(r, 1, k + 1);
}

bool ConformalBound::finite() const noexcept { return std::isfinite(bound); }

ConformalBound conformal_quantile(std::span<const double> scores, RiskLevel delta) {
  if (scores.empty()) throw std::invalid_argument("conformal_quantile needs at least one score");
  const std::size_t k = scores.size();
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("conformal scores must be finite");
  }
  const std::size_t r = conformal_rank(k, delta);
  if (r == k + 1) return {std::numeric_limits<double>::infinity(), r};
  std::vector<double> sorted(scores.begin(), scores.end());
  std::stable_sort(sorted.begin(), sorted.end());
  return {sorted[r - 1], r};
}

double localization_radius(const ParticleBelief& belief, const UncertaintySpec& spec) {
  const Vector mu = mean(belief);
  std::vector<double> scores(belief.size());
  for (std::size_t i = 0; i < belief.size(); ++i) scores[i] = (belief.particle(i) - mu).norm();
  return conformal_quantile(scores, spec.delta_l).bound;
}

double uncertainty_measure(const ParticleBelief& belief, const UncertaintySpec& spec) {
  return localization_radius(belief, spec) - spec.epsilon;
}

}  // namespace bsc
