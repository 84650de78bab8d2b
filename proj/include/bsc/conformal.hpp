#pragma once

#include "bsc/belief.hpp"

#include <cstddef>
#include <span>

namespace bsc {

/// Miscoverage level delta in (0, 1).
class RiskLevel {
 public:
  explicit RiskLevel(double delta);
  [[nodiscard]] double value() const noexcept { return delta_; }
  /// Smallest sample count k with k >= (1 - delta) / delta.
  [[nodiscard]] std::size_t min_samples() const noexcept;

 private:
  double delta_;
};

/// 1-based rank ceil((k + 1)(1 - delta)); equals k + 1 when k is too small.
std::size_t conformal_rank(std::size_t k, RiskLevel delta);

struct ConformalBound {
  double bound;      ///< +infinity when rank == k + 1
  std::size_t rank;  ///< 1-based
  [[nodiscard]] bool finite() const noexcept;
};

/// Split-conformal upper quantile: Pr[Z <= bound] >= 1 - delta for a fresh
/// exchangeable draw Z.
ConformalBound conformal_quantile(std::span<const double> scores, RiskLevel delta);

struct UncertaintySpec {
  double epsilon;      ///< target ball radius
  RiskLevel delta_l;   ///< localization risk
};

/// Conformal radius of the ball around the belief mean.
double localization_radius(const ParticleBelief& belief, const UncertaintySpec& spec);

/// R_eps(b) = eps_hat(b) - eps; nonpositive means localized. +infinity when
/// the belief has too few particles for the requested risk.
double uncertainty_measure(const ParticleBelief& belief, const UncertaintySpec& spec);

}  // namespace bsc
