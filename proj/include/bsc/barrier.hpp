#pragma once

#include "bsc/belief.hpp"
#include "bsc/conformal.hpp"
#include "bsc/qp.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsc {

/// Value, gradient and Hessian of a barrier h at one state.
struct BarrierEval {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

/// Twice differentiable h: X -> R; the avoid set is {h < 0}.
struct BarrierFunction {
  std::size_t dim = 0;
  std::function<double(const ConstVectorRef&)> value;
  /// Fills out.value/gradient/hessian; out is resized by the callee if needed.
  std::function<void(const ConstVectorRef&, BarrierEval&)> evaluate;

  /// h(x) = offset + normal^T x.
  static BarrierFunction affine(const Vector& normal, double offset);
  /// h(x) = ||P x - center|| - radius, P selecting the leading center.size() coordinates.
  static BarrierFunction ball_exterior(const Vector& center, double radius, std::size_t dim);

  [[nodiscard]] BarrierEval eval(const ConstVectorRef& x) const;
};

struct SafetySpec {
  BarrierFunction h;
  double alpha3_gain = 1.0;  ///< alpha_3(h) = gain * h
  RiskLevel delta_bar{0.01};
  BoxBounds control_bounds;
};

/// Per-particle running minimum of h over the current measurement interval.
struct HistoryState {
  Vector xi;
};

HistoryState init_history(const ParticleBelief& belief, const SafetySpec& spec);
HistoryState update_history(const HistoryState& history, const ParticleBelief& belief, const SafetySpec& spec);
void update_history_inplace(HistoryState& history, const ParticleBelief& belief, const SafetySpec& spec);

struct TopPSelection {
  std::vector<std::size_t> indices;  ///< particles with the largest running minima
  std::size_t p = 0;                 ///< ceil((N + 1)(1 - delta))
  double bound = 0.0;                ///< C = rho^(p); +infinity when p = N + 1
  /// False when N is too small for the risk level (p = N + 1).
  [[nodiscard]] bool guaranteed(std::size_t n) const noexcept { return p <= n; }
};

/// Conformal selection on scores rho_i = -xi_i; ties keep lower particle index first.
TopPSelection top_p_select(const HistoryState& history, RiskLevel delta_bar);

class SingularBarrierError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Reciprocal-barrier condition at x with B = 1/h as the affine row a^T u <= b.
QpRow rcbf_row(const ConstVectorRef& x, const MotionModel& model, const SafetySpec& spec);

/// dB/dx (f + g u) + 1/2 tr(sigma^T d2B/dx2 sigma): the generator of B along the SDE.
double rcbf_generator(const ConstVectorRef& x, const ConstVectorRef& u, const MotionModel& model,
                      const BarrierFunction& h);

enum class FilterStatus { ok, slack, fault };

const char* to_string(FilterStatus status) noexcept;

struct FilterReport {
  std::size_t p = 0;
  double bound = 0.0;             ///< C
  std::size_t n_rows = 0;
  std::size_t n_active = 0;
  std::size_t n_unsafe_selected = 0;
  double slack = 0.0;
  FilterStatus status = FilterStatus::ok;
  QpStatus qp_status = QpStatus::optimal;
  bool guaranteed = true;
};

struct FilterResult {
  Vector u;
  FilterReport report;
};

/// Horizon safety filter: top-p selection on the history state, one RCBF row
/// per selected safe particle, minimum-deviation QP around u_ig.
FilterResult safety_filter(const ParticleBelief& belief, const HistoryState& history, const ConstVectorRef& u_ig,
                           const MotionModel& model, const SafetySpec& spec, QpSolver& solver);

/// Per-interval risk with (1 - result)^M = 1 - delta_a.
RiskLevel interval_risk(RiskLevel delta_a, std::size_t intervals);

enum class SmoothKind { min, max };

/// Log-sum-exp composition. Both kinds under-approximate their hard
/// counterpart: the max variant is shifted by -ln(n)/beta.
BarrierFunction smooth_set(std::vector<BarrierFunction> parts, SmoothKind kind, double beta);

}  // namespace bsc
