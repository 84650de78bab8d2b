#pragma once

#include "bsc/conformal.hpp"
#include "bsc/mdp.hpp"
#include "bsc/nn.hpp"

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bsc {

/// Decrease condition enforced on the certificate.
struct BclfMode {
  enum class Kind { asymptotic, finite_time };
  Kind kind = Kind::finite_time;
  double c = 0.99;
  double eta = 0.4;

  static BclfMode asymptotic(double c);
  static BclfMode finite_time(double eta);
};

std::string to_string(const BclfMode& mode);

/// Ball or axis-aligned box on the leading center.size() state coordinates.
struct GoalRegion {
  enum class Kind { ball, box };
  Kind kind = Kind::ball;
  Vector center;
  double radius = 0.0;  ///< ball
  Vector half_width;    ///< box

  static GoalRegion ball(Vector center, double radius);
  static GoalRegion box(Vector center, Vector half_width);

  [[nodiscard]] bool contains(const ConstVectorRef& x) const;
  /// Whether the closed eps-ball around p fits inside the region.
  [[nodiscard]] bool contains_ball(const ConstVectorRef& p, double eps) const;
};

struct GoalSpec {
  GoalRegion region;
  UncertaintySpec uncertainty{0.1, RiskLevel(0.01)};
  /// u_ref as a function of the belief mean.
  std::function<Vector(const Vector&)> reference;
  /// Replaces the conformal R_eps when set (two-particle system).
  std::function<double(const ParticleBelief&)> uncertainty_override;
  /// Constant -1 outside the goal instead of -1 - R_eps.
  bool flat_reward = false;

  /// Throws ConfigError when the eps-ball does not fit at the goal center.
  void validate() const;

  [[nodiscard]] double uncertainty_of(const ParticleBelief& b) const;
  /// R_eps(b) <= 0.
  [[nodiscard]] bool localized(const ParticleBelief& b) const;
  /// Localized and the eps-ball around the mean lies in the goal region.
  [[nodiscard]] bool in_goal_set(const ParticleBelief& b) const;
  [[nodiscard]] double reward(const ParticleBelief& b) const;
};

/// -1 - R_eps outside the localized set, 0 inside.
double reward(const ParticleBelief& b, const UncertaintySpec& spec);

/// W(b) = -max_a Q(b, a).
double bclf_value(const QNetwork& q, const ParticleBelief& b);

/// E{W(next)} = (r - Q) / gamma.
double expected_next_value(double q_value, double reward, double gamma);
double expected_next_value(const QNetwork& q, const ParticleBelief& b, std::size_t action, double reward,
                           double gamma);

/// Decrease test given W(b) and the expected next value.
bool decrease_admissible(double w, double expected_next, const BclfMode& mode);
bool decrease_admissible(const QNetwork& q, const ParticleBelief& b, std::size_t action, const BclfMode& mode,
                         double reward, double gamma);

enum class IgStatus { reference, gathering, forced };

const char* to_string(IgStatus status) noexcept;

struct IgResult {
  Vector u;
  IgStatus status = IgStatus::reference;
  std::size_t action = std::numeric_limits<std::size_t>::max();  ///< npos for u_ref
  double w = 0.0;
  double uncertainty = 0.0;
  std::size_t admissible_count = 0;
};

/// Minimum-deviation information gathering: the admissible action closest to
/// u_ref (lowest index on ties), or the steepest expected descent when none is
/// admissible. Returns u_ref once the belief is localized.
IgResult ig_control(const QNetwork& q, const ParticleBelief& b, const GoalSpec& goal, const BclfMode& mode,
                    const std::vector<Vector>& actions, double gamma);

/// Action with the smallest expected next value (largest certified decrease).
std::size_t steepest_descent_action(const QNetwork& q, const ParticleBelief& b, double reward, double gamma);

/// Greedy-Q while unlocalized, u_ref afterwards.
Vector switching_control(const QNetwork& q, const ParticleBelief& b, const GoalSpec& goal,
                         const std::vector<Vector>& actions);

/// Index of the largest action value (lowest index on ties).
std::size_t greedy_action(const QNetwork& q, const ParticleBelief& b);

/// True when W has not dropped below its value from `window` seconds ago:
/// min over (t_last - window, t_last] >= W(last sample at or before t_last - window) - tol.
/// False while the history is shorter than the window.
bool stagnation_monitor(const std::vector<double>& times, const std::vector<double>& values, double window = 1.0,
                        double tol = 1e-6);

struct TheoryBounds {
  double c_min = 0.0;
  double asymptotic_w_cap = 0.0;
  double finite_w_cap = 0.0;
  bool asymptotic_valid = false;  ///< W_max < asymptotic cap
  bool finite_valid = false;      ///< W_max < finite-time cap
};

TheoryBounds theory_bounds(double gamma, double r_max, double w_max, double eta);

/// ceil(w0 / eta); quotients within 1e-9 relative of an integer are not bumped up.
long long settling_time_bound(double w0, double eta);

struct AuditOptions {
  double c = 0.99;
  double eta = 0.4;
  double gamma = 0.99;
  std::size_t next_draws = 100;  ///< Monte-Carlo draws per expectation
  std::size_t max_steps = 200;   ///< greedy rollout cap
};

struct AuditRow {
  std::string condition;
  double tpr = 0.0;
  double fpr = 0.0;  ///< NaN when undefined
  std::size_t n = 0;
};

struct AuditReport {
  std::vector<AuditRow> rows;
  double w_max = 0.0;  ///< largest sampled W
  std::size_t in_goal = 0;
  std::size_t off_goal = 0;

  [[nodiscard]] const AuditRow& row(const std::string& condition) const;
};

/// Samples random beliefs and measures how often each certificate condition holds.
AuditReport certificate_audit(const QNetwork& q, const BeliefMdp& mdp, const AuditOptions& options,
                              std::size_t n_samples, Rng& rng);

/// CSV with header condition,tpr,fpr,n.
void write_audit_csv(std::ostream& out, const AuditReport& report);

}  // namespace bsc
