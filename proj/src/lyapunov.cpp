#include "bsc/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace bsc {

BclfMode BclfMode::asymptotic(double c) {
  if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("asymptotic coefficient c must lie in (0, 1)");
  BclfMode m;
  m.kind = Kind::asymptotic;
  m.c = c;
  return m;
}

BclfMode BclfMode::finite_time(double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("finite-time rate eta must be positive");
  BclfMode m;
  m.kind = Kind::finite_time;
  m.eta = eta;
  return m;
}

std::string to_string(const BclfMode& mode) {
  std::ostringstream os;
  if (mode.kind == BclfMode::Kind::asymptotic)
    os << "asymptotic(c=" << mode.c << ")";
  else
    os << "finite_time(eta=" << mode.eta << ")";
  return os.str();
}

GoalRegion GoalRegion::ball(Vector center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("goal radius must be positive");
  GoalRegion g;
  g.kind = Kind::ball;
  g.center = std::move(center);
  g.radius = radius;
  return g;
}

GoalRegion GoalRegion::box(Vector center, Vector half_width) {
  if (center.size() != half_width.size() || (half_width.array() <= 0.0).any())
    throw std::invalid_argument("goal box needs positive half widths matching the center");
  GoalRegion g;
  g.kind = Kind::box;
  g.center = std::move(center);
  g.half_width = std::move(half_width);
  return g;
}

bool GoalRegion::contains(const ConstVectorRef& x) const {
  const auto d = x.head(center.size()) - center;
  if (kind == Kind::ball) return d.norm() < radius;
  return (d.array().abs() < half_width.array()).all();
}

bool GoalRegion::contains_ball(const ConstVectorRef& p, double eps) const {
  const auto d = p.head(center.size()) - center;
  if (kind == Kind::ball) return d.norm() + eps <= radius;
  return ((d.array().abs() + eps) <= half_width.array()).all();
}

void GoalSpec::validate() const {
  if (!(uncertainty.epsilon > 0.0)) throw ConfigError("localization radius epsilon must be positive");
  if (!region.contains_ball(region.center, uncertainty.epsilon))
    throw ConfigError("the epsilon ball does not fit inside the goal region");
}

double GoalSpec::uncertainty_of(const ParticleBelief& b) const {
  if (uncertainty_override) return uncertainty_override(b);
  return uncertainty_measure(b, uncertainty);
}

bool GoalSpec::localized(const ParticleBelief& b) const { return uncertainty_of(b) <= 0.0; }

bool GoalSpec::in_goal_set(const ParticleBelief& b) const {
  return localized(b) && region.contains_ball(mean(b), uncertainty.epsilon);
}

double GoalSpec::reward(const ParticleBelief& b) const {
  const double r = uncertainty_of(b);
  if (r <= 0.0) return 0.0;
  return flat_reward ? -1.0 : -1.0 - r;
}

double reward(const ParticleBelief& b, const UncertaintySpec& spec) {
  const double r = uncertainty_measure(b, spec);
  return r <= 0.0 ? 0.0 : -1.0 - r;
}

double bclf_value(const QNetwork& q, const ParticleBelief& b) { return -q_values(q, b).maxCoeff(); }

double expected_next_value(double q_value, double reward, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("discount must lie in (0, 1)");
  return (reward - q_value) / gamma;
}

double expected_next_value(const QNetwork& q, const ParticleBelief& b, std::size_t action, double reward,
                           double gamma) {
  const Vector v = q_values(q, b);
  if (action >= static_cast<std::size_t>(v.size())) throw std::out_of_range("action index out of range");
  return expected_next_value(v[static_cast<Eigen::Index>(action)], reward, gamma);
}

bool decrease_admissible(double w, double expected_next, const BclfMode& mode) {
  if (mode.kind == BclfMode::Kind::asymptotic) return expected_next <= mode.c * w;
  return expected_next - w <= -std::min(w, mode.eta);
}

bool decrease_admissible(const QNetwork& q, const ParticleBelief& b, std::size_t action, const BclfMode& mode,
                         double reward, double gamma) {
  const Vector v = q_values(q, b);
  if (action >= static_cast<std::size_t>(v.size())) throw std::out_of_range("action index out of range");
  return decrease_admissible(-v.maxCoeff(), expected_next_value(v[static_cast<Eigen::Index>(action)], reward, gamma),
                             mode);
}

const char* to_string(IgStatus status) noexcept {
  switch (status) {
    case IgStatus::reference:
      return "reference";
    case IgStatus::gathering:
      return "gathering";
    case IgStatus::forced:
      return "forced";
  }
  return "unknown";
}

namespace {

std::size_t argmax_first(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

}  // namespace

std::size_t greedy_action(const QNetwork& q, const ParticleBelief& b) { return argmax_first(q_values(q, b)); }

std::size_t steepest_descent_action(const QNetwork& q, const ParticleBelief& b, double reward, double gamma) {
  const Vector v = q_values(q, b);
  std::size_t best = 0;
  double best_e = expected_next_value(v[0], reward, gamma);
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    const double e = expected_next_value(v[i], reward, gamma);
    if (e < best_e) {
      best_e = e;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

IgResult ig_control(const QNetwork& q, const ParticleBelief& b, const GoalSpec& goal, const BclfMode& mode,
                    const std::vector<Vector>& actions, double gamma) {
  if (actions.empty()) throw std::invalid_argument("action set is empty");
  if (actions.size() != q.action_count()) throw ShapeError("action set does not match the network head");
  IgResult out;
  const Vector u_ref = goal.reference(mean(b));
  out.uncertainty = goal.uncertainty_of(b);
  const Vector v = q_values(q, b);
  out.w = -v.maxCoeff();
  if (out.uncertainty <= 0.0) {
    out.u = u_ref;
    out.status = IgStatus::reference;
    return out;
  }
  const double r = goal.reward(b);
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < actions.size(); ++a) {
    const double e = expected_next_value(v[static_cast<Eigen::Index>(a)], r, gamma);
    if (!decrease_admissible(out.w, e, mode)) continue;
    ++out.admissible_count;
    const double dist = (actions[a] - u_ref).norm();
    if (dist < best_dist) {
      best_dist = dist;
      out.action = a;
    }
  }
  if (out.admissible_count > 0) {
    out.status = IgStatus::gathering;
  } else {
    out.status = IgStatus::forced;
    out.action = steepest_descent_action(q, b, r, gamma);
  }
  out.u = actions[out.action];
  return out;
}

Vector switching_control(const QNetwork& q, const ParticleBelief& b, const GoalSpec& goal,
                         const std::vector<Vector>& actions) {
  if (actions.size() != q.action_count()) throw ShapeError("action set does not match the network head");
  if (goal.localized(b)) return goal.reference(mean(b));
  return actions[greedy_action(q, b)];
}

bool stagnation_monitor(const std::vector<double>& times, const std::vector<double>& values, double window,
                        double tol) {
  if (times.size() != values.size()) throw ShapeError("stagnation history lengths differ");
  if (times.empty() || !(window > 0.0)) return false;
  const double start = times.back() - window;
  // Last sample at or before the window start.
  auto it = std::upper_bound(times.begin(), times.end(), start);
  if (it == times.begin()) return false;
  const auto ref = static_cast<std::size_t>(std::distance(times.begin(), it) - 1);
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t i = ref + 1; i < values.size(); ++i) lowest = std::min(lowest, values[i]);
  if (!std::isfinite(lowest)) return false;
  return lowest >= values[ref] - tol;
}

TheoryBounds theory_bounds(double gamma, double r_max, double w_max, double eta) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("discount must lie in (0, 1)");
  if (!(r_max < 0.0)) throw std::invalid_argument("R_max must be negative");
  if (!(w_max > 0.0)) throw std::invalid_argument("W_max must be positive");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  TheoryBounds t;
  t.c_min = (1.0 + r_max / w_max) / gamma;
  t.asymptotic_w_cap = std::abs(r_max) / (1.0 - gamma);
  t.finite_w_cap = (std::abs(r_max) - gamma * eta) / (1.0 - gamma);
  t.asymptotic_valid = w_max < t.asymptotic_w_cap;
  t.finite_valid = w_max < t.finite_w_cap;
  return t;
}

long long settling_time_bound(double w0, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(w0 > 0.0)) return 0;
  const double q = w0 / eta;
  const double nearest = std::round(q);
  if (std::abs(q - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<long long>(nearest);
  return static_cast<long long>(std::ceil(q));
}

const AuditRow& AuditReport::row(const std::string& condition) const {
  for (const auto& r : rows) {
    if (r.condition == condition) return r;
  }
  throw std::out_of_range("no audit row " + condition);
}

AuditReport certificate_audit(const QNetwork& q, const BeliefMdp& mdp, const AuditOptions& options,
                              std::size_t n_samples, Rng& rng) {
  if (n_samples == 0) throw std::invalid_argument("audit needs at least one sample");
  if (options.next_draws == 0) throw std::invalid_argument("audit needs at least one next-belief draw");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  AuditReport report;
  std::size_t in_nonpos = 0, off_nonpos = 0, in_pos = 0, off_pos = 0;
  std::size_t asym_ok = 0, finite_ok = 0, reached = 0, reached_in_bound = 0;
  report.w_max = -std::numeric_limits<double>::infinity();

  for (std::size_t s = 0; s < n_samples; ++s) {
    const MdpState start = mdp.sample_random(rng);
    const double w = bclf_value(q, start.belief);
    report.w_max = std::max(report.w_max, w);
    if (mdp.terminal(start.belief)) {
      ++report.in_goal;
      if (w <= 0.0) ++in_nonpos; else ++in_pos;
      continue;
    }
    ++report.off_goal;
    if (w <= 0.0) ++off_nonpos; else ++off_pos;

    const std::size_t a = greedy_action(q, start.belief);
    double sum = 0.0;
    for (std::size_t d = 0; d < options.next_draws; ++d) sum += bclf_value(q, mdp.step(start, a, rng).next.belief);
    const double next = sum / static_cast<double>(options.next_draws);
    if (next <= options.c * w) ++asym_ok;
    if (next - w <= -std::min(w, options.eta)) ++finite_ok;

    MdpState state = start;
    std::size_t steps = 0;
    bool done = false;
    while (steps < options.max_steps) {
      state = mdp.step(state, greedy_action(q, state.belief), rng).next;
      ++steps;
      if (mdp.terminal(state.belief)) {
        done = true;
        break;
      }
    }
    if (done) {
      ++reached;
      if (static_cast<long long>(steps) <= settling_time_bound(w, options.eta)) ++reached_in_bound;
    }
  }

  auto frac = [](std::size_t num, std::size_t den) {
    return den == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(num) / static_cast<double>(den);
  };
  const std::size_t in = report.in_goal, off = report.off_goal;
  report.rows.push_back({"w_nonpositive_in_goal", frac(in_nonpos, in), frac(off_nonpos, off), in});
  report.rows.push_back({"w_positive_off_goal", frac(off_pos, off), frac(in_pos, in), off});
  report.rows.push_back({"asymptotic_decrease", frac(asym_ok, off), nan, off});
  report.rows.push_back({"finite_time_decrease", frac(finite_ok, off), nan, off});
  report.rows.push_back({"reach_goal", frac(reached, off), nan, off});
  report.rows.push_back({"reach_within_settling_bound", frac(reached_in_bound, off), nan, off});
  return report;
}

void write_audit_csv(std::ostream& out, const AuditReport& report) {
  out << "condition,tpr,fpr,n\n";
  auto num = [&](double v) {
    if (std::isnan(v))
      out << "nan";
    else
      out << std::setprecision(6) << v;
  };
  for (const auto& r : report.rows) {
    out << r.condition << ',';
    num(r.tpr);
    out << ',';
    num(r.fpr);
    out << ',' << r.n << '\n';
  }
}

}  // namespace bsc
