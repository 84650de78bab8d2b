#include "bsc/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace bsc {

BarrierFunction BarrierFunction::affine(const Vector& normal, double offset) {
  BarrierFunction h;
  h.dim = static_cast<std::size_t>(normal.size());
  h.value = [normal, offset](const ConstVectorRef& x) { return offset + normal.dot(x); };
  h.evaluate = [normal, offset](const ConstVectorRef& x, BarrierEval& out) {
    out.value = offset + normal.dot(x);
    out.gradient = normal;
    out.hessian.setZero(normal.size(), normal.size());
  };
  return h;
}

BarrierFunction BarrierFunction::ball_exterior(const Vector& center, double radius, std::size_t dim) {
  const Eigen::Index k = center.size();
  const auto n = static_cast<Eigen::Index>(dim);
  BarrierFunction h;
  h.dim = dim;
  h.value = [center, radius, k](const ConstVectorRef& x) { return (x.head(k) - center).norm() - radius; };
  h.evaluate = [center, radius, k, n](const ConstVectorRef& x, BarrierEval& out) {
    const Vector d = x.head(k) - center;
    const double r = std::max(d.norm(), 1e-12);
    out.value = r - radius;
    out.gradient.setZero(n);
    out.gradient.head(k) = d / r;
    out.hessian.setZero(n, n);
    out.hessian.topLeftCorner(k, k) = (Matrix::Identity(k, k) - d * d.transpose() / (r * r)) / r;
  };
  return h;
}

BarrierEval BarrierFunction::eval(const ConstVectorRef& x) const {
  BarrierEval out;
  evaluate(x, out);
  return out;
}

HistoryState init_history(const ParticleBelief& belief, const SafetySpec& spec) {
  HistoryState history{Vector(static_cast<Eigen::Index>(belief.size()))};
  for (std::size_t i = 0; i < belief.size(); ++i) history.xi[static_cast<Eigen::Index>(i)] = spec.h.value(belief.particle(i));
  return history;
}

void update_history_inplace(HistoryState& history, const ParticleBelief& belief, const SafetySpec& spec) {
  if (static_cast<std::size_t>(history.xi.size()) != belief.size()) throw ShapeError("history length does not match belief");
  for (std::size_t i = 0; i < belief.size(); ++i) {
    auto& xi = history.xi[static_cast<Eigen::Index>(i)];
    xi = std::min(xi, spec.h.value(belief.particle(i)));
  }
}

HistoryState update_history(const HistoryState& history, const ParticleBelief& belief, const SafetySpec& spec) {
  HistoryState out = history;
  update_history_inplace(out, belief, spec);
  return out;
}

TopPSelection top_p_select(const HistoryState& history, RiskLevel delta_bar) {
  const auto n = static_cast<std::size_t>(history.xi.size());
  TopPSelection sel;
  sel.p = conformal_rank(n, delta_bar);
  const std::size_t keep = std::min(sel.p, n);
  // Ascending (rho, index) with rho = -xi: descending xi, ties to the lower index.
  std::vector<std::pair<double, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) keyed[i] = {-history.xi[static_cast<Eigen::Index>(i)], i};
  if (keep < n) std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(keep), keyed.end());
  std::sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(keep));
  sel.indices.resize(keep);
  for (std::size_t i = 0; i < keep; ++i) sel.indices[i] = keyed[i].second;
  sel.bound = sel.p > n ? std::numeric_limits<double>::infinity()
                        : -history.xi[static_cast<Eigen::Index>(sel.indices.back())];
  return sel;
}

namespace {

struct RowScratch {
  BarrierEval h;
  Vector f, grad_b;
  Matrix g, sigma, hess_b, hess_sigma;

  explicit RowScratch(const MotionModel& m)
      : f(m.state_dim), g(m.state_dim, m.control_dim), sigma(m.state_dim, m.noise_dim) {}
};

// Gradient and Hessian of B = 1/h from those of h.
void reciprocal_derivatives(RowScratch& s) {
  const double h = s.h.value;
  s.grad_b.noalias() = (-1.0 / (h * h)) * s.h.gradient;
  s.hess_b.noalias() = (2.0 / (h * h * h)) * (s.h.gradient * s.h.gradient.transpose());
  s.hess_b.noalias() -= (1.0 / (h * h)) * s.h.hessian;
}

// tr(sigma^T H sigma) without forming the product.
double ito_trace(RowScratch& s) {
  s.hess_sigma.noalias() = s.hess_b * s.sigma;
  return s.hess_sigma.cwiseProduct(s.sigma).sum();
}

// Expects s.h already evaluated at x with a positive value.
QpRow row_from_eval(const ConstVectorRef& x, const MotionModel& model, const SafetySpec& spec, RowScratch& s) {
  reciprocal_derivatives(s);
  model.drift(x, s.f);
  model.control_gain(x, s.g);
  model.diffusion(x, s.sigma);
  QpRow row;
  row.a.noalias() = s.g.transpose() * s.grad_b;
  const double ito = 0.5 * ito_trace(s);
  row.b = spec.alpha3_gain * s.h.value - s.grad_b.dot(s.f) - ito;
  return row;
}

QpRow row_with_scratch(const ConstVectorRef& x, const MotionModel& model, const SafetySpec& spec, RowScratch& s) {
  spec.h.evaluate(x, s.h);
  if (!(s.h.value > 0.0)) throw SingularBarrierError("reciprocal barrier is singular at h <= 0");
  return row_from_eval(x, model, spec, s);
}

}  // namespace

QpRow rcbf_row(const ConstVectorRef& x, const MotionModel& model, const SafetySpec& spec) {
  RowScratch scratch(model);
  return row_with_scratch(x, model, spec, scratch);
}

double rcbf_generator(const ConstVectorRef& x, const ConstVectorRef& u, const MotionModel& model,
                      const BarrierFunction& h) {
  RowScratch s(model);
  h.evaluate(x, s.h);
  if (!(s.h.value > 0.0)) throw SingularBarrierError("reciprocal barrier is singular at h <= 0");
  reciprocal_derivatives(s);
  model.drift(x, s.f);
  model.control_gain(x, s.g);
  model.diffusion(x, s.sigma);
  return s.grad_b.dot(s.f + s.g * u) + 0.5 * ito_trace(s);
}

const char* to_string(FilterStatus status) noexcept {
  switch (status) {
    case FilterStatus::ok:
      return "ok";
    case FilterStatus::slack:
      return "slack";
    case FilterStatus::fault:
      return "fault";
  }
  return "unknown";
}

FilterResult safety_filter(const ParticleBelief& belief, const HistoryState& history, const ConstVectorRef& u_ig,
                           const MotionModel& model, const SafetySpec& spec, QpSolver& solver) {
  FilterResult result;
  auto& report = result.report;

  const TopPSelection sel = top_p_select(history, spec.delta_bar);
  report.p = sel.p;
  report.bound = sel.bound;
  report.guaranteed = sel.guaranteed(belief.size());

  QpProblem problem;
  problem.u0 = u_ig;
  problem.bounds = spec.control_bounds;
  problem.use_slack = true;
  problem.rows.reserve(sel.indices.size());
  RowScratch scratch(model);
  for (std::size_t i : sel.indices) {
    const auto x = belief.particle(i);
    spec.h.evaluate(x, scratch.h);
    if (!(scratch.h.value > 0.0)) {
      ++report.n_unsafe_selected;
      continue;
    }
    QpRow row = row_from_eval(x, model, spec, scratch);
    row.id = i;
    problem.rows.push_back(std::move(row));
  }
  report.n_rows = problem.rows.size();

  const QpSolution sol = solver.solve(problem);
  report.qp_status = sol.status;
  report.n_active = sol.active_set.size();
  report.slack = sol.slack;
  if (sol.status == QpStatus::infeasible || !sol.u.allFinite()) {
    report.status = FilterStatus::fault;
    result.u = spec.control_bounds.clip(Vector::Zero(u_ig.size()));
    return result;
  }
  report.status = sol.slack > 1e-9 ? FilterStatus::slack : FilterStatus::ok;
  result.u = sol.u;
  return result;
}

RiskLevel interval_risk(RiskLevel delta_a, std::size_t intervals) {
  if (intervals < 1) throw std::invalid_argument("interval count must be >= 1");
  // 1 - (1 - delta)^(1/M), evaluated without cancellation.
  return RiskLevel(-std::expm1(std::log1p(-delta_a.value()) / static_cast<double>(intervals)));
}

BarrierFunction smooth_set(std::vector<BarrierFunction> parts, SmoothKind kind, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_set sharpness must be positive");
  if (parts.empty()) throw std::invalid_argument("smooth_set needs at least one function");
  const std::size_t dim = parts.front().dim;
  for (const auto& p : parts) {
    if (p.dim != dim) throw ShapeError("smooth_set parts must share a dimension");
  }
  // Signed sharpness: min uses exp(-beta h), max uses exp(+beta h).
  const double s = kind == SmoothKind::min ? -beta : beta;
  const double shift = kind == SmoothKind::max ? std::log(static_cast<double>(parts.size())) / beta : 0.0;

  BarrierFunction out;
  out.dim = dim;
  out.value = [parts, s, shift](const ConstVectorRef& x) {
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> v(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      v[i] = s * parts[i].value(x);
      top = std::max(top, v[i]);
    }
    double sum = 0.0;
    for (double vi : v) sum += std::exp(vi - top);
    return (top + std::log(sum)) / s - shift;
  };
  out.evaluate = [parts, s, shift, dim](const ConstVectorRef& x, BarrierEval& res) {
    const auto n = static_cast<Eigen::Index>(dim);
    std::vector<BarrierEval> e(parts.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < parts.size(); ++i) {
      parts[i].evaluate(x, e[i]);
      top = std::max(top, s * e[i].value);
    }
    std::vector<double> w(parts.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      w[i] = std::exp(s * e[i].value - top);
      sum += w[i];
    }
    res.value = (top + std::log(sum)) / s - shift;
    res.gradient.setZero(n);
    res.hessian.setZero(n, n);
    Matrix outer = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      w[i] /= sum;
      res.gradient.noalias() += w[i] * e[i].gradient;
      res.hessian.noalias() += w[i] * e[i].hessian;
      outer.noalias() += w[i] * (e[i].gradient * e[i].gradient.transpose());
    }
    // d2/dx2 of (1/s) log sum exp(s h_i) = sum w_i H_i + s (sum w_i g_i g_i^T - gbar gbar^T)
    res.hessian.noalias() += s * (outer - res.gradient * res.gradient.transpose());
  };
  return out;
}

}  // namespace bsc
