#include "bsc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bsc {

Vector BoxBounds::clip(const ConstVectorRef& u) const {
  if (empty()) return u;
  return u.cwiseMax(lower).cwiseMin(upper);
}

bool BoxBounds::contains(const ConstVectorRef& u, double tol) const {
  if (empty()) return true;
  return ((u - lower).array() >= -tol).all() && ((upper - u).array() >= -tol).all();
}

const char* to_string(QpStatus status) noexcept {
  switch (status) {
    case QpStatus::optimal:
      return "optimal";
    case QpStatus::max_iter:
      return "max_iter";
    case QpStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

double QpSolution::objective(const QpProblem& problem) const {
  double value = 0.5 * (u - problem.u0).squaredNorm();
  if (problem.use_slack) value += problem.slack_weight * slack * slack;
  return value;
}

namespace {

constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

// Constraint n^T x >= beta in the stacked variable x = (u, s).
struct Constraints {
  Matrix normals;                  // n x K
  Vector beta;                     // K
  std::vector<std::size_t> row;    // originating problem row or kNoRow
  std::vector<double> scale;       // normalization applied to the problem row
  std::vector<std::size_t> ids;    // warm-start ids
};

bool rows_equal(const QpRow& x, const QpRow& y) { return x.b == y.b && x.a == y.a; }

bool rows_less(const QpRow& x, const QpRow& y) {
  if (x.b != y.b) return x.b < y.b;
  for (Eigen::Index j = 0; j < x.a.size(); ++j) {
    if (x.a[j] != y.a[j]) return x.a[j] < y.a[j];
  }
  return false;
}

}  // namespace

QpSolution QpSolver::solve(const QpProblem& problem) {
  const Eigen::Index m = problem.u0.size();
  const Eigen::Index n = m + (problem.use_slack ? 1 : 0);
  const double tol = options_.tolerance;

  QpSolution sol;
  sol.multipliers.assign(problem.rows.size(), 0.0);
  sol.u = problem.u0;

  if (!problem.bounds.empty() &&
      (problem.bounds.lower.size() != m || problem.bounds.upper.size() != m ||
       (problem.bounds.lower.array() > problem.bounds.upper.array()).any())) {
    throw ShapeError("invalid box bounds for QP");
  }
  for (const auto& r : problem.rows) {
    if (r.a.size() != m) throw ShapeError("QP row dimension mismatch");
    if (!r.a.allFinite() || !std::isfinite(r.b)) throw NumericalError("non-finite QP row", r.id);
  }

  // Deduplicate rows by exact coefficient match.
  std::vector<std::size_t> order(problem.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (rows_less(problem.rows[i], problem.rows[j])) return true;
    if (rows_less(problem.rows[j], problem.rows[i])) return false;
    return i < j;
  });
  std::vector<std::size_t> unique_rows;
  unique_rows.reserve(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && rows_equal(problem.rows[order[k]], problem.rows[order[k - 1]])) continue;
    unique_rows.push_back(order[k]);
  }
  std::sort(unique_rows.begin(), unique_rows.end());

  Constraints c;
  const std::size_t box_count = problem.bounds.empty() ? 0 : static_cast<std::size_t>(2 * m);
  const std::size_t capacity = unique_rows.size() + box_count + (problem.use_slack ? 1 : 0);
  c.normals.resize(n, static_cast<Eigen::Index>(capacity));
  c.beta.resize(static_cast<Eigen::Index>(capacity));
  c.row.reserve(capacity);
  c.scale.reserve(capacity);
  c.ids.reserve(capacity);
  Eigen::Index k = 0;
  auto push = [&](const auto& normal, double beta, std::size_t row, double scale, std::size_t id) {
    c.normals.col(k) = normal;
    c.beta[k] = beta;
    c.row.push_back(row);
    c.scale.push_back(scale);
    c.ids.push_back(id);
    ++k;
  };

  Vector normal(n);
  for (std::size_t i : unique_rows) {
    const auto& r = problem.rows[i];
    normal.setZero();
    normal.head(m) = -r.a;
    if (problem.use_slack) normal[m] = 1.0;
    const double norm = normal.norm();
    if (norm == 0.0) {
      if (r.b < 0.0) {
        sol.status = QpStatus::infeasible;
        return sol;
      }
      continue;
    }
    push(normal / norm, -r.b / norm, i, norm, r.id);
  }
  if (problem.use_slack) {
    normal.setZero();
    normal[m] = 1.0;
    push(normal, 0.0, kNoRow, 1.0, kNoRow);
  }
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(box_count / 2); ++j) {
    normal.setZero();
    normal[j] = 1.0;
    push(normal, problem.bounds.lower[j], kNoRow, 1.0, kNoRow);
    normal[j] = -1.0;
    push(normal, -problem.bounds.upper[j], kNoRow, 1.0, kNoRow);
  }
  const Eigen::Index count = k;

  Vector g_inv = Vector::Ones(n);
  if (problem.use_slack) g_inv[m] = 1.0 / (2.0 * problem.slack_weight);
  Vector x = Vector::Zero(n);
  x.head(m) = problem.u0;

  std::vector<Eigen::Index> active;
  std::vector<double> lambda;
  std::vector<char> is_active(static_cast<std::size_t>(count), 0);
  std::vector<char> is_warm(static_cast<std::size_t>(count), 0);
  if (!warm_ids_.empty()) {
    std::vector<std::size_t> warm = warm_ids_;
    std::sort(warm.begin(), warm.end());
    for (Eigen::Index j = 0; j < count; ++j) {
      const std::size_t id = c.ids[static_cast<std::size_t>(j)];
      if (id != kNoRow && std::binary_search(warm.begin(), warm.end(), id)) is_warm[static_cast<std::size_t>(j)] = 1;
    }
  }

  auto slack_of = [&](Eigen::Index j) { return c.normals.col(j).dot(x) - c.beta[j]; };

  sol.status = QpStatus::max_iter;
  std::size_t iter = 0;
  bool done = false;
  bool infeasible = false;
  while (!done && iter < options_.max_iter) {
    // Pick the most violated inactive constraint, preferring warm-start rows.
    Eigen::Index p = -1;
    double worst = -tol;
    Eigen::Index p_warm = -1;
    double worst_warm = -tol;
    for (Eigen::Index j = 0; j < count; ++j) {
      if (is_active[static_cast<std::size_t>(j)]) continue;
      const double s = slack_of(j);
      if (s < worst) {
        worst = s;
        p = j;
      }
      if (is_warm[static_cast<std::size_t>(j)] && s < worst_warm) {
        worst_warm = s;
        p_warm = j;
      }
    }
    if (p_warm >= 0) p = p_warm;
    if (p < 0) {
      done = true;
      sol.status = QpStatus::optimal;
      break;
    }

    double lambda_p = 0.0;
    double s_p = slack_of(p);
    const Vector np = c.normals.col(p);
    const Vector ginv_np = g_inv.cwiseProduct(np);
    while (iter < options_.max_iter) {
      ++iter;
      const Eigen::Index q = static_cast<Eigen::Index>(active.size());
      Vector z = ginv_np;
      Vector r;
      if (q > 0) {
        Matrix na(n, q);
        for (Eigen::Index j = 0; j < q; ++j) na.col(j) = c.normals.col(active[static_cast<std::size_t>(j)]);
        const Matrix ginv_na = g_inv.asDiagonal() * na;
        const Matrix h = na.transpose() * ginv_na;
        r = h.ldlt().solve(na.transpose() * ginv_np);
        z.noalias() -= ginv_na * r;
      }

      double t1 = std::numeric_limits<double>::infinity();
      Eigen::Index drop = -1;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (r[j] > 0.0) {
          const double ratio = lambda[static_cast<std::size_t>(j)] / r[j];
          if (ratio < t1) {
            t1 = ratio;
            drop = j;
          }
        }
      }
      const double zn = z.dot(np);
      const double t2 = zn > 1e-14 * ginv_np.dot(np) ? -s_p / zn : std::numeric_limits<double>::infinity();
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        infeasible = true;
        break;
      }

      for (Eigen::Index j = 0; j < q; ++j) lambda[static_cast<std::size_t>(j)] -= t * r[j];
      lambda_p += t;
      if (std::isfinite(t2)) {
        x.noalias() += t * z;
        s_p = slack_of(p);
      }
      if (t2 <= t1) {
        active.push_back(p);
        lambda.push_back(lambda_p);
        is_active[static_cast<std::size_t>(p)] = 1;
        break;
      }
      is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(drop)])] = 0;
      active.erase(active.begin() + drop);
      lambda.erase(lambda.begin() + drop);
    }
    if (infeasible) break;
  }
  sol.iterations = iter;
  if (infeasible) sol.status = QpStatus::infeasible;

  sol.u = x.head(m);
  sol.slack = problem.use_slack ? std::max(0.0, x[m]) : 0.0;

  // KKT residual on the normalized constraints; stationarity is measured in
  // primal units so the heavy slack weight does not inflate it.
  Vector pull = Vector::Zero(n);
  double complementarity = 0.0;
  for (std::size_t j = 0; j < active.size(); ++j) {
    pull.noalias() += lambda[j] * c.normals.col(active[j]);
    complementarity = std::max(complementarity, std::min(1.0, std::abs(lambda[j])) * std::abs(slack_of(active[j])));
  }
  Vector stationarity = x - g_inv.cwiseProduct(pull);
  stationarity.head(m) -= problem.u0;
  double violation = 0.0;
  for (Eigen::Index j = 0; j < count; ++j) violation = std::max(violation, -slack_of(j));
  double dual_infeasibility = 0.0;
  for (double l : lambda) dual_infeasibility = std::max(dual_infeasibility, -l);
  sol.kkt_residual =
      std::max({stationarity.lpNorm<Eigen::Infinity>(), violation, complementarity, dual_infeasibility});
  if (sol.status == QpStatus::optimal && sol.kkt_residual > tol) sol.status = QpStatus::max_iter;

  warm_ids_.clear();
  for (std::size_t j = 0; j < active.size(); ++j) {
    const auto idx = static_cast<std::size_t>(active[j]);
    if (c.row[idx] == kNoRow) continue;
    sol.active_set.push_back(c.row[idx]);
    sol.multipliers[c.row[idx]] = lambda[j] / c.scale[idx];
    if (c.ids[idx] != kNoRow) warm_ids_.push_back(c.ids[idx]);
  }
  std::sort(sol.active_set.begin(), sol.active_set.end());
  return sol;
}

QpSolution solve(const QpProblem& problem, double tolerance, std::size_t max_iter) {
  QpSolver solver(QpOptions{tolerance, max_iter});
  return solver.solve(problem);
}

}  // namespace bsc
