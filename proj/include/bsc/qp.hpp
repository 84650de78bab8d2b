#pragma once

#include "bsc/types.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace bsc {

/// One affine inequality a^T u <= b.
struct QpRow {
  Vector a;
  double b = 0.0;
  /// Caller-chosen identity used for warm starts (e.g. particle index).
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

struct BoxBounds {
  Vector lower;
  Vector upper;

  [[nodiscard]] bool empty() const noexcept { return lower.size() == 0; }
  [[nodiscard]] Vector clip(const ConstVectorRef& u) const;
  [[nodiscard]] bool contains(const ConstVectorRef& u, double tol = 0.0) const;
};

/// min 1/2 ||u - u0||^2 + w s^2  s.t.  a_i^T u - s <= b_i, s >= 0, lower <= u <= upper.
/// Without slack the s terms vanish.
struct QpProblem {
  Vector u0;
  std::vector<QpRow> rows;
  BoxBounds bounds;
  bool use_slack = false;
  double slack_weight = 1e6;
};

enum class QpStatus { optimal, max_iter, infeasible };

const char* to_string(QpStatus status) noexcept;

struct QpSolution {
  Vector u;
  double slack = 0.0;
  QpStatus status = QpStatus::infeasible;
  double kkt_residual = std::numeric_limits<double>::infinity();
  /// Indices into problem.rows of constraints active at the solution.
  std::vector<std::size_t> active_set;
  /// Multipliers for problem.rows (zero when inactive), original scaling.
  std::vector<double> multipliers;
  std::size_t iterations = 0;

  [[nodiscard]] double objective(const QpProblem& problem) const;
};

struct QpOptions {
  double tolerance = 1e-8;
  std::size_t max_iter = 200;
};

/// Dual active-set solver for the small strictly convex QPs above. An
/// instance remembers which row ids were active in its last solve and tries
/// those first on the next call.
class QpSolver {
 public:
  explicit QpSolver(QpOptions options = {}) : options_(options) {}

  QpSolution solve(const QpProblem& problem);

  void reset_warm_start() { warm_ids_.clear(); }

 private:
  QpOptions options_;
  std::vector<std::size_t> warm_ids_;
};

/// Stateless convenience wrapper.
QpSolution solve(const QpProblem& problem, double tolerance = 1e-8, std::size_t max_iter = 200);

}  // namespace bsc
