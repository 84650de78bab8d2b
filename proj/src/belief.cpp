#include "bsc/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>
#include <vector>

namespace bsc {

ParticleBelief::ParticleBelief(Matrix states) : states_(std::move(states)) {
  if (states_.cols() < 1 || states_.rows() < 1) throw ShapeError("belief needs at least one particle of dim >= 1");
}

ParticleBelief ParticleBelief::from_rows(const Matrix& rows) { return ParticleBelief(rows.transpose()); }

MotionModel MotionModel::single_integrator(std::size_t dim, double sigma) {
  MotionModel m;
  m.state_dim = m.control_dim = m.noise_dim = dim;
  m.drift = [](const ConstVectorRef&, VectorRef out) { out.setZero(); };
  m.control_gain = [](const ConstVectorRef&, MatrixRef out) { out.setIdentity(); };
  m.diffusion = [sigma](const ConstVectorRef&, MatrixRef out) {
    out.setZero();
    out.diagonal().setConstant(sigma);
  };
  return m;
}

MotionModel MotionModel::double_integrator(std::size_t dim, double sigma_position, double sigma_velocity) {
  MotionModel m;
  m.state_dim = 2 * dim;
  m.control_dim = dim;
  m.noise_dim = 2 * dim;
  const auto d = static_cast<Eigen::Index>(dim);
  m.drift = [d](const ConstVectorRef& x, VectorRef out) {
    out.head(d) = x.tail(d);
    out.tail(d).setZero();
  };
  m.control_gain = [d](const ConstVectorRef&, MatrixRef out) {
    out.setZero();
    out.bottomRows(d).setIdentity();
  };
  m.diffusion = [d, sigma_position, sigma_velocity](const ConstVectorRef&, MatrixRef out) {
    out.setZero();
    out.diagonal().head(d).setConstant(sigma_position);
    out.diagonal().tail(d).setConstant(sigma_velocity);
  };
  return m;
}

Vector MotionModel::velocity(const ConstVectorRef& x, const ConstVectorRef& u) const {
  Vector f(state_dim);
  Matrix g(state_dim, control_dim);
  drift(x, f);
  control_gain(x, g);
  return f + g * u;
}

double ObservationModel::likelihood(const ConstVectorRef& z, const ConstVectorRef& x) const {
  return std::exp(log_likelihood(z, x));
}

namespace {

struct StepScratch {
  Vector f, w;
  Matrix g, sigma;

  explicit StepScratch(const MotionModel& m)
      : f(m.state_dim), w(m.noise_dim), g(m.state_dim, m.control_dim), sigma(m.state_dim, m.noise_dim) {}
};

void step_particle(VectorRef x, const MotionModel& m, const ConstVectorRef& u, double dt, double sqrt_dt, Rng& rng,
                   StepScratch& s) {
  m.drift(x, s.f);
  m.control_gain(x, s.g);
  m.diffusion(x, s.sigma);
  for (Eigen::Index j = 0; j < s.w.size(); ++j) s.w[j] = rng.normal();
  x.noalias() += dt * s.f;
  x.noalias() += dt * (s.g * u);
  x.noalias() += sqrt_dt * (s.sigma * s.w);
  if (m.project) m.project(x);
}

void check_model(const MotionModel& m, std::size_t state_dim, Eigen::Index control_size) {
  if (m.state_dim != state_dim) throw ShapeError("motion model state dim does not match belief");
  if (static_cast<Eigen::Index>(m.control_dim) != control_size) throw ShapeError("control dim mismatch");
}

}  // namespace

void euler_step(VectorRef x, const MotionModel& model, const ConstVectorRef& u, double dt, Rng& rng) {
  check_model(model, static_cast<std::size_t>(x.size()), u.size());
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  StepScratch scratch(model);
  const std::size_t substeps = std::max<std::size_t>(1, model.substeps);
  const double h = dt / static_cast<double>(substeps);
  for (std::size_t k = 0; k < substeps; ++k) step_particle(x, model, u, h, std::sqrt(h), rng, scratch);
}

void propagate_inplace(ParticleBelief& belief, const MotionModel& model, const ConstVectorRef& u, double dt,
                       NoiseStream& noise, std::size_t workers) {
  check_model(model, belief.state_dim(), u.size());
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const std::size_t substeps = std::max<std::size_t>(1, model.substeps);
  const double h = dt / static_cast<double>(substeps);
  const double sqrt_h = std::sqrt(h);
  const std::size_t n = belief.size();
  workers = std::clamp<std::size_t>(workers, 1, n);

  for (std::size_t k = 0; k < substeps; ++k) {
    const std::uint64_t step = noise.step++;
    auto run = [&](std::size_t begin, std::size_t end) {
      StepScratch scratch(model);
      for (std::size_t i = begin; i < end; ++i) {
        Rng rng = Rng::keyed(noise.seed, step, i);
        step_particle(belief.particle(i), model, u, h, sqrt_h, rng, scratch);
      }
    };
    if (workers == 1) {
      run(0, n);
    } else {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (n + workers - 1) / workers;
      for (std::size_t begin = 0; begin < n; begin += chunk) pool.emplace_back(run, begin, std::min(n, begin + chunk));
    }
  }

  const Matrix& s = belief.states();
  for (Eigen::Index i = 0; i < s.cols(); ++i) {
    if (!s.col(i).allFinite()) throw NumericalError("non-finite particle after propagation", static_cast<std::size_t>(i));
  }
}

ParticleBelief propagate(const ParticleBelief& belief, const MotionModel& model, const ConstVectorRef& u, double dt,
                         NoiseStream& noise, std::size_t workers) {
  ParticleBelief out = belief;
  propagate_inplace(out, model, u, dt, noise, workers);
  return out;
}

std::vector<std::size_t> systematic_resample(const std::vector<double>& weights, Rng& rng) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> idx(n);
  if (n == 0) return idx;

  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) throw DegenerateUpdateError("all particle weights are zero");

  // Equal weights select every index exactly once; handled explicitly so the
  // identity does not depend on floating-point accumulation.
  if (std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights.front(); })) {
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }

  const double step = total / static_cast<double>(n);
  const double offset = rng.uniform() * step;
  double cumulative = weights[0];
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double pointer = offset + static_cast<double>(k) * step;
    while (pointer >= cumulative && j + 1 < n) cumulative += weights[++j];
    idx[k] = j;
  }
  return idx;
}

ParticleBelief measurement_update(const ParticleBelief& belief, const ObservationModel& obs, const ConstVectorRef& z,
                                  Rng& rng) {
  const std::size_t n = belief.size();
  std::vector<double> logw(n);
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    logw[i] = obs.log_likelihood(z, belief.particle(i));
    if (std::isnan(logw[i])) throw NumericalError("NaN log-likelihood", i);
    max_log = std::max(max_log, logw[i]);
  }
  if (!std::isfinite(max_log)) throw DegenerateUpdateError("measurement has zero likelihood under every particle");

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(logw[i] - max_log);

  const auto idx = systematic_resample(w, rng);
  Matrix out(belief.state_dim(), n);
  for (std::size_t k = 0; k < n; ++k) out.col(static_cast<Eigen::Index>(k)) = belief.particle(idx[k]);
  return ParticleBelief(std::move(out));
}

Vector mean(const ParticleBelief& belief) { return belief.states().rowwise().mean(); }

double entropy_diagnostic(const ParticleBelief& belief) { return std::log(static_cast<double>(belief.size())); }

void write_belief_csv(std::ostream& out, const ParticleBelief& belief) {
  out << "particle_index";
  for (std::size_t j = 0; j < belief.state_dim(); ++j) out << ",x" << j;
  out << '\n';
  const auto old = out.precision(17);
  for (std::size_t i = 0; i < belief.size(); ++i) {
    out << i;
    for (std::size_t j = 0; j < belief.state_dim(); ++j) out << ',' << belief.particle(i)[static_cast<Eigen::Index>(j)];
    out << '\n';
  }
  out.precision(old);
}

}  // namespace bsc
