#pragma once

#include "bsc/rng.hpp"
#include "bsc/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>

namespace bsc {

/// Unweighted particle approximation of the state posterior.
///
/// Particles are stored column-wise (state_dim x size) so each particle is a
/// contiguous column. Weights only exist transiently inside a measurement
/// update; between updates every particle carries mass 1/N.
class ParticleBelief {
 public:
  ParticleBelief() = default;
  explicit ParticleBelief(Matrix states);

  /// Builds a belief from an N x n_x matrix with one particle per row.
  static ParticleBelief from_rows(const Matrix& rows);

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(states_.cols()); }
  [[nodiscard]] std::size_t state_dim() const noexcept { return static_cast<std::size_t>(states_.rows()); }

  [[nodiscard]] auto particle(std::size_t i) const { return states_.col(static_cast<Eigen::Index>(i)); }
  [[nodiscard]] auto particle(std::size_t i) { return states_.col(static_cast<Eigen::Index>(i)); }

  [[nodiscard]] const Matrix& states() const noexcept { return states_; }
  [[nodiscard]] Matrix& states() noexcept { return states_; }

 private:
  Matrix states_;
};

/// Control-affine SDE dx = (f(x) + g(x) u) dt + sigma(x) dW.
struct MotionModel {
  std::size_t state_dim = 0;
  std::size_t control_dim = 0;
  std::size_t noise_dim = 0;
  std::function<void(const ConstVectorRef&, VectorRef)> drift;          // f, n_x
  std::function<void(const ConstVectorRef&, MatrixRef)> control_gain;   // g, n_x x m
  std::function<void(const ConstVectorRef&, MatrixRef)> diffusion;      // sigma, n_x x q
  /// Optional map applied after every Euler step (e.g. wall contact).
  std::function<void(VectorRef)> project;
  /// Euler sub-steps per propagate call.
  std::size_t substeps = 1;

  /// dx = u dt + sigma dW with u, W of the same dimension as x.
  static MotionModel single_integrator(std::size_t dim, double sigma);
  /// d[p; v] = [v; u] dt + diag(sigma_p, sigma_v) dW with p, v, u in R^dim.
  static MotionModel double_integrator(std::size_t dim, double sigma_position, double sigma_velocity);

  /// Drift f(x) + g(x) u evaluated at one state.
  [[nodiscard]] Vector velocity(const ConstVectorRef& x, const ConstVectorRef& u) const;
};

/// Measurement model z = l(x, v).
struct ObservationModel {
  std::function<Vector(const ConstVectorRef&, Rng&)> sample;
  /// log p(z | x); -infinity encodes an impossible measurement.
  std::function<double(const ConstVectorRef&, const ConstVectorRef&)> log_likelihood;

  [[nodiscard]] double likelihood(const ConstVectorRef& z, const ConstVectorRef& x) const;
};

/// Counter-based noise source for particle propagation. Particle i at step k
/// draws from the stream keyed by (seed, k, i), so results do not depend on
/// how the particles are split across workers.
struct NoiseStream {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Thrown when every particle has zero likelihood for a measurement.
class DegenerateUpdateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Euler-Maruyama step of every particle; advances noise.step once per sub-step.
ParticleBelief propagate(const ParticleBelief& belief, const MotionModel& model, const ConstVectorRef& u,
                         double dt, NoiseStream& noise, std::size_t workers = 1);

/// In-place variant used on hot paths.
void propagate_inplace(ParticleBelief& belief, const MotionModel& model, const ConstVectorRef& u, double dt,
                       NoiseStream& noise, std::size_t workers = 1);

/// Single-state Euler-Maruyama step with an explicit generator (truth simulation).
void euler_step(VectorRef x, const MotionModel& model, const ConstVectorRef& u, double dt, Rng& rng);

/// Likelihood weighting followed by low-variance (systematic) resampling.
ParticleBelief measurement_update(const ParticleBelief& belief, const ObservationModel& obs,
                                  const ConstVectorRef& z, Rng& rng);

/// Systematic resampling indices for nonnegative weights (need not be normalized).
std::vector<std::size_t> systematic_resample(const std::vector<double>& weights, Rng& rng);

Vector mean(const ParticleBelief& belief);

/// ln N: the entropy of an unweighted particle set, independent of where the
/// particles are.
double entropy_diagnostic(const ParticleBelief& belief);

/// CSV with header particle_index,x0,...,x{n-1}.
void write_belief_csv(std::ostream& out, const ParticleBelief& belief);

}  // namespace bsc
