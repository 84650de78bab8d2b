#pragma once

#include "bsc/belief.hpp"
#include "bsc/rng.hpp"

#include <cstddef>
#include <limits>

namespace bsc {

/// Simulation state of the belief MDP: the belief plus the hidden truth.
struct MdpState {
  ParticleBelief belief;
  Vector truth;
  /// Index of the particle the truth is tied to (two-particle system), else npos.
  std::size_t truth_index = std::numeric_limits<std::size_t>::max();
};

struct MdpTransition {
  MdpState next;
  double reward = 0.0;
  bool terminal = false;
};

/// Discrete-action belief MDP: one transition covers one measurement period.
class BeliefMdp {
 public:
  virtual ~BeliefMdp() = default;

  [[nodiscard]] virtual std::size_t action_count() const = 0;
  /// Episode start state used for training.
  [[nodiscard]] virtual MdpState sample_initial(Rng& rng) const = 0;
  /// Random belief for certificate audits; defaults to the episode start distribution.
  [[nodiscard]] virtual MdpState sample_random(Rng& rng) const { return sample_initial(rng); }
  [[nodiscard]] virtual MdpTransition step(const MdpState& state, std::size_t action, Rng& rng) const = 0;
  /// Membership in the absorbing goal set of the certificate.
  [[nodiscard]] virtual bool terminal(const ParticleBelief& belief) const = 0;
  [[nodiscard]] virtual double reward(const ParticleBelief& belief) const = 0;
};

}  // namespace bsc
