#pragma once

#include "bsc/barrier.hpp"
#include "bsc/lyapunov.hpp"
#include "bsc/mdp.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bsc {

/// Immutable description of one reach-avoid POMDP.
struct Environment {
  std::string name;
  MotionModel motion;
  ObservationModel observation;
  double dt = 0.01;
  double measurement_period = 0.2;
  double horizon = 20.0;
  std::vector<Vector> actions;
  GoalSpec goal;
  SafetySpec safety;
  /// Truth initial state.
  std::function<Vector(Rng&)> initial_state;
  /// N samples from the initial belief.
  std::function<ParticleBelief(Rng&, std::size_t)> initial_belief;
  /// Default particle count.
  std::size_t particles = 1000;
  /// Truth is tied to one belief particle (two-particle system).
  bool truth_is_particle = false;
  /// Ground-truth collision test (h < 0 on positions); defaults to safety.h when unset.
  std::function<double(const ConstVectorRef&)> avoid_value;
  /// Path of the geometry file this environment was read from (empty for built-ins).
  std::string source;

  [[nodiscard]] std::size_t state_dim() const noexcept { return motion.state_dim; }
  [[nodiscard]] std::size_t control_dim() const noexcept { return motion.control_dim; }
  /// measurement_period / dt, validated to be an integer.
  [[nodiscard]] std::size_t steps_per_measurement() const;
  /// Distance moved per step counts only these leading coordinates (positions).
  std::size_t position_dim = 0;

  /// Throws ConfigError on inconsistent descriptions.
  void validate() const;
};

/// Directory holding the bundled geometry files (overridable with BSC_CONFIG_DIR).
std::string config_directory();

/// Parses a geometry file (JSON with dynamics/noise/goal/avoid/actions/timing).
Environment load_environment_file(const std::string& path);
Environment environment_from_json_text(const std::string& text, const std::string& source = {});
/// Bundled environment by name, or a path to a geometry file.
Environment make_environment(const std::string& name_or_path);

Environment lightdark();
Environment antenna();
Environment bumper();
Environment two_particle_toy();
Environment example1_toy();
Environment free_flyer();

/// One Euler-Maruyama truth step; `step_index` counts steps taken so far, and a
/// measurement is emitted when step_index + 1 is a multiple of the cadence.
std::pair<Vector, std::optional<Vector>> step_truth(const Environment& env, const ConstVectorRef& x,
                                                    const ConstVectorRef& u, Rng& rng, std::size_t step_index);

/// Belief MDP over one measurement period per transition.
class EnvironmentMdp : public BeliefMdp {
 public:
  explicit EnvironmentMdp(const Environment& env, std::size_t particles = 0);

  [[nodiscard]] std::size_t action_count() const override { return env_->actions.size(); }
  [[nodiscard]] MdpState sample_initial(Rng& rng) const override;
  [[nodiscard]] MdpState sample_random(Rng& rng) const override;
  [[nodiscard]] MdpTransition step(const MdpState& state, std::size_t action, Rng& rng) const override;
  [[nodiscard]] bool terminal(const ParticleBelief& belief) const override;
  [[nodiscard]] double reward(const ParticleBelief& belief) const override;

  [[nodiscard]] const Environment& environment() const noexcept { return *env_; }
  [[nodiscard]] std::size_t particles() const noexcept { return particles_; }
  /// Optional audit sampler; sample_random falls back to sample_initial.
  std::function<MdpState(Rng&)> random_sampler;

 private:
  const Environment* env_;
  std::size_t particles_;
};

/// Network layout used for an environment: encoder 2x32 / latent 8 with a
/// 3x256 head (3x128 for Lightdark); plain 2x256 head for the two-particle system.
QNetwork default_network(const Environment& env, Rng& rng);

}  // namespace bsc
