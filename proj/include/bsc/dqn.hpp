#pragma once

#include "bsc/mdp.hpp"
#include "bsc/nn.hpp"

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace bsc {

struct ReplayTransition {
  ParticleBelief belief;
  std::size_t action = 0;
  double reward = 0.0;
  ParticleBelief next;
  bool terminal = false;
};

/// Fixed-capacity ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(ReplayTransition t);
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] const ReplayTransition& operator[](std::size_t i) const { return data_[i]; }

  /// Distinct indices drawn uniformly without replacement (at most size()).
  [[nodiscard]] std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<ReplayTransition> data_;
};

struct DqnConfig {
  double gamma = 0.99;
  double learning_rate = 5e-4;
  std::size_t batch_size = 32;
  std::size_t target_sync_period = 500;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  /// 0 means half of total_steps.
  std::size_t epsilon_decay_steps = 0;
  std::size_t episodes = 1000;
  std::size_t max_steps_per_episode = 100;
  /// Environment-step budget; training stops at whichever of episodes/total_steps comes first.
  std::size_t total_steps = 50000;
  std::size_t replay_capacity = 50000;
  std::size_t warmup_steps = 1000;
  std::size_t train_every = 1;
  double huber_delta = 1.0;
  double grad_clip = 10.0;  ///< global gradient-norm clip; 0 disables
  /// Also store goal beliefs as absorbing zero-reward samples so W is fitted to 0 there.
  bool absorbing_samples = true;

  void validate() const;
  [[nodiscard]] std::size_t decay_steps() const noexcept;
  [[nodiscard]] double epsilon_at(std::size_t step) const noexcept;
};

struct TrainingLog {
  std::vector<double> loss;            ///< one entry per gradient update
  std::vector<double> episode_return;  ///< undiscounted
  std::vector<std::size_t> episode_length;
  std::vector<bool> episode_reached;
  std::size_t steps = 0;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TrainingCallback = std::function<void(std::size_t step, const TrainingLog& log)>;

/// Mean Huber TD loss for one batch and its parameter gradients (written into
/// head_grads / encoder_grads). Exposed for testing.
double td_loss_and_gradients(const QNetwork& online, const QNetwork& target, const ReplayBuffer& buffer,
                             const std::vector<std::size_t>& batch, double gamma, double huber_delta,
                             MlpGradients& head_grads, MlpGradients* encoder_grads);

/// Deep Q-learning on the belief MDP starting from `init`.
QNetwork dqn_train(const BeliefMdp& mdp, const DqnConfig& config, Rng& rng, QNetwork init, TrainingLog* log = nullptr,
                   const TrainingCallback& progress = {}, std::size_t progress_every = 1000);

}  // namespace bsc
