#include "bsc/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <optional>
#include <unordered_map>

namespace bsc {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(ReplayTransition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, Rng& rng) const {
  const std::size_t n = data_.size();
  count = std::min(count, n);
  std::vector<std::size_t> out;
  out.reserve(count);
  if (count * 4 >= n) {
    // Dense request: partial Fisher-Yates.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
      out.push_back(idx[i]);
    }
    return out;
  }
  while (out.size() < count) {
    const auto k = static_cast<std::size_t>(rng.below(n));
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

void DqnConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0 || target_sync_period == 0 || episodes == 0 || max_steps_per_episode == 0 ||
      total_steps == 0 || replay_capacity == 0 || train_every == 0)
    throw ConfigError("DQN counts must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
    throw ConfigError("epsilon values must lie in [0, 1]");
  if (!(huber_delta > 0.0)) throw ConfigError("huber_delta must be positive");
}

std::size_t DqnConfig::decay_steps() const noexcept {
  return epsilon_decay_steps > 0 ? epsilon_decay_steps : std::max<std::size_t>(1, total_steps / 2);
}

double DqnConfig::epsilon_at(std::size_t step) const noexcept {
  const std::size_t d = decay_steps();
  if (step >= d) return epsilon_end;
  const double f = static_cast<double>(step) / static_cast<double>(d);
  return epsilon_start + f * (epsilon_end - epsilon_start);
}

namespace {

struct EncodedBatch {
  Matrix head_in;                    // head input dim x B
  Matrix stacked;                    // scaled particles, n_x x total (encoder only)
  std::vector<Eigen::Index> argmax;  // latent l of belief j -> column of stacked, at j * L + l
};

EncodedBatch encode_batch(const QNetwork& q, const std::vector<const ParticleBelief*>& beliefs, bool keep_argmax) {
  EncodedBatch out;
  const auto batch = static_cast<Eigen::Index>(beliefs.size());
  const Vector& scale = q.input_scale();
  const auto nx = scale.size();
  if (!q.has_encoder()) {
    out.head_in.resize(static_cast<Eigen::Index>(q.head().input_dim()), batch);
    for (Eigen::Index j = 0; j < batch; ++j) out.head_in.col(j) = q.head_input(*beliefs[static_cast<std::size_t>(j)]);
    return out;
  }
  Eigen::Index total = 0;
  for (const auto* b : beliefs) {
    if (b->state_dim() != static_cast<std::size_t>(nx)) throw ShapeError("belief dimension does not match the network");
    total += static_cast<Eigen::Index>(b->size());
  }
  out.stacked.resize(nx, total);
  Eigen::Index off = 0;
  for (const auto* b : beliefs) {
    const auto n = static_cast<Eigen::Index>(b->size());
    out.stacked.middleCols(off, n) = scale.asDiagonal() * b->states();
    off += n;
  }
  const Matrix latent = q.encoder().forward_batch(out.stacked);
  const Eigen::Index L = latent.rows();
  out.head_in.resize(L, batch);
  if (keep_argmax) out.argmax.assign(static_cast<std::size_t>(L * batch), 0);
  off = 0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    const auto n = static_cast<Eigen::Index>(beliefs[static_cast<std::size_t>(j)]->size());
    for (Eigen::Index l = 0; l < L; ++l) {
      Eigen::Index best = off;
      double v = latent(l, off);
      for (Eigen::Index c = off + 1; c < off + n; ++c) {
        if (latent(l, c) > v) {
          v = latent(l, c);
          best = c;
        }
      }
      out.head_in(l, j) = v;
      if (keep_argmax) out.argmax[static_cast<std::size_t>(j * L + l)] = best;
    }
    off += n;
  }
  return out;
}

double huber(double x, double delta) {
  const double a = std::abs(x);
  return a <= delta ? 0.5 * x * x : delta * (a - 0.5 * delta);
}

double huber_derivative(double x, double delta) { return std::clamp(x, -delta, delta); }

}  // namespace

double td_loss_and_gradients(const QNetwork& online, const QNetwork& target, const ReplayBuffer& buffer,
                             const std::vector<std::size_t>& batch, double gamma, double huber_delta,
                             MlpGradients& head_grads, MlpGradients* encoder_grads) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  std::vector<const ParticleBelief*> cur, nxt;
  cur.reserve(batch.size());
  nxt.reserve(batch.size());
  for (std::size_t i : batch) {
    cur.push_back(&buffer[i].belief);
    nxt.push_back(&buffer[i].next);
  }

  // Bootstrapped targets from the frozen network.
  const EncodedBatch next_enc = encode_batch(target, nxt, false);
  const Matrix q_next = target.head().forward_batch(next_enc.head_in);
  Vector y(B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto& t = buffer[batch[static_cast<std::size_t>(j)]];
    y[j] = t.reward + (t.terminal ? 0.0 : gamma * q_next.col(j).maxCoeff());
  }

  const EncodedBatch enc = encode_batch(online, cur, encoder_grads != nullptr && online.has_encoder());
  MlpTape head_tape;
  const Matrix q = online.head().forward_batch(enc.head_in, head_tape);
  Matrix cot = Matrix::Zero(q.rows(), B);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto a = static_cast<Eigen::Index>(buffer[batch[static_cast<std::size_t>(j)]].action);
    const double td = q(a, j) - y[j];
    loss += huber(td, huber_delta);
    cot(a, j) = huber_derivative(td, huber_delta) / static_cast<double>(B);
  }
  loss /= static_cast<double>(B);

  Matrix head_in_cot;
  const bool need_input = encoder_grads != nullptr && online.has_encoder();
  head_grads = online.head().backward(head_tape, cot, need_input ? &head_in_cot : nullptr);
  if (!need_input) return loss;

  // The max-pool passes each latent cotangent to its argmax particle only, so
  // the encoder backward runs over those particles alone.
  const Eigen::Index L = enc.head_in.rows();
  std::unordered_map<Eigen::Index, Eigen::Index> position;
  std::vector<Eigen::Index> columns;
  for (Eigen::Index c : enc.argmax) {
    if (position.emplace(c, static_cast<Eigen::Index>(columns.size())).second) columns.push_back(c);
  }
  Matrix xs(enc.stacked.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) xs.col(static_cast<Eigen::Index>(k)) = enc.stacked.col(columns[k]);
  Matrix enc_cot = Matrix::Zero(L, xs.cols());
  for (Eigen::Index j = 0; j < B; ++j) {
    for (Eigen::Index l = 0; l < L; ++l) {
      const Eigen::Index c = enc.argmax[static_cast<std::size_t>(j * L + l)];
      enc_cot(l, position[c]) += head_in_cot(l, j);
    }
  }
  MlpTape enc_tape;
  (void)online.encoder().forward_batch(xs, enc_tape);
  *encoder_grads = online.encoder().backward(enc_tape, enc_cot);
  return loss;
}

namespace {

void clip_gradients(MlpGradients& head, MlpGradients* encoder, double max_norm) {
  if (!(max_norm > 0.0)) return;
  double sq = head.squared_norm();
  if (encoder != nullptr) sq += encoder->squared_norm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    head.scale(max_norm / norm);
    if (encoder != nullptr) encoder->scale(max_norm / norm);
  }
}

std::size_t argmax_first(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

}  // namespace

QNetwork dqn_train(const BeliefMdp& mdp, const DqnConfig& config, Rng& rng, QNetwork init, TrainingLog* log,
                   const TrainingCallback& progress, std::size_t progress_every) {
  config.validate();
  if (init.action_count() != mdp.action_count()) throw ShapeError("network head does not match the action count");
  TrainingLog local;
  TrainingLog& out = log != nullptr ? *log : local;
  out = TrainingLog{};

  QNetwork online = std::move(init);
  QNetwork target = online;
  Adam head_opt(online.head());
  std::optional<Adam> enc_opt;
  if (online.has_encoder()) enc_opt.emplace(online.encoder());
  ReplayBuffer buffer(config.replay_capacity);

  MdpState state = mdp.sample_initial(rng);
  std::size_t episode_steps = 0;
  double episode_return = 0.0;
  std::size_t episodes = 0;
  MlpGradients head_grads, enc_grads;

  for (std::size_t step = 0; step < config.total_steps && episodes < config.episodes; ++step) {
    std::size_t action;
    if (rng.uniform() < config.epsilon_at(step))
      action = static_cast<std::size_t>(rng.below(mdp.action_count()));
    else
      action = argmax_first(q_values(online, state.belief));

    MdpTransition tr = mdp.step(state, action, rng);
    episode_return += tr.reward;
    ++episode_steps;
    buffer.push({state.belief, action, tr.reward, tr.next.belief, tr.terminal});
    if (tr.terminal && config.absorbing_samples) {
      const auto a = static_cast<std::size_t>(rng.below(mdp.action_count()));
      buffer.push({tr.next.belief, a, 0.0, tr.next.belief, true});
    }
    const bool finished = tr.terminal || episode_steps >= config.max_steps_per_episode;
    if (finished) {
      out.episode_return.push_back(episode_return);
      out.episode_length.push_back(episode_steps);
      out.episode_reached.push_back(tr.terminal);
      ++episodes;
      state = mdp.sample_initial(rng);
      episode_steps = 0;
      episode_return = 0.0;
    } else {
      state = std::move(tr.next);
    }

    if (step + 1 >= config.warmup_steps && buffer.size() >= config.batch_size && step % config.train_every == 0) {
      const auto batch = buffer.sample_indices(config.batch_size, rng);
      const double loss = td_loss_and_gradients(online, target, buffer, batch, config.gamma, config.huber_delta,
                                                head_grads, enc_opt ? &enc_grads : nullptr);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "TD loss became non-finite at step " << step << " (last finite loss "
           << (out.loss.empty() ? 0.0 : out.loss.back()) << ")";
        throw TrainingDivergedError(os.str());
      }
      clip_gradients(head_grads, enc_opt ? &enc_grads : nullptr, config.grad_clip);
      head_opt.step(online.head(), head_grads, config.learning_rate);
      if (enc_opt) enc_opt->step(online.encoder(), enc_grads, config.learning_rate);
      if (!online.all_finite()) {
        std::ostringstream os;
        os << "network parameters became non-finite at step " << step;
        throw TrainingDivergedError(os.str());
      }
      out.loss.push_back(loss);
    }
    if ((step + 1) % config.target_sync_period == 0) target = online;
    out.steps = step + 1;
    if (progress && progress_every > 0 && (step + 1) % progress_every == 0) progress(step + 1, out);
  }
  return online;
}

}  // namespace bsc
