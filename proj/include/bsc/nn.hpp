#pragma once

#include "bsc/belief.hpp"
#include "bsc/rng.hpp"
#include "bsc/types.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bsc {

enum class Activation { relu, tanh };

const char* to_string(Activation a) noexcept;

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  void set_zero();
  MlpGradients& operator+=(const MlpGradients& other);
  [[nodiscard]] double squared_norm() const;
  void scale(double factor);
};

/// Intermediate values kept by a taped forward pass.
struct MlpTape {
  std::vector<Matrix> inputs;  ///< input to layer l (columns are samples)
  std::vector<Matrix> preact;  ///< W_l x + b_l
};

/// Fully connected network; hidden layers use the activation, the output is linear.
class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  Mlp(std::vector<std::size_t> layer_dims, Activation activation);
  /// Uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::vector<std::size_t> layer_dims, Activation activation, Rng& rng);

  [[nodiscard]] const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  [[nodiscard]] Activation activation() const noexcept { return activation_; }
  [[nodiscard]] std::size_t layer_count() const noexcept { return weights_.size(); }
  [[nodiscard]] std::size_t input_dim() const noexcept { return dims_.front(); }
  [[nodiscard]] std::size_t output_dim() const noexcept { return dims_.back(); }
  [[nodiscard]] std::size_t parameter_count() const noexcept;

  [[nodiscard]] Matrix& weight(std::size_t l) { return weights_[l]; }
  [[nodiscard]] const Matrix& weight(std::size_t l) const { return weights_[l]; }
  [[nodiscard]] Vector& bias(std::size_t l) { return biases_[l]; }
  [[nodiscard]] const Vector& bias(std::size_t l) const { return biases_[l]; }

  [[nodiscard]] Vector forward(const ConstVectorRef& input) const;
  /// Column-batched forward pass.
  [[nodiscard]] Matrix forward_batch(const Matrix& inputs) const;
  [[nodiscard]] Matrix forward_batch(const Matrix& inputs, MlpTape& tape) const;

  /// Reverse pass for <cotangent, output>; optionally returns the input cotangent.
  [[nodiscard]] MlpGradients backward(const MlpTape& tape, const Matrix& output_cotangent,
                                      Matrix* input_cotangent = nullptr) const;

  [[nodiscard]] MlpGradients zero_gradients() const;
  [[nodiscard]] bool all_finite() const;

 private:
  void check_shapes() const;

  std::vector<std::size_t> dims_;
  Activation activation_ = Activation::relu;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Single-sample gradient of <cotangent, net(input)> with respect to every parameter.
MlpGradients mlp_gradients(const Mlp& net, const ConstVectorRef& input, const ConstVectorRef& output_cotangent);

/// Adaptive moment estimation for one network.
class Adam {
 public:
  explicit Adam(const Mlp& net, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(Mlp& net, const MlpGradients& grads, double learning_rate);

 private:
  double beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  MlpGradients m_, v_;
};

/// Action-value network. With an encoder, each particle is mapped to a latent
/// vector and the belief embedding is the elementwise maximum over particles;
/// without one, the head sees the flattened particle matrix directly.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(std::optional<Mlp> encoder, Mlp head, Vector input_scale);

  /// Encoder (2 hidden layers) plus head, fan-in initialised.
  static QNetwork with_encoder(std::size_t state_dim, std::size_t action_count, std::vector<std::size_t> encoder_hidden,
                               std::size_t latent_dim, std::vector<std::size_t> head_hidden, Vector input_scale,
                               Rng& rng);
  /// Plain head over a fixed-size flattened belief.
  static QNetwork head_only(std::size_t input_dim, std::size_t action_count, std::vector<std::size_t> head_hidden,
                            Vector input_scale, Rng& rng);

  [[nodiscard]] bool has_encoder() const noexcept { return encoder_.has_value(); }
  [[nodiscard]] const Mlp& encoder() const { return *encoder_; }
  [[nodiscard]] Mlp& encoder() { return *encoder_; }
  [[nodiscard]] const Mlp& head() const noexcept { return head_; }
  [[nodiscard]] Mlp& head() noexcept { return head_; }
  [[nodiscard]] std::size_t action_count() const noexcept { return head_.output_dim(); }
  [[nodiscard]] const Vector& input_scale() const noexcept { return input_scale_; }

  /// Head input for one belief (latent embedding or flattened particles).
  [[nodiscard]] Vector head_input(const ParticleBelief& belief) const;

  [[nodiscard]] bool all_finite() const;

 private:
  [[nodiscard]] Matrix scaled(const ParticleBelief& belief) const;

  std::optional<Mlp> encoder_;
  Mlp head_;
  Vector input_scale_;
};

/// Elementwise maximum of the encoder output over particles.
Vector encode_belief(const QNetwork& q, const ParticleBelief& belief);

/// Head applied to the belief embedding.
Vector q_values(const QNetwork& q, const ParticleBelief& belief);

/// Thrown on malformed weights files.
class WeightsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_weights(std::ostream& out, const QNetwork& q);
QNetwork load_weights(std::istream& in);
void save_weights(const std::string& path, const QNetwork& q);
QNetwork load_weights(const std::string& path);

}  // namespace bsc
