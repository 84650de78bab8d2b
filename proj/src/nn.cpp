#include "bsc/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace bsc {

const char* to_string(Activation a) noexcept { return a == Activation::relu ? "relu" : "tanh"; }

void MlpGradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

double MlpGradients::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

void MlpGradients::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
}

Mlp::Mlp(std::vector<std::size_t> layer_dims, Activation activation)
    : dims_(std::move(layer_dims)), activation_(activation) {
  if (dims_.size() < 2) throw ShapeError("an MLP needs input and output dimensions");
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("layer dimensions must be positive");
  }
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.push_back(Matrix::Zero(static_cast<Eigen::Index>(dims_[l + 1]), static_cast<Eigen::Index>(dims_[l])));
    biases_.push_back(Vector::Zero(static_cast<Eigen::Index>(dims_[l + 1])));
  }
}

Mlp::Mlp(std::vector<std::size_t> layer_dims, Activation activation, Rng& rng) : Mlp(std::move(layer_dims), activation) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
    for (Eigen::Index j = 0; j < weights_[l].cols(); ++j)
      for (Eigen::Index i = 0; i < weights_[l].rows(); ++i) weights_[l](i, j) = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = rng.uniform(-bound, bound);
  }
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  return n;
}

void Mlp::check_shapes() const {
  if (weights_.size() + 1 != dims_.size() || biases_.size() != weights_.size()) throw ShapeError("layer count mismatch");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (static_cast<std::size_t>(weights_[l].cols()) != dims_[l] ||
        static_cast<std::size_t>(weights_[l].rows()) != dims_[l + 1] ||
        static_cast<std::size_t>(biases_[l].size()) != dims_[l + 1])
      throw ShapeError("weight shapes do not chain with layer_dims");
  }
}

namespace {

void activate(Matrix& z, Activation a) {
  if (a == Activation::relu)
    z = z.cwiseMax(0.0);
  else
    z = z.array().tanh().matrix();
}

}  // namespace

Vector Mlp::forward(const ConstVectorRef& input) const {
  if (static_cast<std::size_t>(input.size()) != input_dim()) throw ShapeError("MLP input dimension mismatch");
  Vector x = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Vector z = weights_[l] * x + biases_[l];
    if (l + 1 < weights_.size()) {
      if (activation_ == Activation::relu)
        z = z.cwiseMax(0.0);
      else
        z = z.array().tanh().matrix();
    }
    x = std::move(z);
  }
  return x;
}

Matrix Mlp::forward_batch(const Matrix& inputs) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) throw ShapeError("MLP input dimension mismatch");
  Matrix x = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = weights_[l] * x;
    z.colwise() += biases_[l];
    if (l + 1 < weights_.size()) activate(z, activation_);
    x = std::move(z);
  }
  return x;
}

Matrix Mlp::forward_batch(const Matrix& inputs, MlpTape& tape) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) throw ShapeError("MLP input dimension mismatch");
  tape.inputs.resize(weights_.size());
  tape.preact.resize(weights_.size());
  Matrix x = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    tape.inputs[l] = x;
    Matrix z = weights_[l] * x;
    z.colwise() += biases_[l];
    tape.preact[l] = z;
    if (l + 1 < weights_.size()) activate(z, activation_);
    x = std::move(z);
  }
  return x;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.weights.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
    g.biases.push_back(Vector::Zero(biases_[l].size()));
  }
  return g;
}

MlpGradients Mlp::backward(const MlpTape& tape, const Matrix& output_cotangent, Matrix* input_cotangent) const {
  if (tape.inputs.size() != weights_.size()) throw ShapeError("tape does not belong to this network");
  if (static_cast<std::size_t>(output_cotangent.rows()) != output_dim() ||
      output_cotangent.cols() != tape.preact.back().cols())
    throw ShapeError("output cotangent shape mismatch");
  MlpGradients g = zero_gradients();
  Matrix delta = output_cotangent;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    if (l + 1 < weights_.size()) {
      const Matrix& z = tape.preact[l];
      if (activation_ == Activation::relu)
        delta = delta.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
      else
        delta = delta.cwiseProduct((1.0 - z.array().tanh().square()).matrix());
    }
    g.weights[l].noalias() = delta * tape.inputs[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0 || input_cotangent != nullptr) {
      Matrix next = weights_[l].transpose() * delta;
      delta = std::move(next);
    }
  }
  if (input_cotangent != nullptr) *input_cotangent = std::move(delta);
  return g;
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  }
  return true;
}

MlpGradients mlp_gradients(const Mlp& net, const ConstVectorRef& input, const ConstVectorRef& output_cotangent) {
  if (static_cast<std::size_t>(output_cotangent.size()) != net.output_dim()) throw ShapeError("cotangent dimension mismatch");
  MlpTape tape;
  (void)net.forward_batch(Matrix(input), tape);
  return net.backward(tape, Matrix(output_cotangent));
}

Adam::Adam(const Mlp& net, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::step(Mlp& net, const MlpGradients& grads, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon_);
  };
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    update(net.weight(l), grads.weights[l], m_.weights[l], v_.weights[l]);
    update(net.bias(l), grads.biases[l], m_.biases[l], v_.biases[l]);
  }
}

QNetwork::QNetwork(std::optional<Mlp> encoder, Mlp head, Vector input_scale)
    : encoder_(std::move(encoder)), head_(std::move(head)), input_scale_(std::move(input_scale)) {
  if (encoder_) {
    if (encoder_->output_dim() != head_.input_dim()) throw ShapeError("encoder output must match head input");
    if (static_cast<std::size_t>(input_scale_.size()) != encoder_->input_dim())
      throw ShapeError("input scale must match the state dimension");
  } else if (input_scale_.size() == 0 || head_.input_dim() % static_cast<std::size_t>(input_scale_.size()) != 0) {
    throw ShapeError("flattened head input must be a multiple of the state dimension");
  }
}

QNetwork QNetwork::with_encoder(std::size_t state_dim, std::size_t action_count,
                                std::vector<std::size_t> encoder_hidden, std::size_t latent_dim,
                                std::vector<std::size_t> head_hidden, Vector input_scale, Rng& rng) {
  std::vector<std::size_t> enc{state_dim};
  enc.insert(enc.end(), encoder_hidden.begin(), encoder_hidden.end());
  enc.push_back(latent_dim);
  std::vector<std::size_t> head{latent_dim};
  head.insert(head.end(), head_hidden.begin(), head_hidden.end());
  head.push_back(action_count);
  Mlp e(enc, Activation::relu, rng);
  Mlp h(head, Activation::relu, rng);
  return QNetwork(std::move(e), std::move(h), std::move(input_scale));
}

QNetwork QNetwork::head_only(std::size_t input_dim, std::size_t action_count, std::vector<std::size_t> head_hidden,
                             Vector input_scale, Rng& rng) {
  std::vector<std::size_t> head{input_dim};
  head.insert(head.end(), head_hidden.begin(), head_hidden.end());
  head.push_back(action_count);
  return QNetwork(std::nullopt, Mlp(head, Activation::relu, rng), std::move(input_scale));
}

Matrix QNetwork::scaled(const ParticleBelief& belief) const {
  if (belief.size() == 0) throw std::invalid_argument("belief is empty");
  if (belief.state_dim() != static_cast<std::size_t>(input_scale_.size()))
    throw ShapeError("belief state dimension does not match the network");
  return input_scale_.asDiagonal() * belief.states();
}

Vector QNetwork::head_input(const ParticleBelief& belief) const {
  const Matrix x = scaled(belief);
  if (encoder_) return encoder_->forward_batch(x).rowwise().maxCoeff();
  if (static_cast<std::size_t>(x.size()) != head_.input_dim()) throw ShapeError("flattened belief does not match head input");
  return Eigen::Map<const Vector>(x.data(), x.size());
}

bool QNetwork::all_finite() const { return head_.all_finite() && (!encoder_ || encoder_->all_finite()); }

Vector encode_belief(const QNetwork& q, const ParticleBelief& belief) {
  if (!q.has_encoder()) throw std::logic_error("network has no belief encoder");
  return q.head_input(belief);
}

Vector q_values(const QNetwork& q, const ParticleBelief& belief) { return q.head().forward(q.head_input(belief)); }

// Weights file layout (little-endian):
//   char[8]  "BCLF-W1\0"
//   u32      format version (1)
//   u32      has_encoder
//   u32      input_scale length, f64[length]
//   per network (encoder first when present, then head):
//     u32 activation (0 relu, 1 tanh), u32 dim count, u32 dims[count],
//     per layer: f64 weights[out * in] row-major, f64 biases[out]
namespace {

constexpr char kMagic[8] = {'B', 'C', 'L', 'F', '-', 'W', '1', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw WeightsFormatError("weights file is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_mlp(std::ostream& out, const Mlp& net) {
  put<std::uint32_t>(out, net.activation() == Activation::relu ? 0U : 1U);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_dims().size()));
  for (std::size_t d : net.layer_dims()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) put<double>(out, w(i, j));
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) put<double>(out, net.bias(l)[i]);
  }
}

Mlp get_mlp(std::istream& in) {
  const auto tag = get<std::uint32_t>(in);
  if (tag > 1) throw WeightsFormatError("unknown activation tag");
  const auto count = get<std::uint32_t>(in);
  if (count < 2 || count > 64) throw WeightsFormatError("implausible layer count");
  std::vector<std::size_t> dims(count);
  for (auto& d : dims) {
    d = get<std::uint32_t>(in);
    if (d == 0 || d > (1U << 16)) throw WeightsFormatError("implausible layer dimension");
  }
  Mlp net(dims, tag == 0 ? Activation::relu : Activation::tanh);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Matrix& w = net.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = get<double>(in);
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)[i] = get<double>(in);
  }
  if (!net.all_finite()) throw WeightsFormatError("weights contain non-finite values");
  return net;
}

}  // namespace

void save_weights(std::ostream& out, const QNetwork& q) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, q.has_encoder() ? 1U : 0U);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(q.input_scale().size()));
  for (Eigen::Index i = 0; i < q.input_scale().size(); ++i) put<double>(out, q.input_scale()[i]);
  if (q.has_encoder()) put_mlp(out, q.encoder());
  put_mlp(out, q.head());
  if (!out) throw std::runtime_error("failed writing weights");
}

QNetwork load_weights(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw WeightsFormatError("missing BCLF-W1 header");
  if (get<std::uint32_t>(in) != kVersion) throw WeightsFormatError("unsupported weights version");
  const bool has_encoder = get<std::uint32_t>(in) != 0;
  const auto scale_len = get<std::uint32_t>(in);
  if (scale_len == 0 || scale_len > 1024) throw WeightsFormatError("implausible input scale length");
  Vector scale(scale_len);
  for (std::uint32_t i = 0; i < scale_len; ++i) scale[i] = get<double>(in);
  std::optional<Mlp> encoder;
  if (has_encoder) encoder = get_mlp(in);
  Mlp head = get_mlp(in);
  try {
    return QNetwork(std::move(encoder), std::move(head), std::move(scale));
  } catch (const ShapeError& e) {
    throw WeightsFormatError(e.what());
  }
}

void save_weights(const std::string& path, const QNetwork& q) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_weights(out, q);
}

QNetwork load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_weights(in);
}

}  // namespace bsc
