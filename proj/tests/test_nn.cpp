#include "doctest.h"

#include "bsc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace bsc;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Worst relative error of analytic vs central-difference parameter gradients.
double worst_gradient_error(Mlp net, const Vector& x, const Vector& cot) {
  const MlpGradients g = mlp_gradients(net, x, cot);
  const double h = 1e-5;
  double worst = 0.0;
  auto f = [&](const Mlp& n) { return cot.dot(n.forward(x)); };
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < net.weight(l).size(); ++i) {
      double& w = net.weight(l).data()[i];
      const double w0 = w;
      w = w0 + h;
      const double fp = f(net);
      w = w0 - h;
      const double fm = f(net);
      w = w0;
      worst = std::max(worst, rel_err((fp - fm) / (2 * h), g.weights[l].data()[i]));
    }
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) {
      double& b = net.bias(l)[i];
      const double b0 = b;
      b = b0 + h;
      const double fp = f(net);
      b = b0 - h;
      const double fm = f(net);
      b = b0;
      worst = std::max(worst, rel_err((fp - fm) / (2 * h), g.biases[l][i]));
    }
  }
  return worst;
}

// Smallest |pre-activation| over hidden units; relu kinks spoil finite differences.
double kink_margin(const Mlp& net, const Vector& x) {
  MlpTape tape;
  Matrix in = x;
  (void)net.forward_batch(in, tape);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < tape.preact.size(); ++l) m = std::min(m, tape.preact[l].cwiseAbs().minCoeff());
  return m;
}

Vector random_vector(Rng& rng, std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("identity and constant layers") {
    Mlp id({2, 2}, Activation::relu);
    id.weight(0) = Matrix::Identity(2, 2);
    Vector x(2);
    x << 1, 2;
    CHECK((id.forward(x) - x).norm() == 0.0);
    Mlp c({4, 1}, Activation::tanh);
    c.bias(0)[0] = 3.0;
    CHECK(c.forward(Vector::Random(4))[0] == 3.0);
    CHECK_THROWS_AS((void)c.forward(Vector::Zero(3)), ShapeError);
  }

  TEST_CASE("hand-computed two-layer relu network") {
    Mlp net({2, 2, 1}, Activation::relu);
    net.weight(0) << 1, -1, 2, 1;
    net.bias(0) << 0.5, -4;
    net.weight(1) << 3, -2;
    net.bias(1) << 1;
    Vector x(2);
    x << 1, 2;
    // hidden: relu(1 - 2 + 0.5) = 0, relu(2 + 2 - 4) = 0 -> output 1
    CHECK(net.forward(x)[0] == 1.0);
    x << 3, 1;
    // hidden: relu(3 - 1 + .5) = 2.5, relu(6 + 1 - 4) = 3 -> 7.5 - 6 + 1
    CHECK(net.forward(x)[0] == doctest::Approx(2.5));
  }

  TEST_CASE("scalar chain rule and relu dead zone") {
    Mlp lin({1, 1}, Activation::relu);
    lin.weight(0)(0, 0) = 2.0;
    const auto g = mlp_gradients(lin, Vector::Constant(1, 3.0), Vector::Ones(1));
    CHECK(g.weights[0](0, 0) == 3.0);
    CHECK(g.biases[0][0] == 1.0);

    Mlp dead({1, 1, 1}, Activation::relu);
    dead.weight(0)(0, 0) = 1.0;
    dead.bias(0)[0] = -5.0;
    dead.weight(1)(0, 0) = 4.0;
    const auto gd = mlp_gradients(dead, Vector::Constant(1, 1.0), Vector::Ones(1));
    CHECK(gd.weights[0](0, 0) == 0.0);
    CHECK(gd.biases[0][0] == 0.0);
  }

  TEST_CASE("gradients match central differences at 100 random points") {
    Rng rng(31);
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
      const Activation act = t % 2 == 0 ? Activation::tanh : Activation::relu;
      Mlp net({3, 6, 5, 2}, act, rng);
      for (std::size_t l = 0; l < net.layer_count(); ++l) net.bias(l) = random_vector(rng, net.bias(l).size()) * 0.3;
      Vector x = random_vector(rng, 3);
      if (act == Activation::relu) {
        while (kink_margin(net, x) < 1e-3) x = random_vector(rng, 3);
      }
      const Vector cot = random_vector(rng, 2);
      CHECK(worst_gradient_error(net, x, cot) <= 1e-4);
      ++checked;
    }
    CHECK(checked == 100);
  }

  TEST_CASE("input cotangent through a batched pass") {
    Rng rng(2);
    Mlp net({3, 8, 2}, Activation::tanh, rng);
    Matrix x(3, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Matrix cot(2, 4);
    for (Eigen::Index i = 0; i < cot.size(); ++i) cot.data()[i] = rng.normal();
    MlpTape tape;
    (void)net.forward_batch(x, tape);
    Matrix in_cot;
    (void)net.backward(tape, cot, &in_cot);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Matrix xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      const double fd = ((cot.array() * net.forward_batch(xp).array()).sum() -
                         (cot.array() * net.forward_batch(xm).array()).sum()) / (2 * h);
      CHECK(rel_err(fd, in_cot.data()[i]) <= 1e-5);
    }
  }

  TEST_CASE("encoder is invariant under particle permutations") {
    Rng rng(71);
    const auto q = QNetwork::with_encoder(2, 9, {32, 32}, 8, {64, 64, 64}, Vector::Ones(2), rng);
    Matrix s(2, 300);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal() * 3;
    const ParticleBelief b(s);
    const Vector e0 = encode_belief(q, b);
    const Vector q0 = q_values(q, b);
    CHECK(q0.size() == 9);
    std::vector<Eigen::Index> perm(300);
    std::iota(perm.begin(), perm.end(), 0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      Matrix p(2, 300);
      for (Eigen::Index i = 0; i < 300; ++i) p.col(i) = s.col(perm[static_cast<std::size_t>(i)]);
      worst = std::max(worst, (encode_belief(q, ParticleBelief(p)) - e0).cwiseAbs().maxCoeff());
      worst = std::max(worst, (q_values(q, ParticleBelief(p)) - q0).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("singleton and duplicated beliefs encode like one particle") {
    Rng rng(5);
    const auto q = QNetwork::with_encoder(1, 7, {32, 32}, 8, {128, 128, 128}, Vector::Ones(1), rng);
    const Matrix one = Matrix::Constant(1, 1, 0.7);
    const Matrix two = Matrix::Constant(1, 2, 0.7);
    const Vector direct = q.encoder().forward(one.col(0));
    CHECK((encode_belief(q, ParticleBelief(one)) - direct).norm() == 0.0);
    CHECK((encode_belief(q, ParticleBelief(two)) - direct).norm() == 0.0);
    CHECK(q_values(q, ParticleBelief(one)).size() == 7);
  }

  TEST_CASE("constant head returns its bias") {
    Mlp head({8, 16, 3}, Activation::relu);
    head.bias(1) << -1.0, 2.0, 0.5;
    Rng rng(1);
    QNetwork q(Mlp({1, 4, 8}, Activation::relu, rng), head, Vector::Ones(1));
    const Vector v = q_values(q, ParticleBelief(Matrix::Random(1, 20)));
    CHECK(v[0] == -1.0);
    CHECK(v[1] == 2.0);
    CHECK(v[2] == 0.5);
  }

  TEST_CASE("Adam first step moves each parameter by about the learning rate") {
    Rng rng(3);
    Mlp net({2, 3, 1}, Activation::tanh, rng);
    const Mlp before = net;
    Adam opt(net);
    const auto g = mlp_gradients(net, Vector::Ones(2), Vector::Ones(1));
    opt.step(net, g, 0.01);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (Eigen::Index i = 0; i < net.weight(l).size(); ++i) {
        const double gi = g.weights[l].data()[i];
        const double step = net.weight(l).data()[i] - before.weight(l).data()[i];
        // Bias-corrected first step: -lr * g / (|g| + eps).
        CHECK(step == doctest::Approx(-0.01 * gi / (std::abs(gi) + 1e-8)).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("weights round trip and format errors") {
    Rng rng(9);
    Vector scale(2);
    scale << 0.1, 0.5;
    const auto q = QNetwork::with_encoder(2, 9, {32, 32}, 8, {16, 16}, scale, rng);
    std::stringstream ss;
    save_weights(ss, q);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 7) == "BCLF-W1");
    std::istringstream in(bytes);
    const QNetwork r = load_weights(in);
    const ParticleBelief b(Matrix::Random(2, 40));
    CHECK((q_values(q, b) - q_values(r, b)).norm() == 0.0);
    CHECK((r.input_scale() - scale).norm() == 0.0);

    std::istringstream bad("not a weights file");
    CHECK_THROWS_AS((void)load_weights(bad), WeightsFormatError);
    std::istringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS((void)load_weights(cut), WeightsFormatError);

    const auto flat = QNetwork::head_only(4, 5, {256, 256}, Vector::Constant(1, 0.2), rng);
    std::stringstream s2;
    save_weights(s2, flat);
    const QNetwork f2 = load_weights(s2);
    CHECK_FALSE(f2.has_encoder());
    CHECK(f2.head().layer_dims() == std::vector<std::size_t>{4, 256, 256, 5});
  }

  TEST_CASE("outputs stay finite for finite beliefs") {
    Rng rng(13);
    const auto q = QNetwork::with_encoder(4, 9, {32, 32}, 8, {64, 64}, Vector::Ones(4), rng);
    Matrix s(4, 50);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal() * 1e3;
    CHECK(q_values(q, ParticleBelief(s)).allFinite());
    CHECK(q.all_finite());
  }
}
