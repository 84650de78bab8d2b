#include "doctest.h"

#include "bsc/envs.hpp"
#include "bsc/lyapunov.hpp"

#include <cmath>
#include <sstream>

using namespace bsc;

namespace {

// Head-only network over four 1D particles whose action values are the constant vector v.
QNetwork constant_q(const std::vector<double>& v) {
  Mlp head({4, v.size()}, Activation::relu);
  for (std::size_t i = 0; i < v.size(); ++i) head.bias(0)[static_cast<Eigen::Index>(i)] = v[i];
  return QNetwork(std::nullopt, head, Vector::Ones(1));
}

Vector scalar(double x) { return Vector::Constant(1, x); }

GoalSpec toy_goal(double r_eps, double u_ref) {
  GoalSpec g;
  g.region = GoalRegion::box(scalar(0.0), scalar(1.0));
  g.uncertainty = {0.1, RiskLevel(0.05)};
  g.reference = [u_ref](const Vector&) { return scalar(u_ref); };
  g.uncertainty_override = [r_eps](const ParticleBelief&) { return r_eps; };
  return g;
}

const std::vector<Vector> kActions{scalar(-1.0), scalar(0.0), scalar(1.0)};
const ParticleBelief kBelief(Matrix::Zero(1, 4));

}  // namespace

TEST_SUITE("lyapunov") {
  TEST_CASE("W is minus the largest action value") {
    const auto q = constant_q({-3.0, -1.5, -2.0});
    CHECK(bclf_value(q, kBelief) == 1.5);
    Rng rng(3);
    const auto big = QNetwork::with_encoder(2, 5, {16}, 4, {16}, Vector::Ones(2), rng);
    CHECK(std::isfinite(bclf_value(big, ParticleBelief(Matrix::Random(2, 30) * 100))));
  }

  TEST_CASE("expected next value identity") {
    CHECK(expected_next_value(-5.0, -1.0, 0.99) == doctest::Approx(4.0404).epsilon(1e-4));
    CHECK(expected_next_value(-2.0, -2.0, 0.5) == 0.0);
    CHECK_THROWS(expected_next_value(0.0, 0.0, 1.0));
    const auto q = constant_q({-5.0, -2.0});
    CHECK(expected_next_value(q, kBelief, 0, -1.0, 0.99) == doctest::Approx(4.0 / 0.99));
  }

  TEST_CASE("decrease conditions") {
    CHECK(decrease_admissible(10.0, 8.9, BclfMode::asymptotic(0.9)));
    CHECK_FALSE(decrease_admissible(10.0, 9.1, BclfMode::asymptotic(0.9)));
    CHECK_FALSE(decrease_admissible(10.0, 10.0 - 0.3, BclfMode::finite_time(0.4)));
    CHECK(decrease_admissible(10.0, 10.0 - 0.4, BclfMode::finite_time(0.4)));
    CHECK(decrease_admissible(0.2, 0.2 - 0.25, BclfMode::finite_time(0.4)));
    CHECK_FALSE(decrease_admissible(0.2, 0.2 - 0.15, BclfMode::finite_time(0.4)));
    CHECK_THROWS(BclfMode::asymptotic(1.0));
    CHECK_THROWS(BclfMode::finite_time(0.0));
  }

  TEST_CASE("reward") {
    const UncertaintySpec spec{0.1, RiskLevel(0.05)};
    // Two clusters at +-2.1: every distance to the mean is 2.1, R = 2.
    Matrix s(1, 40);
    for (int i = 0; i < 40; ++i) s(0, i) = i % 2 ? 2.1 : -2.1;
    CHECK(reward(ParticleBelief(s), spec) == doctest::Approx(-3.0));
    CHECK(reward(ParticleBelief(Matrix::Zero(1, 40)), spec) == 0.0);
    GoalSpec g = toy_goal(0.7, 0.0);
    CHECK(g.reward(kBelief) == doctest::Approx(-1.7));
    g.flat_reward = true;
    CHECK(g.reward(kBelief) == -1.0);
  }

  TEST_CASE("ig control: localized belief returns the reference exactly") {
    const auto r = ig_control(constant_q({-1, -2, -3}), kBelief, toy_goal(-0.01, 0.37), BclfMode::asymptotic(0.9),
                              kActions, 0.99);
    CHECK(r.status == IgStatus::reference);
    CHECK(r.u[0] == 0.37);
  }

  TEST_CASE("ig control: closest admissible action, ties to the lowest index") {
    // r = -2, W = 3, E = 1.01 .. 1.21 <= 0.9 W for every action.
    const auto q = constant_q({-3.0, -3.1, -3.2});
    auto r = ig_control(q, kBelief, toy_goal(1.0, 0.6), BclfMode::asymptotic(0.9), kActions, 0.99);
    CHECK(r.status == IgStatus::gathering);
    CHECK(r.admissible_count == 3);
    CHECK(r.action == 2);
    r = ig_control(q, kBelief, toy_goal(1.0, 0.5), BclfMode::asymptotic(0.9), kActions, 0.99);
    CHECK(r.action == 1);
    r = ig_control(q, kBelief, toy_goal(1.0, -0.5), BclfMode::asymptotic(0.9), kActions, 0.99);
    CHECK(r.action == 0);
  }

  TEST_CASE("ig control: constraint excludes the reference-nearest action") {
    // r = -2, W = 3; action 2 has E = (-2 + 4.8) / 0.99 > 0.9 W.
    const auto q = constant_q({-3.0, -3.1, -4.8});
    const auto r = ig_control(q, kBelief, toy_goal(1.0, 1.0), BclfMode::asymptotic(0.9), kActions, 0.99);
    CHECK(r.status == IgStatus::gathering);
    CHECK(r.admissible_count == 2);
    CHECK(r.action == 1);
  }

  TEST_CASE("ig control: forced fallback takes the steepest certified descent") {
    const auto q = constant_q({-1.2, -1.1, -1.5});
    const auto r = ig_control(q, kBelief, toy_goal(0.05, 1.0), BclfMode::asymptotic(0.01), kActions, 0.99);
    CHECK(r.status == IgStatus::forced);
    CHECK(r.admissible_count == 0);
    CHECK(r.action == 1);
    CHECK(steepest_descent_action(q, kBelief, -1.05, 0.99) == 1);
    CHECK_THROWS(ig_control(q, kBelief, toy_goal(0.05, 1.0), BclfMode::asymptotic(0.5), {scalar(0)}, 0.99));
  }

  TEST_CASE("switching controller") {
    const auto q = constant_q({-3.0, -1.0, -2.0});
    CHECK(switching_control(q, kBelief, toy_goal(0.5, 0.8), kActions)[0] == 0.0);
    CHECK(switching_control(q, kBelief, toy_goal(-0.5, 0.8), kActions)[0] == 0.8);
    CHECK(greedy_action(constant_q({1.0, 1.0, 0.0}), kBelief) == 0);
  }

  TEST_CASE("stagnation monitor") {
    std::vector<double> t, dec, flat;
    for (int i = 0; i <= 12; ++i) {
      t.push_back(0.1 * i);
      dec.push_back(5.0 - 0.1 * i);
      flat.push_back(2.0);
    }
    CHECK_FALSE(stagnation_monitor(t, dec, 1.0));
    CHECK(stagnation_monitor(t, flat, 1.0));
    // A drop inside the window clears it; a history shorter than the window never fires.
    flat[11] = 1.9;
    CHECK_FALSE(stagnation_monitor(t, flat, 1.0));
    CHECK_FALSE(stagnation_monitor({0.0, 0.5}, {1.0, 1.0}, 1.0));
    // Rises count as stagnation.
    std::vector<double> up(t.size());
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = 0.01 * static_cast<double>(i);
    CHECK(stagnation_monitor(t, up, 1.0));
  }

  TEST_CASE("theory bounds") {
    const auto b = theory_bounds(0.99, -1.0, 8.73, 0.4);
    CHECK(b.c_min == doctest::Approx((1.0 - 1.0 / 8.73) / 0.99).epsilon(1e-12));
    CHECK(std::abs(b.c_min - 0.8944) < 1e-4);
    CHECK(std::abs(b.asymptotic_w_cap - 100.0) < 1e-6);
    CHECK(std::abs(b.finite_w_cap - 60.4) < 1e-6);
    CHECK(b.asymptotic_valid);
    CHECK(b.finite_valid);
    CHECK(theory_bounds(0.99, -1.0, 100.0 - 1e-9, 0.4).c_min == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(theory_bounds(0.99, -1.0, 100.0 - 1e-9, 0.4).c_min < 1.0);

    // c_min < 1 exactly when W_max is below the asymptotic cap.
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
      const double g = rng.uniform(0.5, 0.999), r = -rng.uniform(0.1, 5.0);
      const double cap = -r / (1.0 - g);
      const double w = cap * rng.uniform(0.5, 1.5);
      const auto t = theory_bounds(g, r, w, 0.1);
      CHECK((t.c_min < 1.0) == t.asymptotic_valid);
    }
    CHECK_THROWS(theory_bounds(0.99, 1.0, 8.0, 0.4));
  }

  TEST_CASE("settling time bound") {
    CHECK(settling_time_bound(80.0, 0.1) == 800);
    CHECK(settling_time_bound(0.0, 0.4) == 0);
    CHECK(settling_time_bound(1.0, 0.3) == 4);
    CHECK(settling_time_bound(1.2, 0.4) == 3);
    CHECK(settling_time_bound(1.21, 0.4) == 4);
  }

  TEST_CASE("goal regions") {
    const auto box = GoalRegion::box(scalar(0.0), scalar(1.0));
    CHECK(box.contains(scalar(0.99)));
    CHECK_FALSE(box.contains(scalar(1.0)));
    CHECK(box.contains_ball(scalar(0.5), 0.5));
    CHECK_FALSE(box.contains_ball(scalar(0.5), 0.51));
    Vector c(2);
    c << 1, 1;
    const auto ball = GoalRegion::ball(c, 0.5);
    Vector p(2);
    p << 1.3, 1.0;
    CHECK(ball.contains(p));
    CHECK(ball.contains_ball(p, 0.2));
    CHECK_FALSE(ball.contains_ball(p, 0.21));
    GoalSpec g = toy_goal(0.0, 0.0);
    g.uncertainty.epsilon = 1.5;
    CHECK_THROWS_AS(g.validate(), ConfigError);
  }

  TEST_CASE("audit of an untrained network on the two-particle system") {
    const Environment env = two_particle_toy();
    EnvironmentMdp mdp(env);
    Rng rng(17);
    const QNetwork q = default_network(env, rng);
    AuditOptions opt;
    opt.next_draws = 20;
    opt.max_steps = 100;
    const auto rep = certificate_audit(q, mdp, opt, 200, rng);
    CHECK(rep.in_goal + rep.off_goal == 200);
    CHECK(rep.off_goal > 0);
    CHECK(rep.row("reach_goal").tpr < 0.8);
    std::ostringstream os;
    write_audit_csv(os, rep);
    CHECK(os.str().rfind("condition,tpr,fpr,n\n", 0) == 0);
    CHECK_THROWS((void)rep.row("missing"));
  }
}
