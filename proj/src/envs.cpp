#include "bsc/envs.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace bsc {

using nlohmann::json;

std::size_t Environment::steps_per_measurement() const {
  const double ratio = measurement_period / dt;
  const double nearest = std::round(ratio);
  if (nearest < 1.0 || std::abs(ratio - nearest) > 1e-9 * nearest)
    throw ConfigError("measurement_period must be an integer multiple of dt");
  return static_cast<std::size_t>(nearest);
}

void Environment::validate() const {
  if (!(dt > 0.0) || !(measurement_period > 0.0) || !(horizon > 0.0)) throw ConfigError("timing values must be positive");
  (void)steps_per_measurement();
  if (actions.empty()) throw ConfigError(name + ": action set is empty");
  for (const auto& a : actions) {
    if (static_cast<std::size_t>(a.size()) != motion.control_dim) throw ConfigError(name + ": action dimension mismatch");
    if (!safety.control_bounds.contains(a, 1e-12)) throw ConfigError(name + ": action outside the control bounds");
  }
  if (!initial_state || !initial_belief || !goal.reference) throw ConfigError(name + ": incomplete environment");
  if (particles == 0) throw ConfigError(name + ": particle count must be positive");
  if (!goal.uncertainty_override) goal.validate();
  // Goal and avoid sets must be disjoint: the goal center must be safe.
  if (safety.h.value) {
    Vector probe = Vector::Zero(static_cast<Eigen::Index>(motion.state_dim));
    probe.head(goal.region.center.size()) = goal.region.center;
    if (!(safety.h.value(probe) > 0.0)) throw ConfigError(name + ": goal center lies in the avoid set");
  }
}

std::string config_directory() {
  if (const char* env = std::getenv("BSC_CONFIG_DIR"); env != nullptr && *env != '\0') return env;
  return BSC_CONFIG_DIR;
}

namespace {

Vector vec(const json& j) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

const json& need(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
  return j.at(key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// Wall contact on selected faces of an axis-aligned map.
struct Walls {
  Vector lower, upper;
  double margin = 0.0;
  // Per face: left, right (coordinate 0), bottom, top (coordinate 1), ...
  std::vector<bool> sensing;

  [[nodiscard]] bool contact(const ConstVectorRef& x) const {
    for (Eigen::Index d = 0; d < lower.size(); ++d) {
      if (sensing[static_cast<std::size_t>(2 * d)] && x[d] <= lower[d] + margin) return true;
      if (sensing[static_cast<std::size_t>(2 * d + 1)] && x[d] >= upper[d] - margin) return true;
    }
    return false;
  }
};

std::vector<bool> parse_faces(const json& j, Eigen::Index dims) {
  std::vector<bool> faces(static_cast<std::size_t>(2 * dims), j.is_null());
  if (j.is_null()) return faces;
  static const char* names[] = {"left", "right", "bottom", "top"};
  for (const auto& f : j) {
    const auto s = f.get<std::string>();
    bool found = false;
    for (std::size_t k = 0; k < 4 && k < faces.size(); ++k) {
      if (s == names[k]) {
        faces[k] = true;
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown wall '" + s + "'");
  }
  return faces;
}

ObservationModel binary_observation(std::function<bool(const ConstVectorRef&)> event, double fault) {
  if (!(fault >= 0.0 && fault < 0.5)) throw ConfigError("binary sensor fault probability must lie in [0, 0.5)");
  ObservationModel obs;
  obs.sample = [event, fault](const ConstVectorRef& x, Rng& rng) {
    bool z = event(x);
    if (fault > 0.0 && rng.bernoulli(fault)) z = !z;
    return Vector::Constant(1, z ? 1.0 : 0.0);
  };
  const double log_hit = std::log1p(-fault);
  const double log_miss = fault > 0.0 ? std::log(fault) : -std::numeric_limits<double>::infinity();
  obs.log_likelihood = [event, log_hit, log_miss](const ConstVectorRef& z, const ConstVectorRef& x) {
    const bool predicted = event(x);
    const bool observed = z[0] > 0.5;
    return predicted == observed ? log_hit : log_miss;
  };
  return obs;
}

ObservationModel parse_noise(const json& j, const std::optional<Walls>& walls, std::size_t pos_dim) {
  const auto type = need(j, "type").get<std::string>();
  const auto pd = static_cast<Eigen::Index>(pos_dim);
  if (type == "gaussian_position") {
    const double floor = need(j, "floor").get<double>();
    const double slope = get_or(j, "slope", 0.0);
    const Vector anchor = vec(need(j, "anchor"));
    if (!(floor > 0.0) || slope < 0.0 || anchor.size() != pd) throw ConfigError("invalid gaussian_position noise");
    auto sigma = [floor, slope, anchor, pd](const ConstVectorRef& x) {
      return floor + slope * (x.head(pd) - anchor).norm();
    };
    ObservationModel obs;
    obs.sample = [sigma, pd](const ConstVectorRef& x, Rng& rng) {
      const double s = sigma(x);
      Vector z(pd);
      for (Eigen::Index i = 0; i < pd; ++i) z[i] = x[i] + s * rng.normal();
      return z;
    };
    obs.log_likelihood = [sigma, pd](const ConstVectorRef& z, const ConstVectorRef& x) {
      const double s = sigma(x);
      return -0.5 * ((z - x.head(pd)) / s).squaredNorm() - static_cast<double>(pd) * std::log(s);
    };
    return obs;
  }
  if (type == "range") {
    const Vector antenna = vec(need(j, "antenna"));
    const double floor = need(j, "floor").get<double>();
    const double slope = get_or(j, "slope", 0.0);
    if (!(floor > 0.0) || slope < 0.0 || antenna.size() != pd) throw ConfigError("invalid range noise");
    ObservationModel obs;
    obs.sample = [antenna, floor, slope, pd](const ConstVectorRef& x, Rng& rng) {
      const double d = (x.head(pd) - antenna).norm();
      return Vector::Constant(1, d + (floor + slope * d) * rng.normal());
    };
    obs.log_likelihood = [antenna, floor, slope, pd](const ConstVectorRef& z, const ConstVectorRef& x) {
      const double d = (x.head(pd) - antenna).norm();
      const double s = floor + slope * d;
      const double e = (z[0] - d) / s;
      return -0.5 * e * e - std::log(s);
    };
    return obs;
  }
  if (type == "bump") {
    if (!walls) throw ConfigError("bump sensor needs dynamics.walls");
    Walls w = *walls;
    w.margin = need(j, "contact_margin").get<double>();
    w.sensing = parse_faces(j.contains("walls") ? j.at("walls") : json(), w.lower.size());
    if (!(w.margin >= 0.0)) throw ConfigError("contact_margin must be nonnegative");
    return binary_observation([w](const ConstVectorRef& x) { return w.contact(x); }, get_or(j, "fault_probability", 0.0));
  }
  if (type == "region") {
    const Vector c = vec(need(j, "center"));
    const Vector hw = vec(need(j, "half_width"));
    if (c.size() != pd || hw.size() != pd) throw ConfigError("sensing region dimension mismatch");
    return binary_observation(
        [c, hw, pd](const ConstVectorRef& x) { return ((x.head(pd) - c).array().abs() <= hw.array()).all(); },
        get_or(j, "fault_probability", 0.0));
  }
  throw ConfigError("unknown noise type '" + type + "'");
}

// h > 0 outside an axis-aligned box, composed from its faces with a smooth max.
BarrierFunction box_exterior(const Vector& lower, const Vector& upper, std::size_t dim, double beta) {
  std::vector<BarrierFunction> faces;
  for (Eigen::Index d = 0; d < lower.size(); ++d) {
    Vector n = Vector::Zero(static_cast<Eigen::Index>(dim));
    n[d] = -1.0;
    faces.push_back(BarrierFunction::affine(n, lower[d]));  // lower - x
    n[d] = 1.0;
    faces.push_back(BarrierFunction::affine(n, -upper[d]));  // x - upper
  }
  return smooth_set(std::move(faces), SmoothKind::max, beta);
}

// Position barrier lifted to a double integrator: h(p) + k grad h(p)^T v.
// The third-derivative term of the position Hessian block is dropped.
BarrierFunction velocity_augmented(BarrierFunction hp, std::size_t pos_dim, double k) {
  const auto d = static_cast<Eigen::Index>(pos_dim);
  BarrierFunction out;
  out.dim = 2 * pos_dim;
  out.value = [hp, d, k](const ConstVectorRef& x) {
    BarrierEval e;
    hp.evaluate(x.head(d), e);
    return e.value + k * e.gradient.dot(x.tail(d));
  };
  out.evaluate = [hp, d, k](const ConstVectorRef& x, BarrierEval& res) {
    BarrierEval e;
    hp.evaluate(x.head(d), e);
    res.value = e.value + k * e.gradient.dot(x.tail(d));
    res.gradient.resize(2 * d);
    res.gradient.head(d) = e.gradient + k * e.hessian * x.tail(d);
    res.gradient.tail(d) = k * e.gradient;
    res.hessian.setZero(2 * d, 2 * d);
    res.hessian.topLeftCorner(d, d) = e.hessian;
    res.hessian.topRightCorner(d, d) = k * e.hessian;
    res.hessian.bottomLeftCorner(d, d) = k * e.hessian;
  };
  return out;
}

BarrierFunction parse_avoid(const json& j, std::size_t pos_dim) {
  const auto type = need(j, "type").get<std::string>();
  const auto pd = static_cast<Eigen::Index>(pos_dim);
  if (type == "halfspace") {
    const Vector n = vec(need(j, "normal"));
    if (n.size() != pd) throw ConfigError("halfspace normal dimension mismatch");
    return BarrierFunction::affine(n, need(j, "offset").get<double>());
  }
  if (type == "ball") {
    const Vector c = vec(need(j, "center"));
    if (c.size() != pd) throw ConfigError("avoid ball dimension mismatch");
    return BarrierFunction::ball_exterior(c, need(j, "radius").get<double>(), pos_dim);
  }
  if (type == "rectangles") {
    const double beta = get_or(j, "beta", 50.0);
    std::vector<BarrierFunction> parts;
    for (const auto& box : need(j, "boxes")) {
      const Vector lo = vec(need(box, "lower"));
      const Vector hi = vec(need(box, "upper"));
      if (lo.size() != pd || hi.size() != pd || (lo.array() >= hi.array()).any())
        throw ConfigError("invalid avoid rectangle");
      parts.push_back(box_exterior(lo, hi, pos_dim, beta));
    }
    if (parts.empty()) throw ConfigError("rectangles avoid set needs at least one box");
    if (parts.size() == 1) return parts.front();
    return smooth_set(std::move(parts), SmoothKind::min, beta);
  }
  throw ConfigError("unknown avoid type '" + type + "'");
}

std::vector<Vector> parse_actions(const json& j, std::size_t control_dim) {
  const auto type = need(j, "type").get<std::string>();
  std::vector<Vector> out;
  if (type == "linspace") {
    const double lo = need(j, "min").get<double>();
    const double hi = need(j, "max").get<double>();
    const auto n = need(j, "count").get<std::size_t>();
    if (control_dim != 1 || n < 2 || !(hi > lo)) throw ConfigError("linspace actions need 1D control and count >= 2");
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(Vector::Constant(1, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1)));
  } else if (type == "compass") {
    if (control_dim != 2) throw ConfigError("compass actions need 2D control");
    const double speed = need(j, "speed").get<double>();
    // E, NE, N, NW, W, SW, S, SE, then stay.
    for (int k = 0; k < 8; ++k) {
      const double a = k * std::numbers::pi / 4.0;
      Vector u(2);
      u << speed * std::cos(a), speed * std::sin(a);
      for (Eigen::Index i = 0; i < 2; ++i) {
        if (std::abs(u[i]) < 1e-15) u[i] = 0.0;
      }
      out.push_back(u);
    }
    if (get_or(j, "include_stay", true)) out.push_back(Vector::Zero(2));
  } else if (type == "list") {
    for (const auto& v : need(j, "values")) {
      Vector u = vec(v);
      if (static_cast<std::size_t>(u.size()) != control_dim) throw ConfigError("action dimension mismatch");
      out.push_back(u);
    }
  } else {
    throw ConfigError("unknown action type '" + type + "'");
  }
  return out;
}

struct UniformBox {
  Vector lower, upper;
  Eigen::Index full_dim;
  std::function<double(const ConstVectorRef&)> h;  // rejection when set
  double margin = 0.0;

  [[nodiscard]] Vector draw(Rng& rng) const {
    Vector x = Vector::Zero(full_dim);
    for (int attempt = 0; attempt < 100000; ++attempt) {
      for (Eigen::Index i = 0; i < lower.size(); ++i) x[i] = rng.uniform(lower[i], upper[i]);
      if (!h || h(x) > margin) return x;
    }
    throw ConfigError("initial region has no safe states");
  }
};

}  // namespace

Environment environment_from_json_text(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("geometry file is not valid JSON: " + std::string(e.what()));
  }
  try {
    if (get_or(j, "schema_version", 0) != 1) throw ConfigError("unsupported geometry schema_version");
    Environment env;
    env.source = source;
    env.name = need(j, "name").get<std::string>();
    const auto model = get_or<std::string>(j, "model", "generic");

    // dynamics
    const json& dyn = need(j, "dynamics");
    const auto dtype = need(dyn, "type").get<std::string>();
    const auto dim = need(dyn, "dim").get<std::size_t>();
    if (dim == 0 || dim > 8) throw ConfigError("dynamics.dim must lie in 1..8");
    std::size_t pos_dim = dim;
    bool second_order = false;
    if (dtype == "single_integrator") {
      env.motion = MotionModel::single_integrator(dim, need(dyn, "sigma").get<double>());
    } else if (dtype == "double_integrator") {
      env.motion = MotionModel::double_integrator(dim, need(dyn, "sigma_position").get<double>(),
                                                  need(dyn, "sigma_velocity").get<double>());
      second_order = true;
    } else {
      throw ConfigError("unknown dynamics type '" + dtype + "'");
    }
    env.motion.substeps = get_or<std::size_t>(dyn, "substeps", 1);
    env.position_dim = pos_dim;
    const auto pd = static_cast<Eigen::Index>(pos_dim);
    std::optional<Walls> walls;
    if (dyn.contains("walls")) {
      Walls w;
      w.lower = vec(need(dyn.at("walls"), "lower"));
      w.upper = vec(need(dyn.at("walls"), "upper"));
      if (w.lower.size() != pd || w.upper.size() != pd || (w.lower.array() >= w.upper.array()).any())
        throw ConfigError("invalid wall bounds");
      walls = w;
      const Vector lo = w.lower, hi = w.upper;
      // Position clamping; for second-order models the outward velocity is zeroed.
      env.motion.project = [lo, hi, pd, second_order](VectorRef x) {
        for (Eigen::Index d = 0; d < pd; ++d) {
          if (x[d] < lo[d]) {
            x[d] = lo[d];
            if (second_order && x[pd + d] < 0.0) x[pd + d] = 0.0;
          } else if (x[d] > hi[d]) {
            x[d] = hi[d];
            if (second_order && x[pd + d] > 0.0) x[pd + d] = 0.0;
          }
        }
      };
    }

    env.observation = parse_noise(need(j, "noise"), walls, pos_dim);

    // timing
    const json& timing = need(j, "timing");
    env.dt = need(timing, "dt").get<double>();
    env.measurement_period = need(timing, "measurement_period").get<double>();
    env.horizon = get_or(timing, "horizon", 20.0);

    // actions and bounds
    env.actions = parse_actions(need(j, "actions"), env.motion.control_dim);
    const json& cb = need(j, "control_bounds");
    env.safety.control_bounds = BoxBounds{vec(need(cb, "lower")), vec(need(cb, "upper"))};
    if (static_cast<std::size_t>(env.safety.control_bounds.lower.size()) != env.motion.control_dim ||
        static_cast<std::size_t>(env.safety.control_bounds.upper.size()) != env.motion.control_dim)
      throw ConfigError("control bounds dimension mismatch");

    // safety
    const json safety = j.contains("safety") ? j.at("safety") : json::object();
    env.safety.alpha3_gain = get_or(safety, "kappa", 1.0);
    env.safety.delta_bar = RiskLevel(get_or(safety, "delta_bar", 0.01));
    if (!(env.safety.alpha3_gain > 0.0)) throw ConfigError("kappa must be positive");
    if (j.contains("avoid") && need(j.at("avoid"), "type").get<std::string>() != "none") {
      BarrierFunction hp = parse_avoid(j.at("avoid"), pos_dim);
      env.avoid_value = [value = hp.value, pd](const ConstVectorRef& x) { return value(x.head(pd)); };
      if (second_order)
        env.safety.h = velocity_augmented(std::move(hp), pos_dim, get_or(safety, "velocity_gain", 1.0));
      else
        env.safety.h = std::move(hp);
    } else {
      env.safety.h = BarrierFunction::affine(Vector::Zero(static_cast<Eigen::Index>(env.motion.state_dim)), 1.0);
    }
    if (!env.avoid_value) env.avoid_value = env.safety.h.value;

    // goal
    const json& goal = need(j, "goal");
    const auto gtype = need(goal, "type").get<std::string>();
    if (gtype == "box")
      env.goal.region = GoalRegion::box(vec(need(goal, "center")), vec(need(goal, "half_width")));
    else if (gtype == "ball")
      env.goal.region = GoalRegion::ball(vec(need(goal, "center")), need(goal, "radius").get<double>());
    else
      throw ConfigError("unknown goal type '" + gtype + "'");
    if (env.goal.region.center.size() != pd) throw ConfigError("goal dimension mismatch");
    env.goal.uncertainty = UncertaintySpec{need(goal, "epsilon").get<double>(), RiskLevel(get_or(goal, "delta_l", 0.01))};
    const double kp = get_or(goal, "kp", 1.0);
    const double kd = get_or(goal, "kd", 0.0);
    const Vector center = env.goal.region.center;
    const BoxBounds bounds = env.safety.control_bounds;
    env.goal.reference = [kp, kd, center, bounds, pd, second_order](const Vector& m) {
      Vector u = -kp * (m.head(pd) - center);
      if (second_order) u -= kd * m.tail(pd);
      return bounds.clip(u);
    };

    // initial distribution
    const json& init = need(j, "initial");
    UniformBox box{vec(need(init, "lower")), vec(need(init, "upper")), static_cast<Eigen::Index>(env.motion.state_dim),
                   {}, 0.0};
    if (box.lower.size() != pd || box.upper.size() != pd) throw ConfigError("initial box dimension mismatch");
    if (get_or(init, "reject_unsafe", false)) {
      box.h = env.safety.h.value;
      box.margin = get_or(init, "safety_margin", 0.0);
    }
    env.initial_state = [box](Rng& rng) { return box.draw(rng); };
    env.initial_belief = [box](Rng& rng, std::size_t n) {
      Matrix states(box.full_dim, static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) states.col(static_cast<Eigen::Index>(i)) = box.draw(rng);
      return ParticleBelief(std::move(states));
    };
    env.particles = get_or<std::size_t>(j, "particles", 1000);

    if (model == "two_particle") {
      // Two-particle system: the gap between the particles is the uncertainty,
      // the truth is one of them, and the reward is a flat -1.
      const double gap = need(goal, "gap").get<double>();
      env.goal.uncertainty_override = [gap](const ParticleBelief& b) {
        double widest = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i)
          for (std::size_t k = i + 1; k < b.size(); ++k) widest = std::max(widest, (b.particle(i) - b.particle(k)).norm());
        return widest - gap;
      };
      env.goal.flat_reward = true;
      env.truth_is_particle = true;
      env.particles = 2;
    } else if (model != "generic") {
      throw ConfigError("unknown model '" + model + "'");
    }
    env.validate();
    return env;
  } catch (const json::exception& e) {
    throw ConfigError("geometry file: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("geometry file: " + std::string(e.what()));
  }
}

Environment load_environment_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open geometry file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return environment_from_json_text(ss.str(), path);
}

Environment make_environment(const std::string& name_or_path) {
  namespace fs = std::filesystem;
  if (name_or_path.find('/') != std::string::npos || name_or_path.ends_with(".json"))
    return load_environment_file(name_or_path);
  const fs::path p = fs::path(config_directory()) / "envs" / (name_or_path + ".json");
  if (!fs::exists(p)) throw ConfigError("unknown environment '" + name_or_path + "'");
  return load_environment_file(p.string());
}

Environment lightdark() { return make_environment("lightdark"); }
Environment antenna() { return make_environment("antenna"); }
Environment bumper() { return make_environment("bumper"); }
Environment two_particle_toy() { return make_environment("two_particle"); }
Environment example1_toy() { return make_environment("example1"); }
Environment free_flyer() { return make_environment("free_flyer"); }

std::pair<Vector, std::optional<Vector>> step_truth(const Environment& env, const ConstVectorRef& x,
                                                    const ConstVectorRef& u, Rng& rng, std::size_t step_index) {
  Vector next = x;
  euler_step(next, env.motion, u, env.dt, rng);
  std::optional<Vector> z;
  if ((step_index + 1) % env.steps_per_measurement() == 0) z = env.observation.sample(next, rng);
  return {std::move(next), std::move(z)};
}

EnvironmentMdp::EnvironmentMdp(const Environment& env, std::size_t particles)
    : env_(&env), particles_(particles == 0 ? env.particles : particles) {}

MdpState EnvironmentMdp::sample_initial(Rng& rng) const {
  MdpState s;
  s.belief = env_->initial_belief(rng, particles_);
  if (env_->truth_is_particle) {
    s.truth_index = static_cast<std::size_t>(rng.below(particles_));
    s.truth = s.belief.particle(s.truth_index);
  } else {
    s.truth = env_->initial_state(rng);
  }
  return s;
}

MdpState EnvironmentMdp::sample_random(Rng& rng) const {
  return random_sampler ? random_sampler(rng) : sample_initial(rng);
}

MdpTransition EnvironmentMdp::step(const MdpState& state, std::size_t action, Rng& rng) const {
  if (action >= env_->actions.size()) throw std::out_of_range("action index out of range");
  const Environment& env = *env_;
  const Vector& u = env.actions[action];
  MdpTransition tr;
  tr.reward = env.goal.reward(state.belief);
  tr.next = state;
  MdpState& s = tr.next;
  NoiseStream noise{rng.next(), 0};
  const std::size_t k = env.steps_per_measurement();
  if (env.truth_is_particle) {
    for (std::size_t i = 0; i < k; ++i) propagate_inplace(s.belief, env.motion, u, env.dt, noise);
    s.truth = s.belief.particle(s.truth_index);
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      euler_step(s.truth, env.motion, u, env.dt, rng);
      propagate_inplace(s.belief, env.motion, u, env.dt, noise);
    }
  }
  const Vector z = env.observation.sample(s.truth, rng);
  try {
    s.belief = measurement_update(s.belief, env.observation, z, rng);
  } catch (const DegenerateUpdateError&) {
    // Keep the predicted belief.
  }
  if (env.truth_is_particle) {
    // Re-identify the truth among the resampled particles.
    for (std::size_t i = 0; i < s.belief.size(); ++i) {
      if (s.belief.particle(i) == s.truth) {
        s.truth_index = i;
        break;
      }
    }
  }
  tr.terminal = terminal(s.belief);
  return tr;
}

bool EnvironmentMdp::terminal(const ParticleBelief& belief) const { return env_->goal.localized(belief); }

double EnvironmentMdp::reward(const ParticleBelief& belief) const { return env_->goal.reward(belief); }

QNetwork default_network(const Environment& env, Rng& rng) {
  const std::size_t nx = env.state_dim();
  const std::size_t na = env.actions.size();
  // Rough normalisation of positions to O(1) inputs from the initial region.
  Vector scale = Vector::Ones(static_cast<Eigen::Index>(nx));
  Rng probe(0x5eed);
  const ParticleBelief sample = env.initial_belief(probe, 256);
  for (Eigen::Index d = 0; d < static_cast<Eigen::Index>(nx); ++d) {
    const double spread = sample.states().row(d).cwiseAbs().maxCoeff();
    if (spread > 1.0) scale[d] = 1.0 / spread;
  }
  if (env.truth_is_particle) return QNetwork::head_only(nx * env.particles, na, {256, 256}, scale, rng);
  const std::size_t width = env.name == "lightdark" ? 128 : 256;
  return QNetwork::with_encoder(nx, na, {32, 32}, 8, {width, width, width}, scale, rng);
}

}  // namespace bsc
