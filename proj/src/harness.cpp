#include "bsc/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace bsc {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(Stack s) noexcept {
  switch (s) {
    case Stack::reference: return "reference";
    case Stack::reference_bcbf: return "reference+bcbf";
    case Stack::reference_bclf: return "reference+bclf";
    case Stack::full: return "full";
    case Stack::switching: return "switching";
  }
  return "?";
}

Stack parse_stack(const std::string& s) {
  for (Stack k : {Stack::reference, Stack::reference_bcbf, Stack::reference_bclf, Stack::full, Stack::switching})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown controller stack '" + s + "'");
}

bool uses_bclf(Stack s) noexcept { return s == Stack::reference_bclf || s == Stack::full || s == Stack::switching; }
bool uses_bcbf(Stack s) noexcept { return s == Stack::reference_bcbf || s == Stack::full || s == Stack::switching; }

void RunConfig::validate() const {
  if (episodes == 0 && seeds.empty()) throw ConfigError("episodes must be at least 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(stagnation_window > 0.0)) throw ConfigError("stagnation_window must be positive");
  if (mode.kind == BclfMode::Kind::asymptotic && !(mode.c > 0.0 && mode.c < 1.0))
    throw ConfigError("asymptotic rate c must lie in (0, 1)");
  if (mode.kind == BclfMode::Kind::finite_time && !(mode.eta > 0.0)) throw ConfigError("eta must be positive");
  if (delta_a && !(*delta_a > 0.0 && *delta_a < 1.0)) throw ConfigError("delta_a must lie in (0, 1)");
  if (delta_l && !(*delta_l > 0.0 && *delta_l < 1.0)) throw ConfigError("delta_l must lie in (0, 1)");
  if (uses_bclf(stack) && weights.empty()) throw ConfigError(std::string(to_string(stack)) + " stack needs weights");
  if (!weights.empty() && !fs::exists(weights)) throw ConfigError("weights file not found: " + weights);
}

std::vector<std::uint64_t> RunConfig::episode_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(episodes);
  for (std::size_t i = 0; i < episodes; ++i) out[i] = stream_key(seed, 0xE915u, i);
  return out;
}

MetricsSummary summarize(const std::vector<EpisodeResult>& episodes) {
  MetricsSummary m;
  m.n = episodes.size();
  if (m.n == 0) return m;
  std::vector<double> pl;
  std::size_t reach = 0, avoid = 0;
  for (const auto& e : episodes) {
    reach += e.reached ? 1 : 0;
    avoid += e.violated ? 0 : 1;
    if (e.success()) pl.push_back(e.path_length);
  }
  const auto n = static_cast<double>(m.n);
  m.reach_rate = static_cast<double>(reach) / n;
  m.avoid_rate = static_cast<double>(avoid) / n;
  m.n_success = pl.size();
  m.success_rate = static_cast<double>(pl.size()) / n;
  if (!pl.empty()) {
    m.pl_mean = std::accumulate(pl.begin(), pl.end(), 0.0) / static_cast<double>(pl.size());
    double ss = 0.0;
    for (double v : pl) ss += (v - m.pl_mean) * (v - m.pl_mean);
    m.pl_std = pl.size() > 1 ? std::sqrt(ss / static_cast<double>(pl.size() - 1)) : 0.0;
    std::sort(pl.begin(), pl.end());
    const std::size_t h = pl.size() / 2;
    m.pl_median = pl.size() % 2 == 1 ? pl[h] : 0.5 * (pl[h - 1] + pl[h]);
  }
  return m;
}

PreparedRun prepare_run(const RunConfig& config) {
  config.validate();
  PreparedRun run{make_environment(config.env), std::nullopt, 0};
  Environment& env = run.env;
  if (config.delta_l) env.goal.uncertainty.delta_l = RiskLevel(*config.delta_l);
  if (config.delta_a) {
    const auto m = static_cast<std::size_t>(std::ceil(env.horizon / env.measurement_period - 1e-9));
    env.safety.delta_bar = interval_risk(RiskLevel(*config.delta_a), std::max<std::size_t>(m, 1));
  }
  run.particles = config.particles.value_or(env.particles);
  if (run.particles == 0) throw ConfigError("particles must be positive");
  if (!config.weights.empty()) {
    try {
      run.network = load_weights(config.weights);
    } catch (const WeightsFormatError& e) {
      throw ConfigError(e.what());
    }
    if (run.network->head().output_dim() != env.actions.size())
      throw ConfigError("weights have " + std::to_string(run.network->head().output_dim()) + " actions, environment has " +
                        std::to_string(env.actions.size()));
    const std::size_t expected = run.network->has_encoder() ? env.state_dim() : env.state_dim() * run.particles;
    const std::size_t got =
        run.network->has_encoder() ? run.network->encoder().input_dim() : run.network->head().input_dim();
    if (expected != got) throw ConfigError("weights input dimension does not match the environment");
  }
  return run;
}

namespace {

double top_p_bound(const ParticleBelief& b, const HistoryState& hist, const SafetySpec& spec) {
  (void)b;
  return top_p_select(hist, spec.delta_bar).bound;
}

}  // namespace

EpisodeResult run_episode(const PreparedRun& run, const RunConfig& config, std::uint64_t episode_seed) {
  Rng init = Rng::keyed(episode_seed, 5);
  Vector truth = run.env.initial_state(init);
  ParticleBelief belief = run.env.initial_belief(init, run.particles);
  return run_episode_from(run, config, episode_seed, std::move(truth), std::move(belief));
}

EpisodeResult run_episode_from(const PreparedRun& run, const RunConfig& config, std::uint64_t episode_seed,
                               Vector truth, ParticleBelief belief) {
  const Environment& env = run.env;
  const QNetwork* q = run.network ? &*run.network : nullptr;
  if (uses_bclf(config.stack) && q == nullptr) throw ConfigError("stack needs a trained network");
  const bool bcbf = uses_bcbf(config.stack);
  const auto pd = static_cast<Eigen::Index>(env.position_dim);

  Rng truth_rng = Rng::keyed(episode_seed, 1);
  Rng obs_rng = Rng::keyed(episode_seed, 2);
  NoiseStream noise{stream_key(episode_seed, 3), 0};
  Rng resample_rng = Rng::keyed(episode_seed, 4);
  QpSolver solver;

  EpisodeResult res;
  res.seed = episode_seed;
  const std::size_t k = env.steps_per_measurement();
  const auto total = static_cast<std::size_t>(std::llround(env.horizon / env.dt));
  HistoryState hist = init_history(belief, env.safety);
  Vector u_ig = Vector::Zero(static_cast<Eigen::Index>(env.control_dim()));
  if (env.avoid_value(truth) < 0.0) res.violated = true;

  for (std::size_t step = 0; step <= total; ++step) {
    const double t = static_cast<double>(step) * env.dt;
    if (step % k == 0) {
      if (step > 0) {
        const Vector z = env.observation.sample(truth, obs_rng);
        const double c_before = bcbf ? top_p_bound(belief, hist, env.safety) : 0.0;
        try {
          belief = measurement_update(belief, env.observation, z, resample_rng);
        } catch (const DegenerateUpdateError&) {
          // Keep the predicted belief.
        }
        hist = init_history(belief, env.safety);
        if (bcbf && c_before < 0.0 && !(top_p_bound(belief, hist, env.safety) < 0.0)) ++res.update_violations;
      }
      const double r_eps = env.goal.uncertainty_of(belief);
      const double w = q ? bclf_value(*q, belief) : std::numeric_limits<double>::quiet_NaN();
      std::string status = "reference";
      if (env.goal.region.contains(truth) && r_eps <= 0.0) {
        res.reached = true;
        res.time_to_goal = t;
      }
      if (!res.reached && step < total) {
        switch (config.stack) {
          case Stack::reference:
          case Stack::reference_bcbf:
            u_ig = env.goal.reference(mean(belief));
            break;
          case Stack::reference_bclf:
          case Stack::full: {
            const IgResult ig = ig_control(*q, belief, env.goal, config.mode, env.actions, config.gamma);
            u_ig = ig.u;
            status = to_string(ig.status);
            if (ig.status == IgStatus::forced) ++res.forced;
            if (config.stack == Stack::full && ig.status != IgStatus::reference) {
              std::vector<double> times = res.trace.t, values = res.trace.w;
              times.push_back(t);
              values.push_back(w);
              if (stagnation_monitor(times, values, config.stagnation_window)) {
                u_ig = env.actions[steepest_descent_action(*q, belief, env.goal.reward(belief), config.gamma)];
                status = "conflict";
                ++res.conflicts;
              }
            }
            break;
          }
          case Stack::switching:
            u_ig = switching_control(*q, belief, env.goal, env.actions);
            status = r_eps <= 0.0 ? "reference" : "greedy";
            break;
        }
      }
      res.trace.t.push_back(t);
      res.trace.w.push_back(w);
      res.trace.r_eps.push_back(r_eps);
      res.trace.ig_status.push_back(res.reached ? "reached" : status);
    }
    if (res.reached || step == total) break;

    Vector u = u_ig;
    if (bcbf) {
      const FilterResult f = safety_filter(belief, hist, u_ig, env.motion, env.safety, solver);
      res.trace.c.push_back(f.report.bound);
      res.trace.slack.push_back(f.report.slack);
      if (f.report.status == FilterStatus::fault) {
        res.fault = true;
        res.violated = true;
        break;
      }
      if (f.report.status == FilterStatus::slack) ++res.slack_ticks;
      u = f.u;
    }
    const Vector before = truth.head(pd);
    euler_step(truth, env.motion, u, env.dt, truth_rng);
    res.path_length += (truth.head(pd) - before).norm();
    propagate_inplace(belief, env.motion, u, env.dt, noise);
    if (bcbf) update_history_inplace(hist, belief, env.safety);
    if (env.avoid_value(truth) < 0.0) res.violated = true;
    res.steps = step + 1;
  }
  res.final_truth = truth;
  if (!config.traces) res.trace = {};
  return res;
}

Evaluation evaluate(const RunConfig& config) { return evaluate(prepare_run(config), config); }

Evaluation evaluate(const PreparedRun& run, const RunConfig& config) {
  const auto seeds = config.episode_seeds();
  Evaluation ev;
  ev.config = config;
  ev.episodes.resize(seeds.size());
  std::size_t workers = config.workers != 0 ? config.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
          try {
            ev.episodes[i] = run_episode(run, config, seeds[i]);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = seeds.size();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  ev.summary = summarize(ev.episodes);
  return ev;
}

std::vector<Evaluation> sweep(const std::vector<RunConfig>& cells) {
  std::vector<Evaluation> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(evaluate(c));
  return out;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string params_string(const RunConfig& c) {
  std::ostringstream ss;
  ss << "gamma=" << fmt(c.gamma);
  if (c.delta_a) ss << ";delta_a=" << fmt(*c.delta_a);
  if (c.delta_l) ss << ";delta_l=" << fmt(*c.delta_l);
  if (c.particles) ss << ";particles=" << *c.particles;
  ss << ";seed=" << c.seed;
  return ss.str();
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number_or_null(x));
  return a;
}

}  // namespace

void write_summary_csv(std::ostream& out, const std::vector<Evaluation>& evaluations) {
  out << "schema_version,label,env,stack,mode,params,reach,avoid,sr,pl_mean,pl_std,pl_median,n\n";
  for (const auto& ev : evaluations) {
    const auto& c = ev.config;
    const auto& m = ev.summary;
    out << kResultSchemaVersion << ',' << c.label << ',' << c.env << ',' << to_string(c.stack) << ','
        << to_string(c.mode) << ',' << params_string(c) << ',' << fmt(m.reach_rate) << ',' << fmt(m.avoid_rate) << ','
        << fmt(m.success_rate) << ',' << fmt(m.pl_mean) << ',' << fmt(m.pl_std) << ',' << fmt(m.pl_median) << ','
        << m.n << '\n';
  }
}

void write_episodes_jsonl(std::ostream& out, const Evaluation& evaluation) {
  const auto& c = evaluation.config;
  for (const auto& e : evaluation.episodes) {
    json j;
    j["schema_version"] = kResultSchemaVersion;
    j["label"] = c.label;
    j["env"] = c.env;
    j["stack"] = to_string(c.stack);
    j["mode"] = to_string(c.mode);
    j["seed"] = e.seed;
    j["reached"] = e.reached;
    j["violated"] = e.violated;
    j["fault"] = e.fault;
    j["success"] = e.success();
    j["path_length"] = e.path_length;
    j["time_to_goal"] = e.time_to_goal ? json(*e.time_to_goal) : json(nullptr);
    j["steps"] = e.steps;
    j["forced"] = e.forced;
    j["conflicts"] = e.conflicts;
    j["slack_ticks"] = e.slack_ticks;
    j["update_violations"] = e.update_violations;
    if (c.traces) {
      j["trace"] = {{"t", vec_json(e.trace.t)},         {"w", vec_json(e.trace.w)},
                    {"r_eps", vec_json(e.trace.r_eps)}, {"ig_status", e.trace.ig_status},
                    {"c", vec_json(e.trace.c)},         {"slack", vec_json(e.trace.slack)}};
    }
    out << j.dump() << '\n';
  }
}

void write_results(const std::string& dir, const std::vector<Evaluation>& evaluations) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir);
  std::ofstream summary(fs::path(dir) / "summary.csv");
  std::ofstream episodes(fs::path(dir) / "episodes.jsonl");
  if (!summary || !episodes) throw std::runtime_error("cannot write results under " + dir);
  write_summary_csv(summary, evaluations);
  for (const auto& ev : evaluations) write_episodes_jsonl(episodes, ev);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

// Bundled environment names stay as they are; anything path-like is resolved.
std::string resolve_env(const std::string& env, const std::string& base_dir) {
  if (env.find('/') == std::string::npos && !env.ends_with(".json")) return env;
  return resolve(env, base_dir);
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + what);
  }
}

BclfMode parse_mode(const json& j) {
  check_keys(j, {"kind", "c", "eta"}, "mode");
  const auto kind = j.value("kind", std::string("finite_time"));
  try {
    if (kind == "asymptotic") return BclfMode::asymptotic(j.value("c", 0.99));
    if (kind == "finite_time") return BclfMode::finite_time(j.value("eta", 0.4));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown mode kind '" + kind + "'");
}

RunConfig run_config_from(const json& j, const std::string& base_dir) {
  check_keys(j,
             {"schema_version", "env", "stack", "mode", "delta_a", "delta_l", "particles", "gamma", "stagnation_window",
              "seed", "seeds", "episodes", "weights", "out", "workers", "traces", "label", "sweep"},
             "run config");
  RunConfig c;
  try {
    if (j.value("schema_version", 1) != 1) throw ConfigError("unsupported run config schema_version");
    c.env = resolve_env(j.value("env", c.env), base_dir);
    c.stack = parse_stack(j.value("stack", std::string(to_string(c.stack))));
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode"));
    if (j.contains("delta_a")) c.delta_a = j.at("delta_a").get<double>();
    if (j.contains("delta_l")) c.delta_l = j.at("delta_l").get<double>();
    if (j.contains("particles")) c.particles = j.at("particles").get<std::size_t>();
    c.gamma = j.value("gamma", c.gamma);
    c.stagnation_window = j.value("stagnation_window", c.stagnation_window);
    c.seed = j.value("seed", c.seed);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.episodes = j.value("episodes", c.episodes);
    c.weights = resolve(j.value("weights", std::string()), base_dir);
    c.out_dir = resolve(j.value("out", std::string()), base_dir);
    c.workers = j.value("workers", c.workers);
    c.traces = j.value("traces", c.traces);
    c.label = j.value("label", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

}  // namespace

RunConfig run_config_from_json(const std::string& text, const std::string& base_dir) {
  json j = parse_json(text);
  if (j.contains("sweep")) throw ConfigError("config has a sweep section; use the sweep subcommand");
  return run_config_from(j, base_dir);
}

std::vector<RunConfig> sweep_from_json(const std::string& text, const std::string& base_dir) {
  json base = parse_json(text);
  if (!base.is_object()) throw ConfigError("run config must be a JSON object");
  std::vector<RunConfig> cells;
  if (!base.contains("sweep")) {
    cells.push_back(run_config_from(base, base_dir));
    return cells;
  }
  const json entries = base.at("sweep");
  base.erase("sweep");
  if (!entries.is_array() || entries.empty()) throw ConfigError("sweep must be a non-empty array");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    json cell = base;
    cell.merge_patch(entries[i]);
    RunConfig c = run_config_from(cell, base_dir);
    if (c.label.empty()) c.label = "cell" + std::to_string(i);
    cells.push_back(std::move(c));
  }
  return cells;
}

TrainConfig train_config_from_json(const std::string& text, const std::string& base_dir) {
  const json j = parse_json(text);
  check_keys(j, {"schema_version", "env", "particles", "seed", "dqn", "init_weights", "weights", "log_every"},
             "train config");
  TrainConfig c;
  try {
    c.env = resolve_env(j.value("env", c.env), base_dir);
    c.particles = j.value("particles", c.particles);
    c.seed = j.value("seed", c.seed);
    c.init_weights = resolve(j.value("init_weights", std::string()), base_dir);
    c.weights_out = resolve(j.value("weights", std::string()), base_dir);
    c.log_every = j.value("log_every", c.log_every);
    if (j.contains("dqn")) {
      const json& d = j.at("dqn");
      check_keys(d,
                 {"gamma", "learning_rate", "batch_size", "target_sync_period", "epsilon_start", "epsilon_end",
                  "epsilon_decay_steps", "episodes", "max_steps_per_episode", "total_steps", "replay_capacity",
                  "warmup_steps", "train_every", "huber_delta", "grad_clip", "absorbing_samples"},
                 "dqn");
      DqnConfig& q = c.dqn;
      q.gamma = d.value("gamma", q.gamma);
      q.learning_rate = d.value("learning_rate", q.learning_rate);
      q.batch_size = d.value("batch_size", q.batch_size);
      q.target_sync_period = d.value("target_sync_period", q.target_sync_period);
      q.epsilon_start = d.value("epsilon_start", q.epsilon_start);
      q.epsilon_end = d.value("epsilon_end", q.epsilon_end);
      q.epsilon_decay_steps = d.value("epsilon_decay_steps", q.epsilon_decay_steps);
      q.episodes = d.value("episodes", q.episodes);
      q.max_steps_per_episode = d.value("max_steps_per_episode", q.max_steps_per_episode);
      q.total_steps = d.value("total_steps", q.total_steps);
      q.replay_capacity = d.value("replay_capacity", q.replay_capacity);
      q.warmup_steps = d.value("warmup_steps", q.warmup_steps);
      q.train_every = d.value("train_every", q.train_every);
      q.huber_delta = d.value("huber_delta", q.huber_delta);
      q.grad_clip = d.value("grad_clip", q.grad_clip);
      q.absorbing_samples = d.value("absorbing_samples", q.absorbing_samples);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.dqn.validate();
  if (!c.init_weights.empty() && !fs::exists(c.init_weights))
    throw ConfigError("init_weights not found: " + c.init_weights);
  return c;
}

TrainOutcome train_bclf(const TrainConfig& config, std::ostream* progress) {
  config.dqn.validate();
  const Environment env = make_environment(config.env);
  const EnvironmentMdp mdp(env, config.particles);
  const std::size_t n = config.particles == 0 ? env.particles : config.particles;
  if (!env.goal.uncertainty_override && conformal_rank(n, env.goal.uncertainty.delta_l) > n)
    throw ConfigError("train config: " + std::to_string(n) + " particles are too few for delta_l; R_eps would be infinite");
  Rng rng(config.seed);
  QNetwork init;
  if (!config.init_weights.empty()) {
    try {
      init = load_weights(config.init_weights);
    } catch (const WeightsFormatError& e) {
      throw ConfigError(e.what());
    }
  } else {
    init = default_network(env, rng);
  }
  TrainOutcome out;
  TrainingCallback cb;
  if (progress != nullptr) {
    cb = [progress](std::size_t step, const TrainingLog& log) {
      const std::size_t tail = std::min<std::size_t>(log.loss.size(), 1000);
      double loss = 0.0;
      for (std::size_t i = log.loss.size() - tail; i < log.loss.size(); ++i) loss += log.loss[i];
      const std::size_t eps = std::min<std::size_t>(log.episode_reached.size(), 50);
      std::size_t reached = 0;
      for (std::size_t i = log.episode_reached.size() - eps; i < log.episode_reached.size(); ++i)
        reached += log.episode_reached[i] ? 1 : 0;
      *progress << "step " << step << " episodes " << log.episode_return.size() << " loss "
                << (tail ? loss / static_cast<double>(tail) : 0.0) << " reach(last " << eps << ") "
                << (eps ? static_cast<double>(reached) / static_cast<double>(eps) : 0.0) << std::endl;
    };
  }
  out.network = dqn_train(mdp, config.dqn, rng, std::move(init), &out.log, cb, config.log_every);
  if (!config.weights_out.empty()) {
    const fs::path p(config.weights_out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_weights(config.weights_out, out.network);
  }
  return out;
}

std::vector<ToyTraceRow> example1_trace(const Environment& env, double u, double truth_x0, double duration,
                                        std::uint64_t seed, std::size_t particles) {
  if (env.state_dim() != 1) throw ConfigError("trace replay needs a 1D environment");
  Rng init = Rng::keyed(seed, 5);
  Rng truth_rng = Rng::keyed(seed, 1);
  Rng obs_rng = Rng::keyed(seed, 2);
  Rng resample_rng = Rng::keyed(seed, 4);
  NoiseStream noise{stream_key(seed, 3), 0};
  ParticleBelief b = env.initial_belief(init, particles == 0 ? env.particles : particles);
  Vector x = Vector::Constant(1, truth_x0);
  const Vector uv = Vector::Constant(1, u);
  const std::size_t k = env.steps_per_measurement();
  const auto total = static_cast<std::size_t>(std::llround(duration / env.dt));
  std::vector<ToyTraceRow> rows;
  for (std::size_t step = 0; step <= total; ++step) {
    ToyTraceRow row;
    row.t = static_cast<double>(step) * env.dt;
    if (step > 0) {
      euler_step(x, env.motion, uv, env.dt, truth_rng);
      propagate_inplace(b, env.motion, uv, env.dt, noise);
      if (step % k == 0) {
        const Vector z = env.observation.sample(x, obs_rng);
        row.z = z[0] > 0.5 ? 1 : 0;
        try {
          b = measurement_update(b, env.observation, z, resample_rng);
        } catch (const DegenerateUpdateError&) {
        }
      }
    }
    row.truth = x[0];
    row.r_eps = env.goal.uncertainty_of(b);
    row.entropy = entropy_diagnostic(b);
    rows.push_back(row);
  }
  return rows;
}

void write_toy_csv(std::ostream& out, const std::vector<ToyTraceRow>& rows) {
  out << "t,r_eps,entropy,truth,z\n";
  for (const auto& r : rows)
    out << fmt(r.t) << ',' << fmt(r.r_eps) << ',' << fmt(r.entropy) << ',' << fmt(r.truth) << ',' << r.z << '\n';
}

}  // namespace bsc
