// bsc: command-line front end for training, evaluation and audits.

#include "bsc/harness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace bsc;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string weights;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--seed", c.seed, "master seed override");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--weights", c.weights, "network weights file");
}

std::string base_dir_of(const std::string& path) {
  const fs::path p = fs::absolute(path).parent_path();
  return p.string();
}

int cmd_train(const Common& c) {
  if (c.config.empty()) throw ConfigError("train needs --config");
  TrainConfig cfg = train_config_from_json(read_text_file(c.config), base_dir_of(c.config));
  if (c.seed) cfg.seed = *c.seed;
  if (!c.weights.empty()) cfg.weights_out = c.weights;
  if (cfg.weights_out.empty()) cfg.weights_out = (fs::path(c.out.empty() ? "." : c.out) / "weights.bin").string();
  const TrainOutcome res = train_bclf(cfg, &std::cerr);
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream log(fs::path(c.out) / "training_episodes.csv");
    log << "episode,return,length,reached\n";
    for (std::size_t i = 0; i < res.log.episode_return.size(); ++i)
      log << i << ',' << res.log.episode_return[i] << ',' << res.log.episode_length[i] << ','
          << (res.log.episode_reached[i] ? 1 : 0) << '\n';
  }
  std::cout << "weights " << cfg.weights_out << " steps " << res.log.steps << " episodes "
            << res.log.episode_return.size() << '\n';
  return 0;
}

void print_summary(const Evaluation& ev) {
  const auto& m = ev.summary;
  std::printf("%s %s %s reach=%.3f avoid=%.3f sr=%.3f pl_mean=%.3f pl_median=%.3f n=%zu\n",
              ev.config.label.empty() ? "-" : ev.config.label.c_str(), ev.config.env.c_str(),
              to_string(ev.config.stack), m.reach_rate, m.avoid_rate, m.success_rate, m.pl_mean, m.pl_median, m.n);
}

std::vector<RunConfig> load_cells(const Common& c, bool allow_sweep) {
  if (c.config.empty()) throw ConfigError("--config is required");
  const std::string text = read_text_file(c.config);
  std::vector<RunConfig> cells;
  if (allow_sweep)
    cells = sweep_from_json(text, base_dir_of(c.config));
  else
    cells.push_back(run_config_from_json(text, base_dir_of(c.config)));
  for (auto& cell : cells) {
    if (c.seed) cell.seed = *c.seed;
    if (!c.weights.empty()) cell.weights = c.weights;
    if (!c.out.empty()) cell.out_dir = c.out;
    cell.validate();
  }
  return cells;
}

int cmd_eval(const Common& c, bool allow_sweep) {
  const auto cells = load_cells(c, allow_sweep);
  std::vector<PreparedRun> runs;
  for (const auto& cell : cells) runs.push_back(prepare_run(cell));
  std::vector<Evaluation> evs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    evs.push_back(evaluate(runs[i], cells[i]));
    print_summary(evs.back());
  }
  const std::string out = cells.front().out_dir.empty() ? "results" : cells.front().out_dir;
  write_results(out, evs);
  std::cout << "wrote " << (fs::path(out) / "summary.csv").string() << '\n';
  return 0;
}

struct AuditArgs {
  std::string env = "two_particle";
  std::size_t samples = 1000;
  std::size_t draws = 100;
  double c = 0.99, eta = 0.4, gamma = 0.99;
};

int cmd_audit(const Common& c, AuditArgs a) {
  std::string weights = c.weights;
  std::uint64_t seed = c.seed.value_or(0);
  if (!c.config.empty()) {
    const json j = json::parse(read_text_file(c.config), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("audit config is not a JSON object");
    a.env = j.value("env", a.env);
    a.samples = j.value("samples", a.samples);
    a.draws = j.value("draws", a.draws);
    a.c = j.value("c", a.c);
    a.eta = j.value("eta", a.eta);
    a.gamma = j.value("gamma", a.gamma);
    if (weights.empty() && j.contains("weights")) {
      const fs::path w = j.at("weights").get<std::string>();
      weights = w.is_absolute() ? w.string() : (fs::path(base_dir_of(c.config)) / w).string();
    }
    if (!c.seed) seed = j.value("seed", seed);
  }
  if (weights.empty()) throw ConfigError("audit needs --weights");
  if (!fs::exists(weights)) throw ConfigError("weights file not found: " + weights);
  if (a.samples == 0 || a.draws == 0) throw ConfigError("samples and draws must be positive");
  const Environment env = make_environment(a.env);
  QNetwork q;
  try {
    q = load_weights(weights);
  } catch (const WeightsFormatError& e) {
    throw ConfigError(e.what());
  }
  const EnvironmentMdp mdp(env);
  AuditOptions opt;
  opt.c = a.c;
  opt.eta = a.eta;
  opt.gamma = a.gamma;
  opt.next_draws = a.draws;
  Rng rng(seed);
  const AuditReport rep = certificate_audit(q, mdp, opt, a.samples, rng);
  write_audit_csv(std::cout, rep);
  std::cout << "w_max," << rep.w_max << "\n";
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream f(fs::path(c.out) / "audit.csv");
    write_audit_csv(f, rep);
  }
  return 0;
}

struct BoundsArgs {
  double gamma = 0.99, rmax = -1.0, wmax = 8.73, eta = 0.4;
  std::optional<double> w0;
};

int cmd_bounds(const Common& c, BoundsArgs a) {
  if (!c.config.empty()) {
    const json j = json::parse(read_text_file(c.config), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("bounds config is not a JSON object");
    a.gamma = j.value("gamma", a.gamma);
    a.rmax = j.value("r_max", a.rmax);
    a.wmax = j.value("w_max", a.wmax);
    a.eta = j.value("eta", a.eta);
    if (j.contains("w0")) a.w0 = j.at("w0").get<double>();
  }
  if (!(a.gamma > 0.0 && a.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(a.eta > 0.0)) throw ConfigError("eta must be positive");
  const TheoryBounds b = theory_bounds(a.gamma, a.rmax, a.wmax, a.eta);
  std::printf("c_min=%.9f\n", b.c_min);
  std::printf("asymptotic_w_cap=%.9f valid=%s\n", b.asymptotic_w_cap, b.asymptotic_valid ? "yes" : "no");
  std::printf("finite_time_w_cap=%.9f valid=%s\n", b.finite_w_cap, b.finite_valid ? "yes" : "no");
  if (a.w0) std::printf("settling_bound=%lld\n", settling_time_bound(*a.w0, a.eta));
  return 0;
}

struct ToyArgs {
  std::string env = "example1";
  double u = 0.1, x0 = -0.5, duration = 8.0;
};

int cmd_toy(const Common& c, const ToyArgs& a) {
  const Environment env = make_environment(a.env);
  const auto rows = example1_trace(env, a.u, a.x0, a.duration, c.seed.value_or(0));
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  std::ofstream f(dir / "toy_trace.csv");
  write_toy_csv(f, rows);
  for (const auto& r : rows) {
    if (r.r_eps <= 0.0) {
      std::printf("localized at t=%.2f\n", r.t);
      break;
    }
  }
  std::cout << "wrote " << (dir / "toy_trace.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-space reach-avoid control toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* train = app.add_subcommand("train", "train a BCLF network");
  add_common(train, common);
  auto* eval = app.add_subcommand("eval", "evaluate one controller configuration");
  add_common(eval, common);
  auto* sweepc = app.add_subcommand("sweep", "evaluate every cell of a sweep config");
  add_common(sweepc, common);

  AuditArgs audit_args;
  auto* audit = app.add_subcommand("audit", "certificate audit on random beliefs");
  add_common(audit, common);
  audit->add_option("--env", audit_args.env);
  audit->add_option("--samples", audit_args.samples);
  audit->add_option("--draws", audit_args.draws, "Monte-Carlo draws per expectation");
  audit->add_option("--c", audit_args.c);
  audit->add_option("--eta", audit_args.eta);
  audit->add_option("--gamma", audit_args.gamma);

  BoundsArgs bounds_args;
  auto* bounds = app.add_subcommand("bounds", "closed-form certificate bounds");
  add_common(bounds, common);
  bounds->add_option("--gamma", bounds_args.gamma);
  bounds->add_option("--rmax", bounds_args.rmax);
  bounds->add_option("--wmax", bounds_args.wmax);
  bounds->add_option("--eta", bounds_args.eta);
  bounds->add_option("--w0", bounds_args.w0, "initial value for the settling bound");

  ToyArgs toy_args;
  auto* toy = app.add_subcommand("toy", "constant-control sensing-region replay");
  add_common(toy, common);
  toy->add_option("--env", toy_args.env);
  toy->add_option("--u", toy_args.u);
  toy->add_option("--x0", toy_args.x0, "truth initial state");
  toy->add_option("--duration", toy_args.duration);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (train->parsed()) return cmd_train(common);
    if (eval->parsed()) return cmd_eval(common, false);
    if (sweepc->parsed()) return cmd_eval(common, true);
    if (audit->parsed()) return cmd_audit(common, audit_args);
    if (bounds->parsed()) return cmd_bounds(common, bounds_args);
    if (toy->parsed()) return cmd_toy(common, toy_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime fault: " << e.what() << '\n';
    return 2;
  }
  std::cerr << app.help();
  return 1;
}
