// Acceptance checks: one PASS/FAIL line per criterion.
#include "bsc/barrier.hpp"
#include "bsc/conformal.hpp"
#include "bsc/envs.hpp"
#include "bsc/harness.hpp"
#include "bsc/lyapunov.hpp"
#include "bsc/nn.hpp"
#include "bsc/qp.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bsc;

namespace {

std::string g_cli;
std::string g_work;
std::string g_source = BSC_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string run_command(const std::string& cmd, int& rc) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    rc = -1;
    return out;
  }
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

double parse_field(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  if (pos == std::string::npos) return std::nan("");
  return std::stod(text.substr(pos + key.size() + 1));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<Evaluation> run_sweep_file(const std::string& rel) {
  const std::string path = g_source + "/" + rel;
  return sweep(sweep_from_json(read_text_file(path), fs::path(path).parent_path().string()));
}

// 1. Closed-form bounds through the library and the command-line tool.
Outcome theory_numbers() {
  const auto b = theory_bounds(0.99, -1.0, 8.73, 0.4);
  const double exact_c = (1.0 - 1.0 / 8.73) / 0.99;
  bool ok = std::abs(b.c_min - exact_c) <= 1e-12 && std::round(b.c_min * 1e4) / 1e4 == 0.8944 &&
            std::abs(b.asymptotic_w_cap - 100.0) <= 1e-6 && std::abs(b.finite_w_cap - 60.4) <= 1e-6 &&
            b.asymptotic_valid && b.finite_valid && settling_time_bound(80.0, 0.1) == 800;
  int rc = 0;
  const std::string out = run_command(g_cli + " bounds --gamma 0.99 --rmax -1 --wmax 8.73 --eta 0.4", rc);
  const std::string out2 = run_command(g_cli + " bounds --w0 80 --eta 0.1", rc);
  const double cli_c = parse_field(out, "c_min");
  const double cli_a = parse_field(out, "asymptotic_w_cap");
  const double cli_f = parse_field(out, "finite_time_w_cap");
  const double cli_k = parse_field(out2, "settling_bound");
  ok = ok && rc == 0 && std::abs(cli_c - exact_c) <= 1e-6 && std::abs(cli_a - 100.0) <= 1e-6 &&
       std::abs(cli_f - 60.4) <= 1e-6 && cli_k == 800.0;
  return {ok, "c_min=" + fmt("%.6f", b.c_min) + " caps=" + fmt("%.6f", b.asymptotic_w_cap) + "/" +
                  fmt("%.6f", b.finite_w_cap) + " settling=" + std::to_string(settling_time_bound(80.0, 0.1)) +
                  " cli_c_min=" + fmt("%.6f", cli_c)};
}

// 2. Rank formula against a sorted-index oracle, and coverage.
Outcome conformal_machinery() {
  Rng rng(20240521);
  std::size_t mismatches = 0;
  const std::uint64_t scale = 1u << 20;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 1 + rng.below(5000);
    const std::uint64_t m = 1 + rng.below(scale - 1);
    const double delta = static_cast<double>(m) / static_cast<double>(scale);
    std::vector<double> s(k);
    for (auto& x : s) x = rng.normal();
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    // Oracle: walk the sorted indices until (k + 1)(1 - delta) is covered, in integers.
    std::size_t r = 1;
    while (r * scale < (k + 1) * (scale - m)) ++r;
    const auto q = conformal_quantile(s, RiskLevel(delta));
    const double expect = r <= k ? sorted[r - 1] : std::numeric_limits<double>::infinity();
    if (q.rank != r || q.bound != expect) ++mismatches;
  }
  const int trials = 10000;
  int covered = 0;
  std::vector<double> cal(199);
  for (int t = 0; t < trials; ++t) {
    for (auto& x : cal) x = rng.normal();
    covered += rng.normal() <= conformal_quantile(cal, RiskLevel(0.1)).bound ? 1 : 0;
  }
  const double rate = static_cast<double>(covered) / trials;
  const double floor = 0.9 - 3.0 * std::sqrt(0.9 * 0.1 / trials);
  return {mismatches == 0 && rate >= floor,
          "rank mismatches=" + std::to_string(mismatches) + "/1000 coverage=" + fmt("%.4f", rate) +
              " floor=" + fmt("%.4f", floor)};
}

// 3. Risk splitting identity.
Outcome risk_splitting() {
  Rng rng(3);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double da = rng.uniform(1e-4, 0.5);
    const std::size_t m = 1 + rng.below(2000);
    const double d = interval_risk(RiskLevel(da), m).value();
    worst = std::max(worst, std::abs(std::pow(1.0 - d, static_cast<double>(m)) - (1.0 - da)));
  }
  return {worst <= 1e-12, "max error=" + fmt("%.3g", worst)};
}

// 4. QP kernel.
Outcome qp_kernel() {
  Rng rng(44);
  double proj_err = 0.0, kkt = 0.0, gap = -1e300;
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 1 + rng.below(6);
    QpProblem p;
    p.u0 = Vector(static_cast<Eigen::Index>(m));
    Vector a(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      p.u0[i] = rng.normal() * 3;
      a[i] = rng.normal();
    }
    const double b = rng.normal();
    p.rows.push_back({a, b, 0});
    const Vector expect = p.u0 - std::max(0.0, a.dot(p.u0) - b) / a.squaredNorm() * a;
    const auto s = solve(p);
    proj_err = std::max(proj_err, (s.u - expect).norm() / (1.0 + expect.norm()));
    kkt = std::max(kkt, s.kkt_residual);
  }
  std::size_t bad_status = 0;
  for (int t = 0; t < 200; ++t) {
    QpProblem p;
    p.u0 = Vector(2);
    p.u0 << rng.uniform(-4, 4), rng.uniform(-4, 4);
    p.bounds.lower = Vector::Constant(2, -3.0);
    p.bounds.upper = Vector::Constant(2, 3.0);
    Vector anchor(2);
    anchor << rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5);
    const std::size_t rows = 1 + rng.below(30);
    for (std::size_t i = 0; i < rows; ++i) {
      Vector a(2);
      a << rng.normal(), rng.normal();
      p.rows.push_back({a, a.dot(anchor) + rng.uniform(0.0, 1.5), i});
    }
    const auto s = solve(p);
    if (s.status != QpStatus::optimal) ++bad_status;
    kkt = std::max(kkt, s.kkt_residual);
    // Grid search with zooming over feasible points.
    auto feasible = [&](const Vector& u) {
      for (const auto& r : p.rows)
        if (r.a.dot(u) > r.b) return false;
      return true;
    };
    double best = std::numeric_limits<double>::infinity();
    Vector centre = Vector::Zero(2), half = Vector::Constant(2, 3.0), inc = centre;
    for (int level = 0; level < 6; ++level) {
      const int n = 160;
      for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
          Vector u(2);
          u << centre[0] + half[0] * (2.0 * i / n - 1.0), centre[1] + half[1] * (2.0 * j / n - 1.0);
          u = p.bounds.clip(u);
          if (!feasible(u)) continue;
          const double f = 0.5 * (u - p.u0).squaredNorm();
          if (f < best) {
            best = f;
            inc = u;
          }
        }
      }
      centre = inc;
      half *= 0.05;
    }
    gap = std::max(gap, s.objective(p) - best);
  }
  return {proj_err <= 1e-10 && gap <= 1e-6 && kkt <= 1e-8 && bad_status == 0,
          "projection err=" + fmt("%.3g", proj_err) + " worst obj-grid=" + fmt("%.3g", gap) +
              " max kkt=" + fmt("%.3g", kkt)};
}

// 5. Gradients and permutation invariance.
Outcome gradients_invariance() {
  Rng rng(5150);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    Mlp net({3, 8, 6, 2}, Activation::tanh, rng);
    Vector x(3), cot(2);
    for (Eigen::Index i = 0; i < 3; ++i) x[i] = rng.normal();
    for (Eigen::Index i = 0; i < 2; ++i) cot[i] = rng.normal();
    const MlpGradients g = mlp_gradients(net, x, cot);
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      auto check = [&](double& param, double analytic) {
        const double v0 = param;
        param = v0 + h;
        const double fp = cot.dot(net.forward(x));
        param = v0 - h;
        const double fm = cot.dot(net.forward(x));
        param = v0;
        const double fd = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6}));
      };
      for (Eigen::Index i = 0; i < net.weight(l).size(); ++i) check(net.weight(l).data()[i], g.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) check(net.bias(l)[i], g.biases[l][i]);
    }
  }
  const auto q = QNetwork::with_encoder(2, 9, {32, 32}, 8, {64, 64}, Vector::Ones(2), rng);
  Matrix s(2, 500);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal() * 3;
  const Vector e0 = encode_belief(q, ParticleBelief(s));
  std::vector<Eigen::Index> perm(500);
  std::iota(perm.begin(), perm.end(), 0);
  double drift = 0.0;
  for (int t = 0; t < 100; ++t) {
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Matrix p(2, 500);
    for (Eigen::Index i = 0; i < 500; ++i) p.col(i) = s.col(perm[static_cast<std::size_t>(i)]);
    drift = std::max(drift, (encode_belief(q, ParticleBelief(p)) - e0).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-4 && drift <= 1e-12,
          "max grad rel err=" + fmt("%.3g", worst) + " permutation drift=" + fmt("%.3g", drift)};
}

// 6. Horizon safety filter under an adversarial command.
Outcome rcbf_mechanism() {
  Environment env = lightdark();
  env.dt = 0.002;
  env.safety.delta_bar = RiskLevel(0.01);
  const std::size_t n = 2000, steps = 10000, runs = 100;
  const std::size_t k = env.steps_per_measurement();
  const Vector u_ig = Vector::Constant(1, 10.0);
  std::size_t good = 0, truth_safe = 0;
  for (std::size_t run = 0; run < runs; ++run) {
    const std::uint64_t seed = stream_key(6, run, 0);
    Rng init = Rng::keyed(seed, 5), truth_rng = Rng::keyed(seed, 1), obs_rng = Rng::keyed(seed, 2),
        res_rng = Rng::keyed(seed, 4);
    NoiseStream noise{stream_key(seed, 3), 0};
    Vector x = env.initial_state(init);
    ParticleBelief b = env.initial_belief(init, n);
    HistoryState hist = init_history(b, env.safety);
    QpSolver solver;
    bool ok = top_p_select(hist, env.safety.delta_bar).bound <= 0.0;
    bool truth_ok = true;
    for (std::size_t step = 0; step < steps && ok; ++step) {
      if (step > 0 && step % k == 0) {
        try {
          b = measurement_update(b, env.observation, env.observation.sample(x, obs_rng), res_rng);
        } catch (const DegenerateUpdateError&) {
        }
        hist = init_history(b, env.safety);
      }
      const FilterResult f = safety_filter(b, hist, u_ig, env.motion, env.safety, solver);
      if (f.report.status == FilterStatus::fault) {
        ok = false;
        break;
      }
      euler_step(x, env.motion, f.u, env.dt, truth_rng);
      propagate_inplace(b, env.motion, f.u, env.dt, noise);
      update_history_inplace(hist, b, env.safety);
      // The p-th largest running minimum must stay nonnegative.
      ok = top_p_select(hist, env.safety.delta_bar).bound <= 0.0;
      truth_ok = truth_ok && env.avoid_value(x) >= 0.0;
    }
    good += ok;
    truth_safe += truth_ok;
  }
  return {good >= 99, "runs with top-p h >= 0 throughout: " + std::to_string(good) + "/" + std::to_string(runs) +
                          " (truth safe " + std::to_string(truth_safe) + ")"};
}

// 7. Sensing-region trace.
Outcome example1_replication() {
  const Environment env = example1_toy();
  const auto rows = example1_trace(env, 0.1, -0.5, 10.0, 1);
  const double h_ref = std::log(2000.0);
  double h_err = 0.0;
  for (const auto& r : rows) h_err = std::max(h_err, std::abs(r.entropy - h_ref));
  double t_seen = -1.0, t_loc = -1.0;
  for (const auto& r : rows) {
    if (t_seen < 0.0 && r.z == 1) t_seen = r.t;
    if (t_seen >= 0.0 && r.r_eps <= 0.0) {
      t_loc = r.t;
      break;
    }
  }
  const bool starts_positive = !rows.empty() && rows.front().r_eps > 0.0;
  const bool ok = starts_positive && t_seen >= 0.0 && t_loc >= 0.0 && t_loc - t_seen <= 2.0 + 1e-9 && h_err <= 1e-9;
  return {ok, "R0=" + fmt("%.3f", rows.empty() ? 0.0 : rows.front().r_eps) + " first z=1 at t=" +
                  fmt("%.2f", t_seen) + " R<=0 at t=" + fmt("%.2f", t_loc) + " entropy=" + fmt("%.4f", h_ref) +
                  " (max dev " + fmt("%.2g", h_err) + ")"};
}

// 8. Certificate audit on the two-particle system.
Outcome two_particle_audit() {
  const std::string path = g_source + "/weights/two_particle.bin";
  if (!fs::exists(path)) return {false, "missing " + path};
  const QNetwork q = load_weights(path);
  const Environment env = two_particle_toy();
  EnvironmentMdp mdp(env);
  Rng rng(8008);
  AuditOptions opt;
  opt.next_draws = 100;
  const AuditReport rep = certificate_audit(q, mdp, opt, 1000, rng);
  const double reach = rep.row("reach_goal").tpr;
  const double pd = rep.row("w_positive_off_goal").tpr;
  const double asym = rep.row("asymptotic_decrease").tpr;
  const double fin = rep.row("finite_time_decrease").tpr;
  return {reach >= 0.98 && pd >= 0.99 && asym >= 0.90 && fin >= 0.85,
          "reach=" + fmt("%.3f", reach) + " W>0 off goal=" + fmt("%.3f", pd) + " asymptotic=" + fmt("%.3f", asym) +
              " finite-time=" + fmt("%.3f", fin) + " W_max=" + fmt("%.2f", rep.w_max) +
              " off-goal n=" + std::to_string(rep.off_goal)};
}

const MetricsSummary& cell(const std::vector<Evaluation>& evs, const std::string& label) {
  for (const auto& e : evs)
    if (e.config.label == label) return e.summary;
  throw std::runtime_error("sweep has no cell " + label);
}

// 9. Closed-loop success rates.
Outcome table_one() {
  for (const char* w : {"lightdark", "antenna"}) {
    if (!fs::exists(g_source + "/weights/" + w + ".bin")) return {false, std::string("missing weights/") + w + ".bin"};
  }
  const auto ld = run_sweep_file("config/eval/lightdark_table.json");
  const auto an = run_sweep_file("config/eval/antenna_full.json");
  const auto& full = cell(ld, "full");
  const auto& ref = cell(ld, "reference");
  const auto& ant = an.front().summary;
  const bool ok = full.success_rate >= 0.90 && full.avoid_rate >= 0.95 && ref.reach_rate >= 0.35 &&
                  ref.reach_rate <= 0.65 && ant.success_rate >= 0.80 && full.n == 100 && ref.n == 100 && ant.n == 100;
  return {ok, "lightdark full SR=" + fmt("%.2f", full.success_rate) + " avoid=" + fmt("%.2f", full.avoid_rate) +
                  "; lightdark reference reach=" + fmt("%.2f", ref.reach_rate) + "; antenna full SR=" +
                  fmt("%.2f", ant.success_rate)};
}

// 10. Path length trend over the finite-time rate.
Outcome table_three() {
  if (!fs::exists(g_source + "/weights/bumper.bin")) return {false, "missing weights/bumper.bin"};
  const auto evs = run_sweep_file("config/eval/bumper_eta_sweep.json");
  const std::vector<std::string> order{"eta2", "eta1", "eta0.4", "eta0.1"};
  std::string detail;
  bool ok = true;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& l : order) {
    const auto& s = cell(evs, l);
    detail += l + " median PL=" + fmt("%.2f", s.pl_median) + " (SR " + fmt("%.2f", s.success_rate) + "); ";
    ok = ok && s.n_success > 0 && s.pl_median <= prev;
    prev = s.pl_median;
  }
  const auto& sw = cell(evs, "switching");
  detail += "switching median PL=" + fmt("%.2f", sw.pl_median) + " (SR " + fmt("%.2f", sw.success_rate) + ")";
  ok = ok && sw.n_success > 0 && sw.pl_median > cell(evs, "eta0.1").pl_median;
  return {ok, detail};
}

// 11. Repeated eval invocations are byte-identical.
Outcome determinism() {
  const std::string cfg = g_source + "/config/eval/determinism.json";
  std::string detail;
  bool ok = true;
  std::string first_summary, first_episodes;
  for (int i = 0; i < 2; ++i) {
    const std::string out = g_work + "/determinism_" + std::to_string(i);
    fs::remove_all(out);
    int rc = 0;
    (void)run_command(g_cli + " eval --config " + cfg + " --seed 11 --out " + out + " 2>&1", rc);
    if (rc != 0) return {false, "eval exited with " + std::to_string(rc)};
    const std::string s = slurp(out + "/summary.csv"), e = slurp(out + "/episodes.jsonl");
    if (s.empty() || e.empty()) return {false, "eval wrote no results"};
    if (i == 0) {
      first_summary = s;
      first_episodes = e;
    } else {
      ok = s == first_summary && e == first_episodes;
      detail = "summary.csv " + std::to_string(s.size()) + " B, episodes.jsonl " + std::to_string(e.size()) +
               " B, identical=" + (ok ? "yes" : "no");
    }
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::set<int> only;
  app.add_option("--cli", g_cli, "command-line tool")->required();
  app.add_option("--work", g_work, "scratch directory")->required();
  app.add_option("--source", g_source, "source tree holding config/ and weights/");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"closed-form theory numbers", theory_numbers},
      {"conformal rank and coverage", conformal_machinery},
      {"risk splitting identity", risk_splitting},
      {"QP kernel", qp_kernel},
      {"gradients and permutation invariance", gradients_invariance},
      {"RCBF top-p safety under adversarial input", rcbf_mechanism},
      {"sensing-region toy replication", example1_replication},
      {"two-particle certificate audit", two_particle_audit},
      {"closed-loop success rates", table_one},
      {"bumper path-length trend", table_three},
      {"eval determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
