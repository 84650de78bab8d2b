#pragma once

#include "bsc/dqn.hpp"
#include "bsc/envs.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bsc {

enum class Stack { reference, reference_bcbf, reference_bclf, full, switching };

const char* to_string(Stack s) noexcept;
/// "reference", "reference+bcbf", "reference+bclf", "full", "switching".
Stack parse_stack(const std::string& s);
[[nodiscard]] bool uses_bclf(Stack s) noexcept;
[[nodiscard]] bool uses_bcbf(Stack s) noexcept;

struct RunConfig {
  std::string env = "lightdark";  ///< bundled name or geometry path
  Stack stack = Stack::full;
  BclfMode mode;
  /// Total avoid risk over the horizon; split per measurement interval when set,
  /// otherwise the geometry file's per-interval delta_bar is used.
  std::optional<double> delta_a;
  std::optional<double> delta_l;
  std::optional<std::size_t> particles;
  double gamma = 0.99;
  double stagnation_window = 1.0;  ///< seconds
  std::uint64_t seed = 0;          ///< master seed
  /// Explicit episode seeds; when empty, `episodes` seeds are derived from `seed`.
  std::vector<std::uint64_t> seeds;
  std::size_t episodes = 100;
  std::string weights;
  std::string out_dir;
  std::size_t workers = 0;  ///< 0: hardware concurrency
  bool traces = true;       ///< keep per-step traces in episodes.jsonl
  std::string label;        ///< sweep cell name

  void validate() const;
  /// Episode seeds in order.
  [[nodiscard]] std::vector<std::uint64_t> episode_seeds() const;
};

struct EpisodeTrace {
  std::vector<double> t;      ///< measurement instants
  std::vector<double> w;      ///< BCLF value (NaN without a network)
  std::vector<double> r_eps;  ///< uncertainty measure
  std::vector<std::string> ig_status;
  std::vector<double> c;      ///< conformal barrier bound per control tick
  std::vector<double> slack;  ///< QP slack per control tick
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  bool reached = false;
  bool violated = false;
  bool fault = false;
  double path_length = 0.0;
  std::optional<double> time_to_goal;
  std::size_t steps = 0;
  std::size_t forced = 0;      ///< measurement instants with no admissible action
  std::size_t conflicts = 0;   ///< stagnation monitor firings
  std::size_t slack_ticks = 0;
  /// Measurement updates that turned a certified-safe bound unsafe.
  std::size_t update_violations = 0;
  Vector final_truth;
  EpisodeTrace trace;

  [[nodiscard]] bool success() const noexcept { return reached && !violated; }
};

struct MetricsSummary {
  double reach_rate = 0.0;
  double avoid_rate = 0.0;
  double success_rate = 0.0;
  /// Path length statistics over successful episodes.
  double pl_mean = 0.0;
  double pl_std = 0.0;
  double pl_median = 0.0;
  std::size_t n = 0;
  std::size_t n_success = 0;
};

MetricsSummary summarize(const std::vector<EpisodeResult>& episodes);

/// Resolves the environment, risk overrides and the network a config needs.
struct PreparedRun {
  Environment env;
  std::optional<QNetwork> network;
  std::size_t particles = 0;
};

PreparedRun prepare_run(const RunConfig& config);

/// Closed-loop episode with the truth initial state and belief drawn from the seed.
EpisodeResult run_episode(const PreparedRun& run, const RunConfig& config, std::uint64_t episode_seed);

/// Same loop from a given truth and belief.
EpisodeResult run_episode_from(const PreparedRun& run, const RunConfig& config, std::uint64_t episode_seed,
                               Vector truth, ParticleBelief belief);

struct Evaluation {
  RunConfig config;
  MetricsSummary summary;
  std::vector<EpisodeResult> episodes;
};

/// Runs every seed on a worker pool; results are in seed order.
Evaluation evaluate(const RunConfig& config);
Evaluation evaluate(const PreparedRun& run, const RunConfig& config);

/// One evaluation per cell.
std::vector<Evaluation> sweep(const std::vector<RunConfig>& cells);

inline constexpr int kResultSchemaVersion = 1;

void write_summary_csv(std::ostream& out, const std::vector<Evaluation>& evaluations);
void write_episodes_jsonl(std::ostream& out, const Evaluation& evaluation);
/// summary.csv and episodes.jsonl under dir (created if missing).
void write_results(const std::string& dir, const std::vector<Evaluation>& evaluations);

/// Run config from JSON; relative paths are resolved against base_dir.
RunConfig run_config_from_json(const std::string& text, const std::string& base_dir = {});
/// Sweep cells: the base config merged with each entry of "sweep" (or the base alone).
std::vector<RunConfig> sweep_from_json(const std::string& text, const std::string& base_dir = {});

struct TrainConfig {
  std::string env = "lightdark";
  std::size_t particles = 0;  ///< 0: environment default
  std::uint64_t seed = 0;
  DqnConfig dqn;
  std::string init_weights;   ///< optional warm start
  std::string weights_out;
  std::size_t log_every = 5000;
};

TrainConfig train_config_from_json(const std::string& text, const std::string& base_dir = {});

struct TrainOutcome {
  QNetwork network;
  TrainingLog log;
};

TrainOutcome train_bclf(const TrainConfig& config, std::ostream* progress = nullptr);

/// Constant-control replay of the sensing-region toy: CSV t,r_eps,entropy,truth,z.
struct ToyTraceRow {
  double t = 0.0;
  double r_eps = 0.0;
  double entropy = 0.0;
  double truth = 0.0;
  int z = -1;  ///< -1 between measurements
};

std::vector<ToyTraceRow> example1_trace(const Environment& env, double u, double truth_x0, double duration,
                                        std::uint64_t seed, std::size_t particles = 0);
void write_toy_csv(std::ostream& out, const std::vector<ToyTraceRow>& rows);

std::string read_text_file(const std::string& path);

}  // namespace bsc
