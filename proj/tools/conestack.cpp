// Command-line front end: track generation, simulation, estimator replay,
// evaluation and CSV export.
//
// Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
// files). CONESTACK_LOG sets stderr verbosity: error, warn, info (default)
// or debug.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>

#include "conestack/config.hpp"
#include "conestack/csv.hpp"
#include "conestack/eval.hpp"
#include "conestack/log.hpp"
#include "conestack/pipeline.hpp"

using namespace conestack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

enum class Verbosity { kError, kWarn, kInfo, kDebug };

Verbosity verbosity_from_env() {
  const char* v = std::getenv("CONESTACK_LOG");
  if (!v) return Verbosity::kInfo;
  const std::string s(v);
  if (s == "error") return Verbosity::kError;
  if (s == "warn") return Verbosity::kWarn;
  if (s == "debug") return Verbosity::kDebug;
  if (s != "info") std::fprintf(stderr, "warning: CONESTACK_LOG=%s not understood, using info\n", v);
  return Verbosity::kInfo;
}

const Verbosity g_verbosity = verbosity_from_env();

template <class... Args>
void log_at(Verbosity level, const char* fmt, Args... args) {
  if (level > g_verbosity) return;
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

ScenarioConfig config_or_default(const std::string& path) {
  if (path.empty()) return ScenarioConfig{};
  log_at(Verbosity::kDebug, "reading config %s", path.c_str());
  return load_config(path);
}

void write_json(const std::string& path, const Json& doc) { write_text_file(path, dump_exact(doc) + "\n"); }

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f s", s);
  return buf;
}

double simulated_span(const EventLog& log) {
  double t0 = 0.0, t1 = 0.0;
  bool any = false;
  for (const auto& e : log) {
    if (is_estimator_stream(e.stream)) continue;
    t0 = any ? std::min(t0, e.t) : e.t;
    t1 = any ? std::max(t1, e.t) : e.t;
    any = true;
  }
  return t1 - t0;
}

struct GenTrackArgs {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
};

struct SimulateArgs {
  std::string config;
  std::string out_log;
  std::string out_truth;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
};

struct EstimateArgs {
  std::string log;
  std::string config;
  std::string out_log;
};

struct EvalArgs {
  std::string log;
  std::string truth;
  std::string out_csv;
  std::string config;
  double gate = EvalOptions{}.map_gate;
};

struct ExportArgs {
  std::string log;
  std::string stream;
  std::string out_csv;
};

void gen_track(const GenTrackArgs& a) {
  const ScenarioConfig cfg = config_or_default(a.config);
  Rng rng(track_seed(a.seed));
  const TrackSpec track = generate_track(rng, cfg.track);
  write_json(a.out, to_json(TruthDoc{track, {}}));
  log_at(Verbosity::kInfo, "track: %zu cones, %zu centerline points -> %s", track.all_cones().size(),
         track.centerline.size(), a.out.c_str());
}

void simulate(const SimulateArgs& a) {
  ScenarioConfig cfg = config_or_default(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.duration) cfg.duration = *a.duration;
  const SimulationResult sim = run_simulation(cfg);
  write_log(a.out_log, sim.log);
  if (!a.out_truth.empty()) write_json(a.out_truth, to_json(sim.truth));
  log_at(Verbosity::kInfo, "simulated %s, %zu events -> %s", fmt_seconds(sim.simulated_seconds).c_str(),
         sim.log.size(), a.out_log.c_str());
  log_at(Verbosity::kInfo, "estimators %s, real-time factor %.1f", fmt_seconds(sim.estimator_seconds).c_str(),
         sim.real_time_factor());
}

void estimate(const EstimateArgs& a) {
  const ScenarioConfig cfg = config_or_default(a.config);
  const EventLog recorded = read_log(a.log);
  const ReplayResult replay = replay_estimators(recorded, cfg);
  write_log(a.out_log, replay.log);
  const double span = simulated_span(replay.log);
  log_at(Verbosity::kInfo, "replayed %zu events -> %s", replay.log.size(), a.out_log.c_str());
  log_at(Verbosity::kInfo, "estimators %s, real-time factor %.1f", fmt_seconds(replay.estimator_seconds).c_str(),
         replay.estimator_seconds > 0.0 ? span / replay.estimator_seconds : 0.0);
}

void eval(const EvalArgs& a) {
  const EventLog log = read_log(a.log);
  const TruthDoc truth = truth_from_json(Json::parse(read_text_file(a.truth)));
  EvalReport report = evaluate(log, truth, EvalOptions{a.gate});
  // Runtime comes from timing a replay of the log's inputs; the metrics
  // above only read the log.
  const ScenarioConfig cfg = config_or_default(a.config);
  const ReplayResult replay = replay_estimators(log, cfg);
  report.runtime.simulated_seconds = simulated_span(log);
  report.runtime.estimator_seconds = replay.estimator_seconds;
  report.runtime.real_time_factor =
      replay.estimator_seconds > 0.0 ? report.runtime.simulated_seconds / replay.estimator_seconds : 0.0;
  write_text_file(a.out_csv, report_csv(report));
  log_at(Verbosity::kInfo, "recall %.3f, map rmse %.3f m, ate %.3f m, vx rmse %.3f m/s, rtf %.1f -> %s",
         report.map.recall, report.map.position_rmse, report.trajectory.ate_rmse, report.velocity.vx_rmse,
         report.runtime.real_time_factor, a.out_csv.c_str());
}

void export_stream(const ExportArgs& a) {
  const EventLog log = read_log(a.log);
  const Stream stream = stream_from_string(a.stream);
  write_text_file(a.out_csv, export_csv(log, stream));
  log_at(Verbosity::kInfo, "exported %s -> %s", a.stream.c_str(), a.out_csv.c_str());
}

std::vector<std::string> stream_names() {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < kNumStreams; ++i) names.emplace_back(to_string(static_cast<Stream>(i)));
  return names;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cone mapping and velocity estimation: simulation, replay and evaluation", "conestack"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GenTrackArgs gen_args;
  auto* gen = app.add_subcommand("gen-track", "Generate a random closed track and write it as JSON");
  gen->add_option("--seed", gen_args.seed, "Track seed (equal to the scenario seed that uses this track)")
      ->required();
  gen->add_option("--out", gen_args.out, "Output JSON path")->required();
  gen->add_option("--config", gen_args.config, "Scenario config supplying the track parameters");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Run a scenario with the estimators inline and write the JSONL log");
  sim->add_option("--config", sim_args.config, "Scenario config (built-in defaults if omitted)");
  sim->add_option("--out-log", sim_args.out_log, "Output JSONL log")->required();
  sim->add_option("--out-truth", sim_args.out_truth, "Also write the track and fault script for eval");
  sim->add_option("--seed", sim_args.seed, "Override the config seed");
  sim->add_option("--duration", sim_args.duration, "Override the config duration (s)");

  EstimateArgs est_args;
  auto* est = app.add_subcommand("estimate", "Rerun the estimators over the sensor streams of a recorded log");
  est->add_option("--log", est_args.log, "Recorded JSONL log")->required();
  est->add_option("--config", est_args.config, "Scenario config (built-in defaults if omitted)");
  est->add_option("--out-log", est_args.out_log, "Output JSONL log")->required();

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Score a log against the truth and write the report as CSV");
  ev->add_option("--log", eval_args.log, "JSONL log with estimator output")->required();
  ev->add_option("--truth", eval_args.truth, "Truth JSON from simulate --out-truth or gen-track")->required();
  ev->add_option("--out-csv", eval_args.out_csv, "Output CSV (metric,value)")->required();
  ev->add_option("--config", eval_args.config, "Config for the timed estimator replay (built-in defaults if omitted)");
  ev->add_option("--gate", eval_args.gate, "Cone matching gate (m)")->check(CLI::PositiveNumber)->capture_default_str();

  ExportArgs exp_args;
  auto* exp = app.add_subcommand("export", "Write one stream of a log as CSV");
  exp->add_option("--log", exp_args.log, "JSONL log")->required();
  exp->add_option("--stream", exp_args.stream, "Stream name")->required()->check(CLI::IsMember(stream_names()));
  exp->add_option("--out-csv", exp_args.out_csv, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) gen_track(gen_args);
    if (*sim) simulate(sim_args);
    if (*est) estimate(est_args);
    if (*ev) eval(eval_args);
    if (*exp) export_stream(exp_args);
  } catch (const std::exception& e) {
    log_at(Verbosity::kError, "error: %s", e.what());
    return kExitData;
  }
  return kExitOk;
}
