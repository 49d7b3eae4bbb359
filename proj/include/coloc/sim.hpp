#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coloc/protocol.hpp"
#include "coloc/scenario.hpp"
#include "coloc/stats.hpp"

namespace coloc {

std::uint64_t splitmix64(std::uint64_t x);

/// Stream seed for (master, run, stream); changing any argument decorrelates
/// the stream.
std::uint64_t derive_seed(std::uint64_t master, int run, int stream);

struct StepRecord {
  Pose2D truth;
  Eigen::Vector3d est_mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d est_cov = Eigen::Matrix3d::Zero();
  bool had_abs = false;
  bool had_rel = false;
};

struct EventLogEntry {
  int t = 0;
  AgentId agent = 0;
  std::string kind;  // "abs" or "rel"
  double det_cov = 0.0;
  double trace_cov = 0.0;
};

struct RunRecord {
  std::vector<std::vector<StepRecord>> steps;  // [agent_index][0..horizon]
  std::vector<MessageRecord> messages;
  std::vector<EventLogEntry> events;
  int processed_relative = 0;
};

/// Per-run ground truth and measurement draws, shared across methods so that
/// method comparisons use common random numbers.
struct RunTape {
  std::vector<std::vector<Pose2D>> truth;            // [agent][0..horizon]
  std::vector<std::vector<UnicycleInput>> inputs;    // filter-known inputs
  std::vector<std::vector<AbsoluteEvent>> abs_by_step;
  std::vector<std::vector<RelativeMeasurement>> rel_by_step;
};

RunTape make_run_tape(const Scenario& sc, int run_index);

struct MonteCarloResult {
  SimMethod method = SimMethod::DeadReckoning;
  std::vector<AgentId> agent_ids;
  int horizon = 0;
  std::vector<RunRecord> runs;
  double wall_seconds = 0.0;
  long total_messages = 0;
  long total_relative_events = 0;
};

/// A per-run failure annotated with its coordinates.
struct SimFailure : std::runtime_error {
  SimFailure(const std::string& msg, int run_, int t_)
      : std::runtime_error(msg), run(run_), t(t_) {}
  int run = -1;
  int t = -1;
};

RunRecord simulate_run(const Scenario& sc, SimMethod method, const RunTape& tape);

MonteCarloResult run_monte_carlo(const Scenario& sc, SimMethod method, int parallel = 1);

/// Per-timestep RMS of the 2-D position error across runs.
std::vector<double> position_rmse(const MonteCarloResult& mc, std::size_t agent_index);

/// Per-timestep run-averaged normalized estimation error squared over the
/// 2-D position block.
std::vector<double> nees_series(const MonteCarloResult& mc, std::size_t agent_index);

enum class Verdict { Consistent, Overconfident, Conservative };
std::string to_string(Verdict v);

struct ConsistencyReport {
  double fraction_in_band = 0.0;
  Verdict verdict = Verdict::Consistent;
};

/// Fraction of timesteps from `start_index` on with the statistic inside the
/// band. Below-threshold series are classified by where the violations sit.
ConsistencyReport consistency_report(const std::vector<double>& series,
                                     const ConsistencyBand& band,
                                     double threshold = 0.9, std::size_t start_index = 0);

/// First step index at which any agent processed a relative update
/// (horizon + 1 when none occurred).
int first_relative_step(const MonteCarloResult& mc);

void write_rmse_csv(const std::string& path, const std::vector<MonteCarloResult>& results);
void write_nees_csv(const std::string& path, const std::vector<MonteCarloResult>& results,
                    const ConsistencyBand& band);
void write_events_csv(const std::string& path,
                      const std::vector<MonteCarloResult>& results);
void write_messages_csv(const std::string& path,
                        const std::vector<MonteCarloResult>& results);
void write_summary_csv(const std::string& path,
                       const std::vector<MonteCarloResult>& results,
                       const ConsistencyBand& band);
/// Wall-clock table; the one output that varies between identical runs.
void write_runtime_csv(const std::string& path,
                       const std::vector<MonteCarloResult>& results);

}  // namespace coloc
