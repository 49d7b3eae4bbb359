#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "coloc/fusion.hpp"
#include "coloc/scenario.hpp"
#include "coloc/sim.hpp"
#include "coloc/stats.hpp"
#include "coloc/verify.hpp"

namespace {

using namespace coloc;

std::string default_out_dir() {
  const char* env = std::getenv("COLOC_OUT_DIR");
  return env != nullptr ? env : "out";
}

int cmd_validate(const std::string& path) {
  try {
    load_scenario(path);
  } catch (const ScenarioError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return 2;
  }
  std::cout << "scenario OK: " << path << "\n";
  return 0;
}

int cmd_run(const std::string& path, std::string methods_arg, int runs_override,
            long seed_override, std::string out_dir, int parallel) {
  Scenario sc;
  try {
    sc = load_scenario(path);
  } catch (const ScenarioError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return 2;
  }
  if (runs_override > 0) sc.monte_carlo.runs = runs_override;
  if (seed_override >= 0) sc.monte_carlo.seed = static_cast<std::uint64_t>(seed_override);

  std::vector<SimMethod> methods;
  if (methods_arg.empty()) {
    for (const AgentSpec& a : sc.agents) {
      if (std::find(methods.begin(), methods.end(), a.default_method) == methods.end()) {
        methods.push_back(a.default_method);
      }
    }
  } else {
    std::stringstream ss(methods_arg);
    std::string token;
    while (std::getline(ss, token, ',')) {
      try {
        methods.push_back(parse_sim_method(token));
      } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 2;
      }
    }
  }

  std::vector<MonteCarloResult> results;
  for (SimMethod m : methods) {
    try {
      results.push_back(run_monte_carlo(sc, m, parallel));
    } catch (const SimFailure& e) {
      std::cerr << "solver failure in method " << to_string(m) << " at run " << e.run
                << " step " << e.t << ": " << e.what() << "\n";
      return 3;
    }
  }

  const ConsistencyBand band = chi2_band(sc.monte_carlo.runs, 2, 0.05);
  std::filesystem::create_directories(out_dir);
  write_rmse_csv(out_dir + "/rmse.csv", results);
  write_nees_csv(out_dir + "/nees.csv", results, band);
  write_events_csv(out_dir + "/events.csv", results);
  write_messages_csv(out_dir + "/messages.csv", results);
  write_summary_csv(out_dir + "/summary.csv", results, band);
  write_runtime_csv(out_dir + "/runtime.csv", results);

  std::printf("band for averaged NEES (runs=%d, dof=2, alpha=%.2f): [%.3f, %.3f]\n",
              band.runs, band.alpha, band.r1, band.r2);
  std::printf("%-8s %-6s %12s %10s %14s\n", "method", "agent", "final_rmse",
              "in_band", "verdict");
  for (const MonteCarloResult& mc : results) {
    const int start = std::min(first_relative_step(mc), mc.horizon);
    for (std::size_t a = 0; a < mc.agent_ids.size(); ++a) {
      const std::vector<double> rmse = position_rmse(mc, a);
      const ConsistencyReport rep = consistency_report(
          nees_series(mc, a), band, 0.9, static_cast<std::size_t>(start));
      std::printf("%-8s %-6d %12.4f %10.3f %14s\n", to_string(mc.method).c_str(),
                  mc.agent_ids[a], rmse.back(), rep.fraction_in_band,
                  to_string(rep.verdict).c_str());
    }
    std::printf("%-8s wall %.2fs, messages %ld, relative events %ld\n",
                to_string(mc.method).c_str(), mc.wall_seconds, mc.total_messages,
                mc.total_relative_events);
  }
  std::printf("CSV tables written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_verify(int instances, long seed, const std::string& sabotage) {
  VerifyOptions opt;
  opt.instances = instances;
  if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
  if (!sabotage.empty()) {
    if (sabotage != "naive-as-dmv") {
      std::cerr << "unknown sabotage mode '" << sabotage << "'\n";
      return 2;
    }
    opt.sabotage_naive_as_dmv = true;
  }
  const std::vector<PropertyResult> results = run_property_suites(opt);
  int failed = 0;
  for (const PropertyResult& pr : results) {
    std::printf("%-46s %s  checks=%-6d failures=%-4d worst_slack=%.3e\n",
                pr.name.c_str(), pr.passed() ? "PASS" : "FAIL", pr.instances,
                pr.failures, pr.worst_slack);
    if (!pr.passed()) ++failed;
  }
  if (failed > 0) {
    std::printf("%d propert%s failed\n", failed, failed == 1 ? "y" : "ies");
    return 1;
  }
  std::printf("all properties passed\n");
  return 0;
}

struct BenchInstance {
  Belief bel_i, bel_j;
  RelativeMeasurement meas;
};

std::vector<BenchInstance> bench_instances(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<BenchInstance> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Pose2D xi, xj;
    do {
      xi = Pose2D(10 * u(rng) - 5, 10 * u(rng) - 5, 2 * kPi * u(rng) - kPi);
      xj = Pose2D(10 * u(rng) - 5, 10 * u(rng) - 5, 2 * kPi * u(rng) - kPi);
    } while (std::hypot(xj.x - xi.x, xj.y - xi.y) < 0.8);
    auto spd = [&](double scale) {
      Eigen::Matrix3d M;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) M(r, c) = g(rng);
      }
      return Eigen::MatrixXd(scale * (M * M.transpose() + 0.3 * Eigen::Matrix3d::Identity()));
    };
    const RelativePrediction pred = relative_pose_model(xi, xj);
    Eigen::Vector3d r_std(0.1, 0.1, deg_to_rad(5.0));
    Eigen::VectorXd z = pred.z_hat;
    for (int k = 0; k < 3; ++k) z[k] += r_std[k] * g(rng);
    z[2] = wrap_angle(z[2]);
    BenchInstance bi;
    bi.bel_i = Belief(xi.vec(), Covariance(spd(0.15)), 1, 0);
    bi.bel_j = Belief(xj.vec(), Covariance(spd(0.15)), 2, 0);
    bi.meas = RelativeMeasurement(1, 2, MeasurementKind::RelativePose, z,
                                  Eigen::MatrixXd(r_std.array().square().matrix().asDiagonal()), 0);
    out.push_back(std::move(bi));
  }
  return out;
}

int cmd_bench(int instances, long seed) {
  const std::vector<BenchInstance> insts =
      bench_instances(instances, seed >= 0 ? static_cast<std::uint64_t>(seed) : 99);
  FusionConfig cfg;

  struct Row {
    std::string name;
    std::vector<double> ms;
    long iters = 0;
  };
  auto run = [&](const std::string& name, auto&& update) {
    Row row;
    row.name = name;
    row.ms.reserve(insts.size());
    for (const BenchInstance& bi : insts) {
      const auto t0 = std::chrono::steady_clock::now();
      const FusionResult r = update(bi);
      const auto t1 = std::chrono::steady_clock::now();
      row.ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      row.iters += r.solver_iters;
    }
    return row;
  };

  std::vector<Row> rows;
  rows.push_back(run("dmv", [&](const BenchInstance& bi) {
    return dmv_update(bi.bel_i, bi.bel_j, bi.meas, PairRole::Observer, cfg);
  }));
  rows.push_back(run("ecmv", [&](const BenchInstance& bi) {
    return ecmv_update(bi.bel_i, bi.bel_j, bi.meas, PairRole::Observer, cfg);
  }));
  rows.push_back(run("pecmv", [&](const BenchInstance& bi) {
    return pecmv_update(bi.bel_i, bi.bel_j, bi.meas, PairRole::Observer, cfg);
  }));

  std::printf("%-8s %12s %12s %14s\n", "method", "mean_ms", "median_ms",
              "mean_iters");
  for (Row& row : rows) {
    std::vector<double> sorted = row.ms;
    std::sort(sorted.begin(), sorted.end());
    const double mean =
        std::accumulate(sorted.begin(), sorted.end(), 0.0) / sorted.size();
    const double median = sorted[sorted.size() / 2];
    std::printf("%-8s %12.4f %12.4f %14.1f\n", row.name.c_str(), mean, median,
                static_cast<double>(row.iters) / insts.size());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cooperative localization simulator and verification suite"};
  app.require_subcommand(1);

  std::string scenario_path;
  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("scenario", scenario_path, "scenario JSON file")->required();

  std::string run_scenario, methods, out_dir = default_out_dir();
  int runs = -1, parallel = static_cast<int>(std::thread::hardware_concurrency());
  long seed = -1;
  auto* run = app.add_subcommand("run", "run the Monte Carlo experiment");
  run->add_option("scenario", run_scenario, "scenario JSON file")->required();
  run->add_option("--methods", methods,
                  "comma-separated list: dr,naive,dmv,dmv_ci,ecmv,pecmv,joint");
  run->add_option("--runs", runs, "override Monte Carlo run count");
  run->add_option("--seed", seed, "override master seed");
  run->add_option("--out", out_dir, "output directory for CSV tables");
  run->add_option("--parallel", parallel, "worker threads for Monte Carlo runs");

  int vf_instances = 200;
  long vf_seed = -1;
  std::string sabotage;
  auto* verify = app.add_subcommand("verify", "run the property sweeps");
  verify->add_option("--instances", vf_instances, "random instances per property");
  verify->add_option("--seed", vf_seed, "sweep seed");
  verify->add_option("--sabotage", sabotage, "negative-control mode (naive-as-dmv)")
      ->group("");

  int bench_n = 100;
  long bench_seed = -1;
  auto* bench = app.add_subcommand("bench", "time the update solvers");
  bench->add_option("--instances", bench_n, "instances to time");
  bench->add_option("--seed", bench_seed, "instance seed");

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) return cmd_validate(scenario_path);
  if (run->parsed()) {
    return cmd_run(run_scenario, methods, runs, seed, out_dir, std::max(1, parallel));
  }
  if (verify->parsed()) return cmd_verify(vf_instances, vf_seed, sabotage);
  if (bench->parsed()) return cmd_bench(bench_n, bench_seed);
  return 0;
}
