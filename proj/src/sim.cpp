#include "coloc/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

namespace coloc {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, int run, int stream) {
  std::uint64_t s = splitmix64(master ^ (0xD1B54A32D192ED03ULL * (run + 1)));
  return splitmix64(s ^ (0x8CB92BA72F3D8DD7ULL * (stream + 1)));
}

namespace {

Eigen::MatrixXd diag_cov(const Eigen::VectorXd& stds) {
  return stds.array().square().matrix().asDiagonal();
}

Eigen::VectorXd wrap_measurement(Eigen::VectorXd z, MeasurementKind kind) {
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    if (is_angle_component(kind, k)) z[k] = wrap_angle(z[k]);
  }
  return z;
}

FusionMethod fusion_method_for(SimMethod m) {
  switch (m) {
    case SimMethod::Naive: return FusionMethod::Naive;
    case SimMethod::Dmv:
    case SimMethod::DmvCi: return FusionMethod::Dmv;
    case SimMethod::Ecmv: return FusionMethod::Ecmv;
    case SimMethod::Pecmv: return FusionMethod::Pecmv;
    default: return FusionMethod::Naive;  // unused for dr / joint
  }
}

Eigen::Matrix3d initial_cov(const Scenario& sc) {
  Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
  P(0, 0) = sc.initial_pos_std * sc.initial_pos_std;
  P(1, 1) = sc.initial_pos_std * sc.initial_pos_std;
  P(2, 2) = sc.initial_heading_std * sc.initial_heading_std;
  return P;
}

void log_step_events(RunRecord& rec, const Scenario& sc, const StepEvents& ev, int t,
                     const std::vector<std::vector<StepRecord>>& steps) {
  auto agent_index = [&](AgentId id) -> std::size_t {
    for (std::size_t k = 0; k < sc.agents.size(); ++k) {
      if (sc.agents[k].id == id) return k;
    }
    return 0;
  };
  auto log = [&](AgentId id, const char* kind) {
    const std::size_t a = agent_index(id);
    const Eigen::Matrix3d& P = steps[a][t + 1].est_cov;
    rec.events.push_back({t, id, kind, P.determinant(), P.trace()});
  };
  for (const AbsoluteEvent& e : ev.absolute) log(e.agent, "abs");
  for (const RelativeMeasurement& m : ev.relative) {
    log(m.observer, "rel");
    log(m.target, "rel");
  }
}

RunRecord simulate_decentralized(const Scenario& sc, SimMethod method,
                                 const RunTape& tape) {
  const std::size_t n = sc.agents.size();
  RunRecord rec;
  rec.steps.assign(n, std::vector<StepRecord>(sc.horizon + 1));

  std::vector<AgentRuntime> world(n);
  for (std::size_t a = 0; a < n; ++a) {
    const AgentSpec& spec = sc.agents[a];
    AgentRuntime& rt = world[a];
    rt.id = spec.id;
    rt.belief = Belief(spec.initial_pose.vec(), Covariance(initial_cov(sc)), spec.id, 0);
    rt.step_prior = rt.belief;
    rt.config.method = fusion_method_for(method);
    rt.config.fusion.gamma_mode =
        (method == SimMethod::DmvCi) ? GammaMode::OneMinusOmega : GammaMode::One;
    rt.config.fusion_enabled = (method != SimMethod::DeadReckoning);
    rt.config.noise = spec.noise;
    rt.config.process_noise = ProcessNoise::isotropic(sc.process_noise_std);

    rec.steps[a][0].truth = tape.truth[a][0];
    rec.steps[a][0].est_mean = rt.belief.mean;
    rec.steps[a][0].est_cov = rt.belief.cov.mat();
  }

  for (int t = 0; t < sc.horizon; ++t) {
    StepEvents ev;
    ev.absolute = tape.abs_by_step[t];
    if (method != SimMethod::DeadReckoning) {
      ev.relative = tape.rel_by_step[t];
    }
    std::vector<UnicycleInput> inputs;
    inputs.reserve(n);
    for (std::size_t a = 0; a < n; ++a) inputs.push_back(tape.inputs[a][t]);

    StepResult sr;
    try {
      sr = step_world(world, inputs, ev, t);
    } catch (const SolverNotConvergedError& e) {
      throw SimFailure(std::string("solver failure: ") + e.what(), -1, t);
    } catch (const SaddleNotConvergedError& e) {
      throw SimFailure(std::string("solver failure: ") + e.what(), -1, t);
    }
    rec.processed_relative += sr.processed_relative;
    rec.messages.insert(rec.messages.end(), sr.messages.begin(), sr.messages.end());

    for (std::size_t a = 0; a < n; ++a) {
      StepRecord& s = rec.steps[a][t + 1];
      s.truth = tape.truth[a][t + 1];
      s.est_mean = world[a].belief.mean;
      s.est_cov = world[a].belief.cov.mat();
      for (const AbsoluteEvent& e : ev.absolute) {
        if (e.agent == world[a].id) s.had_abs = true;
      }
      for (const RelativeMeasurement& m : ev.relative) {
        if (m.observer == world[a].id || m.target == world[a].id) s.had_rel = true;
      }
    }
    log_step_events(rec, sc, ev, t, rec.steps);
  }
  return rec;
}

// Centralized filter over the stacked team state; the cross-covariances are
// maintained exactly and every agent benefits from every update.
RunRecord simulate_joint(const Scenario& sc, const RunTape& tape) {
  const std::size_t n = sc.agents.size();
  const Eigen::Index dim = static_cast<Eigen::Index>(3 * n);
  RunRecord rec;
  rec.steps.assign(n, std::vector<StepRecord>(sc.horizon + 1));

  Eigen::VectorXd mean(dim);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<AgentId> ids(n);
  for (std::size_t a = 0; a < n; ++a) {
    ids[a] = sc.agents[a].id;
    mean.segment<3>(3 * a) = sc.agents[a].initial_pose.vec();
    cov.block<3, 3>(3 * a, 3 * a) = initial_cov(sc);
    rec.steps[a][0].truth = tape.truth[a][0];
    rec.steps[a][0].est_mean = mean.segment<3>(3 * a);
    rec.steps[a][0].est_cov = cov.block<3, 3>(3 * a, 3 * a);
  }
  auto index_of = [&](AgentId id) -> std::size_t {
    for (std::size_t k = 0; k < n; ++k) {
      if (ids[k] == id) return k;
    }
    throw std::invalid_argument("joint filter: unknown agent id");
  };

  const Eigen::Matrix3d Q = ProcessNoise::isotropic(sc.process_noise_std).Q;
  for (int t = 0; t < sc.horizon; ++t) {
    // propagation
    Eigen::MatrixXd F = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd Q_add = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t a = 0; a < n; ++a) {
      const UnicycleInput& u = tape.inputs[a][t];
      const Pose2D x = Pose2D::from_vec(mean.segment<3>(3 * a));
      const auto [F_x, F_u] = propagation_jacobians(x, u);
      const double sv = linear_noise_std(u, sc.agents[a].noise);
      const double sw = angular_noise_std(u, sc.agents[a].noise);
      Eigen::Matrix2d sig = Eigen::Matrix2d::Zero();
      sig(0, 0) = sv * sv;
      sig(1, 1) = sw * sw;
      F.block<3, 3>(3 * a, 3 * a) = F_x;
      Q_add.block<3, 3>(3 * a, 3 * a) = F_u * sig * F_u.transpose() + Q;
      mean.segment<3>(3 * a) = propagate_state(x, u).vec();
    }
    cov = 0.5 * (F * cov * F.transpose() + Q_add +
                 (F * cov * F.transpose() + Q_add).transpose());

    StepEvents ev;
    ev.absolute = tape.abs_by_step[t];
    ev.relative = tape.rel_by_step[t];

    for (const AbsoluteEvent& e : ev.absolute) {
      const std::size_t a = index_of(e.agent);
      const auto [h, H3] = range_measurement_model(
          Pose2D::from_vec(mean.segment<3>(3 * a)), e.landmark);
      Eigen::RowVectorXd H = Eigen::RowVectorXd::Zero(dim);
      H.segment<3>(3 * a) = H3;
      const double r = e.r_std * e.r_std;
      const double s = (H * cov * H.transpose())(0) + r;
      const Eigen::VectorXd K = cov * H.transpose() / s;
      mean += K * (e.z - h);
      const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(dim, dim) - K * H;
      cov = 0.5 * ((A * cov * A.transpose() + K * r * K.transpose()) +
                   (A * cov * A.transpose() + K * r * K.transpose()).transpose());
      for (std::size_t k = 0; k < n; ++k) {
        mean[3 * k + 2] = wrap_angle(mean[3 * k + 2]);
      }
    }

    // deterministic processing order, matching the decentralized runtime
    std::vector<RelativeMeasurement> rel = ev.relative;
    std::sort(rel.begin(), rel.end(),
              [](const RelativeMeasurement& a, const RelativeMeasurement& b) {
                return std::tie(a.observer, a.target) < std::tie(b.observer, b.target);
              });
    for (const RelativeMeasurement& m : rel) {
      const std::size_t oi = index_of(m.observer);
      const std::size_t ti = index_of(m.target);
      const RelativePrediction pred = evaluate_relative_model(
          m.kind, Pose2D::from_vec(mean.segment<3>(3 * oi)),
          Pose2D::from_vec(mean.segment<3>(3 * ti)));
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m.z.size(), dim);
      H.middleCols<3>(3 * oi) = pred.jac.H_obs;
      H.middleCols<3>(3 * ti) = pred.jac.H_tgt;
      const Eigen::VectorXd nu = innovation(m.z, pred.z_hat, m.kind);
      const Eigen::MatrixXd S = H * cov * H.transpose() + m.R.mat();
      const Eigen::MatrixXd K = S.llt().solve(H * cov).transpose();
      mean += K * nu;
      for (std::size_t k = 0; k < n; ++k) {
        mean[3 * k + 2] = wrap_angle(mean[3 * k + 2]);
      }
      const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(dim, dim) - K * H;
      const Eigen::MatrixXd P_new =
          A * cov * A.transpose() + K * m.R.mat() * K.transpose();
      cov = 0.5 * (P_new + P_new.transpose());
      ++rec.processed_relative;
    }

    for (std::size_t a = 0; a < n; ++a) {
      StepRecord& s = rec.steps[a][t + 1];
      s.truth = tape.truth[a][t + 1];
      s.est_mean = mean.segment<3>(3 * a);
      s.est_cov = cov.block<3, 3>(3 * a, 3 * a);
      for (const AbsoluteEvent& e : ev.absolute) {
        if (e.agent == ids[a]) s.had_abs = true;
      }
      for (const RelativeMeasurement& m : ev.relative) {
        if (m.observer == ids[a] || m.target == ids[a]) s.had_rel = true;
      }
    }
    log_step_events(rec, sc, ev, t, rec.steps);
  }
  return rec;
}

}  // namespace

RunTape make_run_tape(const Scenario& sc, int run_index) {
  const std::size_t n = sc.agents.size();
  RunTape tape;
  tape.truth.assign(n, std::vector<Pose2D>(sc.horizon + 1));
  tape.inputs.assign(n, std::vector<UnicycleInput>());
  tape.abs_by_step.assign(sc.horizon, {});
  tape.rel_by_step.assign(sc.horizon, {});

  std::mt19937_64 rng_init(derive_seed(sc.monte_carlo.seed, run_index, 1));
  std::mt19937_64 rng_truth(derive_seed(sc.monte_carlo.seed, run_index, 2));
  std::mt19937_64 rng_events(derive_seed(sc.monte_carlo.seed, run_index, 3));
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (std::size_t a = 0; a < n; ++a) {
    const Pose2D& p0 = sc.agents[a].initial_pose;
    tape.truth[a][0] = Pose2D(p0.x + sc.initial_pos_std * gauss(rng_init),
                              p0.y + sc.initial_pos_std * gauss(rng_init),
                              p0.phi + sc.initial_heading_std * gauss(rng_init));
    tape.inputs[a].reserve(sc.horizon);
  }

  for (int t = 0; t < sc.horizon; ++t) {
    for (std::size_t a = 0; a < n; ++a) {
      const UnicycleInput u_cmd =
          commanded_input(sc.agents[a], tape.truth[a][t], t, sc.dt);
      const UnicycleInput u_exec =
          sample_noisy_input(u_cmd, sc.agents[a].noise, rng_truth);
      tape.truth[a][t + 1] = propagate_state(tape.truth[a][t], u_exec);
      tape.inputs[a].push_back(u_cmd);
    }
  }

  auto truth_of = [&](AgentId id, int t) -> const Pose2D& {
    for (std::size_t a = 0; a < n; ++a) {
      if (sc.agents[a].id == id) return tape.truth[a][t];
    }
    throw std::invalid_argument("make_run_tape: unknown agent id");
  };

  for (int t = 0; t < sc.horizon; ++t) {
    for (const AbsoluteScheduleEntry& e : sc.absolute_schedule) {
      if (std::find(e.steps.begin(), e.steps.end(), t) == e.steps.end()) continue;
      const Landmark* lm = nullptr;
      for (const Landmark& l : sc.landmarks) {
        if (l.id == e.landmark) lm = &l;
      }
      const Pose2D& truth = truth_of(e.agent, t + 1);
      const double true_range =
          std::hypot(truth.x - lm->position.x(), truth.y - lm->position.y());
      tape.abs_by_step[t].push_back(
          {e.agent, *lm, true_range + e.range_std * gauss(rng_events), e.range_std});
    }
    for (const RelativeScheduleEntry& e : sc.relative_schedule) {
      if (std::find(e.steps.begin(), e.steps.end(), t) == e.steps.end()) continue;
      const RelativePrediction pred = evaluate_relative_model(
          e.kind, truth_of(e.observer, t + 1), truth_of(e.target, t + 1));
      Eigen::VectorXd z = pred.z_hat;
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        z[k] += e.noise_std[k] * gauss(rng_events);
      }
      tape.rel_by_step[t].emplace_back(e.observer, e.target, e.kind,
                                       wrap_measurement(z, e.kind),
                                       diag_cov(e.noise_std), t);
    }
  }
  return tape;
}

RunRecord simulate_run(const Scenario& sc, SimMethod method, const RunTape& tape) {
  if (method == SimMethod::Joint) {
    return simulate_joint(sc, tape);
  }
  return simulate_decentralized(sc, method, tape);
}

MonteCarloResult run_monte_carlo(const Scenario& sc, SimMethod method, int parallel) {
  MonteCarloResult mc;
  mc.method = method;
  mc.horizon = sc.horizon;
  for (const AgentSpec& a : sc.agents) mc.agent_ids.push_back(a.id);
  mc.runs.resize(sc.monte_carlo.runs);

  const auto start = std::chrono::steady_clock::now();
  const int workers = std::max(1, parallel);
  std::vector<std::exception_ptr> errors(workers);
  auto body = [&](int worker) {
    try {
      for (int r = worker; r < sc.monte_carlo.runs; r += workers) {
        const RunTape tape = make_run_tape(sc, r);
        try {
          mc.runs[r] = simulate_run(sc, method, tape);
        } catch (const SimFailure& e) {
          throw SimFailure(e.what(), r, e.t);
        } catch (const SolverNotConvergedError& e) {
          throw SimFailure(std::string("solver failure: ") + e.what(), r, -1);
        } catch (const SaddleNotConvergedError& e) {
          throw SimFailure(std::string("solver failure: ") + e.what(), r, -1);
        }
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) threads.emplace_back(body, w);
    for (std::thread& th : threads) th.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  mc.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                  start).count();
  for (const RunRecord& r : mc.runs) {
    mc.total_messages += static_cast<long>(r.messages.size());
    mc.total_relative_events += r.processed_relative;
  }
  return mc;
}

std::vector<double> position_rmse(const MonteCarloResult& mc, std::size_t agent_index) {
  const std::size_t T = static_cast<std::size_t>(mc.horizon) + 1;
  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double acc = 0.0;
    for (const RunRecord& run : mc.runs) {
      const StepRecord& s = run.steps[agent_index][t];
      const double ex = s.truth.x - s.est_mean[0];
      const double ey = s.truth.y - s.est_mean[1];
      acc += ex * ex + ey * ey;
    }
    out[t] = std::sqrt(acc / static_cast<double>(mc.runs.size()));
  }
  return out;
}

std::vector<double> nees_series(const MonteCarloResult& mc, std::size_t agent_index) {
  const std::size_t T = static_cast<std::size_t>(mc.horizon) + 1;
  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double acc = 0.0;
    for (std::size_t r = 0; r < mc.runs.size(); ++r) {
      const StepRecord& s = mc.runs[r].steps[agent_index][t];
      const Eigen::Matrix2d P = s.est_cov.topLeftCorner<2, 2>();
      Eigen::LLT<Eigen::Matrix2d> llt(P);
      if (llt.info() != Eigen::Success) {
        throw SingularCovarianceError("nees: singular position covariance",
                                      static_cast<int>(r), static_cast<int>(t));
      }
      const Eigen::Vector2d e(s.truth.x - s.est_mean[0], s.truth.y - s.est_mean[1]);
      acc += e.dot(llt.solve(e));
    }
    out[t] = acc / static_cast<double>(mc.runs.size());
  }
  return out;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Consistent: return "CONSISTENT";
    case Verdict::Overconfident: return "OVERCONFIDENT";
    case Verdict::Conservative: return "CONSERVATIVE";
  }
  return "?";
}

ConsistencyReport consistency_report(const std::vector<double>& series,
                                     const ConsistencyBand& band, double threshold,
                                     std::size_t start_index) {
  ConsistencyReport rep;
  std::size_t total = 0, in_band = 0, above = 0, below = 0;
  for (std::size_t t = start_index; t < series.size(); ++t) {
    ++total;
    if (series[t] > band.r2) {
      ++above;
    } else if (series[t] < band.r1) {
      ++below;
    } else {
      ++in_band;
    }
  }
  rep.fraction_in_band = (total > 0) ? static_cast<double>(in_band) / total : 1.0;
  if (rep.fraction_in_band >= threshold) {
    rep.verdict = Verdict::Consistent;
  } else {
    rep.verdict = (above >= below) ? Verdict::Overconfident : Verdict::Conservative;
  }
  return rep;
}

int first_relative_step(const MonteCarloResult& mc) {
  int first = mc.horizon + 1;
  if (mc.runs.empty()) return first;
  const RunRecord& run = mc.runs.front();
  for (std::size_t a = 0; a < run.steps.size(); ++a) {
    for (std::size_t t = 0; t < run.steps[a].size(); ++t) {
      if (run.steps[a][t].had_rel) {
        first = std::min(first, static_cast<int>(t));
        break;
      }
    }
  }
  return first;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void write_rmse_csv(const std::string& path,
                    const std::vector<MonteCarloResult>& results) {
  std::ofstream out(path);
  out << "method,agent,t,rmse\n";
  for (const MonteCarloResult& mc : results) {
    for (std::size_t a = 0; a < mc.agent_ids.size(); ++a) {
      const std::vector<double> series = position_rmse(mc, a);
      for (std::size_t t = 0; t < series.size(); ++t) {
        out << to_string(mc.method) << ',' << mc.agent_ids[a] << ',' << t << ','
            << fmt(series[t]) << '\n';
      }
    }
  }
}

void write_nees_csv(const std::string& path,
                    const std::vector<MonteCarloResult>& results,
                    const ConsistencyBand& band) {
  std::ofstream out(path);
  out << "method,agent,t,nees,r1,r2\n";
  for (const MonteCarloResult& mc : results) {
    for (std::size_t a = 0; a < mc.agent_ids.size(); ++a) {
      const std::vector<double> series = nees_series(mc, a);
      for (std::size_t t = 0; t < series.size(); ++t) {
        out << to_string(mc.method) << ',' << mc.agent_ids[a] << ',' << t << ','
            << fmt(series[t]) << ',' << fmt(band.r1) << ',' << fmt(band.r2) << '\n';
      }
    }
  }
}

void write_events_csv(const std::string& path,
                      const std::vector<MonteCarloResult>& results) {
  std::ofstream out(path);
  out << "method,run,agent,t,event,det_cov,trace_cov\n";
  for (const MonteCarloResult& mc : results) {
    for (std::size_t r = 0; r < mc.runs.size(); ++r) {
      for (const EventLogEntry& e : mc.runs[r].events) {
        out << to_string(mc.method) << ',' << r << ',' << e.agent << ',' << e.t << ','
            << e.kind << ',' << fmt(e.det_cov) << ',' << fmt(e.trace_cov) << '\n';
      }
    }
  }
}

void write_messages_csv(const std::string& path,
                        const std::vector<MonteCarloResult>& results) {
  std::ofstream out(path);
  out << "method,run,t,from,to,variant,bytes\n";
  for (const MonteCarloResult& mc : results) {
    for (std::size_t r = 0; r < mc.runs.size(); ++r) {
      for (const MessageRecord& m : mc.runs[r].messages) {
        out << to_string(mc.method) << ',' << r << ',' << m.stamp << ',' << m.from << ','
            << m.to << ',' << m.variant << ',' << m.bytes << '\n';
      }
    }
  }
}

void write_summary_csv(const std::string& path,
                       const std::vector<MonteCarloResult>& results,
                       const ConsistencyBand& band) {
  std::ofstream out(path);
  out << "method,agent,final_rmse,nees_fraction_in_band,verdict,messages,"
         "relative_events\n";
  for (const MonteCarloResult& mc : results) {
    const int start = std::min(first_relative_step(mc), mc.horizon);
    for (std::size_t a = 0; a < mc.agent_ids.size(); ++a) {
      const std::vector<double> rmse = position_rmse(mc, a);
      const std::vector<double> nees = nees_series(mc, a);
      const ConsistencyReport rep =
          consistency_report(nees, band, 0.9, static_cast<std::size_t>(start));
      out << to_string(mc.method) << ',' << mc.agent_ids[a] << ',' << fmt(rmse.back())
          << ',' << fmt(rep.fraction_in_band) << ',' << to_string(rep.verdict) << ','
          << mc.total_messages << ',' << mc.total_relative_events << '\n';
    }
  }
}

void write_runtime_csv(const std::string& path,
                       const std::vector<MonteCarloResult>& results) {
  std::ofstream out(path);
  out << "method,wall_seconds,runs,relative_events\n";
  for (const MonteCarloResult& mc : results) {
    out << to_string(mc.method) << ',' << fmt(mc.wall_seconds) << ',' << mc.runs.size()
        << ',' << mc.total_relative_events << '\n';
  }
}

}  // namespace coloc
