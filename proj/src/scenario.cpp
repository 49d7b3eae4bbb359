#include "coloc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coloc/angles.hpp"

namespace coloc {

using nlohmann::json;

std::string to_string(SimMethod m) {
  switch (m) {
    case SimMethod::DeadReckoning: return "dr";
    case SimMethod::Naive: return "naive";
    case SimMethod::Dmv: return "dmv";
    case SimMethod::DmvCi: return "dmv_ci";
    case SimMethod::Ecmv: return "ecmv";
    case SimMethod::Pecmv: return "pecmv";
    case SimMethod::Joint: return "joint";
  }
  return "?";
}

SimMethod parse_sim_method(const std::string& name) {
  if (name == "dr") return SimMethod::DeadReckoning;
  if (name == "naive") return SimMethod::Naive;
  if (name == "dmv") return SimMethod::Dmv;
  if (name == "dmv_ci") return SimMethod::DmvCi;
  if (name == "ecmv") return SimMethod::Ecmv;
  if (name == "pecmv") return SimMethod::Pecmv;
  if (name == "joint") return SimMethod::Joint;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected dr|naive|dmv|dmv_ci|ecmv|pecmv|joint)");
}

namespace {

std::string child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw ScenarioError("missing key", child(path, key));
  }
  return j.at(key);
}

double require_number(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number()) throw ScenarioError("expected a number", child(path, key));
  return v.get<double>();
}

int require_int(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number_integer()) throw ScenarioError("expected an integer", child(path, key));
  return v.get<int>();
}

std::string require_string(const json& j, const std::string& key,
                           const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_string()) throw ScenarioError("expected a string", child(path, key));
  return v.get<std::string>();
}

double number_or(const json& j, const std::string& key, double fallback) {
  if (j.is_object() && j.contains(key) && j.at(key).is_number()) {
    return j.at(key).get<double>();
  }
  return fallback;
}

MeasurementKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "relative_pose") return MeasurementKind::RelativePose;
  if (s == "relative_range") return MeasurementKind::RelativeRange;
  if (s == "relative_bearing") return MeasurementKind::RelativeBearing;
  throw ScenarioError("unknown measurement kind '" + s + "'", path);
}

std::vector<int> parse_steps(const json& j, const std::string& path) {
  const json& arr = require(j, "steps", path);
  if (!arr.is_array()) throw ScenarioError("expected an array", child(path, "steps"));
  std::vector<int> steps;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number_integer()) {
      throw ScenarioError("expected an integer", index_path(child(path, "steps"), i));
    }
    steps.push_back(arr[i].get<int>());
  }
  return steps;
}

}  // namespace

Scenario parse_scenario_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("invalid JSON: ") + e.what(), "<root>");
  }

  Scenario sc;
  sc.dt = require_number(j, "dt", "");
  sc.horizon = require_int(j, "horizon", "");
  sc.process_noise_std = number_or(j, "process_noise_std", 1e-3);
  sc.initial_pos_std = number_or(j, "initial_pos_std", 0.0);
  sc.initial_heading_std = deg_to_rad(number_or(j, "initial_heading_std_deg", 0.0));

  const json& mc = require(j, "monte_carlo", "");
  sc.monte_carlo.runs = require_int(mc, "runs", "monte_carlo");
  sc.monte_carlo.seed = static_cast<std::uint64_t>(require_int(mc, "seed", "monte_carlo"));

  const json& agents = require(j, "agents", "");
  if (!agents.is_array()) throw ScenarioError("expected an array", "agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string path = index_path("agents", i);
    const json& a = agents[i];
    AgentSpec spec;
    spec.id = require_int(a, "id", path);
    const json& pose = require(a, "initial_pose", path);
    if (!pose.is_array() || pose.size() != 3) {
      throw ScenarioError("expected [x, y, heading_deg]", child(path, "initial_pose"));
    }
    spec.initial_pose = Pose2D(pose[0].get<double>(), pose[1].get<double>(),
                               deg_to_rad(pose[2].get<double>()));
    const json& noise = require(a, "noise", path);
    spec.noise.v_frac = require_number(noise, "v_frac", child(path, "noise"));
    spec.noise.omega_frac = require_number(noise, "omega_frac", child(path, "noise"));
    spec.noise.floor_v = number_or(noise, "floor_v", 0.0);
    spec.noise.floor_omega = number_or(noise, "floor_omega", 0.0);
    if (a.contains("method")) {
      try {
        spec.default_method = parse_sim_method(require_string(a, "method", path));
      } catch (const std::invalid_argument& e) {
        throw ScenarioError(e.what(), child(path, "method"));
      }
    }
    if (a.contains("gamma") && a.at("gamma").is_string()) {
      const std::string g = a.at("gamma").get<std::string>();
      if (g == "one") {
        spec.gamma = GammaMode::One;
      } else if (g == "one_minus_omega") {
        spec.gamma = GammaMode::OneMinusOmega;
      } else {
        throw ScenarioError("gamma must be 'one' or 'one_minus_omega'", child(path, "gamma"));
      }
    }
    const json& traj = require(a, "trajectory", path);
    const std::string type = require_string(traj, "type", child(path, "trajectory"));
    if (type == "velocity_profile") {
      VelocityProfile vp;
      const json& segs = require(traj, "segments", child(path, "trajectory"));
      if (!segs.is_array() || segs.empty()) {
        throw ScenarioError("expected a nonempty array",
                            child(child(path, "trajectory"), "segments"));
      }
      for (std::size_t s = 0; s < segs.size(); ++s) {
        const std::string spath =
            index_path(child(child(path, "trajectory"), "segments"), s);
        VelocitySegment seg;
        seg.steps = require_int(segs[s], "steps", spath);
        seg.v = require_number(segs[s], "v", spath);
        seg.omega = deg_to_rad(require_number(segs[s], "omega_deg", spath));
        vp.segments.push_back(seg);
      }
      spec.trajectory = vp;
    } else if (type == "waypoints") {
      WaypointScript ws;
      const json& pts = require(traj, "points", child(path, "trajectory"));
      if (!pts.is_array() || pts.size() < 2) {
        throw ScenarioError("expected at least two [x, y] points",
                            child(child(path, "trajectory"), "points"));
      }
      for (std::size_t p = 0; p < pts.size(); ++p) {
        if (!pts[p].is_array() || pts[p].size() != 2) {
          throw ScenarioError("expected [x, y]",
                              index_path(child(child(path, "trajectory"), "points"), p));
        }
        ws.waypoints.emplace_back(pts[p][0].get<double>(), pts[p][1].get<double>());
      }
      ws.v = number_or(traj, "v", 0.5);
      ws.omega_max = deg_to_rad(number_or(traj, "omega_max_deg", 60.0));
      ws.arrive_radius = number_or(traj, "arrive_radius", 0.3);
      spec.trajectory = ws;
    } else {
      throw ScenarioError("trajectory type must be 'velocity_profile' or 'waypoints'",
                          child(child(path, "trajectory"), "type"));
    }
    sc.agents.push_back(std::move(spec));
  }

  if (j.contains("landmarks")) {
    const json& lms = j.at("landmarks");
    if (!lms.is_array()) throw ScenarioError("expected an array", "landmarks");
    for (std::size_t i = 0; i < lms.size(); ++i) {
      const std::string path = index_path("landmarks", i);
      Landmark lm;
      lm.id = require_int(lms[i], "id", path);
      const json& pos = require(lms[i], "position", path);
      if (!pos.is_array() || pos.size() != 2) {
        throw ScenarioError("expected [x, y]", child(path, "position"));
      }
      lm.position = Eigen::Vector2d(pos[0].get<double>(), pos[1].get<double>());
      sc.landmarks.push_back(lm);
    }
  }

  if (j.contains("absolute_schedule")) {
    const json& sch = j.at("absolute_schedule");
    if (!sch.is_array()) throw ScenarioError("expected an array", "absolute_schedule");
    for (std::size_t i = 0; i < sch.size(); ++i) {
      const std::string path = index_path("absolute_schedule", i);
      AbsoluteScheduleEntry e;
      e.agent = require_int(sch[i], "agent", path);
      e.landmark = require_int(sch[i], "landmark", path);
      e.steps = parse_steps(sch[i], path);
      e.range_std = require_number(sch[i], "range_std", path);
      sc.absolute_schedule.push_back(std::move(e));
    }
  }

  if (j.contains("relative_schedule")) {
    const json& sch = j.at("relative_schedule");
    if (!sch.is_array()) throw ScenarioError("expected an array", "relative_schedule");
    for (std::size_t i = 0; i < sch.size(); ++i) {
      const std::string path = index_path("relative_schedule", i);
      RelativeScheduleEntry e;
      e.observer = require_int(sch[i], "observer", path);
      e.target = require_int(sch[i], "target", path);
      e.steps = parse_steps(sch[i], path);
      e.kind = parse_kind(require_string(sch[i], "kind", path), child(path, "kind"));
      const json& std_arr = require(sch[i], "noise_std", path);
      if (!std_arr.is_array()) {
        throw ScenarioError("expected an array", child(path, "noise_std"));
      }
      Eigen::VectorXd stds(std_arr.size());
      for (std::size_t s = 0; s < std_arr.size(); ++s) {
        stds[static_cast<Eigen::Index>(s)] = std_arr[s].get<double>();
      }
      // file units: degrees for angle components
      if (e.kind == MeasurementKind::RelativePose && stds.size() == 3) {
        stds[2] = deg_to_rad(stds[2]);
      } else if (e.kind == MeasurementKind::RelativeBearing && stds.size() == 1) {
        stds[0] = deg_to_rad(stds[0]);
      }
      e.noise_std = stds;
      sc.relative_schedule.push_back(std::move(e));
    }
  }

  validate_scenario(sc);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError("cannot open scenario file '" + path + "'", "<file>");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

void validate_scenario(const Scenario& sc) {
  if (!(sc.dt > 0.0)) throw ScenarioError("dt must be positive", "dt");
  if (sc.horizon < 1) throw ScenarioError("horizon must be at least 1", "horizon");
  if (sc.monte_carlo.runs < 1) {
    throw ScenarioError("runs must be at least 1", "monte_carlo.runs");
  }
  if (sc.agents.empty()) throw ScenarioError("at least one agent required", "agents");

  std::set<AgentId> agent_ids;
  for (std::size_t i = 0; i < sc.agents.size(); ++i) {
    const std::string path = index_path("agents", i);
    const AgentSpec& a = sc.agents[i];
    if (!agent_ids.insert(a.id).second) {
      throw ScenarioError("duplicate agent id", child(path, "id"));
    }
    if (a.noise.v_frac < 0 || a.noise.omega_frac < 0 || a.noise.floor_v < 0 ||
        a.noise.floor_omega < 0) {
      throw ScenarioError("noise fields must be nonnegative", child(path, "noise"));
    }
  }
  std::set<int> landmark_ids;
  for (std::size_t i = 0; i < sc.landmarks.size(); ++i) {
    if (!landmark_ids.insert(sc.landmarks[i].id).second) {
      throw ScenarioError("duplicate landmark id",
                          child(index_path("landmarks", i), "id"));
    }
  }
  for (std::size_t i = 0; i < sc.absolute_schedule.size(); ++i) {
    const std::string path = index_path("absolute_schedule", i);
    const AbsoluteScheduleEntry& e = sc.absolute_schedule[i];
    if (agent_ids.count(e.agent) == 0) {
      throw ScenarioError("unknown agent id", child(path, "agent"));
    }
    if (landmark_ids.count(e.landmark) == 0) {
      throw ScenarioError("unknown landmark id", child(path, "landmark"));
    }
    if (!(e.range_std > 0.0)) {
      throw ScenarioError("range_std must be positive", child(path, "range_std"));
    }
    for (std::size_t s = 0; s < e.steps.size(); ++s) {
      if (e.steps[s] < 0 || e.steps[s] >= sc.horizon) {
        throw ScenarioError("step outside [0, horizon)",
                            index_path(child(path, "steps"), s));
      }
    }
  }
  for (std::size_t i = 0; i < sc.relative_schedule.size(); ++i) {
    const std::string path = index_path("relative_schedule", i);
    const RelativeScheduleEntry& e = sc.relative_schedule[i];
    if (agent_ids.count(e.observer) == 0) {
      throw ScenarioError("unknown agent id", child(path, "observer"));
    }
    if (agent_ids.count(e.target) == 0) {
      throw ScenarioError("unknown agent id", child(path, "target"));
    }
    if (e.observer == e.target) {
      throw ScenarioError("observer and target must differ", child(path, "target"));
    }
    if (e.noise_std.size() != measurement_dim(e.kind)) {
      throw ScenarioError("noise_std length does not match kind",
                          child(path, "noise_std"));
    }
    if ((e.noise_std.array() <= 0.0).any()) {
      throw ScenarioError("noise_std entries must be positive", child(path, "noise_std"));
    }
    for (std::size_t s = 0; s < e.steps.size(); ++s) {
      if (e.steps[s] < 0 || e.steps[s] >= sc.horizon) {
        throw ScenarioError("step outside [0, horizon)",
                            index_path(child(path, "steps"), s));
      }
    }
  }
}

UnicycleInput commanded_input(const AgentSpec& spec, const Pose2D& truth, int t,
                              double dt) {
  if (std::holds_alternative<VelocityProfile>(spec.trajectory)) {
    const VelocityProfile& vp = std::get<VelocityProfile>(spec.trajectory);
    int cursor = t;
    for (const VelocitySegment& seg : vp.segments) {
      if (cursor < seg.steps) return {seg.v, seg.omega, dt};
      cursor -= seg.steps;
    }
    const VelocitySegment& last = vp.segments.back();  // hold beyond the script
    return {last.v, last.omega, dt};
  }
  (void)t;
  const WaypointScript& ws = std::get<WaypointScript>(spec.trajectory);
  // stateless pursuit: head for the nearest waypoint, or the one after it
  // once inside the arrival radius
  const std::size_t n = ws.waypoints.size();
  const Eigen::Vector2d pos(truth.x, truth.y);
  std::size_t nearest = 0;
  double best = (ws.waypoints[0] - pos).norm();
  for (std::size_t k = 1; k < n; ++k) {
    const double d = (ws.waypoints[k] - pos).norm();
    if (d < best) {
      best = d;
      nearest = k;
    }
  }
  const std::size_t idx = (best <= ws.arrive_radius) ? (nearest + 1) % n : nearest;
  const Eigen::Vector2d& w = ws.waypoints[idx];
  const double heading_err =
      wrap_angle(std::atan2(w.y() - truth.y, w.x() - truth.x) - truth.phi);
  const double omega = std::clamp(2.0 * heading_err, -ws.omega_max, ws.omega_max);
  const double v = ws.v * std::max(0.0, std::cos(heading_err));
  return {v, omega, dt};
}

}  // namespace coloc
