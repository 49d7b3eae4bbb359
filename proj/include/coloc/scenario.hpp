#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "coloc/fusion.hpp"
#include "coloc/local_filter.hpp"
#include "coloc/motion.hpp"
#include "coloc/types.hpp"

namespace coloc {

/// Estimation method run by the simulator.
enum class SimMethod { DeadReckoning, Naive, Dmv, DmvCi, Ecmv, Pecmv, Joint };

std::string to_string(SimMethod m);
SimMethod parse_sim_method(const std::string& name);

struct VelocitySegment {
  int steps = 0;
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s
};

struct VelocityProfile {
  std::vector<VelocitySegment> segments;
};

/// Simple pursuit of a cyclic waypoint list, driven by the true pose.
struct WaypointScript {
  std::vector<Eigen::Vector2d> waypoints;
  double v = 0.5;
  double omega_max = 1.0;
  double arrive_radius = 0.3;
};

struct AgentSpec {
  AgentId id = 0;
  Pose2D initial_pose;
  NoiseModel noise;
  SimMethod default_method = SimMethod::Dmv;
  GammaMode gamma = GammaMode::One;
  std::variant<VelocityProfile, WaypointScript> trajectory;
};

struct AbsoluteScheduleEntry {
  AgentId agent = 0;
  int landmark = 0;
  std::vector<int> steps;
  double range_std = 0.2;
};

struct RelativeScheduleEntry {
  AgentId observer = 0;
  AgentId target = 0;
  std::vector<int> steps;
  MeasurementKind kind = MeasurementKind::RelativePose;
  Eigen::VectorXd noise_std;  // SI units (radians for angles)
};

struct MonteCarloSpec {
  int runs = 1;
  std::uint64_t seed = 0;
};

struct Scenario {
  double dt = 0.1;
  int horizon = 100;
  std::vector<AgentSpec> agents;
  std::vector<Landmark> landmarks;
  std::vector<AbsoluteScheduleEntry> absolute_schedule;
  std::vector<RelativeScheduleEntry> relative_schedule;
  MonteCarloSpec monte_carlo;
  double process_noise_std = 1e-3;      // per-axis additive std per step
  double initial_pos_std = 0.0;         // m
  double initial_heading_std = 0.0;     // rad
};

/// Parses and validates a scenario file (JSON; angles in degrees in the file,
/// SI units otherwise). Throws ScenarioError with the offending key path.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario_text(const std::string& text);
void validate_scenario(const Scenario& sc);

/// Commanded input at step t given the agent's true pose.
UnicycleInput commanded_input(const AgentSpec& spec, const Pose2D& truth, int t,
                              double dt);

}  // namespace coloc
