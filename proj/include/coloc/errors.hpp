#pragma once

#include <stdexcept>
#include <string>

namespace coloc {

// Matrix failed the symmetric positive semidefinite check.
struct NotPsdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Measurement geometry collapsed (coincident points, zero range).
struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Innovation covariance is numerically singular.
struct SingularInnovationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A prior covariance that must be invertible is not.
struct DegenerateBeliefError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative maximizer hit its iteration cap while still improving.
struct SolverNotConvergedError : std::runtime_error {
  SolverNotConvergedError(const std::string& msg, double best, int iters)
      : std::runtime_error(msg), best_value(best), iterations(iters) {}
  double best_value;
  int iterations;
};

// Saddle iteration stopped with a duality gap above tolerance.
struct SaddleNotConvergedError : std::runtime_error {
  SaddleNotConvergedError(const std::string& msg, double gap_, int iters)
      : std::runtime_error(msg), gap(gap_), iterations(iters) {}
  double gap;
  int iterations;
};

// Covariance block needed for a NEES quadratic form is singular.
struct SingularCovarianceError : std::runtime_error {
  SingularCovarianceError(const std::string& msg, int run_, int t_)
      : std::runtime_error(msg), run(run_), timestep(t_) {}
  int run;
  int timestep;
};

// Scenario file failed validation; key_path points at the offending entry.
struct ScenarioError : std::runtime_error {
  ScenarioError(const std::string& msg, std::string key_path_)
      : std::runtime_error(msg + " (at " + key_path_ + ")"),
        key_path(std::move(key_path_)) {}
  std::string key_path;
};

struct UnknownModelKindError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A belief exchange did not complete within the simulation step.
struct MissingReplyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace coloc
