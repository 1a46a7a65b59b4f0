#pragma once

#include <stdexcept>
#include <string>

namespace qsd {

// Rate matrix fails the sub-generator requirements (negative off-diagonal
// entry, positive row sum, or no killing at all).
struct NotAGenerator : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The nonzero pattern of the generator is not strongly connected.
struct ReducibleChain : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An iterative eigen-solve stalled before reaching the requested residual.
struct NoConvergence : std::runtime_error {
  long iterations;
  NoConvergence(const std::string& what, long iters)
      : std::runtime_error(what + " (after " + std::to_string(iters) + " iterations)"),
        iterations(iters) {}
};

// A finite-difference grid violates h*max|q| < 1 even after refinement.
struct GridTooCoarse : std::runtime_error {
  double cell_x;  // location of the violating cell
  GridTooCoarse(const std::string& what, double x)
      : std::runtime_error(what), cell_x(x) {}
};

// Adaptive quadrature hit a non-integrable (or overflowing) integrand.
struct QuadratureError : std::runtime_error {
  double exponent;  // local log-slope d log|f| / d log x near the failure
  QuadratureError(const std::string& what, double expo)
      : std::runtime_error(what), exponent(expo) {}
};

// Yaglom iteration requested for a branching law with mean >= 1.
struct NotSubcritical : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every Fleming-Viot particle was absorbed within one step.
struct EnsembleCollapse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An event-driven simulation exceeded its jump budget.
struct EventCapExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Histogram comparison with incompatible bin edges.
struct BinMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scenario / CLI configuration problems.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qsd
