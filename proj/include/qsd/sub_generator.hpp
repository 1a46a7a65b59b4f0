#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "qsd/errors.hpp"

namespace qsd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Killed-generator restricted to the non-absorbed states: off-diagonal
// entries are jump rates, row sums are <= 0 and the deficit -sum_j Q(i,j)
// is the killing (absorption) rate out of state i.
struct SubGenerator {
  Mat Q;
  std::vector<std::string> labels;  // empty, or one label per state

  int dim() const { return static_cast<int>(Q.rows()); }
  Vec kill_rates() const { return -Q.rowwise().sum(); }
  double max_exit_rate() const { return Q.diagonal().cwiseAbs().maxCoeff(); }
  std::string label(int i) const {
    return labels.empty() ? std::to_string(i + 1) : labels[i];
  }
};

namespace detail {

// Strong connectivity of the pattern {(i,j): Q(i,j) > 0, i != j}:
// forward and backward reachability from state 0 must both be complete.
inline bool strongly_connected(const Mat& Q) {
  const int n = static_cast<int>(Q.rows());
  if (n == 1) return true;
  auto reaches_all = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < n; ++v) {
        double rate = forward ? Q(u, v) : Q(v, u);
        if (v != u && rate > 0.0 && !seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  return reaches_all(true) && reaches_all(false);
}

}  // namespace detail

// Validates and wraps a rate matrix.  Tolerances are relative to the
// largest exit rate so the same matrix passes regardless of time units.
inline SubGenerator make_sub_generator(Mat Q,
                                       std::vector<std::string> labels = {}) {
  if (Q.rows() != Q.cols() || Q.rows() == 0)
    throw NotAGenerator("rate matrix must be square and non-empty");
  if (!labels.empty() && static_cast<int>(labels.size()) != Q.rows())
    throw NotAGenerator("label count does not match dimension");
  const int n = static_cast<int>(Q.rows());
  double scale = std::max(Q.cwiseAbs().maxCoeff(), 1e-300);
  const double tol = 1e-12 * scale;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        if (Q(i, j) < -tol)
          throw NotAGenerator("negative off-diagonal rate at (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
        if (Q(i, j) < 0.0) Q(i, j) = 0.0;  // clamp roundoff
      }
  bool any_killing = false;
  for (int i = 0; i < n; ++i) {
    double rs = Q.row(i).sum();
    if (rs > 1e-9 * scale)
      throw NotAGenerator("row " + std::to_string(i) + " has positive sum " +
                          std::to_string(rs));
    if (rs < -1e-9 * scale) any_killing = true;
  }
  if (!any_killing)
    throw NotAGenerator("conservative generator: no state is killed");
  if (!detail::strongly_connected(Q))
    throw ReducibleChain("nonzero pattern is not strongly connected");
  return SubGenerator{std::move(Q), std::move(labels)};
}

// Probability-vector check used by the conditioning operations.
inline void validate_prob_vector(const Vec& v, double tol = 1e-9) {
  if (v.size() == 0) throw ConfigError("empty probability vector");
  if (v.minCoeff() < -tol) throw ConfigError("negative probability entry");
  if (std::abs(v.sum() - 1.0) > tol)
    throw ConfigError("probability vector sums to " + std::to_string(v.sum()));
}

inline Vec point_mass(int n, int state) {
  Vec v = Vec::Zero(n);
  v(state) = 1.0;
  return v;
}

}  // namespace qsd
