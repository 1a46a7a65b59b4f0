#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "qsd/sub_generator.hpp"

namespace qsd {

// Leading spectral data of a killed generator.  alpha is the quasi-stationary
// distribution (left Perron vector, sum 1), pi the right Perron vector scaled
// so that alpha.dot(pi) = 1; theta = -lambda_1 is the extinction rate and chi
// the decay rate of the next spectral mode (second-largest real part), so
// chi - theta is the relaxation rate of the conditioned semigroup.
//
// Residuals are absolute infinity norms of the eigen-defect, alpha taken with
// sum 1 and pi rescaled to unit sup norm for the check.
struct QsdResult {
  Vec alpha;
  Vec pi;
  Vec log_pi;  // natural logs; usable even when pi over/underflows after scaling
  double theta = 0.0;
  double chi = 0.0;
  double residual_alpha = 0.0;
  double residual_pi = 0.0;
  long iterations = 0;
  std::vector<std::string> labels;

  double gap() const { return chi - theta; }
};

struct SolveOptions {
  double tol = 1e-10;        // residual target, relative to the max exit rate
  long max_iter = 1000000;   // power-iteration budget
  int dense_max_dim = 500;   // dense eigendecomposition allowed up to here
};

namespace detail {

inline double log_sum_exp(const std::vector<double>& logs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logs) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : logs) s += std::exp(v - m);
  return m + std::log(s);
}

inline bool is_positive_tridiagonal(const Mat& Q) {
  const int n = static_cast<int>(Q.rows());
  if (n < 2) return false;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(i - j) > 1 && Q(i, j) != 0.0) return false;
  for (int i = 0; i + 1 < n; ++i)
    if (Q(i, i + 1) <= 0.0 || Q(i + 1, i) <= 0.0) return false;
  return true;
}

// Birth-death-like generators are diagonally similar to a symmetric
// tridiagonal matrix: with d_{i+1}/d_i = sqrt(Q(i+1,i)/Q(i,i+1)),
// T = D^{-1} Q D has off-diagonal sqrt(Q(i,i+1) Q(i+1,i)).  The similarity
// weights are kept in log form because they grow/decay geometrically.
inline QsdResult solve_tridiagonal(const SubGenerator& g) {
  const int n = g.dim();
  Vec diag = g.Q.diagonal();
  Vec off(n - 1);
  std::vector<double> log_d(n, 0.0);
  for (int i = 0; i + 1 < n; ++i) {
    off(i) = std::sqrt(g.Q(i, i + 1) * g.Q(i + 1, i));
    log_d[i + 1] = log_d[i] + 0.5 * (std::log(g.Q(i + 1, i)) - std::log(g.Q(i, i + 1)));
  }
  Eigen::SelfAdjointEigenSolver<Mat> es;
  es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw NoConvergence("tridiagonal QL failed", 0);
  // Eigenvalues ascending; the ground state of -T sits at the top.
  const auto& ev = es.eigenvalues();
  double theta = -ev(n - 1);
  double chi = n >= 2 ? -ev(n - 2) : theta;
  Vec v = es.eigenvectors().col(n - 1);
  // Perron vector of an irreducible Jacobi matrix is strictly positive;
  // flip the computed sign if needed and verify no genuine sign change.
  int imax;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0.0) v = -v;
  double vmax = v.cwiseAbs().maxCoeff();
  for (int i = 0; i < n; ++i) {
    if (v(i) < -1e-12 * vmax)
      throw NoConvergence("ground-state vector changed sign", 0);
    v(i) = std::abs(v(i));
  }

  // log v, with below-noise tails rebuilt by stable marches.  Entries under
  // ~1e-5 vmax carry O(eps vmax) absolute noise which the similarity weights
  // d_i can amplify into garbage alpha/pi tails.  Marching the three-term
  // recurrence INTO a tail from its boundary is dominated by the ground
  // solution, so the rebuilt profile is accurate in log scale; it is anchored
  // at the last trusted entry.
  std::vector<double> lv(n);
  const double cut = vmax * 1e-5;
  int lo = imax, hi = imax;
  while (lo > 0 && v(lo - 1) >= cut) --lo;
  while (hi + 1 < n && v(hi + 1) >= cut) ++hi;
  for (int i = lo; i <= hi; ++i) lv[i] = std::log(v(i));
  auto raw_log = [&](int i) {
    return v(i) > 0.0 ? std::log(v(i)) : -std::numeric_limits<double>::infinity();
  };
  if (hi < n - 1) {
    std::vector<double> lu(n, 0.0);
    double carry = 0.0, w_next = 0.0, w_cur = 1.0;
    bool ok = true;
    for (int i = n - 1; i > hi; --i) {
      double rhs = (-theta - diag(i)) * w_cur - (i + 1 < n ? off(i) * w_next : 0.0);
      double w_prev = rhs / off(i - 1);
      if (!(w_prev > 0.0) || !std::isfinite(w_prev)) {
        ok = false;
        break;
      }
      w_next = w_cur;
      w_cur = w_prev;
      if (w_cur > 1e250) {
        w_next /= 1e250;
        w_cur /= 1e250;
        carry += std::log(1e250);
      }
      lu[i - 1] = std::log(w_cur) + carry;
    }
    for (int i = hi + 1; i < n; ++i) lv[i] = ok ? lu[i] - lu[hi] + lv[hi] : raw_log(i);
  }
  if (lo > 0) {
    std::vector<double> lu(n, 0.0);
    double carry = 0.0, w_prev = 0.0, w_cur = 1.0;
    bool ok = true;
    for (int i = 0; i < lo; ++i) {
      double rhs = (-theta - diag(i)) * w_cur - (i > 0 ? off(i - 1) * w_prev : 0.0);
      double w_up = rhs / off(i);
      if (!(w_up > 0.0) || !std::isfinite(w_up)) {
        ok = false;
        break;
      }
      w_prev = w_cur;
      w_cur = w_up;
      if (w_cur > 1e250) {
        w_prev /= 1e250;
        w_cur /= 1e250;
        carry += std::log(1e250);
      }
      lu[i + 1] = std::log(w_cur) + carry;
    }
    for (int i = 0; i < lo; ++i) lv[i] = ok ? lu[i] - lu[lo] + lv[lo] : raw_log(i);
  }

  // alpha_i ~ v_i / d_i, pi_i ~ v_i d_i, assembled in log space.
  std::vector<double> log_alpha(n), log_pi(n);
  for (int i = 0; i < n; ++i) {
    log_alpha[i] = lv[i] - log_d[i];
    log_pi[i] = lv[i] + log_d[i];
  }
  double la_norm = log_sum_exp(log_alpha);
  QsdResult r;
  r.alpha = Vec(n);
  for (int i = 0; i < n; ++i) r.alpha(i) = std::exp(log_alpha[i] - la_norm);
  // alpha_i * pi_i = v_i^2 / sum v_j^2, so fix the pi scale via log weights
  // to make alpha.dot(pi) = 1.
  std::vector<double> l2(n);
  for (int i = 0; i < n; ++i) l2[i] = 2.0 * lv[i];
  double log_scale = la_norm - log_sum_exp(l2);
  r.pi = Vec(n);
  r.log_pi = Vec(n);
  for (int i = 0; i < n; ++i) {
    r.log_pi(i) = log_pi[i] + log_scale;
    r.pi(i) = std::exp(r.log_pi(i));
  }
  r.theta = theta;
  r.chi = chi;
  r.iterations = 0;
  return r;
}

// Dense route: real Schur of Q and of Q^T via Eigen's general eigensolver.
inline QsdResult solve_dense(const SubGenerator& g) {
  const int n = g.dim();
  Eigen::EigenSolver<Mat> es(g.Q);
  if (es.info() != Eigen::Success) throw NoConvergence("dense eigensolver failed", 0);
  const auto& vals = es.eigenvalues();
  // Order by descending real part, ties by smaller |imag|.
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (vals(a).real() != vals(b).real()) return vals(a).real() > vals(b).real();
    return std::abs(vals(a).imag()) < std::abs(vals(b).imag());
  });
  int lead = idx[0];
  if (std::abs(vals(lead).imag()) > 1e-8 * (1.0 + std::abs(vals(lead).real())))
    throw NoConvergence("leading eigenvalue is not real", 0);
  QsdResult r;
  r.theta = -vals(lead).real();
  r.chi = n >= 2 ? -vals(idx[1]).real() : r.theta;
  Eigen::VectorXcd pv = es.eigenvectors().col(lead);
  Vec pi = pv.real();
  int imax;
  pi.cwiseAbs().maxCoeff(&imax);
  if (pi(imax) < 0.0) pi = -pi;
  pi = pi.cwiseMax(0.0);

  Eigen::EigenSolver<Mat> est(Mat(g.Q.transpose()));
  if (est.info() != Eigen::Success) throw NoConvergence("dense eigensolver failed", 0);
  const auto& tvals = est.eigenvalues();
  int tlead = 0;
  for (int i = 1; i < n; ++i)
    if (tvals(i).real() > tvals(tlead).real()) tlead = i;
  Vec alpha = est.eigenvectors().col(tlead).real();
  alpha.cwiseAbs().maxCoeff(&imax);
  if (alpha(imax) < 0.0) alpha = -alpha;
  alpha = alpha.cwiseMax(0.0);

  r.alpha = alpha / alpha.sum();
  double s = r.alpha.dot(pi);
  r.pi = pi / s;
  r.log_pi = Vec(n);
  for (int i = 0; i < n; ++i)
    r.log_pi(i) = r.pi(i) > 0.0 ? std::log(r.pi(i))
                                : -std::numeric_limits<double>::infinity();
  r.iterations = 0;
  return r;
}

struct SparseEntries {
  std::vector<int> row, col;
  std::vector<double> val;
};

inline SparseEntries nonzeros(const Mat& Q) {
  SparseEntries e;
  const int n = static_cast<int>(Q.rows());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (Q(i, j) != 0.0) {
        e.row.push_back(i);
        e.col.push_back(j);
        e.val.push_back(Q(i, j));
      }
  return e;
}

// Power iteration on the uniformized matrix M = I + Q/qbar, which is
// nonnegative and (for an irreducible sub-generator) primitive whenever some
// diagonal entry survives; simultaneous left/right iteration with Wielandt
// deflation afterwards for the second mode.
inline QsdResult solve_power(const SubGenerator& g, const SolveOptions& opt) {
  const int n = g.dim();
  const double qbar = g.max_exit_rate();
  SparseEntries e = nonzeros(g.Q);
  const std::size_t nnz = e.val.size();

  auto left_apply = [&](const Vec& x) {  // x^T M
    Vec y = x;
    for (std::size_t k = 0; k < nnz; ++k)
      y(e.col[k]) += x(e.row[k]) * e.val[k] / qbar;
    return y;
  };
  auto right_apply = [&](const Vec& x) {  // M x
    Vec y = x;
    for (std::size_t k = 0; k < nnz; ++k)
      y(e.row[k]) += x(e.col[k]) * e.val[k] / qbar;
    return y;
  };

  Vec x = Vec::Constant(n, 1.0 / n);
  Vec y = Vec::Constant(n, 1.0);
  double theta = 0.0;
  long it = 0;
  bool converged = false;
  for (; it < opt.max_iter; ++it) {
    Vec xn = left_apply(x);
    double rho = xn.sum();
    theta = (1.0 - rho) * qbar;
    xn /= rho;
    Vec yn = right_apply(y);
    yn /= yn.cwiseAbs().maxCoeff();
    x = xn;
    y = yn;
    if (it % 16 == 15) {
      double ra = (g.Q.transpose() * x + theta * x).cwiseAbs().maxCoeff();
      double rp = (g.Q * y + theta * y).cwiseAbs().maxCoeff();
      if (ra <= opt.tol * qbar && rp <= opt.tol * qbar) {
        converged = true;
        break;
      }
    }
  }
  if (!converged)
    throw NoConvergence("power iteration stalled", it);

  QsdResult r;
  r.alpha = x / x.sum();
  double s = r.alpha.dot(y);
  r.pi = y / s;
  r.log_pi = Vec(n);
  for (int i = 0; i < n; ++i)
    r.log_pi(i) = r.pi(i) > 0.0 ? std::log(r.pi(i))
                                : -std::numeric_limits<double>::infinity();
  r.theta = theta;
  r.iterations = it + 1;

  // Second mode via one Wielandt deflation step: M' = M - rho1 * pi alpha^T
  // removes the Perron pair; iterate left vectors of M'.  With a real
  // subdominant eigenvalue (always the case for the tridiagonal-like chains
  // that reach this size) the Rayleigh quotient converges to rho2.
  double rho1 = 1.0 - theta / qbar;
  const Vec& pi_n = r.pi;  // alpha.dot(pi) == 1 already
  Vec z = Vec::Zero(n);
  z(0) = 1.0;
  z -= r.alpha * (z.dot(pi_n));  // project out the Perron component
  z /= z.norm();
  double rho2 = 0.0;
  double rho2_prev = std::numeric_limits<double>::infinity();
  for (long extra = 0; extra < opt.max_iter; ++extra) {
    Vec zn = left_apply(z) - (rho1 * z.dot(pi_n)) * r.alpha;
    rho2 = z.dot(zn);  // Rayleigh quotient, z has unit norm
    double nn = zn.norm();
    if (nn == 0.0) break;
    z = zn / nn;
    if (std::abs(rho2 - rho2_prev) <= 1e-13 * std::max(1.0, std::abs(rho2))) break;
    rho2_prev = rho2;
  }
  r.chi = (1.0 - rho2) * qbar;
  return r;
}

}  // namespace detail

inline QsdResult solve_qsd_spectral(const SubGenerator& g, SolveOptions opt = {}) {
  const int n = g.dim();
  QsdResult r;
  if (n == 1) {
    r.alpha = Vec::Constant(1, 1.0);
    r.pi = Vec::Constant(1, 1.0);
    r.log_pi = Vec::Constant(1, 0.0);
    r.theta = -g.Q(0, 0);
    r.chi = r.theta;
  } else if (detail::is_positive_tridiagonal(g.Q)) {
    r = detail::solve_tridiagonal(g);
  } else if (n <= opt.dense_max_dim) {
    r = detail::solve_dense(g);
  } else {
    r = detail::solve_power(g, opt);
  }
  r.labels = g.labels;
  Vec pi_sup = r.pi;
  double pmax = pi_sup.cwiseAbs().maxCoeff();
  if (pmax > 0.0) pi_sup /= pmax;
  r.residual_alpha = (g.Q.transpose() * r.alpha + r.theta * r.alpha).cwiseAbs().maxCoeff();
  r.residual_pi = (g.Q * pi_sup + r.theta * pi_sup).cwiseAbs().maxCoeff();
  const double qbar = g.max_exit_rate();
  if (r.residual_alpha > opt.tol * qbar * 100 || r.residual_pi > opt.tol * qbar * 100)
    throw NoConvergence("eigen-residual above tolerance", r.iterations);
  return r;
}

// ---------------------------------------------------------------------------
// Semigroup: uniformization with Poisson-tail truncation.

namespace detail {

// Poisson(a) weights truncated once the cumulative mass reaches 1 - rel_tol.
inline std::vector<double> poisson_weights(double a, double rel_tol = 1e-13) {
  std::vector<double> w;
  double p = std::exp(-a);
  double cum = p;
  w.push_back(p);
  int k = 0;
  while (cum < 1.0 - rel_tol && k < 4096) {
    ++k;
    p *= a / k;
    cum += p;
    w.push_back(p);
  }
  return w;
}

constexpr double kUniformizationChunk = 32.0;  // max qbar * tau per series

}  // namespace detail

// e^{tQ} for any rate matrix with nonnegative off-diagonal and nonpositive
// row sums.  The series for e^{tau Q} is evaluated with qbar*tau <= 32 and
// the result squared back up; both steps preserve nonnegativity and
// sub-stochasticity exactly.
inline Mat transition_matrix(const Mat& Q, double t) {
  const int n = static_cast<int>(Q.rows());
  if (t < 0.0) throw ConfigError("negative time in transition_matrix");
  double qbar = Q.diagonal().cwiseAbs().maxCoeff();
  if (t == 0.0 || qbar == 0.0) return Mat::Identity(n, n);
  int squarings = 0;
  double a = qbar * t;
  while (a > detail::kUniformizationChunk) {
    a /= 2;
    ++squarings;
  }
  Mat M = Mat::Identity(n, n) + Q / qbar;
  std::vector<double> w = detail::poisson_weights(a);
  Mat term = Mat::Identity(n, n);
  Mat P = w[0] * term;
  for (std::size_t k = 1; k < w.size(); ++k) {
    term = term * M;
    P += w[k] * term;
  }
  for (int s = 0; s < squarings; ++s) P = P * P;
  return P;
}

inline Mat transition_matrix(const SubGenerator& g, double t) {
  return transition_matrix(g.Q, t);
}

struct ConditionedLaw {
  Vec dist;             // law of X_t conditioned on survival, sums to 1
  double log_survival;  // log P(T > t) from the given initial law
};

// Long horizons are taken in chunks with per-chunk renormalization, so the
// conditioned law stays O(1) while the survival mass is accumulated in logs.
inline ConditionedLaw conditioned_distribution(const SubGenerator& g,
                                               const Vec& init, double t) {
  validate_prob_vector(init);
  if (init.size() != g.dim()) throw ConfigError("initial law has wrong dimension");
  if (t < 0.0) throw ConfigError("negative time");
  double qbar = g.max_exit_rate();
  Vec v = init;
  double log_mass = 0.0;
  double remaining = t;
  while (remaining > 0.0 && qbar > 0.0) {
    double tau = std::min(remaining, detail::kUniformizationChunk / qbar);
    double a = qbar * tau;
    std::vector<double> w = detail::poisson_weights(a);
    Vec x = v;
    Vec acc = w[0] * x;
    for (std::size_t k = 1; k < w.size(); ++k) {
      Vec xn = x + (g.Q.transpose() * x) / qbar;
      x = xn;
      acc += w[k] * x;
    }
    double s = acc.sum();
    if (s <= 0.0)
      throw NoConvergence("survival mass underflowed to zero", 0);
    log_mass += std::log(s);
    v = acc / s;
    remaining -= tau;
  }
  return {v, log_mass};
}

struct Survival {
  double p;
  double log_p;
};

inline Survival survival_probability(const SubGenerator& g, const Vec& init,
                                     double t) {
  ConditionedLaw c = conditioned_distribution(g, init, t);
  return {std::exp(c.log_survival), c.log_survival};
}

// Instantaneous mortality rate r(t) = -d/dt log P(T > t); for a killed chain
// this is the mean killing rate under the conditioned law at time t.
inline std::vector<double> extinction_rate_curve(const SubGenerator& g,
                                                 const Vec& init,
                                                 const std::vector<double>& t_grid) {
  validate_prob_vector(init);
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (t_grid[i] < t_grid[i - 1])
      throw ConfigError("time grid must be nondecreasing");
  Vec kill = g.kill_rates();
  std::vector<double> out;
  out.reserve(t_grid.size());
  Vec v = init;
  double prev_t = 0.0;
  for (double t : t_grid) {
    if (t > prev_t) {
      ConditionedLaw c = conditioned_distribution(g, v, t - prev_t);
      v = c.dist;
      prev_t = t;
    }
    out.push_back(v.dot(kill));
  }
  return out;
}

// Defect of a candidate QSD: ||v Q + (v . kill) v||_inf after normalizing v.
// A vector is a QSD exactly when this vanishes, with extinction rate v . kill.
inline double qsd_residual(const SubGenerator& g, Vec candidate) {
  validate_prob_vector(candidate);
  candidate /= candidate.sum();
  double theta = candidate.dot(g.kill_rates());
  return (g.Q.transpose() * candidate + theta * candidate).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Q-process: the chain conditioned to never be absorbed.

struct QProcess {
  Mat generator;   // conservative: rows sum to 0
  Vec stationary;  // (alpha_j pi_j)_j, already normalized
};

inline QProcess q_process(const SubGenerator& g, const QsdResult& r) {
  const int n = g.dim();
  if (r.alpha.size() != n) throw ConfigError("QsdResult does not match generator");
  Mat L(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        L(i, i) = r.theta + g.Q(i, i);
      } else if (g.Q(i, j) == 0.0) {
        L(i, j) = 0.0;
      } else {
        double log_ratio = r.log_pi(j) - r.log_pi(i);
        if (log_ratio > 700.0)
          throw ConfigError("pi ratio overflows in q_process");
        L(i, j) = std::exp(log_ratio) * g.Q(i, j);
      }
    }
  Vec st(n);
  for (int i = 0; i < n; ++i) st(i) = r.alpha(i) * r.pi(i);
  st /= st.sum();
  return {std::move(L), std::move(st)};
}

}  // namespace qsd
