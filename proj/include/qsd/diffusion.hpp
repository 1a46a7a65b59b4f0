#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qsd/errors.hpp"
#include "qsd/rng.hpp"
#include "qsd/spectral.hpp"
#include "qsd/sub_generator.hpp"

namespace qsd {

// Logistic Feller diffusion  dZ = sqrt(2 gamma Z) dB + (r Z - c Z^2) dt.
// The charge capacity r/c is the deterministic equilibrium.
struct FellerParams {
  double gamma = 0.5;
  double r = 1.0;
  double c = 1.0;  // c = 0 is legal for simulation (pure branching diffusion)

  void validate() const {
    if (!(gamma > 0.0 && r > 0.0 && c >= 0.0))
      throw ConfigError("Feller parameters must be positive (c may be zero)");
  }
  double charge_capacity() const { return r / c; }
  double default_dt() const { return 1e-3 * std::min(1.0, 1.0 / r); }
};

// Unit-diffusion form  dX = dB - q(X) dt  on (0, infinity), with potential
// Q(x) = int_1^x 2 q(y) dy, so that the speed density is e^{-Q}.
struct KolmogorovModel {
  std::function<double(double)> q;
  std::function<double(double)> Q;
};

// Change of variables X = sqrt(2 Z / gamma):  z = gamma x^2 / 2, and
//   q(x) = 1/(2x) - r x / 2 + gamma c x^3 / 4,
//   Q(y) = 2 int_1^y q = ln y + (r/2)(1 - y^2) + (gamma c / 8)(y^4 - 1).
// With gamma = 1/2 this is X = 2 sqrt(Z), q = 1/(2x) - rx/2 + c x^3/8,
// Q = ln y + (r/2)(1 - y^2) + (c/16)(y^4 - 1).
inline KolmogorovModel feller_to_kolmogorov(const FellerParams& p) {
  p.validate();
  if (!(p.c > 0.0))
    throw ConfigError("the potential needs c > 0 (no confinement otherwise)");
  const double r = p.r, gc = p.gamma * p.c;
  KolmogorovModel m;
  m.q = [r, gc](double x) { return 0.5 / x - 0.5 * r * x + 0.25 * gc * x * x * x; };
  m.Q = [r, gc](double y) {
    return std::log(y) + 0.5 * r * (1.0 - y * y) + gc / 8.0 * (y * y * y * y - 1.0);
  };
  return m;
}

inline double feller_x_from_z(const FellerParams& p, double z) {
  return std::sqrt(2.0 * z / p.gamma);
}
inline double feller_z_from_x(const FellerParams& p, double x) {
  return 0.5 * p.gamma * x * x;
}

// ---------------------------------------------------------------------------
// Scale functions  Lambda(x) = int_1^x e^Q,  kappa(x) = int_1^x e^Q(y) F(y) dy
// with F(y) = int_1^y e^{-Q}, integrated as the ODE system (Lambda, F, kappa)
// by adaptive RK4 (step doubling), relative tolerance 1e-8.

struct ScaleFunctions {
  double Lambda = 0.0;
  double kappa = 0.0;
};

namespace detail {

inline void scale_rhs(const KolmogorovModel& m, double y, const double* s, double* ds) {
  double Qv = m.Q(y);
  if (std::abs(Qv) > 700.0) {
    // report the local singular exponent p in Q ~ p ln y (near 0) or Q itself
    double expo = (y > 0.0 && y < 1.0) ? Qv / std::log(y) : Qv;
    throw QuadratureError("potential overflowed during scale-function quadrature", expo);
  }
  double eQ = std::exp(Qv);
  ds[0] = eQ;
  ds[1] = 1.0 / eQ;
  ds[2] = eQ * s[1];
}

inline void rk4_step(const KolmogorovModel& m, double y, double h, const double* s,
                     double* out) {
  double k1[3], k2[3], k3[3], k4[3], tmp[3];
  scale_rhs(m, y, s, k1);
  for (int i = 0; i < 3; ++i) tmp[i] = s[i] + 0.5 * h * k1[i];
  scale_rhs(m, y + 0.5 * h, tmp, k2);
  for (int i = 0; i < 3; ++i) tmp[i] = s[i] + 0.5 * h * k2[i];
  scale_rhs(m, y + 0.5 * h, tmp, k3);
  for (int i = 0; i < 3; ++i) tmp[i] = s[i] + h * k3[i];
  scale_rhs(m, y + h, tmp, k4);
  for (int i = 0; i < 3; ++i)
    out[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace detail

inline ScaleFunctions scale_functions(const KolmogorovModel& m, double x,
                                      double rel_tol = 1e-8) {
  if (!(x > 0.0)) throw ConfigError("scale functions need x > 0");
  double s[3] = {0.0, 0.0, 0.0};  // (Lambda, F, kappa), all vanish at 1
  if (x == 1.0) return {0.0, 0.0};
  double y = 1.0;
  double h = (x - 1.0) / 64.0;
  if (h == 0.0) return {0.0, 0.0};
  const double dir = h > 0.0 ? 1.0 : -1.0;
  long steps = 0;
  while (dir * (x - y) > 1e-300) {
    if (dir * (y + h - x) > 0.0) h = x - y;
    double full[3], half[3], two[3];
    detail::rk4_step(m, y, h, s, full);
    detail::rk4_step(m, y, 0.5 * h, s, half);
    detail::rk4_step(m, y + 0.5 * h, 0.5 * h, half, two);
    double err = 0.0;
    for (int i = 0; i < 3; ++i) {
      double scale = std::abs(two[i]) + 1e-12;
      err = std::max(err, std::abs(two[i] - full[i]) / (15.0 * scale));
    }
    if (err <= rel_tol) {
      y += h;
      for (int i = 0; i < 3; ++i) s[i] = two[i] + (two[i] - full[i]) / 15.0;
    }
    double fac = err > 0.0 ? 0.9 * std::pow(rel_tol / err, 0.2) : 5.0;
    h *= std::clamp(fac, 0.2, 5.0);
    if (++steps > 2000000)
      throw NoConvergence("scale-function integrator exceeded its step budget", steps);
  }
  return {s[0], s[2]};
}

// Numerical check of the absorption criterion "Lambda(+inf) = +inf and
// kappa(0+) < +inf" from the tail behaviour of Q.  Lambda diverges whenever
// Q(x) does not fall below -(1+delta) ln x at infinity; kappa(0+) is probed
// by a Cauchy test along x = 10^{-2..-6}.
struct AbsorptionClassification {
  bool lambda_diverges_at_infinity = false;
  bool kappa_finite_at_zero = false;
  bool absorption_certain() const {
    return lambda_diverges_at_infinity && kappa_finite_at_zero;
  }
};

inline AbsorptionClassification classify_absorption(const KolmogorovModel& m) {
  AbsorptionClassification out;
  // tail slope of Q against ln x
  double x_prev = 8.0, q_prev = m.Q(x_prev);
  double slope = 0.0;
  bool blew_up = false;
  for (double x = 16.0; x <= 65536.0; x *= 2.0) {
    double qv = m.Q(x);
    if (qv > 700.0) {
      blew_up = true;  // e^Q overflows: the integrand itself diverges
      break;
    }
    slope = (qv - q_prev) / (std::log(x) - std::log(x_prev));
    x_prev = x;
    q_prev = qv;
  }
  out.lambda_diverges_at_infinity = blew_up || slope >= -1.0 + 0.05;

  try {
    double prev = scale_functions(m, 1e-2).kappa;
    bool cauchy = true;
    double last_jump = 0.0;
    for (double x = 1e-3; x >= 1e-6 / 2; x /= 10.0) {
      double cur = scale_functions(m, x).kappa;
      double jump = std::abs(cur - prev);
      if (last_jump > 0.0 && jump > last_jump) cauchy = false;
      last_jump = jump;
      prev = cur;
    }
    out.kappa_finite_at_zero = cauchy && last_jump < 1e-2 * (1.0 + std::abs(prev));
  } catch (const QuadratureError&) {
    out.kappa_finite_at_zero = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference discretization of  L = 1/2 d^2/dx^2 - q d/dx  on
// [eps, x_max] with absorbing ends.  Row i couples to its neighbours with
//   lower = 1/(2h^2) + q_i/(2h),  upper = 1/(2h^2) - q_i/(2h),  diag = -1/h^2,
// which is a valid killed generator exactly when h |q_i| < 1; the grid is
// refined automatically until that holds.

struct ContinuousEigenResult {
  std::vector<double> x;       // interior grid points
  double lambda1 = 0.0;        // leading decay rate (theta)
  double lambda2 = 0.0;        // second decay rate (chi)
  Vec eta1;                    // right eigenfunction, sup-normalized
  Vec alpha_density;           // eta1 e^{-Q} normalized to unit trapezoid integral
  Vec alpha_mass;              // left-eigenvector cell masses, sums to 1
  double eps = 0.0, x_max = 0.0;
  int n_grid = 0;
};

struct DiscretizedOperator {
  SubGenerator gen;
  ContinuousEigenResult eig;
};

// Smallest x past the minimum of Q with Q(x) >= min Q + margin: beyond it the
// density e^{-Q} is below e^{-margin} of its peak and truncation is harmless.
inline double potential_cutoff(const KolmogorovModel& m, double eps,
                               double margin = 40.0) {
  double hi = std::max(4.0, 4.0 * eps);
  for (int round = 0; round < 60; ++round) {
    double q_mode = std::numeric_limits<double>::infinity();
    const int n = 1024;
    for (int i = 0; i <= n; ++i) {
      double x = eps + (hi - eps) * i / n;
      q_mode = std::min(q_mode, m.Q(x));
    }
    if (m.Q(hi) >= q_mode + margin) {
      double lo = eps;
      while (hi - lo > 1e-6 * hi) {
        double mid = 0.5 * (lo + hi);
        if (m.Q(mid) >= q_mode + margin && mid > eps)
          hi = mid;
        else
          lo = mid;
      }
      return hi;
    }
    hi *= 2.0;
  }
  throw ConfigError("potential has no confining right tail within the scan range");
}

inline DiscretizedOperator discretize_generator(const KolmogorovModel& m, double eps,
                                                double x_max = 0.0, int n_grid = 1000,
                                                int n_cap = 262144) {
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("need 0 < eps < 1");
  if (x_max == 0.0) x_max = potential_cutoff(m, eps);
  if (!(x_max > 1.0)) throw ConfigError("need x_max > 1");
  if (n_grid < 100) throw ConfigError("need n_grid >= 100");

  int n = n_grid;
  double h = 0.0;
  std::vector<double> grid, qv;
  for (;; n *= 2) {
    h = (x_max - eps) / (n + 1);
    grid.resize(n);
    qv.resize(n);
    double worst = 0.0, worst_x = 0.0;
    for (int i = 0; i < n; ++i) {
      grid[i] = eps + (i + 1) * h;
      qv[i] = m.q(grid[i]);
      if (std::abs(qv[i]) * h > worst) {
        worst = std::abs(qv[i]) * h;
        worst_x = grid[i];
      }
    }
    if (worst < 1.0) break;
    if (2 * n > n_cap)
      throw GridTooCoarse("h*|q| >= 1 at x=" + std::to_string(worst_x) +
                              " even at the grid-size cap",
                          worst_x);
  }

  Mat Q = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double lower = 0.5 / (h * h) + 0.5 * qv[i] / h;
    double upper = 0.5 / (h * h) - 0.5 * qv[i] / h;
    if (i > 0) Q(i, i - 1) = lower;
    if (i + 1 < n) Q(i, i + 1) = upper;
    Q(i, i) = -1.0 / (h * h);
  }
  DiscretizedOperator out;
  out.gen = make_sub_generator(std::move(Q));

  QsdResult r = solve_qsd_spectral(out.gen);
  ContinuousEigenResult& e = out.eig;
  e.x = grid;
  e.lambda1 = r.theta;
  e.lambda2 = r.chi;
  e.eps = eps;
  e.x_max = x_max;
  e.n_grid = n;
  e.eta1 = r.pi / r.pi.maxCoeff();
  e.alpha_mass = r.alpha;
  e.alpha_density.resize(n);
  for (int i = 0; i < n; ++i) e.alpha_density[i] = e.eta1[i] * std::exp(-m.Q(grid[i]));
  double integral = 0.0;
  for (int i = 0; i + 1 < n; ++i)
    integral += 0.5 * h * (e.alpha_density[i] + e.alpha_density[i + 1]);
  e.alpha_density /= integral;
  return out;
}

// ---------------------------------------------------------------------------
// Euler-Maruyama simulators (full truncation: the diffusion argument is
// clamped at 0; a state that steps to <= 0 is declared absorbed there and
// frozen).  Paths are deterministic per (seed, stream).

struct DiffusionPath {
  std::vector<double> t;
  std::vector<double> x;
  bool absorbed = false;
  double t_abs = std::numeric_limits<double>::infinity();

  // step-function value at time s (last recorded state at or before s)
  double at(double s) const {
    auto it = std::upper_bound(t.begin(), t.end(), s);
    if (it == t.begin()) return x.front();
    return x[static_cast<std::size_t>(it - t.begin()) - 1];
  }
};

inline DiffusionPath simulate_feller(const FellerParams& p, double z0, double t_max,
                                     std::uint64_t seed, double dt = 0.0,
                                     std::uint64_t stream = 0, long record_stride = 1) {
  p.validate();
  if (dt <= 0.0) dt = p.default_dt();
  Philox rng(seed, stream);
  DiffusionPath path;
  path.t.push_back(0.0);
  path.x.push_back(z0);
  if (z0 <= 0.0) {
    path.absorbed = true;
    path.t_abs = 0.0;
    return path;
  }
  double z = z0;
  long n_steps = static_cast<long>(std::ceil(t_max / dt));
  for (long k = 1; k <= n_steps; ++k) {
    double step = std::min(dt, t_max - (k - 1) * dt);
    z += (p.r * z - p.c * z * z) * step +
         std::sqrt(2.0 * p.gamma * std::max(z, 0.0) * step) * rng.normal();
    double now = std::min(k * dt, t_max);
    if (z <= 0.0) {
      z = 0.0;
      path.absorbed = true;
      path.t_abs = now;
      path.t.push_back(now);
      path.x.push_back(0.0);
      break;
    }
    if (k % record_stride == 0 || k == n_steps) {
      path.t.push_back(now);
      path.x.push_back(z);
    }
  }
  return path;
}

// dZ = sqrt(Z(1-Z)) dB - Z dt on [0,1): diffusion argument clipped to [0,1],
// state capped at 1, absorbed at 0.
inline DiffusionPath simulate_wright_fisher(double z0, double t_max, std::uint64_t seed,
                                            double dt = 1e-3, std::uint64_t stream = 0,
                                            long record_stride = 1) {
  if (!(z0 > 0.0 && z0 < 1.0)) throw ConfigError("Wright-Fisher needs z0 in (0,1)");
  Philox rng(seed, stream);
  DiffusionPath path;
  path.t.push_back(0.0);
  path.x.push_back(z0);
  double z = z0;
  long n_steps = static_cast<long>(std::ceil(t_max / dt));
  for (long k = 1; k <= n_steps; ++k) {
    double step = std::min(dt, t_max - (k - 1) * dt);
    double arg = std::clamp(z, 0.0, 1.0) * (1.0 - std::clamp(z, 0.0, 1.0));
    z += -z * step + std::sqrt(arg * step) * rng.normal();
    z = std::min(z, 1.0);
    double now = std::min(k * dt, t_max);
    if (z <= 0.0) {
      z = 0.0;
      path.absorbed = true;
      path.t_abs = now;
      path.t.push_back(now);
      path.x.push_back(0.0);
      break;
    }
    if (k % record_stride == 0 || k == n_steps) {
      path.t.push_back(now);
      path.x.push_back(z);
    }
  }
  return path;
}

// dX = dB - q(X) dt, absorbed outside (lo, hi).
inline DiffusionPath simulate_kolmogorov(const KolmogorovModel& m, double x0,
                                         double t_max, std::uint64_t seed, double dt,
                                         double lo, double hi, std::uint64_t stream = 0,
                                         long record_stride = 1) {
  if (!(x0 > lo && x0 < hi)) throw ConfigError("x0 outside the killed domain");
  Philox rng(seed, stream);
  DiffusionPath path;
  path.t.push_back(0.0);
  path.x.push_back(x0);
  double x = x0;
  long n_steps = static_cast<long>(std::ceil(t_max / dt));
  for (long k = 1; k <= n_steps; ++k) {
    double step = std::min(dt, t_max - (k - 1) * dt);
    x += -m.q(x) * step + std::sqrt(step) * rng.normal();
    double now = std::min(k * dt, t_max);
    if (x <= lo || x >= hi) {
      path.absorbed = true;
      path.t_abs = now;
      path.t.push_back(now);
      path.x.push_back(x);
      break;
    }
    if (k % record_stride == 0 || k == n_steps) {
      path.t.push_back(now);
      path.x.push_back(x);
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// K-scaling of the logistic birth-death chain: exact Gillespie on the integer
// count i, returned as X = i/K.
//   ode regime:    i -> i+1 at rate lambda i;       i -> i-1 at mu i + (c/K) i(i-1)
//   feller regime: i -> i+1 at gamma K i + lambda i; i -> i-1 at gamma K i + mu i + (c/K) i(i-1)
// The first converges to the logistic ODE, the second to the logistic Feller
// diffusion with coefficient sqrt(2 gamma x).

enum class ScalingRegime { ode, feller };

inline DiffusionPath scaled_bd_path(ScalingRegime regime, double K, double lambda,
                                    double mu, double c, double gamma, double x0,
                                    double t_max, std::uint64_t seed,
                                    std::uint64_t stream = 0, long event_cap = 100000000) {
  if (!(K >= 1.0)) throw ConfigError("need K >= 1");
  Philox rng(seed, stream);
  DiffusionPath path;
  long i = static_cast<long>(std::llround(x0 * K));
  double t = 0.0;
  path.t.push_back(0.0);
  path.x.push_back(i / K);
  long events = 0;
  while (t < t_max && i > 0) {
    double side = regime == ScalingRegime::feller ? gamma * K * i : 0.0;
    double up = side + lambda * i;
    double down = side + mu * i + (c / K) * i * (i - 1.0);
    double total = up + down;
    t += rng.exponential(total);
    if (t >= t_max) break;
    if (rng.u01() * total < up)
      ++i;
    else
      --i;
    path.t.push_back(t);
    path.x.push_back(i / K);
    if (i == 0) {
      path.absorbed = true;
      path.t_abs = t;
    }
    if (++events >= event_cap)
      throw EventCapExceeded("scaled birth-death path hit the event cap");
  }
  return path;
}

}  // namespace qsd
