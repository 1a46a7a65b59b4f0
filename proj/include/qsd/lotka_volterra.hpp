#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qsd/errors.hpp"
#include "qsd/rng.hpp"
#include "qsd/sub_generator.hpp"

namespace qsd {

// Stochastic Lotka-Volterra system of k competing types:
//   dZ^i = sqrt(gamma_i Z^i) dB^i + (r_i Z^i - sum_j c_ij Z^i Z^j) dt.
struct LvParams {
  std::vector<double> gamma;
  std::vector<double> r;
  Mat c;  // k x k, all entries positive

  int k() const { return static_cast<int>(gamma.size()); }

  void validate() const {
    if (gamma.empty() || r.size() != gamma.size() ||
        c.rows() != k() || c.cols() != k())
      throw ConfigError("Lotka-Volterra parameter sizes disagree");
    for (double g : gamma)
      if (!(g > 0.0)) throw ConfigError("gamma entries must be positive");
    for (double v : r)
      if (!(v > 0.0)) throw ConfigError("r entries must be positive");
    for (int i = 0; i < k(); ++i)
      for (int j = 0; j < k(); ++j)
        if (!(c(i, j) > 0.0)) throw ConfigError("c entries must be positive");
  }

  // three symmetric types with strong self-competition and r = (1.5, 1, 0.5)
  static LvParams three_type_example() {
    LvParams p;
    p.gamma = {1.0, 1.0, 1.0};
    p.r = {1.5, 1.0, 0.5};
    p.c = Mat::Constant(3, 3, 0.5);
    for (int i = 0; i < 3; ++i) p.c(i, i) = 10.0;
    return p;
  }
};

// The gradient-system condition c_ij gamma_j = c_ji gamma_i.
inline bool balance_holds(const LvParams& p, double rel_tol = 1e-12) {
  p.validate();
  for (int i = 0; i < p.k(); ++i)
    for (int j = 0; j < p.k(); ++j) {
      double a = p.c(i, j) * p.gamma[j], b = p.c(j, i) * p.gamma[i];
      if (std::abs(a - b) > rel_tol * std::max(std::abs(a), std::abs(b)))
        return false;
    }
  return true;
}

// Unit-diffusion coordinates X^i = 2 sqrt(Z^i / gamma_i) (so z = gamma x^2/4),
// in which dX^i = dB^i - 0_i V(X) dt under the balance condition, with
//   V(x) = 1/2 sum_i [ln x_i + c_ii gamma_i x_i^4/16 - r_i x_i^2/2]
//        + sum_{i != j} (c_ij gamma_j / 32) x_i^2 x_j^2.
inline double lv_potential(const LvParams& p, const std::vector<double>& x) {
  if (!balance_holds(p)) throw ConfigError("potential needs the balance condition");
  if (static_cast<int>(x.size()) != p.k()) throw ConfigError("dimension mismatch");
  double v = 0.0;
  for (int i = 0; i < p.k(); ++i) {
    double xi2 = x[i] * x[i];
    v += 0.5 * (std::log(x[i]) + p.c(i, i) * p.gamma[i] * xi2 * xi2 / 16.0 -
                p.r[i] * xi2 / 2.0);
    for (int j = 0; j < p.k(); ++j)
      if (j != i) v += p.c(i, j) * p.gamma[j] / 32.0 * xi2 * x[j] * x[j];
  }
  return v;
}

// Drift of X^i: r_i x_i/2 - sum_j c_ij gamma_j x_i x_j^2 / 8 - 1/(2 x_i);
// equals -grad V when the balance condition holds.
inline std::vector<double> lv_drift_x(const LvParams& p, const std::vector<double>& x) {
  std::vector<double> d(p.k());
  for (int i = 0; i < p.k(); ++i) {
    double cross = 0.0;
    for (int j = 0; j < p.k(); ++j) cross += p.c(i, j) * p.gamma[j] * x[j] * x[j];
    d[i] = 0.5 * p.r[i] * x[i] - x[i] * cross / 8.0 - 0.5 / x[i];
  }
  return d;
}

// One trajectory.  Death of type i = first time Z^i steps to <= 0; the
// coordinate is then frozen at 0 (simultaneous hits in one Euler step are all
// frozen).  t_partial is the first hit of the boundary, t_total the extinction
// of the whole population.
struct LvPath {
  std::vector<double> t;
  std::vector<std::vector<double>> z;  // one k-vector per recorded time
  std::vector<double> t_death;         // per type; +inf while alive

  double t_partial() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : t_death) m = std::min(m, v);
    return m;
  }
  double t_total() const {
    double m = 0.0;
    for (double v : t_death) m = std::max(m, v);
    return m;
  }
  bool all_dead() const {
    return t_total() < std::numeric_limits<double>::infinity();
  }
};

inline LvPath simulate_lv(const LvParams& p, std::vector<double> z0, double t_max,
                          std::uint64_t seed, double dt = 1e-3,
                          std::uint64_t stream = 0, long record_stride = 1) {
  p.validate();
  const int k = p.k();
  if (static_cast<int>(z0.size()) != k) throw ConfigError("z0 dimension mismatch");
  Philox rng(seed, stream);
  LvPath path;
  path.t_death.assign(k, std::numeric_limits<double>::infinity());
  path.t.push_back(0.0);
  path.z.push_back(z0);
  std::vector<double> z = std::move(z0), zn(k);
  long n_steps = static_cast<long>(std::ceil(t_max / dt));
  for (long step = 1; step <= n_steps; ++step) {
    double h = std::min(dt, t_max - (step - 1) * dt);
    double now = std::min(step * dt, t_max);
    bool any_alive = false;
    for (int i = 0; i < k; ++i) {
      if (z[i] <= 0.0) {
        zn[i] = 0.0;
        continue;
      }
      double cross = 0.0;
      for (int j = 0; j < k; ++j) cross += p.c(i, j) * z[j];
      zn[i] = z[i] + (p.r[i] - cross) * z[i] * h +
              std::sqrt(p.gamma[i] * std::max(z[i], 0.0) * h) * rng.normal();
      if (zn[i] <= 0.0) {
        zn[i] = 0.0;
        path.t_death[i] = now;
      } else {
        any_alive = true;
      }
    }
    z = zn;
    if (step % record_stride == 0 || step == n_steps || !any_alive) {
      path.t.push_back(now);
      path.z.push_back(z);
    }
    if (!any_alive) break;
  }
  return path;
}

// Survival-pattern frequencies among surviving paths at each grid time.
// Pattern bit i set <=> type i alive; names are bitstrings like "110".
struct ModeCurves {
  std::vector<double> t;
  std::vector<std::string> pattern;         // 2^k - 1 non-empty patterns
  std::vector<std::vector<long>> counts;    // [time][pattern]
  std::vector<std::vector<double>> freq;    // counts / survivors
  std::vector<long> survivors;              // paths with T_0 > t
  long n_paths = 0;
  bool low_sample = false;                  // some t had 0 < survivors < 100

  int coexistence_index() const { return static_cast<int>(pattern.size()) - 1; }
};

inline ModeCurves mode_probabilities(const LvParams& p, const std::vector<double>& z0,
                                     const std::vector<double>& t_grid, long n_paths,
                                     double dt, std::uint64_t seed) {
  p.validate();
  if (n_paths < 1000) throw ConfigError("mode probabilities need n_paths >= 1000");
  if (t_grid.empty()) throw ConfigError("empty time grid");
  const int k = p.k();
  if (k > 16) throw ConfigError("too many types for pattern bookkeeping");
  const int n_patterns = (1 << k) - 1;
  const double t_max = t_grid.back();

  // per-path death times; recording suppressed (stride past the step count)
  std::vector<std::vector<double>> deaths(n_paths);
  for (long path = 0; path < n_paths; ++path) {
    LvPath lp = simulate_lv(p, z0, t_max, seed, dt, static_cast<std::uint64_t>(path),
                            std::numeric_limits<long>::max());
    deaths[path] = std::move(lp.t_death);
  }

  ModeCurves out;
  out.t = t_grid;
  out.n_paths = n_paths;
  for (int mask = 1; mask <= n_patterns; ++mask) {
    std::string name(k, '0');
    for (int i = 0; i < k; ++i)
      if (mask & (1 << i)) name[i] = '1';
    out.pattern.push_back(std::move(name));
  }
  for (double t : t_grid) {
    std::vector<long> cnt(n_patterns, 0);
    long alive_paths = 0;
    for (const auto& d : deaths) {
      int mask = 0;
      for (int i = 0; i < k; ++i)
        if (d[i] > t) mask |= 1 << i;
      if (mask != 0) {
        ++alive_paths;
        ++cnt[mask - 1];
      }
    }
    out.survivors.push_back(alive_paths);
    if (alive_paths > 0 && alive_paths < 100) out.low_sample = true;
    std::vector<double> f(n_patterns, 0.0);
    if (alive_paths > 0)
      for (int j = 0; j < n_patterns; ++j)
        f[j] = static_cast<double>(cnt[j]) / static_cast<double>(alive_paths);
    out.counts.push_back(std::move(cnt));
    out.freq.push_back(std::move(f));
  }
  return out;
}

}  // namespace qsd
