#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qsd/errors.hpp"
#include "qsd/rng.hpp"

namespace qsd {

// Offspring law of a Galton-Watson process.  Laws with analytic tails
// (geometric / linear-fractional) are realized by truncating once the
// remaining tail mass drops below 1e-15 and renormalizing.
struct OffspringDistribution {
  std::vector<double> p;  // pmf on {0, 1, ..., p.size()-1}

  double mean() const {
    double m = 0.0;
    for (std::size_t k = 1; k < p.size(); ++k) m += k * p[k];
    return m;
  }

  // generating function g(s) = sum p_k s^k, by Horner
  double g(double s) const {
    double v = 0.0;
    for (std::size_t k = p.size(); k-- > 0;) v = v * s + p[k];
    return v;
  }

  static OffspringDistribution from_pmf(std::vector<double> pmf) {
    if (pmf.size() < 2) throw ConfigError("offspring pmf needs support beyond {0}");
    double s = 0.0, p01 = pmf[0] + pmf[1];
    for (double v : pmf) {
      if (v < 0.0) throw ConfigError("negative offspring probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12)
      throw ConfigError("offspring pmf sums to " + std::to_string(s));
    if (!(pmf[0] > 0.0))
      throw ConfigError("p_0 must be positive (no extinction otherwise)");
    if (!(p01 < 1.0))
      throw ConfigError("p_0 + p_1 must be < 1 (degenerate law)");
    OffspringDistribution d;
    d.p = std::move(pmf);
    return d;
  }

  // p_0 given, geometric tail p_k = (1-p_0)(1-b) b^{k-1} for k >= 1.
  static OffspringDistribution linear_fractional(double p0, double b) {
    if (!(p0 > 0.0 && p0 < 1.0) || !(b > 0.0 && b < 1.0))
      throw ConfigError("linear-fractional parameters out of range");
    std::vector<double> pmf{p0};
    double tail = 1.0 - p0;
    double term = (1.0 - p0) * (1.0 - b);
    while (tail > 1e-15) {
      pmf.push_back(term);
      tail -= term;
      term *= b;
    }
    double s = 0.0;
    for (double v : pmf) s += v;
    for (double& v : pmf) v /= s;
    return from_pmf(std::move(pmf));
  }
};

enum class Criticality { subcritical, critical, supercritical };

struct GwClassification {
  Criticality type = Criticality::subcritical;
  double mean = 0.0;
  double extinction_prob = 1.0;  // smallest fixed point of g
};

inline GwClassification classify_gw(const OffspringDistribution& d) {
  GwClassification c;
  c.mean = d.mean();
  c.type = c.mean < 1.0 ? Criticality::subcritical
                        : (c.mean > 1.0 ? Criticality::supercritical
                                        : Criticality::critical);
  double s = 0.0;
  for (int it = 0; it < 1000000; ++it) {
    double sn = d.g(s);
    if (std::abs(sn - s) <= 1e-15) {
      s = sn;
      break;
    }
    s = sn;
  }
  c.extinction_prob = s;
  return c;
}

// ---------------------------------------------------------------------------
// Yaglom limit of a subcritical process.  The limit generating function
// satisfies ghat(g(s)) = m ghat(s) + 1 - m and is obtained as the limit of
//   ghat_n(s) = 1 - (1 - G_n(s)) / (1 - G_n(0)),
// where G_n is the generating function of generation n from the initial law.
// Everything is evaluated pointwise on an s-grid (no interpolation), so the
// functional-equation residual can be computed with one extra composition:
// g_n(g(s)) = g_{n+1}(s).
//
// The deficits 1 - G_n(s) decay like m^n, so they are carried directly as
// v_n(s) = 1 - g_n(s) and updated through
//   1 - F(1 - v) = sum_k F_k (1 - (1 - v)^k),  1 - (1-v)^k = -expm1(k log1p(-v)),
// which keeps full relative precision however small v gets.  (Evaluating
// 1 - G_n from G_n itself loses all significant bits once 1 - G_n nears
// machine epsilon, the successive-ghat difference then stalls above any
// tolerance below ~1e-8, and the loop would run until the survival
// probability underflows.)

struct GwYaglom {
  std::vector<double> s_grid;
  std::vector<double> ghat;
  std::vector<double> pmf;   // conditioned limit law on {1..cap}
  long iterations = 0;
  double residual = 0.0;     // sup_s |ghat(g(s)) - m ghat(s) - (1-m)|
};

namespace detail {

// 1 - F(1 - v) for the pgf F with weights w, stable for v down to denormals
inline double pgf_deficit(const std::vector<double>& w, double v) {
  if (v <= 0.0) return 0.0;
  if (v >= 1.0) {  // F(0) = w_0
    double acc = 0.0;
    for (std::size_t k = 1; k < w.size(); ++k) acc += w[k];
    return acc;
  }
  double L = std::log1p(-v), acc = 0.0;
  for (std::size_t k = 1; k < w.size(); ++k)
    if (w[k] != 0.0) acc += w[k] * -std::expm1(k * L);
  return acc;
}

// generation law q -> law of sum of q-many iid offspring, truncated at cap
inline std::vector<double> branch_once(const std::vector<double>& q,
                                       const std::vector<double>& off, std::size_t cap) {
  std::vector<double> out(cap + 1, 0.0);
  std::vector<double> conv{1.0};  // off^{*z}, starting at z = 0
  for (std::size_t z = 0; z < q.size(); ++z) {
    if (q[z] > 0.0)
      for (std::size_t j = 0; j < conv.size(); ++j) out[j] += q[z] * conv[j];
    // conv <- conv * off
    std::vector<double> next(std::min(conv.size() + off.size() - 1, cap + 1), 0.0);
    for (std::size_t a = 0; a < conv.size(); ++a) {
      if (conv[a] == 0.0) continue;
      for (std::size_t b = 0; b < off.size() && a + b < next.size(); ++b)
        next[a + b] += conv[a] * off[b];
    }
    conv = std::move(next);
  }
  return out;
}

}  // namespace detail

inline GwYaglom yaglom_gw(const OffspringDistribution& d,
                          std::vector<double> init = {0.0, 1.0},  // delta_1
                          int n_grid = 201, double tol = 1e-10,
                          std::size_t cap = 1000, long max_gens = 20000) {
  const double m = d.mean();
  if (!(m < 1.0)) throw NotSubcritical("Yaglom limit requires mean < 1, got m=" +
                                       std::to_string(m));
  if (init.size() < 2 || init[0] != 0.0)
    throw ConfigError("initial law must put no mass at 0");
  GwYaglom out;
  out.s_grid.resize(n_grid);
  for (int i = 0; i < n_grid; ++i)
    out.s_grid[i] = static_cast<double>(i) / (n_grid - 1);

  // ghat_n on the grid from the deficits v_n; entry 0 of v is s = 0, so
  // 1 - G_n(0) is the init-law deficit of v[0]
  auto ghat_of = [&](const std::vector<double>& v) {
    double D0 = detail::pgf_deficit(init, v[0]);
    std::vector<double> gh(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      gh[i] = 1.0 - detail::pgf_deficit(init, v[i]) / D0;
    return gh;
  };

  std::vector<double> v(out.s_grid);  // v_0(s) = 1 - s on the grid
  for (double& x : v) x = 1.0 - x;
  std::vector<double> prev;
  long n = 0;
  for (; n < max_gens; ++n) {
    std::vector<double> gh = ghat_of(v);
    if (!prev.empty()) {
      double diff = 0.0;
      for (std::size_t i = 0; i < gh.size(); ++i)
        diff = std::max(diff, std::abs(gh[i] - prev[i]));
      if (diff <= tol || detail::pgf_deficit(init, v[0]) < 1e-280) {
        out.ghat = std::move(gh);
        break;
      }
    }
    prev = std::move(gh);
    for (double& x : v) x = detail::pgf_deficit(d.p, x);  // v <- 1 - g(1 - v)
  }
  if (out.ghat.empty()) out.ghat = prev;
  out.iterations = n;

  // residual with the one-step-ahead deficits v_{n+1}(s) = 1 - g(g_n(s))
  {
    std::vector<double> vnext(v);
    for (double& x : vnext) x = detail::pgf_deficit(d.p, x);
    double D0 = detail::pgf_deficit(init, v[0]);
    double res = 0.0;
    for (std::size_t i = 0; i < out.s_grid.size(); ++i) {
      double ghat_gs = 1.0 - detail::pgf_deficit(init, vnext[i]) / D0;
      double ghat_s = 1.0 - detail::pgf_deficit(init, v[i]) / D0;
      res = std::max(res, std::abs(ghat_gs - m * ghat_s - (1.0 - m)));
    }
    out.residual = res;
  }

  // conditioned law by direct evolution of the truncated population vector
  std::vector<double> q(init);
  q.resize(cap + 1, 0.0);
  for (long it = 0; it < max_gens; ++it) {
    std::vector<double> qn = detail::branch_once(q, d.p, cap);
    qn[0] = 0.0;
    double s = 0.0;
    for (double v : qn) s += v;
    for (double& v : qn) v /= s;
    double diff = 0.0;
    for (std::size_t j = 0; j <= cap; ++j) diff += std::abs(qn[j] - q[j]);
    q = std::move(qn);
    if (diff <= 1e-12) break;
  }
  out.pmf.assign(q.begin() + 1, q.end());
  return out;
}

// One trajectory of generation sizes; stops at extinction, max_gens, or the
// overflow cap.  Path k of a batch should pass stream = k.
inline std::vector<long> simulate_gw(const OffspringDistribution& d, long z0,
                                     long max_gens, std::uint64_t seed,
                                     std::uint64_t stream = 0,
                                     long pop_cap = 10000000) {
  Philox rng(seed, stream);
  std::vector<double> cdf(d.p.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < d.p.size(); ++k) {
    acc += d.p[k];
    cdf[k] = acc;
  }
  std::vector<long> path{z0};
  long z = z0;
  for (long gen = 0; gen < max_gens && z > 0; ++gen) {
    if (z > pop_cap) throw ConfigError("population exceeded the overflow cap");
    long next = 0;
    for (long i = 0; i < z; ++i) {
      double u = rng.u01();
      std::size_t k = 0;
      while (k + 1 < cdf.size() && u >= cdf[k]) ++k;
      next += static_cast<long>(k);
    }
    z = next;
    path.push_back(z);
  }
  return path;
}

}  // namespace qsd
