#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qsd/rng.hpp"
#include "qsd/spectral.hpp"
#include "qsd/sub_generator.hpp"

namespace qsd {

// Birth-death rates on {1, 2, ...} with absorption at 0 through mu_1.
// The analytic kind is kept alongside the callables because several
// classification series admit closed-form verdicts for the linear and
// logistic families that no finite numerical window can prove.
struct BirthDeathRates {
  enum class Kind { linear, logistic, table, custom };

  Kind kind = Kind::custom;
  double lam = 0.0, mu0 = 0.0, comp = 0.0;  // analytic parameters
  std::vector<std::pair<double, double>> table;  // (lambda_i, mu_i), i = 1..n
  std::function<double(long)> lambda_fn, mu_fn;

  double lambda(long i) const {
    switch (kind) {
      case Kind::linear: return lam * i;
      case Kind::logistic: return lam * i;
      case Kind::table: check_index(i); return table[i - 1].first;
      default: return lambda_fn(i);
    }
  }
  double mu(long i) const {
    switch (kind) {
      case Kind::linear: return mu0 * i;
      case Kind::logistic: return mu0 * i + comp * i * (i - 1.0);
      case Kind::table: check_index(i); return table[i - 1].second;
      default: return mu_fn(i);
    }
  }
  long max_index() const {
    return kind == Kind::table ? static_cast<long>(table.size())
                               : std::numeric_limits<long>::max();
  }

  static BirthDeathRates linear(double lam, double mu) {
    require_positive(lam, "lambda");
    require_positive(mu, "mu");
    BirthDeathRates r;
    r.kind = Kind::linear;
    r.lam = lam;
    r.mu0 = mu;
    return r;
  }
  static BirthDeathRates logistic(double lam, double mu, double c) {
    require_positive(lam, "lambda");
    require_positive(mu, "mu");
    require_positive(c, "c");
    BirthDeathRates r;
    r.kind = Kind::logistic;
    r.lam = lam;
    r.mu0 = mu;
    r.comp = c;
    return r;
  }
  static BirthDeathRates from_table(std::vector<std::pair<double, double>> t) {
    if (t.empty()) throw ConfigError("empty birth-death rate table");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!(t[i].first > 0.0) || !(t[i].second > 0.0))
        throw ConfigError("non-positive rate at table index " + std::to_string(i + 1));
    }
    BirthDeathRates r;
    r.kind = Kind::table;
    r.table = std::move(t);
    return r;
  }
  static BirthDeathRates custom(std::function<double(long)> lam_fn,
                                std::function<double(long)> mu_fn) {
    BirthDeathRates r;
    r.kind = Kind::custom;
    r.lambda_fn = std::move(lam_fn);
    r.mu_fn = std::move(mu_fn);
    return r;
  }

 private:
  static void require_positive(double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  }
  void check_index(long i) const {
    if (i < 1 || i > static_cast<long>(table.size()))
      throw ConfigError("rate requested outside the table range: i=" + std::to_string(i));
  }
};

// log pi_n for n = 1..n_max with pi_1 = 1,
// pi_n = (lambda_1 ... lambda_{n-1}) / (mu_2 ... mu_n).
inline std::vector<double> log_pi_coefficients(const BirthDeathRates& r, long n_max) {
  std::vector<double> lp(n_max);
  lp[0] = 0.0;
  for (long n = 2; n <= n_max; ++n)
    lp[n - 1] = lp[n - 2] + std::log(r.lambda(n - 1)) - std::log(r.mu(n));
  return lp;
}

// ---------------------------------------------------------------------------
// Orthogonal-polynomial sequence of the rate matrix:
//   H_1 = 1,  lambda_1 H_2 = lambda_1 + mu_1 - x,
//   lambda_n H_{n+1} = (lambda_n + mu_n - x) H_n - mu_n H_{n-1}.
// (Substituting alpha_j = alpha_1 pi_j H_j(x) into the left-eigenvector
// equations forces the mu_n coefficient: the zeros of H_{n+1} are then the
// eigenvalues of the order-n truncation, e.g. for n = 2 the zeros satisfy
// (lambda_1 + mu_1 - x)(lambda_2 + mu_2 - x) = lambda_1 mu_2.)
// The values swing over thousands of orders of magnitude, so each entry is
// carried as mantissa * 2^exponent with periodic renormalization.

struct HPolynomialTable {
  double x = 0.0;
  std::vector<double> mant;  // signed mantissas
  std::vector<long> expo;    // base-2 exponents

  int sign(long i) const { return mant[i] > 0.0 ? 1 : (mant[i] < 0.0 ? -1 : 0); }
  double log2_abs(long i) const {
    return mant[i] == 0.0 ? -std::numeric_limits<double>::infinity()
                          : std::log2(std::abs(mant[i])) + expo[i];
  }
  double log_abs(long i) const { return log2_abs(i) * 0.6931471805599453; }
  // Value as double; overflows to +/-inf when out of range.
  double value(long i) const { return std::ldexp(mant[i], static_cast<int>(expo[i])); }
};

inline HPolynomialTable h_polynomials(const BirthDeathRates& r, double x, long n) {
  HPolynomialTable t;
  t.x = x;
  t.mant.reserve(n);
  t.expo.reserve(n);
  // carriers for H_{k-1}, H_k on a shared exponent
  double a = 0.0;              // H_0 := 0 (so the k=1 step needs no special case)
  double b = 1.0;              // H_1
  long e = 0;
  t.mant.push_back(b);
  t.expo.push_back(e);
  for (long k = 1; k < n; ++k) {
    double lk = r.lambda(k), mk = r.mu(k);
    double next = ((lk + mk - x) * b - mk * a) / lk;
    a = b;
    b = next;
    // renormalize the shared exponent before the carriers leave double range
    double m = std::max(std::abs(a), std::abs(b));
    if (m > 0x1p+512 || (m > 0.0 && m < 0x1p-512)) {
      int sh;
      std::frexp(m, &sh);
      a = std::ldexp(a, -sh);
      b = std::ldexp(b, -sh);
      e += sh;
    }
    t.mant.push_back(b);
    t.expo.push_back(e);
  }
  return t;
}

// Positivity with a floating-point guard: entries below 1e-14 of the running
// maximum are treated as sign-ambiguous (not provably positive).
inline bool h_all_positive(const HPolynomialTable& t) {
  constexpr double kMarginLog2 = -46.507;  // log2(1e-14)
  double run_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.mant.size(); ++i) {
    double l2 = t.log2_abs(static_cast<long>(i));
    if (t.sign(static_cast<long>(i)) <= 0) return false;
    if (l2 <= run_max + kMarginLog2) return false;
    run_max = std::max(run_max, l2);
  }
  return true;
}

// ---------------------------------------------------------------------------
// xi_1 = sup{ x : H_n(x) > 0 for all n }, bracketed by bisection on the
// positivity predicate.  Positivity of H_1..H_n is only a necessary condition
// for x <= xi_1, so the finite-n threshold is an upper envelope that decreases
// toward xi_1 as n grows; the estimate compares thresholds across truncation
// levels and extrapolates when they are still sliding (the xi_1 = 0 chains
// collapse like C/n and would otherwise read as spuriously positive).

struct Xi1Estimate {
  double lo = 0.0;
  double hi = 0.0;
  bool resolved = true;     // false if the predicate looked non-monotone or
                            // the truncation sequence had not settled
  bool limit_zero = false;  // thresholds extrapolate to 0: no positive xi_1
  long n_used = 0;

  double mid() const { return 0.5 * (lo + hi); }
};

namespace detail {

// Bisection of the positivity predicate at one fixed truncation level.
inline Xi1Estimate xi1_threshold(const BirthDeathRates& r, long n_max, double x_tol) {
  auto positive = [&](double x) { return h_all_positive(h_polynomials(r, x, n_max)); };
  Xi1Estimate est;
  est.n_used = n_max;
  if (!positive(x_tol)) {
    est.lo = 0.0;
    est.hi = x_tol;
    est.limit_zero = true;
    return est;
  }
  double hi = 1.0;
  while (positive(hi)) {
    hi *= 2.0;
    if (hi > 0x1p100) {
      est.resolved = false;  // no sign change found: predicate unusable
      est.lo = 0.0;
      est.hi = hi;
      return est;
    }
  }
  double lo = hi * 0.5 >= x_tol && positive(hi * 0.5) ? hi * 0.5 : 0.0;
  if (lo == 0.0) lo = x_tol;  // positive(x_tol) held above
  const double hi0 = hi;
  while (hi - lo > x_tol) {
    double m = 0.5 * (lo + hi);
    (positive(m) ? lo : hi) = m;
  }
  est.lo = lo;
  est.hi = hi;
  // audit: the predicate must look like T...TF...F on a coarse scan
  bool seen_false = false;
  for (int k = 1; k <= 32; ++k) {
    double x = hi0 * k / 32.0;
    bool p = positive(x);
    if (p && seen_false) {
      est.resolved = false;
      break;
    }
    if (!p) seen_false = true;
  }
  return est;
}

}  // namespace detail

inline Xi1Estimate xi1_estimate(const BirthDeathRates& r, long n_max = 2000,
                                double x_tol = 1e-8) {
  if (r.kind == BirthDeathRates::Kind::table)
    n_max = std::min(n_max, r.max_index());
  Xi1Estimate full = detail::xi1_threshold(r, n_max, x_tol);
  if (!full.resolved || full.limit_zero || n_max < 64) return full;
  // settle check across truncation levels n/4, n/2, n
  double t3 = full.lo;
  double t2 = detail::xi1_threshold(r, n_max / 2, x_tol).lo;
  if (std::abs(t3 - t2) <= std::max(4.0 * x_tol, 1e-9 * std::abs(t3))) return full;
  double t1 = detail::xi1_threshold(r, n_max / 4, x_tol).lo;
  double d1 = t2 - t1, d2 = t3 - t2;
  // still sliding: Aitken-extrapolate the geometric part of the decay
  if (d1 < 0.0 && d2 < 0.0 && d2 / d1 < 0.95) {
    double aitken = t3 - d2 * d2 / (d2 - d1);
    if (aitken <= 0.05 * t3) {
      full.lo = 0.0;
      full.limit_zero = true;  // hi stays: a certified upper bound
      return full;
    }
    full.lo = std::max(0.0, aitken - std::abs(t3 - aitken));
    full.resolved = false;  // positive limit suspected but not settled
    return full;
  }
  full.lo = 0.0;
  full.resolved = false;  // decay shape unclassified
  return full;
}

// ---------------------------------------------------------------------------
// Series verdicts.  A holds/fails answer is only issued when the observed
// tail admits a monotone bound (clean geometric ratio, non-decaying terms, or
// a stable Raabe exponent away from the p = 1 boundary); everything else is
// reported as inconclusive.

enum class SeriesVerdict { convergent, divergent, inconclusive };
enum class Verdict { holds, fails, inconclusive };

namespace detail {

inline SeriesVerdict tail_verdict(const std::vector<double>& log_terms) {
  const std::size_t n = log_terms.size();
  if (n < 64) return SeriesVerdict::inconclusive;
  const std::size_t w0 = n / 2;
  // log-ratios d_k = log t_{k+1} - log t_k over the tail window
  bool all_growing = true, all_geometric = true;
  double max_d = -std::numeric_limits<double>::infinity();
  std::vector<double> raabe;
  for (std::size_t k = w0; k + 1 < n; ++k) {
    double d = log_terms[k + 1] - log_terms[k];
    max_d = std::max(max_d, d);
    if (d < -1e-4) all_growing = false;
    if (d > std::log(0.995)) all_geometric = false;
    raabe.push_back(-d * static_cast<double>(k + 1));
  }
  if (all_growing) return SeriesVerdict::divergent;   // terms do not decay
  if (all_geometric) return SeriesVerdict::convergent;
  // power-law window: t_k ~ k^{-p} gives d_k ~ -p/k
  double mean = 0.0;
  for (double v : raabe) mean += v;
  mean /= static_cast<double>(raabe.size());
  double spread = 0.0;
  for (double v : raabe) spread = std::max(spread, std::abs(v - mean));
  if (spread < 0.2) {
    if (mean > 1.2) return SeriesVerdict::convergent;
    if (mean < 0.8 && max_d < 0.0) return SeriesVerdict::divergent;
  }
  return SeriesVerdict::inconclusive;
}

inline double log_add(double la, double lb) {
  if (la == -std::numeric_limits<double>::infinity()) return lb;
  if (lb == -std::numeric_limits<double>::infinity()) return la;
  double m = std::max(la, lb);
  return m + std::log(std::exp(la - m) + std::exp(lb - m));
}

}  // namespace detail

// Non-explosion: sum_n r_n = +inf with r_n = (1 + mu_n r_{n-1}) / lambda_n
// (the telescoped form of 1/lambda_n + nested rate products).  Terms are
// tracked in logs since they can grow or decay geometrically.
struct NonExplosionResult {
  Verdict verdict = Verdict::inconclusive;
  double log_partial_sum = 0.0;
  long terms = 0;
};

inline NonExplosionResult nonexplosion_check(const BirthDeathRates& r,
                                             long n_max = 4000) {
  NonExplosionResult out;
  if (r.kind == BirthDeathRates::Kind::linear ||
      r.kind == BirthDeathRates::Kind::logistic) {
    // lambda_n = lambda n, so r_n >= 1/(lambda n): harmonic comparison.
    out.verdict = Verdict::holds;
  }
  if (r.kind == BirthDeathRates::Kind::table)
    n_max = std::min(n_max, r.max_index());
  std::vector<double> log_r(n_max);
  double prev = -std::numeric_limits<double>::infinity();  // log r_0 (r_0 = 0)
  for (long n = 1; n <= n_max; ++n) {
    double t = detail::log_add(0.0, std::log(r.mu(n)) + prev);  // log(1 + mu_n r_{n-1})
    prev = t - std::log(r.lambda(n));
    log_r[n - 1] = prev;
  }
  double lps = -std::numeric_limits<double>::infinity();
  for (double v : log_r) lps = detail::log_add(lps, v);
  out.log_partial_sum = lps;
  out.terms = n_max;
  if (out.verdict == Verdict::inconclusive) {
    switch (detail::tail_verdict(log_r)) {
      case SeriesVerdict::divergent: out.verdict = Verdict::holds; break;
      case SeriesVerdict::convergent: out.verdict = Verdict::fails; break;
      default: break;
    }
  }
  return out;
}

// Almost-sure extinction: sum_k (mu_1...mu_k)/(lambda_1...lambda_k) = +inf.
// When the series converges, the hitting-probability formula
// P_i(reach 0) = (1+U)^{-1} sum_{k>=i} t_k (tail completed geometrically)
// gives the extinction probability from each starting state.
struct ExtinctionResult {
  Verdict verdict = Verdict::inconclusive;
  double log_partial_sum = -std::numeric_limits<double>::infinity();
  std::vector<double> extinct_prob;  // P_i(extinction), i = 1..20, when verdict == fails
  long terms = 0;
};

inline ExtinctionResult extinction_check(const BirthDeathRates& r,
                                         long n_max = 4000) {
  ExtinctionResult out;
  if (r.kind == BirthDeathRates::Kind::logistic) out.verdict = Verdict::holds;
  if (r.kind == BirthDeathRates::Kind::linear)
    out.verdict = r.lam <= r.mu0 ? Verdict::holds : Verdict::fails;
  if (r.kind == BirthDeathRates::Kind::table)
    n_max = std::min(n_max, r.max_index());
  std::vector<double> log_t(n_max);
  double acc = 0.0;
  for (long k = 1; k <= n_max; ++k) {
    acc += std::log(r.mu(k)) - std::log(r.lambda(k));
    log_t[k - 1] = acc;
  }
  double lps = -std::numeric_limits<double>::infinity();
  for (double v : log_t) lps = detail::log_add(lps, v);
  out.log_partial_sum = lps;
  out.terms = n_max;
  if (out.verdict == Verdict::inconclusive) {
    switch (detail::tail_verdict(log_t)) {
      case SeriesVerdict::divergent: out.verdict = Verdict::holds; break;
      case SeriesVerdict::convergent: out.verdict = Verdict::fails; break;
      default: break;
    }
  }
  if (out.verdict == Verdict::fails) {
    // geometric tail completion from the last observed ratio
    double ratio = std::exp(log_t[n_max - 1] - log_t[n_max - 2]);
    double tail = ratio < 1.0 ? std::exp(log_t[n_max - 1]) * ratio / (1.0 - ratio) : 0.0;
    double U = std::exp(lps) + tail;
    out.extinct_prob.resize(20);
    for (int i = 1; i <= 20; ++i) {
      double s = 0.0;
      for (long k = i; k <= n_max; ++k) s += std::exp(log_t[k - 1]);
      out.extinct_prob[i - 1] = (s + tail) / (1.0 + U);
    }
  }
  return out;
}

// The series controlling uniqueness of the QSD:
//   S = sum_n pi_n (1/mu_1 + sum_{i<n} 1/(lambda_i pi_i)),
// computed entirely in log space.  Closed-form verdicts for the analytic
// families (divergent for subcritical linear, convergent for logistic —
// the competition term makes pi_n decay like a squared factorial).
struct SeriesSResult {
  SeriesVerdict verdict = SeriesVerdict::inconclusive;
  double log_partial_sum = -std::numeric_limits<double>::infinity();
  long terms = 0;
};

inline SeriesSResult series_S_check(const BirthDeathRates& r, long n_max = 4000) {
  SeriesSResult out;
  if (r.kind == BirthDeathRates::Kind::table)
    n_max = std::min(n_max, r.max_index());
  std::vector<double> lp = log_pi_coefficients(r, n_max);
  std::vector<double> log_t(n_max);
  double log_inner = -std::log(r.mu(1));  // 1/mu_1
  for (long n = 1; n <= n_max; ++n) {
    if (n >= 2)
      log_inner = detail::log_add(
          log_inner, -(std::log(r.lambda(n - 1)) + lp[n - 2]));
    log_t[n - 1] = lp[n - 1] + log_inner;
  }
  double lps = -std::numeric_limits<double>::infinity();
  for (double v : log_t) lps = detail::log_add(lps, v);
  out.log_partial_sum = lps;
  out.terms = n_max;
  if (r.kind == BirthDeathRates::Kind::logistic) {
    out.verdict = SeriesVerdict::convergent;
  } else if (r.kind == BirthDeathRates::Kind::linear && r.lam < r.mu0) {
    out.verdict = SeriesVerdict::divergent;  // terms ~ C/n
  } else {
    out.verdict = detail::tail_verdict(log_t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classification into the QSD trichotomy (under a.s. extinction):
// xi_1 = 0 -> no QSD; S < inf -> the Yaglom limit is the unique QSD;
// S = inf and xi_1 > 0 -> a continuum of QSDs indexed by (0, xi_1].

enum class QsdRegime { none, unique_yaglom, continuum, undecided };

struct BdClassification {
  Verdict nonexplosion = Verdict::inconclusive;
  Verdict extinction_as = Verdict::inconclusive;
  Xi1Estimate xi1;
  SeriesVerdict series_s = SeriesVerdict::inconclusive;
  QsdRegime regime = QsdRegime::undecided;
};

inline BdClassification classify_qsd(const BirthDeathRates& r, long n_max = 2000,
                                     double x_tol = 1e-8) {
  BdClassification c;
  c.nonexplosion = nonexplosion_check(r, 2 * n_max).verdict;
  c.extinction_as = extinction_check(r, 2 * n_max).verdict;
  c.xi1 = xi1_estimate(r, n_max, x_tol);
  c.series_s = series_S_check(r, 2 * n_max).verdict;
  if (c.extinction_as == Verdict::fails) {
    c.regime = QsdRegime::none;  // trichotomy needs almost-sure extinction
  } else if (c.xi1.limit_zero) {
    c.regime = QsdRegime::none;  // xi_1 = 0: no QSD at all
  } else if (c.extinction_as == Verdict::inconclusive || !c.xi1.resolved) {
    c.regime = QsdRegime::undecided;
  } else if (c.series_s == SeriesVerdict::convergent) {
    c.regime = QsdRegime::unique_yaglom;
  } else if (c.series_s == SeriesVerdict::divergent && c.xi1.lo > 4.0 * x_tol) {
    c.regime = QsdRegime::continuum;
  }
  return c;
}

inline const char* to_string(QsdRegime r) {
  switch (r) {
    case QsdRegime::none: return "none";
    case QsdRegime::unique_yaglom: return "unique_yaglom";
    case QsdRegime::continuum: return "continuum";
    default: return "undecided";
  }
}
inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    default: return "inconclusive";
  }
}
inline const char* to_string(SeriesVerdict v) {
  switch (v) {
    case SeriesVerdict::convergent: return "convergent";
    case SeriesVerdict::divergent: return "divergent";
    default: return "inconclusive";
  }
}

// ---------------------------------------------------------------------------
// One-parameter QSD family: alpha_j(x) = (1/mu_1) pi_j x H_j(x), a genuine
// distribution on {1,2,...} for 0 < x <= xi_1, with extinction rate x.

struct QsdFamilyPoint {
  double x = 0.0;  // = extinction rate theta of this family member
  Vec alpha;       // masses on 1..n_max (unnormalized; sums to `mass`)
  double mass = 0.0;
};

inline QsdFamilyPoint qsd_family_point(const BirthDeathRates& r, double x,
                                       long n_max = 2000, double tail_tol = 1e-6) {
  if (!(x > 0.0)) throw ConfigError("family parameter x must be positive");
  Xi1Estimate xi = xi1_estimate(r, n_max);
  if (x > xi.hi)
    throw ConfigError("x=" + std::to_string(x) + " exceeds xi_1 bracket [" +
                      std::to_string(xi.lo) + ", " + std::to_string(xi.hi) + "]");
  HPolynomialTable h = h_polynomials(r, x, n_max);
  std::vector<double> lp = log_pi_coefficients(r, n_max);
  QsdFamilyPoint out;
  out.x = x;
  out.alpha = Vec(n_max);
  double lmu1 = std::log(r.mu(1)), lx = std::log(x);
  for (long j = 1; j <= n_max; ++j) {
    if (h.sign(j - 1) <= 0) throw ConfigError("H_j(x) not positive at j=" + std::to_string(j));
    out.alpha(j - 1) = std::exp(lp[j - 1] + lx + h.log_abs(j - 1) - lmu1);
  }
  out.mass = out.alpha.sum();
  if (out.mass < 1.0 - tail_tol || out.mass > 1.0 + 1e-9)
    throw ConfigError("family point mass " + std::to_string(out.mass) +
                      " outside [1-tail_tol, 1]; increase n_max");
  return out;
}

// ---------------------------------------------------------------------------
// Reflecting-by-censoring truncation to {1..N} (birth at N suppressed),
// solved through the finite spectral machinery, with a doubling sensitivity
// check on the truncation level.

inline SubGenerator bd_truncated_generator(const BirthDeathRates& r, long N) {
  if (N < 2) throw ConfigError("truncation level must be at least 2");
  if (N > r.max_index()) throw ConfigError("truncation exceeds rate table");
  Mat Q = Mat::Zero(N, N);
  for (long k = 1; k <= N; ++k) {
    long i = k - 1;
    double lk = k < N ? r.lambda(k) : 0.0;
    double mk = r.mu(k);
    if (k < N) Q(i, i + 1) = lk;
    if (k > 1) Q(i, i - 1) = mk;
    Q(i, i) = -(lk + mk);
  }
  return make_sub_generator(std::move(Q));
}

struct TruncatedQsd {
  QsdResult base;
  long n_trunc = 0;
  double sensitivity_tv = 0.0;  // TV between levels N and 2N
  bool sensitivity_warning = false;
};

inline TruncatedQsd truncated_qsd(const BirthDeathRates& r, long N,
                                  double warn_tol = 1e-3) {
  TruncatedQsd out;
  out.n_trunc = N;
  out.base = solve_qsd_spectral(bd_truncated_generator(r, N));
  long N2 = std::min(2 * N, r.max_index());
  if (N2 > N) {
    QsdResult fine = solve_qsd_spectral(bd_truncated_generator(r, N2));
    double tv = 0.0;
    for (long i = 0; i < N2; ++i) {
      double a = i < N ? out.base.alpha(i) : 0.0;
      tv += std::abs(a - fine.alpha(i));
    }
    out.sensitivity_tv = 0.5 * tv;
    out.sensitivity_warning = out.sensitivity_tv > warn_tol;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact event-driven path of the birth-death chain (absorption at 0).

struct BdPath {
  std::vector<double> times;   // event times, starting at 0
  std::vector<long> states;    // state after each event
  bool absorbed = false;
  double t_abs = std::numeric_limits<double>::infinity();
};

inline BdPath simulate_bd_path(const BirthDeathRates& r, long z0, double t_max,
                               std::uint64_t seed, long max_events = 100000000) {
  if (z0 < 0) throw ConfigError("initial state must be >= 0");
  Philox rng(seed, 0);
  BdPath p;
  double t = 0.0;
  long z = z0;
  p.times.push_back(0.0);
  p.states.push_back(z);
  if (z == 0) {  // already absorbed: the constant-0 path
    p.absorbed = true;
    p.t_abs = 0.0;
    return p;
  }
  for (long ev = 0; ev < max_events; ++ev) {
    double lk = z < r.max_index() ? r.lambda(z) : 0.0;
    double mk = r.mu(z);
    double total = lk + mk;
    t += rng.exponential(total);
    if (t > t_max) break;
    z += rng.u01() * total < lk ? 1 : -1;
    p.times.push_back(t);
    p.states.push_back(z);
    if (z == 0) {
      p.absorbed = true;
      p.t_abs = t;
      break;
    }
  }
  return p;
}

}  // namespace qsd
