#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "qsd/birth_death.hpp"
#include "qsd/diffusion.hpp"
#include "qsd/errors.hpp"
#include "qsd/histogram.hpp"
#include "qsd/lotka_volterra.hpp"
#include "qsd/rng.hpp"
#include "qsd/sub_generator.hpp"

namespace qsd {

// ---------------------------------------------------------------------------
// Killed dynamics a Fleming-Viot ensemble can follow.  Chain kinds evolve by
// exact event-driven simulation; diffusion kinds by synchronized Euler steps
// with the domain truncated to [eps, 1/eps] (Wright-Fisher: [eps, 1]).

struct FiniteChainDynamics {
  SubGenerator gen;  // states are row indices 0..dim-1
};

struct BdChainDynamics {
  BirthDeathRates rates;  // states are populations 1, 2, ...; killed at 1 -> 0
};

struct DiffusionDynamics {
  enum class Kind { feller_z, wright_fisher, kolmogorov_x };
  Kind kind = Kind::kolmogorov_x;
  FellerParams feller{};    // feller_z only
  KolmogorovModel model{};  // kolmogorov_x only
  double eps = 1e-3;        // kill barrier(s): eps and 1/eps
  double dt = 1e-3;
};

using KilledDynamics = std::variant<FiniteChainDynamics, BdChainDynamics, DiffusionDynamics>;

// Normalized empirical measure of the ensemble: state weights for chains,
// equally-weighted sample positions for diffusions.
struct EmpiricalMeasure {
  bool continuous = false;
  std::map<long, double> weights;
  std::vector<double> samples;

  double mass() const {
    if (continuous) return samples.empty() ? 0.0 : 1.0;
    double s = 0.0;
    for (auto& [k, w] : weights) s += w;
    return s;
  }
  Histogram hist(int n_bins = 100, double lo = 0.0, double hi = 0.0) const {
    if (!continuous) throw ConfigError("histogram of a discrete measure");
    return make_histogram(samples, n_bins, lo, hi);
  }
};

// discrete law of a vector indexed by states offset, offset+1, ...
inline std::map<long, double> pmf_from_vec(const Vec& v, long offset = 0) {
  std::map<long, double> m;
  for (long i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) m[i + offset] = v[i];
  return m;
}

struct FvResult {
  std::vector<double> t;
  std::vector<EmpiricalMeasure> measures;
  long jump_count = 0;   // number of revivals (the tau_n counter)
  long n_particles = 0;
  double wall_seconds = 0.0;
};

namespace detail {

// Fenwick tree over per-particle exit rates: O(log N) update and inverse-CDF
// selection of the particle producing the next event.
class RateTree {
 public:
  explicit RateTree(int n) : n_(n), tree_(n + 1, 0.0), val_(n, 0.0) {}

  void set(int i, double v) {
    double d = v - val_[i];
    val_[i] = v;
    for (int j = i + 1; j <= n_; j += j & -j) tree_[j] += d;
  }
  double value(int i) const { return val_[i]; }
  double total() const {
    double s = 0.0;
    for (int j = n_; j > 0; j -= j & -j) s += tree_[j];
    return s;
  }
  // index whose cumulative-rate interval contains u in [0, total)
  int find(double u) const {
    int pos = 0;
    int mask = 1;
    while (2 * mask <= n_) mask *= 2;
    for (; mask > 0; mask /= 2) {
      int next = pos + mask;
      if (next <= n_ && tree_[next] < u) {
        pos = next;
        u -= tree_[next];
      }
    }
    return std::min(pos, n_ - 1);
  }

 private:
  int n_;
  std::vector<double> tree_;
  std::vector<double> val_;
};

struct ChainMove {
  bool killed = false;
  long next = 0;
};

inline void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("empty record grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0) throw ConfigError("record grid must be nonnegative");
    if (i > 0 && grid[i] < grid[i - 1]) throw ConfigError("record grid must be sorted");
  }
}

// Event-driven engine shared by the chain kinds.  The ensemble is one big
// CTMC with total rate sum_i exit(s_i); events are drawn from a single RNG
// stream (stream 0 of the seed), so runs are deterministic per seed.  An
// absorbed particle is restarted at the position of one of the other N-1
// particles chosen uniformly.
template <class ExitFn, class MoveFn>
FvResult chain_fv(long N, long init, const std::vector<double>& grid,
                  std::uint64_t seed, ExitFn&& exit_rate, MoveFn&& move,
                  long event_cap) {
  if (N < 2) throw ConfigError("Fleming-Viot needs N >= 2");
  check_grid(grid);
  auto t_start = std::chrono::steady_clock::now();

  std::vector<long> s(N, init);
  RateTree tree(static_cast<int>(N));
  {
    double e0 = exit_rate(init);
    for (long i = 0; i < N; ++i) tree.set(static_cast<int>(i), e0);
  }
  Philox rng(seed, 0);
  FvResult out;
  out.n_particles = N;

  auto record = [&](double tg) {
    EmpiricalMeasure m;
    const double w = 1.0 / static_cast<double>(N);
    for (long i = 0; i < N; ++i) m.weights[s[i]] += w;
    out.t.push_back(tg);
    out.measures.push_back(std::move(m));
  };

  double t = 0.0;
  std::size_t gi = 0;
  long events = 0;
  while (gi < grid.size()) {
    double total = tree.total();
    double t_next = total > 0.0 ? t + rng.exponential(total)
                                : std::numeric_limits<double>::infinity();
    while (gi < grid.size() && grid[gi] <= t_next) {
      record(grid[gi]);
      ++gi;
    }
    if (gi >= grid.size()) break;
    t = t_next;
    int i = tree.find(rng.u01() * total);
    ChainMove mv = move(s[i], rng);
    if (mv.killed) {
      long m = rng.uniform_index(static_cast<std::uint64_t>(N - 1));
      if (m >= i) ++m;
      s[i] = s[m];  // revival: position of a currently-alive particle
      ++out.jump_count;
    } else {
      s[i] = mv.next;
    }
    tree.set(i, exit_rate(s[i]));
    if (++events > event_cap)
      throw EventCapExceeded("Fleming-Viot chain run exceeded " +
                             std::to_string(event_cap) + " events");
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

}  // namespace detail

// --- finite chain ----------------------------------------------------------

inline FvResult fv_run(const FiniteChainDynamics& dyn, long N, long init,
                       const std::vector<double>& grid, std::uint64_t seed,
                       long event_cap = 2000000000L) {
  const Mat& Q = dyn.gen.Q;
  const int n = dyn.gen.dim();
  if (init < 0 || init >= n) throw ConfigError("initial state out of range");

  // per-state transition tables: targets, rates, exit and kill rates
  struct Row {
    std::vector<int> to;
    std::vector<double> rate;
    double exit = 0.0;
  };
  std::vector<Row> rows(n);
  for (int i = 0; i < n; ++i) {
    rows[i].exit = -Q(i, i);
    for (int j = 0; j < n; ++j)
      if (j != i && Q(i, j) > 0.0) {
        rows[i].to.push_back(j);
        rows[i].rate.push_back(Q(i, j));
      }
  }
  auto exit_rate = [&](long st) { return rows[st].exit; };
  auto move = [&](long st, Philox& rng) -> detail::ChainMove {
    const Row& r = rows[st];
    double u = rng.u01() * r.exit;
    double acc = 0.0;
    for (std::size_t k = 0; k < r.to.size(); ++k) {
      acc += r.rate[k];
      if (u < acc) return {false, r.to[k]};
    }
    return {true, 0};  // remaining rate mass is the kill rate
  };
  return detail::chain_fv(N, init, grid, seed, exit_rate, move, event_cap);
}

// --- birth-death chain ------------------------------------------------------

inline FvResult fv_run(const BdChainDynamics& dyn, long N, long init,
                       const std::vector<double>& grid, std::uint64_t seed,
                       long event_cap = 2000000000L) {
  if (init < 1) throw ConfigError("birth-death states start at 1");
  const BirthDeathRates& r = dyn.rates;
  auto exit_rate = [&](long st) { return r.lambda(st) + r.mu(st); };
  auto move = [&](long st, Philox& rng) -> detail::ChainMove {
    double up = r.lambda(st);
    double u = rng.u01() * (up + r.mu(st));
    if (u < up) return {false, st + 1};
    if (st == 1) return {true, 0};  // death at 1 is absorption
    return {false, st - 1};
  };
  return detail::chain_fv(N, init, grid, seed, exit_rate, move, event_cap);
}

// --- diffusions --------------------------------------------------------------

// Synchronized Euler ensemble.  Particle i consumes only RNG stream i, the
// revival order and targets use stream N, so the result is independent of the
// order particles are advanced in.  All particles absorbed in one step raises
// EnsembleCollapse.  Snapshots are taken at the first completed step past each
// grid time.
inline FvResult fv_run(const DiffusionDynamics& dyn, long N, double init,
                       const std::vector<double>& grid, std::uint64_t seed) {
  if (N < 2) throw ConfigError("Fleming-Viot needs N >= 2");
  detail::check_grid(grid);
  if (!(dyn.eps > 0.0)) throw ConfigError("need eps > 0");
  if (!(dyn.dt > 0.0)) throw ConfigError("need dt > 0");
  auto t_start = std::chrono::steady_clock::now();

  const double eps = dyn.eps;
  const bool wf = dyn.kind == DiffusionDynamics::Kind::wright_fisher;
  const double upper = wf ? std::numeric_limits<double>::infinity() : 1.0 / eps;
  if (!(init > eps && init < upper) || (wf && init >= 1.0))
    throw ConfigError("initial state outside the killed domain");

  // one Euler update; returns the proposed new position
  auto advance = [&](double x, Philox& rng, double h) -> double {
    switch (dyn.kind) {
      case DiffusionDynamics::Kind::feller_z: {
        const FellerParams& p = dyn.feller;
        return x + (p.r * x - p.c * x * x) * h +
               std::sqrt(2.0 * p.gamma * std::max(x, 0.0) * h) * rng.normal();
      }
      case DiffusionDynamics::Kind::wright_fisher: {
        double cx = std::clamp(x, 0.0, 1.0);
        double nx = x - x * h + std::sqrt(cx * (1.0 - cx) * h) * rng.normal();
        return std::min(nx, 1.0);
      }
      case DiffusionDynamics::Kind::kolmogorov_x:
        return x - dyn.model.q(x) * h + std::sqrt(h) * rng.normal();
    }
    return x;
  };

  std::vector<double> x(N, init);
  std::vector<Philox> prng;
  prng.reserve(N);
  for (long i = 0; i < N; ++i) prng.emplace_back(seed, static_cast<std::uint64_t>(i));
  Philox revival(seed, static_cast<std::uint64_t>(N));

  FvResult out;
  out.n_particles = N;
  auto record = [&](double tg) {
    EmpiricalMeasure m;
    m.continuous = true;
    m.samples = x;
    out.t.push_back(tg);
    out.measures.push_back(std::move(m));
  };

  std::size_t gi = 0;
  while (gi < grid.size() && grid[gi] <= 0.0) {
    record(grid[gi]);
    ++gi;
  }
  const double t_end = grid.back();
  const long n_steps = static_cast<long>(std::ceil(t_end / dyn.dt));
  std::vector<long> absorbed;
  std::vector<char> dead(N, 0);
  std::vector<long> alive;
  for (long k = 1; k <= n_steps && gi < grid.size(); ++k) {
    double h = std::min(dyn.dt, t_end - (k - 1) * dyn.dt);
    absorbed.clear();
    for (long i = 0; i < N; ++i) {
      double nx = advance(x[i], prng[i], h);
      if (nx <= eps || nx >= upper) {
        absorbed.push_back(i);
        dead[i] = 1;
      } else {
        x[i] = nx;
      }
    }
    if (!absorbed.empty()) {
      if (static_cast<long>(absorbed.size()) == N)
        throw EnsembleCollapse("all " + std::to_string(N) +
                               " particles absorbed at step " + std::to_string(k) +
                               "; increase N or decrease dt");
      // uniformly-random revival order; each target drawn among those alive
      // at that instant (including particles revived earlier in this step)
      for (std::size_t a = absorbed.size(); a > 1; --a) {
        std::size_t b = revival.uniform_index(a);
        std::swap(absorbed[a - 1], absorbed[b]);
      }
      alive.clear();
      for (long i = 0; i < N; ++i)
        if (!dead[i]) alive.push_back(i);
      for (long idx : absorbed) {
        long target = alive[revival.uniform_index(alive.size())];
        x[idx] = x[target];
        dead[idx] = 0;
        alive.push_back(idx);
        ++out.jump_count;
      }
    }
    double now = std::min(k * dyn.dt, t_end);
    while (gi < grid.size() && grid[gi] <= now + 1e-12) {
      record(grid[gi]);
      ++gi;
    }
  }
  while (gi < grid.size()) {  // grid points at t_end after rounding
    record(grid[gi]);
    ++gi;
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

inline FvResult fv_run(const KilledDynamics& dyn, long N, double init,
                       const std::vector<double>& grid, std::uint64_t seed) {
  return std::visit(
      [&](const auto& d) -> FvResult {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, DiffusionDynamics>)
          return fv_run(d, N, init, grid, seed);
        else
          return fv_run(d, N, static_cast<long>(std::llround(init)), grid, seed);
      },
      dyn);
}

// --- multi-type Lotka-Volterra ----------------------------------------------
// Particles carry the full k-vector with frozen zero coordinates; a particle
// is killed (and revived onto a uniformly chosen survivor, copying the whole
// vector including its zeros) only when ALL coordinates are extinct, so the
// ensemble tracks the law conditioned on the total extinction time.  Mode
// fractions over the ensemble estimate P(pattern | T_0 > t); unlike the naive
// path estimator, the conditioning sample stays at N for arbitrarily large t.

struct LvFvResult {
  ModeCurves modes;  // survivors column = N (the ensemble never shrinks)
  std::vector<std::vector<double>> final_state;  // N x k ensemble at grid.back()
  long jump_count = 0;
  long n_particles = 0;
  double wall_seconds = 0.0;
};

inline LvFvResult fv_lv_modes(const LvParams& p, const std::vector<double>& z0,
                              const std::vector<double>& grid, long N,
                              double dt = 1e-3, std::uint64_t seed = 0) {
  p.validate();
  const int k = p.k();
  if (static_cast<int>(z0.size()) != k) throw ConfigError("z0 dimension mismatch");
  for (double z : z0)
    if (!(z > 0.0)) throw ConfigError("z0 must be positive");
  if (N < 2) throw ConfigError("Fleming-Viot needs N >= 2");
  if (!(dt > 0.0)) throw ConfigError("need dt > 0");
  if (k > 16) throw ConfigError("too many types for pattern bookkeeping");
  detail::check_grid(grid);
  auto t_start = std::chrono::steady_clock::now();

  std::vector<double> x(static_cast<std::size_t>(N) * k);
  for (long i = 0; i < N; ++i)
    for (int c = 0; c < k; ++c) x[i * k + c] = z0[c];
  std::vector<Philox> prng;
  prng.reserve(N);
  for (long i = 0; i < N; ++i) prng.emplace_back(seed, static_cast<std::uint64_t>(i));
  Philox revival(seed, static_cast<std::uint64_t>(N));

  LvFvResult out;
  out.n_particles = N;
  ModeCurves& mc = out.modes;
  mc.n_paths = N;
  const int n_patterns = (1 << k) - 1;
  for (int mask = 1; mask <= n_patterns; ++mask) {
    std::string name(k, '0');
    for (int c = 0; c < k; ++c)
      if (mask & (1 << c)) name[c] = '1';
    mc.pattern.push_back(std::move(name));
  }
  auto record = [&](double tg) {
    std::vector<long> cnt(n_patterns, 0);
    for (long i = 0; i < N; ++i) {
      int mask = 0;
      for (int c = 0; c < k; ++c)
        if (x[i * k + c] > 0.0) mask |= 1 << c;
      ++cnt[mask - 1];  // revived ensemble: never all-zero
    }
    std::vector<double> f(n_patterns);
    for (int j = 0; j < n_patterns; ++j)
      f[j] = static_cast<double>(cnt[j]) / static_cast<double>(N);
    mc.t.push_back(tg);
    mc.survivors.push_back(N);
    mc.counts.push_back(std::move(cnt));
    mc.freq.push_back(std::move(f));
  };

  std::size_t gi = 0;
  while (gi < grid.size() && grid[gi] <= 0.0) {
    record(grid[gi]);
    ++gi;
  }
  const double t_end = grid.back();
  const long n_steps = static_cast<long>(std::ceil(t_end / dt));
  std::vector<double> prev(k);
  std::vector<long> absorbed;
  std::vector<char> dead(N, 0);
  std::vector<long> alive;
  for (long step = 1; step <= n_steps && gi < grid.size(); ++step) {
    double h = std::min(dt, t_end - (step - 1) * dt);
    absorbed.clear();
    for (long i = 0; i < N; ++i) {
      double* z = &x[i * k];
      for (int c = 0; c < k; ++c) prev[c] = z[c];
      bool any_alive = false;
      for (int c = 0; c < k; ++c) {
        if (prev[c] <= 0.0) continue;
        double cross = 0.0;
        for (int j = 0; j < k; ++j) cross += p.c(c, j) * prev[j];
        double nz = prev[c] + (p.r[c] - cross) * prev[c] * h +
                    std::sqrt(p.gamma[c] * prev[c] * h) * prng[i].normal();
        z[c] = nz > 0.0 ? nz : 0.0;
        if (z[c] > 0.0) any_alive = true;
      }
      if (!any_alive) {
        absorbed.push_back(i);
        dead[i] = 1;
      }
    }
    if (!absorbed.empty()) {
      if (static_cast<long>(absorbed.size()) == N)
        throw EnsembleCollapse("all " + std::to_string(N) +
                               " particles absorbed at step " + std::to_string(step) +
                               "; increase N or decrease dt");
      for (std::size_t a = absorbed.size(); a > 1; --a) {
        std::size_t b = revival.uniform_index(a);
        std::swap(absorbed[a - 1], absorbed[b]);
      }
      alive.clear();
      for (long i = 0; i < N; ++i)
        if (!dead[i]) alive.push_back(i);
      for (long idx : absorbed) {
        long target = alive[revival.uniform_index(alive.size())];
        for (int c = 0; c < k; ++c) x[idx * k + c] = x[target * k + c];
        dead[idx] = 0;
        alive.push_back(idx);
        ++out.jump_count;
      }
    }
    double now = std::min(step * dt, t_end);
    while (gi < grid.size() && grid[gi] <= now + 1e-12) {
      record(grid[gi]);
      ++gi;
    }
  }
  while (gi < grid.size()) {
    record(grid[gi]);
    ++gi;
  }
  out.final_state.assign(N, std::vector<double>(k));
  for (long i = 0; i < N; ++i)
    for (int c = 0; c < k; ++c) out.final_state[i][c] = x[i * k + c];
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Yaglom-limit estimation: time-average of the empirical measure over
// n_snapshots equally spaced in [t_burnin, t_burnin + t_avg].  Snapshots are
// kept so callers can bootstrap the averaging gain.

struct FvYaglomEstimate {
  EmpiricalMeasure average;
  FvResult run;
};

template <class Dynamics, class Init>
FvYaglomEstimate fv_yaglom_estimate(const Dynamics& dyn, long N, Init init,
                                    double t_burnin, double t_avg, int n_snapshots,
                                    std::uint64_t seed) {
  if (n_snapshots < 1) throw ConfigError("need at least one snapshot");
  std::vector<double> grid;
  if (n_snapshots == 1) {
    grid.push_back(t_burnin);
  } else {
    for (int j = 0; j < n_snapshots; ++j)
      grid.push_back(t_burnin + t_avg * j / (n_snapshots - 1));
  }
  FvYaglomEstimate est;
  est.run = fv_run(dyn, N, init, grid, seed);
  EmpiricalMeasure& avg = est.average;
  const auto& ms = est.run.measures;
  avg.continuous = ms.front().continuous;
  if (avg.continuous) {
    for (const auto& m : ms)
      avg.samples.insert(avg.samples.end(), m.samples.begin(), m.samples.end());
  } else {
    for (const auto& m : ms)
      for (auto& [st, w] : m.weights) avg.weights[st] += w / ms.size();
  }
  return est;
}

// mu_1 times the time-averaged empirical mass at state 1 estimates xi_1.
inline double xi1_from_fv(const BirthDeathRates& rates, long N, long init,
                          double t_burnin, double t_avg, int n_snapshots,
                          std::uint64_t seed) {
  FvYaglomEstimate est = fv_yaglom_estimate(BdChainDynamics{rates}, N, init, t_burnin,
                                            t_avg, n_snapshots, seed);
  auto it = est.average.weights.find(1);
  double mass1 = it == est.average.weights.end() ? 0.0 : it->second;
  return rates.mu(1) * mass1;
}

// ---------------------------------------------------------------------------
// Distances for CLI plumbing (typed helpers live in histogram.hpp).

enum class Metric { tv, l1_hist, ks };

inline double distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                       Metric metric, int n_bins = 100, double lo = 0.0,
                       double hi = 0.0) {
  switch (metric) {
    case Metric::tv:
      if (a.continuous || b.continuous)
        throw ConfigError("tv distance needs discrete measures");
      return tv_distance(a.weights, b.weights);
    case Metric::l1_hist: {
      if (!a.continuous || !b.continuous)
        throw ConfigError("l1_hist needs continuous measures");
      if (hi <= lo) {
        auto [alo, ahi] = std::minmax_element(a.samples.begin(), a.samples.end());
        auto [blo, bhi] = std::minmax_element(b.samples.begin(), b.samples.end());
        lo = std::min(*alo, *blo);
        hi = std::max(*ahi, *bhi);
      }
      return l1_distance(make_histogram(a.samples, n_bins, lo, hi),
                         make_histogram(b.samples, n_bins, lo, hi));
    }
    case Metric::ks: {
      if (!a.continuous || !b.continuous)
        throw ConfigError("ks distance needs continuous measures");
      if (a.samples.empty() || b.samples.empty())
        throw ConfigError("no samples");
      // two-sample statistic; tied values advance both sides before the
      // comparison so both empirical CDFs are read right-continuously
      std::vector<double> sa = a.samples, sb = b.samples;
      std::sort(sa.begin(), sa.end());
      std::sort(sb.begin(), sb.end());
      double d = 0.0;
      std::size_t i = 0, j = 0;
      while (i < sa.size() || j < sb.size()) {
        double x = (i < sa.size() && (j == sb.size() || sa[i] <= sb[j]))
                       ? sa[i]
                       : sb[j];
        while (i < sa.size() && sa[i] == x) ++i;
        while (j < sb.size() && sb[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / sa.size() -
                                 static_cast<double>(j) / sb.size()));
      }
      return d;
    }
  }
  throw ConfigError("unknown metric");
}

}  // namespace qsd
