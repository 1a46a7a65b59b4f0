#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "qsd/errors.hpp"
#include "qsd/sub_generator.hpp"

namespace qsd {

// Binned mass on contiguous intervals [edges[i], edges[i+1]).
struct Histogram {
  std::vector<double> edges;  // n_bins + 1, strictly increasing
  std::vector<double> mass;   // n_bins

  int n_bins() const { return static_cast<int>(mass.size()); }
  double total() const {
    double s = 0.0;
    for (double m : mass) s += m;
    return s;
  }
  // center of the heaviest bin
  double peak() const {
    int best = 0;
    for (int i = 1; i < n_bins(); ++i)
      if (mass[i] > mass[best]) best = i;
    return 0.5 * (edges[best] + edges[best + 1]);
  }
};

inline std::vector<double> uniform_edges(double lo, double hi, int n_bins) {
  if (!(hi > lo) || n_bins < 1) throw ConfigError("bad histogram range");
  std::vector<double> e(n_bins + 1);
  for (int i = 0; i <= n_bins; ++i) e[i] = lo + (hi - lo) * i / n_bins;
  return e;
}

// Normalized histogram of samples; default range is the occupied range.
inline Histogram make_histogram(const std::vector<double>& samples, int n_bins = 100,
                                double lo = 0.0, double hi = 0.0) {
  if (samples.empty()) throw ConfigError("no samples to bin");
  if (hi <= lo) {
    lo = *std::min_element(samples.begin(), samples.end());
    hi = *std::max_element(samples.begin(), samples.end());
    if (hi <= lo) hi = lo + 1.0;  // all samples identical
  }
  Histogram h;
  h.edges = uniform_edges(lo, hi, n_bins);
  h.mass.assign(n_bins, 0.0);
  const double w = 1.0 / samples.size();
  for (double s : samples) {
    int b = static_cast<int>((s - lo) / (hi - lo) * n_bins);
    b = std::clamp(b, 0, n_bins - 1);
    h.mass[b] += w;
  }
  return h;
}

// Per-bin integral of a smooth density (Simpson on each bin).
inline Histogram histogram_from_density(const std::vector<double>& edges,
                                        const std::function<double(double)>& f) {
  Histogram h;
  h.edges = edges;
  h.mass.resize(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    double a = edges[i], b = edges[i + 1];
    h.mass[i] = (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
  }
  return h;
}

// Per-bin integral of the piecewise-linear interpolant of (xs, dens); the
// density is taken to vanish outside [xs.front(), xs.back()].  Used to
// project grid eigen-densities onto histogram bins.
inline Histogram histogram_from_grid_density(const std::vector<double>& edges,
                                             const std::vector<double>& xs,
                                             const Vec& dens) {
  if (xs.size() < 2 || static_cast<long>(xs.size()) != dens.size())
    throw ConfigError("grid density size mismatch");
  auto value_at = [&](double x) -> double {
    if (x <= xs.front() || x >= xs.back()) {
      // clamp rather than zero exactly at the ends
      if (x == xs.front()) return dens[0];
      if (x == xs.back()) return dens[dens.size() - 1];
      return 0.0;
    }
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t j = static_cast<std::size_t>(it - xs.begin());
    double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return (1.0 - w) * dens[j - 1] + w * dens[j];
  };
  Histogram h;
  h.edges = edges;
  h.mass.resize(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    double a = std::max(edges[i], xs.front());
    double b = std::min(edges[i + 1], xs.back());
    double m = 0.0;
    if (b > a) {
      // integrate the interpolant exactly by visiting every grid break in (a,b)
      auto lo = std::upper_bound(xs.begin(), xs.end(), a);
      double prev_x = a, prev_v = value_at(a);
      for (auto it = lo; it != xs.end() && *it < b; ++it) {
        m += 0.5 * (*it - prev_x) * (prev_v + value_at(*it));
        prev_x = *it;
        prev_v = value_at(*it);
      }
      m += 0.5 * (b - prev_x) * (prev_v + value_at(b));
    }
    h.mass[i] = m;
  }
  return h;
}

namespace detail {
inline void require_same_edges(const Histogram& a, const Histogram& b) {
  if (a.edges.size() != b.edges.size())
    throw BinMismatch("histograms have different bin counts");
  double span = std::abs(a.edges.back() - a.edges.front());
  for (std::size_t i = 0; i < a.edges.size(); ++i)
    if (std::abs(a.edges[i] - b.edges[i]) > 1e-9 * std::max(1.0, span))
      throw BinMismatch("histogram bin edges disagree");
}
}  // namespace detail

// L1 distance between binned masses on identical edges.
inline double l1_distance(const Histogram& a, const Histogram& b) {
  detail::require_same_edges(a, b);
  double d = 0.0;
  for (int i = 0; i < a.n_bins(); ++i) d += std::abs(a.mass[i] - b.mass[i]);
  return d;
}

// Total-variation distance between discrete laws.
inline double tv_distance(const std::map<long, double>& a,
                          const std::map<long, double>& b) {
  double d = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      d += std::abs(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      d += std::abs(ib->second);
      ++ib;
    } else {
      d += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return 0.5 * d;
}

inline double tv_distance(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw BinMismatch("vectors have different lengths");
  return 0.5 * (a - b).cwiseAbs().sum();
}

// Kolmogorov-Smirnov statistic of samples against a reference CDF.
inline double ks_distance(std::vector<double> samples,
                          const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ConfigError("no samples");
  std::sort(samples.begin(), samples.end());
  double d = 0.0;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double c = cdf(samples[i]);
    d = std::max(d, std::abs(c - i / n));
    d = std::max(d, std::abs(c - (i + 1) / n));
  }
  return d;
}

}  // namespace qsd
