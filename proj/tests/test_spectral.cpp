// Finite-chain machinery: generator validation, matrix exponential,
// conditioned laws, spectral QSD solvers, extinction-rate curves and the
// Q-process.  Reference values come from independent oracles implemented
// here: a plain Taylor-series matrix exponential (scaling-and-squaring, no
// uniformization), a Gillespie path sampler, and closed forms for 1- and
// 2-state chains.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qsd/histogram.hpp"
#include "qsd/rng.hpp"
#include "qsd/spectral.hpp"
#include "qsd/sub_generator.hpp"

using namespace qsd;

namespace {

// Independent matrix-exponential oracle: scale tQ until its sup norm is <= 1/2,
// run a raw Taylor series, square back up.  Shares no code path with
// transition_matrix (which uses uniformization with Poisson weights).
Mat expm_taylor(const Mat& Q, double t) {
  const int n = static_cast<int>(Q.rows());
  Mat A = t * Q;
  int squarings = 0;
  while (A.cwiseAbs().rowwise().sum().maxCoeff() > 0.5) {
    A /= 2.0;
    ++squarings;
  }
  Mat term = Mat::Identity(n, n);
  Mat sum = term;
  for (int k = 1; k <= 40; ++k) {
    term = term * A / double(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

// 3-state killed chain used by several cases; kill rates (0.3, 0, 0.7).
Mat three_state() {
  Mat Q(3, 3);
  Q << -1.5, 1.0, 0.2,  //
      0.4, -1.3, 0.9,   //
      0.1, 0.6, -1.4;
  return Q;
}

// random killed chain: dense positive off-diagonals, kill rate on one state
SubGenerator random_chain(std::uint64_t seed, int n) {
  Philox rng(seed, 0);
  Mat Q = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double out = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) {
        Q(i, j) = 0.1 + 1.9 * rng.u01();
        out += Q(i, j);
      }
    double kill = i == 0 ? 0.5 + rng.u01() : 0.2 * rng.u01();
    Q(i, i) = -(out + kill);
  }
  return make_sub_generator(Q);
}

// walk on {1..n}, nearest-neighbour rate `rate`, reflecting, uniform killing d
SubGenerator uniform_walk(int n, double rate, double d) {
  Mat Q = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (i > 0) Q(i, i - 1) = rate;
    if (i + 1 < n) Q(i, i + 1) = rate;
    Q(i, i) = -((i > 0 ? rate : 0.0) + (i + 1 < n ? rate : 0.0) + d);
  }
  return make_sub_generator(Q);
}

}  // namespace

TEST_CASE("generator validation rejects malformed matrices") {
  Mat ok = three_state();
  REQUIRE_NOTHROW(make_sub_generator(ok));

  Mat neg = ok;
  neg(0, 1) = -0.2;  // negative rate
  REQUIRE_THROWS_AS(make_sub_generator(neg), NotAGenerator);

  Mat pos_row = ok;
  pos_row(0, 0) = 0.0;  // row sums to +1.2
  REQUIRE_THROWS_AS(make_sub_generator(pos_row), NotAGenerator);

  Mat conservative = ok;
  for (int i = 0; i < 3; ++i) conservative(i, i) -= conservative.row(i).sum();
  REQUIRE_THROWS_AS(make_sub_generator(conservative), NotAGenerator);

  Mat reducible = Mat::Zero(2, 2);  // no way back from state 1
  reducible(0, 0) = -1.0;
  reducible(0, 1) = 0.5;
  reducible(1, 1) = -0.5;
  REQUIRE_THROWS_AS(make_sub_generator(reducible), ReducibleChain);

  REQUIRE_THROWS_AS(make_sub_generator(Mat::Zero(0, 0)), NotAGenerator);
}

TEST_CASE("transition matrix: identity at t=0 and scalar chain") {
  SubGenerator g = make_sub_generator(three_state());
  Mat P0 = transition_matrix(g, 0.0);
  REQUIRE((P0 - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

  const double d = 0.37;
  SubGenerator one = make_sub_generator(Mat::Constant(1, 1, -d));
  for (double t : {0.1, 1.0, 7.5}) {
    REQUIRE(std::abs(transition_matrix(one, t)(0, 0) - std::exp(-d * t)) < 1e-14);
  }
}

TEST_CASE("transition matrix matches the Taylor-series oracle") {
  SubGenerator g = make_sub_generator(three_state());
  for (double t : {0.3, 1.0, 4.0}) {
    Mat P = transition_matrix(g, t);
    Mat Pref = expm_taylor(g.Q, t);
    REQUIRE((P - Pref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("transition matrix stays sub-stochastic and nonnegative") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    SubGenerator g = random_chain(seed, 6);
    for (double t : {0.5, 5.0, 50.0}) {
      Mat P = transition_matrix(g, t);
      REQUIRE(P.minCoeff() >= 0.0);
      REQUIRE(P.rowwise().sum().maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("uniform-killing walk has the uniform QSD with theta = d") {
  const int n = 100;
  const double d = 0.098;
  SubGenerator g = uniform_walk(n, 100.0, d);
  QsdResult r = solve_qsd_spectral(g);
  REQUIRE(std::abs(r.theta - d) < 1e-10);
  Vec uniform = Vec::Constant(n, 1.0 / n);
  REQUIRE(tv_distance(r.alpha, uniform) < 1e-10);
  // uniform killing shifts the whole spectrum: the gap is the walk's own
  // relaxation rate 2*rate*(1 - cos(pi/n))
  double walk_gap = 2.0 * 100.0 * (1.0 - std::cos(M_PI / n));
  REQUIRE(std::abs(r.gap() - walk_gap) < 1e-8);
}

TEST_CASE("single-state chain: alpha = delta, theta = kill rate") {
  SubGenerator g = make_sub_generator(Mat::Constant(1, 1, -2.5));
  QsdResult r = solve_qsd_spectral(g);
  REQUIRE(r.alpha(0) == 1.0);
  REQUIRE(r.theta == 2.5);
}

TEST_CASE("solver agrees with long-horizon conditioning (dense random chain)") {
  SubGenerator g = random_chain(21, 5);
  QsdResult r = solve_qsd_spectral(g);
  REQUIRE(r.residual_alpha < 1e-9);
  REQUIRE(r.theta > 0.0);
  REQUIRE(r.gap() > 0.0);
  REQUIRE(std::abs(r.alpha.sum() - 1.0) < 1e-12);
  REQUIRE(std::abs(r.alpha.dot(r.pi) - 1.0) < 1e-10);
  // theta equals the mean kill rate under alpha
  REQUIRE(std::abs(r.theta - r.alpha.dot(g.kill_rates())) < 1e-12);

  // oracle: propagate any law with the Taylor exponential; the conditioned
  // law converges to alpha and the survival ratio gives theta
  double t = 30.0 / r.gap();
  Mat P = expm_taylor(g.Q, t);
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(5, 0.2) * P;
  Vec cond = v.transpose() / v.sum();
  REQUIRE(tv_distance(cond, r.alpha) < 1e-10);
  Eigen::RowVectorXd v2 = v * expm_taylor(g.Q, 1.0);
  REQUIRE(std::abs(-std::log(v2.sum() / v.sum()) - r.theta) < 1e-10);
}

TEST_CASE("power-iteration route matches the dense route") {
  SubGenerator g = random_chain(33, 12);
  QsdResult dense = solve_qsd_spectral(g);
  SolveOptions opt;
  opt.dense_max_dim = 4;  // force the power path for dim 12
  QsdResult power = solve_qsd_spectral(g, opt);
  REQUIRE(power.iterations > 0);
  REQUIRE(tv_distance(dense.alpha, power.alpha) < 1e-8);
  REQUIRE(std::abs(dense.theta - power.theta) < 1e-9);
  REQUIRE(std::abs(dense.chi - power.chi) < 1e-6);
}

TEST_CASE("conditioned distribution: t=0, Taylor oracle, uniform-killing identity") {
  SubGenerator g = make_sub_generator(three_state());
  Vec init = point_mass(3, 0);
  ConditionedLaw at0 = conditioned_distribution(g, init, 0.0);
  REQUIRE(tv_distance(at0.dist, init) == 0.0);
  REQUIRE(at0.log_survival == 0.0);

  // delta_1 propagated to t=2, against the Taylor-oracle row
  ConditionedLaw c = conditioned_distribution(g, init, 2.0);
  Eigen::RowVectorXd row = expm_taylor(g.Q, 2.0).row(0);
  Vec ref = row.transpose() / row.sum();
  REQUIRE(tv_distance(c.dist, ref) < 1e-10);
  REQUIRE(std::abs(c.log_survival - std::log(row.sum())) < 1e-10);

  // with uniform killing, conditioning on survival cancels exactly: the
  // conditioned law equals the law of the never-killed walk
  const int n = 20;
  const double d = 0.15;
  SubGenerator walk = uniform_walk(n, 1.0, d);
  Mat Qfree = walk.Q + d * Mat::Identity(n, n);  // killing removed
  for (double t : {0.5, 3.0, 12.0}) {
    ConditionedLaw cw = conditioned_distribution(walk, point_mass(n, 4), t);
    Eigen::RowVectorXd free_row = expm_taylor(Qfree, t).row(4);
    REQUIRE(tv_distance(cw.dist, Vec(free_row.transpose())) < 1e-9);
    REQUIRE(std::abs(cw.log_survival - (-d * t)) < 1e-9);
  }
}

TEST_CASE("survival probability: QSD start is exactly exponential") {
  const double d = 0.098;
  SubGenerator g = uniform_walk(100, 100.0, d);
  QsdResult r = solve_qsd_spectral(g);
  Survival s = survival_probability(g, r.alpha, 10.0);
  REQUIRE(std::abs(s.log_p - (-0.98)) < 1e-9);
  REQUIRE(std::abs(s.p - std::exp(-0.98)) < 1e-9);
  Survival s0 = survival_probability(g, r.alpha, 0.0);
  REQUIRE(s0.p == 1.0);
}

TEST_CASE("survival probability matches a Gillespie Monte Carlo oracle") {
  SubGenerator g = random_chain(7, 4);
  const double t_end = 3.0;
  Vec kill = g.kill_rates();

  const long n_paths = 1000000;
  Philox rng(404, 0);
  long survived = 0;
  for (long p = 0; p < n_paths; ++p) {
    int state = 0;
    double t = 0.0;
    for (;;) {
      double exit = -g.Q(state, state);
      t += rng.exponential(exit);
      if (t >= t_end) {
        ++survived;
        break;
      }
      double u = rng.u01() * exit;
      // order: other states first, then the kill channel
      int next = -1;
      for (int j = 0; j < 4; ++j) {
        if (j == state) continue;
        if (u < g.Q(state, j)) {
          next = j;
          break;
        }
        u -= g.Q(state, j);
      }
      if (next < 0) break;  // killed
      state = next;
    }
  }
  double p_hat = double(survived) / double(n_paths);
  double p_exact = survival_probability(g, point_mass(4, 0), t_end).p;
  double sigma = std::sqrt(p_exact * (1.0 - p_exact) / n_paths);
  REQUIRE(std::abs(p_hat - p_exact) < 3.0 * sigma + 1e-12);
}

TEST_CASE("extinction-rate curve: constant from a QSD, plateau from a point mass") {
  // uniform killing: the rate is d from any start
  SubGenerator walk = uniform_walk(30, 1.0, 0.25);
  std::vector<double> grid{0.0, 1.0, 2.0, 5.0};
  std::vector<double> rates = extinction_rate_curve(walk, point_mass(30, 17), grid);
  for (double v : rates) REQUIRE(std::abs(v - 0.25) < 1e-12);

  // generic chain started at its QSD: constant theta
  SubGenerator g = random_chain(5, 5);
  QsdResult r = solve_qsd_spectral(g);
  std::vector<double> rq = extinction_rate_curve(g, r.alpha, grid);
  for (double v : rq) REQUIRE(std::abs(v - r.theta) < 1e-9);

  REQUIRE_THROWS_AS(extinction_rate_curve(g, r.alpha, std::vector<double>{2.0, 1.0}),
                    ConfigError);
}

TEST_CASE("qsd_residual separates the true QSD from pretenders") {
  SubGenerator g = random_chain(9, 6);
  QsdResult r = solve_qsd_spectral(g);
  REQUIRE(qsd_residual(g, r.alpha) < 1e-9);
  REQUIRE(qsd_residual(g, Vec::Constant(6, 1.0 / 6)) > 0.01);

  // uniform killing walk: uniform IS the QSD
  SubGenerator walk = uniform_walk(100, 1.0, 0.098);
  REQUIRE(qsd_residual(walk, Vec::Constant(100, 0.01)) < 1e-12);
}

TEST_CASE("Q-process: uniform killing reduces to the never-killed walk") {
  const int n = 25;
  const double d = 0.3;
  SubGenerator walk = uniform_walk(n, 1.0, d);
  QsdResult r = solve_qsd_spectral(walk);
  QProcess qp = q_process(walk, r);
  // pi is constant (the free walk is doubly stochastic), so the ratio factors
  // cancel and the conditioned generator is the free walk itself
  Mat free_walk = walk.Q + d * Mat::Identity(n, n);
  REQUIRE((qp.generator - free_walk).cwiseAbs().maxCoeff() < 1e-8);
  REQUIRE(qp.generator.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Q-process of a 2-state chain against the closed form") {
  // rates 1<->2 both 1, kill rates (1, 2):
  //   Q = [[-2, 1], [1, -3]], eigenvalues -(5 -+ sqrt(5))/2
  Mat Q(2, 2);
  Q << -2.0, 1.0, 1.0, -3.0;
  SubGenerator g = make_sub_generator(Q);
  QsdResult r = solve_qsd_spectral(g);
  const double s5 = std::sqrt(5.0);
  REQUIRE(std::abs(r.theta - 0.5 * (5.0 - s5)) < 1e-12);
  REQUIRE(std::abs(r.chi - 0.5 * (5.0 + s5)) < 1e-12);
  // left eigenvector: alpha (Q + theta I) = 0 -> alpha2/alpha1 = (2-theta)
  double ratio = 2.0 - r.theta;
  Vec alpha_ref(2);
  alpha_ref << 1.0 / (1.0 + ratio), ratio / (1.0 + ratio);
  REQUIRE(tv_distance(r.alpha, alpha_ref) < 1e-12);

  QProcess qp = q_process(g, r);
  REQUIRE(qp.generator.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((qp.stationary.transpose() * qp.generator).cwiseAbs().maxCoeff() < 1e-12);
  // stationary = normalized (alpha_i pi_i)
  Vec ap(2);
  ap << r.alpha(0) * r.pi(0), r.alpha(1) * r.pi(1);
  ap /= ap.sum();
  REQUIRE(tv_distance(qp.stationary, ap) < 1e-14);
}

TEST_CASE("probability-vector and point-mass helpers") {
  REQUIRE_THROWS_AS(validate_prob_vector(Vec()), ConfigError);
  Vec bad(2);
  bad << 0.7, 0.7;
  REQUIRE_THROWS_AS(validate_prob_vector(bad), ConfigError);
  Vec neg(2);
  neg << 1.2, -0.2;
  REQUIRE_THROWS_AS(validate_prob_vector(neg), ConfigError);
  Vec pm = point_mass(4, 2);
  REQUIRE(pm(2) == 1.0);
  REQUIRE(pm.sum() == 1.0);
}

TEST_CASE("solver is deterministic and label-preserving") {
  SubGenerator g = random_chain(77, 8);
  g.labels = {"a", "b", "c", "d", "e", "f", "g", "h"};
  QsdResult r1 = solve_qsd_spectral(g);
  QsdResult r2 = solve_qsd_spectral(g);
  REQUIRE(r1.theta == r2.theta);
  REQUIRE((r1.alpha - r2.alpha).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(r1.labels == g.labels);
}
