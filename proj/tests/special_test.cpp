#include "tmc/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

namespace {

using tmc::special::digamma;
using tmc::special::log_gamma;
using tmc::special::trigamma;

// Reference values from mpmath at 40 digits: {x, lnGamma(x), psi(x), psi'(x)}.
struct Reference {
  double x, log_gamma, digamma, trigamma;
};

constexpr Reference kReference[] = {
    {0.001, 6.9071788853838536825, -1000.5755719318103005, 1000001.642533195869},
    {0.01, 4.5994798780420217225, -100.5608854578686745, 10001.62121352831322},
    {0.1, 2.2527126517342059599, -10.423754940411076795, 101.43329915079275882},
    {0.5, 0.57236494292470008707, -1.9635100260214234794, 4.9348022005446793094},
    {1, 0.0, -0.57721566490153286061, 1.6449340668482264365},
    {1.5, -0.12078223763524522235, 0.036489973978576520559, 0.93480220054467930942},
    {2, 0.0, 0.42278433509846713939, 0.64493406684822643647},
    {2.5, 0.28468287047291915963, 0.70315664064524318723, 0.49035775610023486497},
    {3.7, 1.4280723266653879219, 1.1671535393615113859, 0.3100378576700383191},
    {4, 1.7917594692280550008, 1.2561176684318004727, 0.28382295573711532536},
    {6, 4.7874917427820459942, 1.7061176684318004727, 0.18132295573711532536},
    {9.99, 12.77931521435019288, 2.2507003728312010995, 0.10527695014824178675},
    {10, 12.801827480081469611, 2.2517525890667211076, 0.10516633568168574612},
    {12.5, 18.734347511936445702, 2.4851956512749120482, 0.083285224601578370444},
    {33.3, 82.603723581654952928, 3.4904672385202428639, 0.030485444095338885149},
    {100, 359.13420536957539878, 4.6001618527380874002, 0.010050166663333571395},
    {1234.5, 7550.5509010778948957, 7.1180162318279978433, 0.0008103727271269666527},
    {1e5, 1051287.7089736568949, 11.512920464961895087, 0.000010000050000166666667},
    {1e6, 12815504.56914761166, 13.815510057964190771, 1.0000005000001666667e-6},
};

// Relative error with an absolute floor for values at or near a zero of the
// function (ln Gamma vanishes at 1 and 2).
double rel_err(double got, double want, double floor = 1e-14) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

TEST(Special, LogGammaMatchesReference) {
  for (const auto& r : kReference) {
    EXPECT_LE(rel_err(log_gamma(r.x), r.log_gamma, 1.0), 1e-12) << "x = " << r.x;
  }
}

TEST(Special, DigammaMatchesReference) {
  for (const auto& r : kReference) {
    EXPECT_LE(rel_err(digamma(r.x), r.digamma), 1e-10) << "x = " << r.x;
  }
}

TEST(Special, TrigammaMatchesReference) {
  for (const auto& r : kReference) {
    EXPECT_LE(rel_err(trigamma(r.x), r.trigamma), 1e-8) << "x = " << r.x;
  }
}

TEST(Special, ClosedFormSpotValues) {
  EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(2.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(4.0), std::log(6.0), 1e-14);

  constexpr double kEulerGamma = 0.57721566490153286061;
  EXPECT_NEAR(digamma(1.0), -kEulerGamma, 1e-14);
  EXPECT_NEAR(digamma(2.0), 1.0 - kEulerGamma, 1e-14);
  EXPECT_NEAR(digamma(4.0), -kEulerGamma + 1.0 + 0.5 + 1.0 / 3.0, 1e-14);

  const double zeta2 = std::numbers::pi * std::numbers::pi / 6.0;
  EXPECT_NEAR(trigamma(1.0), zeta2, 1e-13);
  EXPECT_NEAR(trigamma(2.0), zeta2 - 1.0, 1e-13);
  EXPECT_LE(rel_err(trigamma(1e6), 1e-6), 1e-6);  // ~ 1/x + 1/(2x^2)
}

TEST(Special, TrigammaSeriesOracle) {
  // psi'(1) = sum_{n>=0} 1/(n+1)^2, summed backwards with the tail integral.
  double sum = 1.0 / 2000000.5;
  for (int n = 2000000; n >= 1; --n) sum += 1.0 / (static_cast<double>(n) * n);
  EXPECT_NEAR(trigamma(1.0), sum, 1e-12);
}

TEST(Special, DomainErrors) {
  for (double bad : {0.0, -1.0, -0.5, std::nan(""), std::numeric_limits<double>::infinity()}) {
    EXPECT_THROW(log_gamma(bad), tmc::DomainError);
    EXPECT_THROW(digamma(bad), tmc::DomainError);
    EXPECT_THROW(trigamma(bad), tmc::DomainError);
  }
}

TEST(Special, DigammaRecurrence) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> log_x(std::log(0.01), std::log(1e4));
  for (int i = 0; i < 20000; ++i) {
    const double x = std::exp(log_x(gen));
    EXPECT_NEAR(digamma(x + 1.0) - digamma(x), 1.0 / x, 1e-10 * std::max(1.0, 1.0 / x)) << x;
  }
}

TEST(Special, DerivativeConsistency) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> xs(0.5, 100.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = xs(gen);
    const double h = 1e-5 * x;
    const double fd_lg = (log_gamma(x + h) - log_gamma(x - h)) / (2 * h);
    EXPECT_LE(rel_err(fd_lg, digamma(x), 1e-3), 1e-6) << x;
    const double fd_dg = (digamma(x + h) - digamma(x - h)) / (2 * h);
    EXPECT_LE(rel_err(fd_dg, trigamma(x)), 1e-5) << x;
  }
}

TEST(Special, DigammaStrictlyIncreasing) {
  double prev = digamma(1e-3);
  for (double x = 1e-3 * 1.01; x < 1e6; x *= 1.01) {
    const double cur = digamma(x);
    ASSERT_GT(cur, prev) << x;
    prev = cur;
  }
}

}  // namespace
