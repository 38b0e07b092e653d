#include "tmc/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

namespace {

using tmc::AdjustedParams;
using tmc::DirichletParams;
using tmc::OneHotLabel;

TEST(ExpectedNll, SpotValues) {
  // psi(4) - psi(2) = 1/2 + 1/3
  EXPECT_NEAR(tmc::expected_nll(DirichletParams({2, 1, 1}), OneHotLabel(0, 3)), 5.0 / 6.0, 1e-12);
  // psi(2) - psi(1) = 1
  EXPECT_NEAR(tmc::expected_nll(DirichletParams({1, 1}), OneHotLabel(0, 2)), 1.0, 1e-12);
  EXPECT_LT(tmc::expected_nll(DirichletParams({1e6, 1, 1}), OneHotLabel(0, 3)), 1e-5);
  EXPECT_THROW(tmc::expected_nll(DirichletParams({1, 1}), OneHotLabel(0, 3)), tmc::InvalidArgument);
}

TEST(KlToUniform, SpotValues) {
  EXPECT_NEAR(tmc::kl_to_uniform(AdjustedParams({1, 1, 1})), 0.0, 1e-12);
  EXPECT_NEAR(tmc::kl_to_uniform(AdjustedParams({1, 2, 1})), std::log(3.0) - 5.0 / 6.0, 1e-12);
  EXPECT_NEAR(tmc::kl_to_uniform(AdjustedParams({2, 2})), std::log(6.0) - 5.0 / 3.0, 1e-12);
}

TEST(KlToUniform, MatchesGeneralDirichletKl) {
  // KL(Dir(a) || Dir(b)) = ln G(sum a) - sum ln G(a_k) - ln G(sum b) + sum ln G(b_k)
  //                        + sum (a_k - b_k)(psi(a_k) - psi(sum a)), evaluated via std::lgamma.
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> av(1.0, 30.0);
  for (int i = 0; i < 500; ++i) {
    const std::size_t k = 2 + gen() % 6;
    std::vector<double> a(k);
    for (auto& v : a) v = av(gen);
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    double want = std::lgamma(sa) - std::lgamma(static_cast<double>(k));
    for (double v : a) want += -std::lgamma(v) + (v - 1.0) * (tmc::special::digamma(v) - tmc::special::digamma(sa));
    EXPECT_NEAR(tmc::kl_to_uniform(AdjustedParams(a)), want, 1e-10 * std::max(1.0, want));
  }
}

TEST(AdjustedParams, Substitution) {
  EXPECT_EQ(tmc::adjusted_params(DirichletParams({3, 5, 2}), OneHotLabel(1, 3)).alpha(), (std::vector<double>{3, 1, 2}));
  EXPECT_EQ(tmc::adjusted_params(DirichletParams({1, 1}), OneHotLabel(1, 2)).alpha(), (std::vector<double>{1, 1}));
  EXPECT_EQ(tmc::adjusted_params(DirichletParams({41, 2, 2}), OneHotLabel(0, 3)).alpha(),
            (std::vector<double>{1, 2, 2}));
}

TEST(SampleLoss, Composition) {
  const DirichletParams a({2, 1, 1});
  const OneHotLabel y(0, 3);
  EXPECT_EQ(tmc::sample_loss(a, y, 0.0), tmc::expected_nll(a, y));
  EXPECT_NEAR(tmc::sample_loss(a, y, 1.0), 5.0 / 6.0, 1e-12);
  // psi(4) - psi(1) = 1 + 1/2 + 1/3, plus KL([1,2,1])
  EXPECT_NEAR(tmc::sample_loss(DirichletParams({1, 2, 1}), y, 1.0), 11.0 / 6.0 + std::log(3.0) - 5.0 / 6.0, 1e-12);
}

TEST(AnnealLambda, LinearRamp) {
  const tmc::AnnealSchedule s{50};
  EXPECT_EQ(tmc::anneal_lambda(0, s), 0.0);
  EXPECT_EQ(tmc::anneal_lambda(25, s), 0.5);
  EXPECT_EQ(tmc::anneal_lambda(50, s), 1.0);
  EXPECT_EQ(tmc::anneal_lambda(500, s), 1.0);
  double prev = 0.0;
  for (int e = 0; e < 120; ++e) {
    const double l = tmc::anneal_lambda(e, s);
    EXPECT_GE(l, prev);
    prev = l;
  }
  EXPECT_THROW(tmc::anneal_lambda(-1, s), tmc::InvalidArgument);
}

TEST(SampleLossGrad, SymbolicTwoClassCase) {
  const auto g = tmc::sample_loss_grad(DirichletParams({1, 1}), OneHotLabel(0, 2), 0.0);
  using tmc::special::trigamma;
  EXPECT_NEAR(g[0], -(trigamma(1.0) - trigamma(2.0)), 1e-14);
  EXPECT_NEAR(g[1], trigamma(2.0), 1e-14);
}

// Loss written out from its closed form with std::lgamma, defined for any
// alpha > 0 so central stencils may step below 1.
double oracle_loss(const std::vector<double>& alpha, std::size_t t, double lambda) {
  using tmc::special::digamma;
  const double s = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  double loss = digamma(s) - digamma(alpha[t]);
  const double st = s - alpha[t] + 1.0;
  double kl = std::lgamma(st) - std::lgamma(static_cast<double>(alpha.size()));
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    if (j == t) continue;
    kl += -std::lgamma(alpha[j]) + (alpha[j] - 1.0) * (digamma(alpha[j]) - digamma(st));
  }
  return loss + lambda * kl;
}

// Central differences with one Richardson step: (4 D(h/2) - D(h)) / 3.
double fd_component(std::vector<double> alpha, std::size_t t, double lambda, std::size_t j) {
  auto central = [&](double h) {
    const double keep = alpha[j];
    alpha[j] = keep + h;
    const double up = oracle_loss(alpha, t, lambda);
    alpha[j] = keep - h;
    const double down = oracle_loss(alpha, t, lambda);
    alpha[j] = keep;
    return (up - down) / (2 * h);
  };
  const double h = 1e-3 * alpha[j];
  return (4.0 * central(h / 2) - central(h)) / 3.0;
}

TEST(SampleLossGrad, MatchesFiniteDifferences) {
  std::mt19937_64 gen(123);
  std::uniform_real_distribution<double> av(1.0, 50.0);
  std::uniform_real_distribution<double> lv(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 2 + gen() % 9;
    std::vector<double> alpha(k);
    for (auto& v : alpha) v = av(gen);
    const OneHotLabel y(gen() % k, k);
    const double lambda = lv(gen);
    const auto g = tmc::sample_loss_grad(DirichletParams(alpha), y, lambda);
    for (std::size_t j = 0; j < k; ++j) {
      const double fd = fd_component(alpha, y.index(), lambda, j);
      ASSERT_LE(std::abs(g[j] - fd), 1e-5 * std::max(std::abs(fd), 1e-3)) << "j=" << j << " g=" << g[j] << " fd=" << fd;
    }
  }
}

TEST(SampleLossGrad, GroundTruthEvidenceLowersNll) {
  for (std::size_t k = 2; k <= 10; ++k) {
    const std::vector<double> ones(k, 1.0);
    for (std::size_t t = 0; t < k; ++t) {
      EXPECT_LT(tmc::sample_loss_grad(DirichletParams(ones), OneHotLabel(t, k), 0.0)[t], 0.0);
      auto bumped = ones;
      bumped[t] += 1e-3;
      EXPECT_LT(tmc::expected_nll(DirichletParams(bumped), OneHotLabel(t, k)),
                tmc::expected_nll(DirichletParams(ones), OneHotLabel(t, k)));
    }
  }
}

TEST(LossProperty, KlNonNegativeAndPermutationInvariance) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> av(1.0, 100.0);
  for (int i = 0; i < 5000; ++i) {
    const std::size_t k = 2 + gen() % 8;
    std::vector<double> a(k);
    for (auto& v : a) v = av(gen);
    ASSERT_GE(tmc::kl_to_uniform(AdjustedParams(a)), 0.0);

    const std::size_t t = gen() % k;
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<double> pa(k);
    std::size_t pt = 0;
    for (std::size_t j = 0; j < k; ++j) {
      pa[j] = a[perm[j]];
      if (perm[j] == t) pt = j;
    }
    ASSERT_NEAR(tmc::expected_nll(DirichletParams(a), OneHotLabel(t, k)),
                tmc::expected_nll(DirichletParams(pa), OneHotLabel(pt, k)), 1e-12);
  }
}

TEST(LossProperty, DescendsAlongNegativeGradient) {
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> av(1.5, 40.0);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t k = 2 + gen() % 6;
    std::vector<double> a(k);
    for (auto& v : a) v = av(gen);
    const OneHotLabel y(gen() % k, k);
    const double lambda = static_cast<double>(gen() % 5) / 4.0;
    const auto g = tmc::sample_loss_grad(DirichletParams(a), y, lambda);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    if (norm < 1e-20) continue;
    const double step = 1e-4 / std::sqrt(norm);
    auto b = a;
    for (std::size_t j = 0; j < k; ++j) b[j] = std::max(1.0, a[j] - step * g[j]);
    ASSERT_LT(tmc::sample_loss(DirichletParams(b), y, lambda), tmc::sample_loss(DirichletParams(a), y, lambda));
  }
}

}  // namespace
