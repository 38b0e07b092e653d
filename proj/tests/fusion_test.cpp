#include "tmc/fusion.hpp"

#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace {

using tmc::SubjectiveOpinion;
using tmc::testing::max_abs_diff;
using tmc::testing::normalization_error;
using tmc::testing::oracle_combine;
using tmc::testing::random_opinion;
using tmc::testing::random_opinion_mixed;

const SubjectiveOpinion kFirst({0.6, 0.2}, 0.2);
const SubjectiveOpinion kSecond({0.7, 0.1}, 0.2);

TEST(Combine, WorkedExample) {
  EXPECT_NEAR(tmc::conflict(kFirst, kSecond), 0.2, 1e-15);
  const auto fused = tmc::combine(kFirst, kSecond);
  EXPECT_NEAR(fused.belief(0), 0.85, 1e-12);
  EXPECT_NEAR(fused.belief(1), 0.10, 1e-12);
  EXPECT_NEAR(fused.uncertainty(), 0.05, 1e-12);
}

TEST(Combine, VacuousIsIdentity) {
  const auto vac = SubjectiveOpinion::vacuous(2);
  EXPECT_LE(max_abs_diff(tmc::combine(kFirst, vac), kFirst), 1e-12);
  EXPECT_LE(max_abs_diff(tmc::combine(vac, kFirst), kFirst), 1e-12);
  const auto both = tmc::combine(vac, vac);
  EXPECT_EQ(both.uncertainty(), 1.0);
}

TEST(Combine, ConflictingEvidenceRaisesUncertainty) {
  const double eps = 1e-3;
  const SubjectiveOpinion a({1 - eps, 0.0}, eps);
  const SubjectiveOpinion b({0.0, 1 - eps}, eps);
  const auto oracle = oracle_combine(a.belief(), a.uncertainty(), b.belief(), b.uncertainty());
  EXPECT_NEAR(oracle.conflict, (1 - eps) * (1 - eps), 1e-15);
  const auto fused = tmc::combine(a, b);
  EXPECT_NEAR(fused.uncertainty(), oracle.uncertainty, 1e-12);
  EXPECT_NEAR(fused.uncertainty(), eps / (2 - eps), 1e-12);
  // Normalization lifts u far above the raw product u1 u2.
  EXPECT_GT(fused.uncertainty(), 100.0 * eps * eps);
  EXPECT_NEAR(fused.belief(0), fused.belief(1), 1e-15);
}

TEST(Combine, TotalConflictIsAnError) {
  const SubjectiveOpinion a({1.0, 0.0}, 0.0);
  const SubjectiveOpinion b({0.0, 1.0}, 0.0);
  EXPECT_THROW(tmc::combine(a, b), tmc::ConflictError);
  const std::vector<SubjectiveOpinion> list{a, b};
  EXPECT_THROW(tmc::combine_all(list), tmc::ConflictError);
}

TEST(Combine, MismatchedClassCountRejected) {
  EXPECT_THROW(tmc::combine(kFirst, SubjectiveOpinion::vacuous(3)), tmc::InvalidArgument);
}

TEST(CombineAll, FoldCases) {
  std::vector<SubjectiveOpinion> one{kFirst};
  EXPECT_LE(max_abs_diff(tmc::combine_all(one), kFirst), 0.0);

  std::vector<SubjectiveOpinion> padded{kFirst, SubjectiveOpinion::vacuous(2), SubjectiveOpinion::vacuous(2)};
  EXPECT_LE(max_abs_diff(tmc::combine_all(padded), kFirst), 1e-12);

  EXPECT_THROW(tmc::combine_all(std::vector<SubjectiveOpinion>{}), tmc::InvalidArgument);

  std::mt19937_64 gen(1);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_opinion(gen, 4);
    const auto b = random_opinion(gen, 4);
    const auto c = random_opinion(gen, 4);
    const std::vector<SubjectiveOpinion> abc{a, b, c};
    const auto left = tmc::combine_all(abc);
    const auto right = tmc::combine(a, tmc::combine(b, c));
    ASSERT_LE(max_abs_diff(left, right), 1e-9);
  }
}

TEST(PropAccuracyGain, Cases) {
  // Added opinion backs class 0 at least as strongly as the original's top belief.
  const auto w = tmc::check_prop_accuracy_gain(kFirst, kSecond, 0);
  EXPECT_TRUE(w.holds);
  EXPECT_NEAR(w.fused_belief, 0.85, 1e-12);
  EXPECT_DOUBLE_EQ(w.original_belief, 0.6);
  EXPECT_THROW(tmc::check_prop_accuracy_gain(kFirst, SubjectiveOpinion::vacuous(2), 0), tmc::InvalidArgument);
}

TEST(PropDegradationBound, Cases) {
  const auto vac = SubjectiveOpinion::vacuous(2);
  const auto w = tmc::check_prop_degradation_bound(kFirst, vac, 0);
  EXPECT_NEAR(w.degradation, 0.0, 1e-15);
  EXPECT_EQ(w.bound, 0.0);
  EXPECT_TRUE(w.holds);

  // Self-fusion sharpens the dominant belief.
  std::mt19937_64 gen(2);
  for (int i = 0; i < 2000; ++i) {
    const auto o = random_opinion(gen, 3);
    const auto t = tmc::argmax(o.belief());
    const auto s = tmc::check_prop_degradation_bound(o, o, t);
    ASSERT_LE(s.degradation, 1e-12);
    ASSERT_TRUE(s.holds);
  }
}

TEST(PropUncertainty, Cases) {
  const auto vac = SubjectiveOpinion::vacuous(3);
  const auto v = tmc::check_prop_uncertainty(vac, vac);
  EXPECT_EQ(v.fused_uncertainty, 1.0);
  EXPECT_TRUE(v.holds());

  const auto w = tmc::check_prop_uncertainty(kFirst, kSecond);
  EXPECT_NEAR(w.fused_uncertainty, 0.05, 1e-12);
  EXPECT_TRUE(w.below_min);
  EXPECT_TRUE(w.monotone);
  EXPECT_GT(w.raised_fused_uncertainty, w.fused_uncertainty);
}

// Property suites over 10^5 random draws each.

constexpr int kDraws = 100000;

TEST(FusionProperty, AlgebraicLaws) {
  std::mt19937_64 gen(42);
  for (int i = 0; i < kDraws; ++i) {
    const std::size_t k = 2 + gen() % 7;
    const auto a = random_opinion_mixed(gen, k);
    const auto b = random_opinion_mixed(gen, k);
    const auto ab = tmc::combine(a, b);
    const auto ba = tmc::combine(b, a);
    ASSERT_LE(max_abs_diff(ab, ba), 1e-12);
    ASSERT_LE(normalization_error(ab), 1e-9);
    ASSERT_LE(max_abs_diff(tmc::combine(a, tmc::SubjectiveOpinion::vacuous(k)), a), 1e-12);

    const auto oracle = oracle_combine(a.belief(), a.uncertainty(), b.belief(), b.uncertainty());
    ASSERT_NEAR(ab.uncertainty(), oracle.uncertainty, 1e-9);

    const auto c = random_opinion_mixed(gen, k);
    if (1.0 - tmc::conflict(ab, c) < 1e-3 || 1.0 - tmc::conflict(a, b) < 1e-3 ||
        1.0 - tmc::conflict(b, c) < 1e-3 || 1.0 - tmc::conflict(a, tmc::combine(b, c)) < 1e-3) {
      continue;
    }
    ASSERT_LE(max_abs_diff(tmc::combine(ab, c), tmc::combine(a, tmc::combine(b, c))), 1e-9);
  }
}

TEST(FusionProperty, Propositions) {
  std::mt19937_64 gen(43);
  int gain_checked = 0;
  for (int i = 0; i < kDraws; ++i) {
    const std::size_t k = 2 + gen() % 7;
    const auto o = random_opinion_mixed(gen, k);
    const auto a = random_opinion_mixed(gen, k);
    const std::size_t t = gen() % k;

    const auto d = tmc::check_prop_degradation_bound(o, a, t);
    ASSERT_TRUE(d.holds) << d.degradation << " > " << d.bound;
    ASSERT_TRUE(tmc::check_prop_uncertainty(o, a).holds());

    const std::size_t top = tmc::argmax(a.belief());
    if (a.belief(top) >= o.max_belief()) {
      ASSERT_TRUE(tmc::check_prop_accuracy_gain(o, a, top).holds);
      ++gain_checked;
    }
  }
  EXPECT_GT(gain_checked, kDraws / 10);
}

TEST(FusionBackward, MatchesFiniteDifferences) {
  // Loss = w . b + v u on the fused masses; perturb each input mass freely.
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + gen() % 4;
    auto m1 = tmc::fusion::to_masses(random_opinion(gen, k));
    auto m2 = tmc::fusion::to_masses(random_opinion(gen, k));
    tmc::fusion::Masses g_out;
    g_out.belief.resize(k);
    for (auto& v : g_out.belief) v = coef(gen);
    g_out.uncertainty = coef(gen);
    auto loss = [&](const tmc::fusion::Masses& x, const tmc::fusion::Masses& y) {
      const auto f = tmc::fusion::combine(x, y);
      double l = g_out.uncertainty * f.uncertainty;
      for (std::size_t j = 0; j < k; ++j) l += g_out.belief[j] * f.belief[j];
      return l;
    };
    double d = 0.0;
    const auto fused = tmc::fusion::combine(m1, m2, &d);
    const auto g = tmc::fusion::combine_backward(m1, m2, fused, d, g_out);
    const double h = 1e-6;
    auto check = [&](double& slot, double analytic) {
      const double keep = slot;
      slot = keep + h;
      const double up = loss(m1, m2);
      slot = keep - h;
      const double down = loss(m1, m2);
      slot = keep;
      EXPECT_NEAR(analytic, (up - down) / (2 * h), 1e-6 * std::max(1.0, std::abs(analytic)));
    };
    for (std::size_t j = 0; j < k; ++j) {
      check(m1.belief[j], g.lhs.belief[j]);
      check(m2.belief[j], g.rhs.belief[j]);
    }
    check(m1.uncertainty, g.lhs.uncertainty);
    check(m2.uncertainty, g.rhs.uncertainty);
  }
}

}  // namespace
