#pragma once

// Shared test utilities: random opinion generators and an independent
// evaluation of the combination rule written directly from its definition.

#include <cmath>
#include <random>
#include <vector>

#include "tmc/opinion.hpp"

namespace tmc::testing {

/// Opinion drawn uniformly from the (K+1)-simplex of (b_1..b_K, u), or from
/// a flatter/peakier Dirichlet when `concentration` != 1.
inline SubjectiveOpinion random_opinion(std::mt19937_64& gen, std::size_t k, double concentration = 1.0) {
  std::gamma_distribution<double> g(concentration, 1.0);
  std::vector<double> w(k + 1);
  double total = 0.0;
  for (auto& v : w) {
    v = g(gen) + 1e-300;
    total += v;
  }
  for (auto& v : w) v /= total;
  const double u = w.back();
  w.pop_back();
  return SubjectiveOpinion(std::move(w), u);
}

/// Mixture of concentrations so draws cover near-vertex and near-vacuous opinions.
inline SubjectiveOpinion random_opinion_mixed(std::mt19937_64& gen, std::size_t k) {
  static constexpr double kConc[] = {0.1, 0.5, 1.0, 3.0};
  return random_opinion(gen, k, kConc[gen() % 4]);
}

struct OracleFusion {
  std::vector<double> belief;
  double uncertainty;
  double conflict;
};

/// b_k = (b1_k b2_k + b1_k u2 + b2_k u1) / (1 - C), u = u1 u2 / (1 - C),
/// C = sum_{i != j} b1_i b2_j.
inline OracleFusion oracle_combine(const std::vector<double>& b1, double u1, const std::vector<double>& b2,
                                   double u2) {
  double c = 0.0;
  for (std::size_t i = 0; i < b1.size(); ++i) {
    for (std::size_t j = 0; j < b2.size(); ++j) {
      if (i != j) c += b1[i] * b2[j];
    }
  }
  OracleFusion f{std::vector<double>(b1.size()), u1 * u2 / (1.0 - c), c};
  for (std::size_t k = 0; k < b1.size(); ++k) f.belief[k] = (b1[k] * b2[k] + b1[k] * u2 + b2[k] * u1) / (1.0 - c);
  return f;
}

inline double max_abs_diff(const SubjectiveOpinion& a, const SubjectiveOpinion& b) {
  double d = std::abs(a.uncertainty() - b.uncertainty());
  for (std::size_t k = 0; k < a.num_classes(); ++k) d = std::max(d, std::abs(a.belief(k) - b.belief(k)));
  return d;
}

inline double normalization_error(const SubjectiveOpinion& o) {
  double total = o.uncertainty();
  for (double b : o.belief()) total += b;
  return std::abs(total - 1.0);
}

}  // namespace tmc::testing
