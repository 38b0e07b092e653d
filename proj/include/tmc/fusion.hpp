#pragma once

// Reduced Dempster-Shafer combination of K-class subjective opinions.
//
//   N_k = b1_k b2_k + b1_k u2 + b2_k u1
//   D   = sum_k N_k + u1 u2            (= 1 - C for normalized inputs)
//   b_k = N_k / D,   u = u1 u2 / D
//
// where C = sum_{i != j} b1_i b2_j is the conflict. Writing the normalizer
// as the sum of retained masses keeps the output normalized to rounding
// error even when C is close to 1.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmc/error.hpp"
#include "tmc/opinion.hpp"

namespace tmc {

/// 1 - C below this is treated as total conflict.
inline constexpr double kTotalConflictThreshold = 1e-12;

/// C = sum over i != j of b1_i * b2_j.
inline double conflict(const SubjectiveOpinion& o1, const SubjectiveOpinion& o2) {
  if (o1.num_classes() != o2.num_classes()) {
    throw InvalidArgument("conflict: opinions have different class counts");
  }
  double c = 0.0;
  for (std::size_t i = 0; i < o1.num_classes(); ++i) {
    for (std::size_t j = 0; j < o2.num_classes(); ++j) {
      if (i != j) c += o1.belief(i) * o2.belief(j);
    }
  }
  return c;
}

namespace fusion {

// Unchecked masses used on the training path, where opinions are produced
// by the network and already satisfy the invariants.
struct Masses {
  std::vector<double> belief;
  double uncertainty = 1.0;
};

inline Masses to_masses(const SubjectiveOpinion& o) { return {o.belief(), o.uncertainty()}; }

/// Forward pass of the combination rule. Returns the normalizer D through
/// `normalizer` when requested.
inline Masses combine(const Masses& m1, const Masses& m2, double* normalizer = nullptr) {
  const std::size_t k_count = m1.belief.size();
  Masses out;
  out.belief.resize(k_count);
  const double u1 = m1.uncertainty;
  const double u2 = m2.uncertainty;
  double d = u1 * u2;
  for (std::size_t k = 0; k < k_count; ++k) {
    const double n = m1.belief[k] * m2.belief[k] + m1.belief[k] * u2 + m2.belief[k] * u1;
    out.belief[k] = n;
    d += n;
  }
  if (!(d > kTotalConflictThreshold)) {
    throw ConflictError("total conflict: 1 - C = " + std::to_string(d) +
                        " leaves the combination undefined");
  }
  for (double& b : out.belief) b /= d;
  out.uncertainty = u1 * u2 / d;
  if (normalizer != nullptr) *normalizer = d;
  return out;
}

/// Gradients of a scalar loss with respect to both operands of combine(),
/// given the gradient with respect to its output.
struct CombineGrad {
  Masses lhs;
  Masses rhs;
};

inline CombineGrad combine_backward(const Masses& m1, const Masses& m2, const Masses& fused,
                                    double normalizer, const Masses& grad_fused) {
  const std::size_t k_count = m1.belief.size();
  const double u1 = m1.uncertainty;
  const double u2 = m2.uncertainty;

  double s = grad_fused.uncertainty * fused.uncertainty;
  for (std::size_t k = 0; k < k_count; ++k) s += grad_fused.belief[k] * fused.belief[k];
  // d loss / d (u1 u2)
  const double g_prod = (grad_fused.uncertainty - s) / normalizer;

  CombineGrad g;
  g.lhs.belief.assign(k_count, 0.0);
  g.rhs.belief.assign(k_count, 0.0);
  g.lhs.uncertainty = g_prod * u2;
  g.rhs.uncertainty = g_prod * u1;
  for (std::size_t k = 0; k < k_count; ++k) {
    const double g_n = (grad_fused.belief[k] - s) / normalizer;
    g.lhs.belief[k] = g_n * (m2.belief[k] + u2);
    g.rhs.belief[k] = g_n * (m1.belief[k] + u1);
    g.lhs.uncertainty += g_n * m2.belief[k];
    g.rhs.uncertainty += g_n * m1.belief[k];
  }
  return g;
}

}  // namespace fusion

/// o1 (+) o2. Throws ConflictError when 1 - C <= 1e-12.
inline SubjectiveOpinion combine(const SubjectiveOpinion& o1, const SubjectiveOpinion& o2) {
  if (o1.num_classes() != o2.num_classes()) {
    throw InvalidArgument("combine: opinions have different class counts");
  }
  fusion::Masses fused = fusion::combine(fusion::to_masses(o1), fusion::to_masses(o2));
  return SubjectiveOpinion(std::move(fused.belief), fused.uncertainty);
}

/// Left fold ((o1 (+) o2) (+) o3) ... over view order.
inline SubjectiveOpinion combine_all(std::span<const SubjectiveOpinion> opinions) {
  if (opinions.empty()) throw InvalidArgument("combine_all: need at least one opinion");
  SubjectiveOpinion acc = opinions.front();
  for (std::size_t i = 1; i < opinions.size(); ++i) acc = combine(acc, opinions[i]);
  return acc;
}

// Executable forms of the combination rule's guarantees. Each returns the
// quantities involved alongside the verdict so callers can log violations.

struct AccuracyGainWitness {
  double original_belief;  // b_t of the original opinion
  double fused_belief;     // b_t after fusing the added opinion
  bool holds;
};

/// If the added opinion's belief in the target t is at least the original's
/// largest belief, fusing it cannot lower belief in t. Throws InvalidArgument
/// when that precondition is not met.
inline AccuracyGainWitness check_prop_accuracy_gain(const SubjectiveOpinion& original,
                                                    const SubjectiveOpinion& added,
                                                    std::size_t target,
                                                    double tolerance = 1e-9) {
  if (target >= original.num_classes()) throw InvalidArgument("target index out of range");
  if (added.belief(target) < original.max_belief()) {
    throw InvalidArgument("accuracy-gain precondition unmet: b_t of added opinion is below "
                          "the original's largest belief");
  }
  const double fused = combine(original, added).belief(target);
  const double before = original.belief(target);
  return {before, fused, fused >= before - tolerance};
}

struct DegradationWitness {
  double degradation;  // b_t^o - b_t
  double bound;        // b_t^o (1 + u^o) / (1 / (1 - u^a) + u^o)
  bool holds;
};

/// Measured belief loss on class t versus its closed-form bound, which
/// shrinks to zero as the added opinion's uncertainty approaches 1.
inline DegradationWitness check_prop_degradation_bound(const SubjectiveOpinion& original,
                                                       const SubjectiveOpinion& added,
                                                       std::size_t target,
                                                       double tolerance = 1e-9) {
  if (target >= original.num_classes()) throw InvalidArgument("target index out of range");
  const double bo = original.belief(target);
  const double uo = original.uncertainty();
  const double ua = added.uncertainty();
  const double degradation = bo - combine(original, added).belief(target);
  // Same value as bo (1 + uo) / (1/(1-ua) + uo), finite at ua = 1.
  const double bound = bo * (1.0 - ua) * (1.0 + uo) / (1.0 + uo - ua * uo);
  return {degradation, bound, degradation <= bound + tolerance};
}

struct UncertaintyWitness {
  double fused_uncertainty;
  double raised_fused_uncertainty;  // fused u after raising u^o with belief shape fixed
  bool below_min;                   // u <= min(u^o, u^a)
  bool monotone;                    // raising u^o did not lower fused u
  bool holds() const { return below_min && monotone; }
};

/// Fusion never increases uncertainty, and fused uncertainty grows with an
/// operand's uncertainty. The monotone part raises u^o to `raised_uncertainty`
/// (default: halfway to 1) while keeping the original's belief proportions
/// b_k / sum(b) fixed.
inline UncertaintyWitness check_prop_uncertainty(const SubjectiveOpinion& original,
                                                 const SubjectiveOpinion& added,
                                                 std::optional<double> raised_uncertainty = {},
                                                 double tolerance = 1e-9) {
  const double uo = original.uncertainty();
  const double raised = raised_uncertainty.value_or(0.5 * (1.0 + uo));
  if (raised < uo || raised > 1.0) {
    throw InvalidArgument("raised uncertainty must lie in [u^o, 1]");
  }
  const double fused_u = combine(original, added).uncertainty();

  std::vector<double> shifted(original.belief());
  const double mass = 1.0 - uo;
  for (double& b : shifted) b = mass > 0.0 ? b * (1.0 - raised) / mass : 0.0;
  // A vacuous-belief original cannot keep its shape; its raised form is vacuous.
  const SubjectiveOpinion raised_original(std::move(shifted), mass > 0.0 ? raised : 1.0);
  const double raised_u = combine(raised_original, added).uncertainty();

  const bool below = fused_u <= std::min(uo, added.uncertainty()) + tolerance;
  return {fused_u, raised_u, below, raised_u >= fused_u - tolerance};
}

}  // namespace tmc
