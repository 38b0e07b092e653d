#pragma once

// Dirichlet concentration parameters, subjective opinions, and the
// conversions between them.
//
//   opinion from Dirichlet:  S = sum alpha_k,  b_k = (alpha_k - 1) / S,  u = K / S
//   Dirichlet from opinion:  S = K / u,  e_k = b_k S,  alpha_k = e_k + 1

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmc/error.hpp"

namespace tmc {

/// Tolerance on u + sum b_k = 1.
inline constexpr double kNormalizationTolerance = 1e-9;

class DirichletParams {
 public:
  /// Requires K >= 2 and every alpha_k >= 1 (finite). Values below 1 are an
  /// error, never clamped.
  explicit DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
    if (alpha_.size() < 2) throw InvalidArgument("DirichletParams: need K >= 2 classes");
    for (std::size_t k = 0; k < alpha_.size(); ++k) {
      if (!std::isfinite(alpha_[k]) || alpha_[k] < 1.0) {
        throw InvalidArgument("DirichletParams: alpha[" + std::to_string(k) +
                              "] = " + std::to_string(alpha_[k]) + " violates alpha >= 1");
      }
    }
    strength_ = std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
  }

  static DirichletParams from_evidence(std::span<const double> evidence) {
    std::vector<double> alpha(evidence.begin(), evidence.end());
    for (double& a : alpha) a += 1.0;
    return DirichletParams(std::move(alpha));
  }

  std::size_t num_classes() const noexcept { return alpha_.size(); }
  const std::vector<double>& alpha() const noexcept { return alpha_; }
  double operator[](std::size_t k) const { return alpha_[k]; }
  double strength() const noexcept { return strength_; }

  std::vector<double> evidence() const {
    std::vector<double> e(alpha_);
    for (double& v : e) v -= 1.0;
    return e;
  }

 private:
  std::vector<double> alpha_;
  double strength_ = 0.0;
};

/// Belief masses b_k plus an uncertainty mass u with u + sum b_k = 1.
///
/// u = 0 (a dogmatic opinion) is representable so that fully conflicting
/// inputs can reach combine() and be rejected there; it has no Dirichlet
/// counterpart.
class SubjectiveOpinion {
 public:
  SubjectiveOpinion(std::vector<double> belief, double uncertainty)
      : belief_(std::move(belief)), uncertainty_(uncertainty) {
    if (belief_.size() < 2) throw InvalidArgument("SubjectiveOpinion: need K >= 2 classes");
    double total = uncertainty_;
    for (double b : belief_) {
      if (!std::isfinite(b) || b < 0.0) {
        throw InvalidArgument("SubjectiveOpinion: belief masses must be finite and >= 0");
      }
      total += b;
    }
    if (!std::isfinite(uncertainty_) || uncertainty_ < 0.0 || uncertainty_ > 1.0) {
      throw InvalidArgument("SubjectiveOpinion: uncertainty must lie in [0, 1]");
    }
    if (std::abs(total - 1.0) > kNormalizationTolerance) {
      throw InvalidArgument("SubjectiveOpinion: u + sum(b) = " + std::to_string(total) +
                            ", expected 1");
    }
  }

  static SubjectiveOpinion vacuous(std::size_t num_classes) {
    return SubjectiveOpinion(std::vector<double>(num_classes, 0.0), 1.0);
  }

  std::size_t num_classes() const noexcept { return belief_.size(); }
  const std::vector<double>& belief() const noexcept { return belief_; }
  double belief(std::size_t k) const { return belief_[k]; }
  double uncertainty() const noexcept { return uncertainty_; }

  /// Largest belief mass.
  double max_belief() const {
    double m = 0.0;
    for (double b : belief_) m = std::max(m, b);
    return m;
  }

 private:
  std::vector<double> belief_;
  double uncertainty_;
};

inline SubjectiveOpinion opinion_from_dirichlet(const DirichletParams& d) {
  const double s = d.strength();
  std::vector<double> belief(d.num_classes());
  for (std::size_t k = 0; k < belief.size(); ++k) belief[k] = (d[k] - 1.0) / s;
  return SubjectiveOpinion(std::move(belief), static_cast<double>(d.num_classes()) / s);
}

inline DirichletParams dirichlet_from_opinion(const SubjectiveOpinion& o) {
  if (o.uncertainty() <= 0.0) {
    throw InvalidArgument("dirichlet_from_opinion: u = 0 implies infinite Dirichlet strength");
  }
  const double s = static_cast<double>(o.num_classes()) / o.uncertainty();
  std::vector<double> alpha(o.num_classes());
  for (std::size_t k = 0; k < alpha.size(); ++k) alpha[k] = o.belief(k) * s + 1.0;
  return DirichletParams(std::move(alpha));
}

/// Mean of the Dirichlet, alpha_k / S.
inline std::vector<double> expected_probabilities(const DirichletParams& d) {
  std::vector<double> p(d.num_classes());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = d[k] / d.strength();
  return p;
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace tmc

namespace nlohmann {

// {"belief": [...], "uncertainty": u}
template <>
struct adl_serializer<tmc::SubjectiveOpinion> {
  static tmc::SubjectiveOpinion from_json(const json& j) {
    if (!j.is_object() || !j.contains("belief") || !j.contains("uncertainty")) {
      throw tmc::InvalidArgument(R"(opinion JSON must be {"belief": [...], "uncertainty": x})");
    }
    return tmc::SubjectiveOpinion(j.at("belief").get<std::vector<double>>(),
                                  j.at("uncertainty").get<double>());
  }
  static void to_json(json& j, const tmc::SubjectiveOpinion& o) {
    j = json{{"belief", o.belief()}, {"uncertainty", o.uncertainty()}};
  }
};

}  // namespace nlohmann
