#pragma once

// Variational Dirichlet objective for one predictive Dirichlet, as a loss to
// be minimized:
//
//   loss(alpha, y, lambda) = psi(S) - psi(alpha_t)
//                            + lambda * KL[Dir(alpha~) || Dir(1, ..., 1)]
//
// with alpha~ = y + (1 - y) * alpha (the target coordinate reset to 1) and
//
//   KL[Dir(a) || Dir(1)] = ln Gamma(sum a) - ln Gamma(K) - sum ln Gamma(a_k)
//                          + sum (a_k - 1) (psi(a_k) - psi(sum a)).

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "tmc/error.hpp"
#include "tmc/opinion.hpp"
#include "tmc/special.hpp"

namespace tmc {

class OneHotLabel {
 public:
  OneHotLabel(std::size_t label, std::size_t num_classes) : label_(label), k_(num_classes) {
    if (label >= num_classes) {
      throw InvalidArgument("OneHotLabel: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
  }

  std::size_t index() const noexcept { return label_; }
  std::size_t num_classes() const noexcept { return k_; }
  double operator[](std::size_t k) const { return k == label_ ? 1.0 : 0.0; }

 private:
  std::size_t label_;
  std::size_t k_;
};

/// alpha~ = y + (1 - y) * alpha. Always a valid Dirichlet with alpha~_t = 1.
class AdjustedParams {
 public:
  AdjustedParams(const DirichletParams& d, const OneHotLabel& y) : alpha_(d.alpha()) {
    alpha_[y.index()] = 1.0;
  }
  explicit AdjustedParams(std::vector<double> alpha_tilde) : alpha_(std::move(alpha_tilde)) {
    for (double a : alpha_) {
      if (!(a >= 1.0)) throw InvalidArgument("AdjustedParams: entries must be >= 1");
    }
  }
  const std::vector<double>& alpha() const noexcept { return alpha_; }

 private:
  std::vector<double> alpha_;
};

struct AnnealSchedule {
  int anneal_epochs = 50;
};

/// min(1, epoch / anneal_epochs)
inline double anneal_lambda(int epoch, const AnnealSchedule& sched) {
  if (epoch < 0) throw InvalidArgument("anneal_lambda: epoch must be >= 0");
  if (sched.anneal_epochs <= 0) throw InvalidArgument("anneal_lambda: anneal_epochs must be > 0");
  return std::min(1.0, static_cast<double>(epoch) / sched.anneal_epochs);
}

namespace detail {
inline void check_label(const DirichletParams& d, const OneHotLabel& y) {
  if (d.num_classes() != y.num_classes()) {
    throw InvalidArgument("label and Dirichlet disagree on the number of classes");
  }
}
}  // namespace detail

inline AdjustedParams adjusted_params(const DirichletParams& d, const OneHotLabel& y) {
  detail::check_label(d, y);
  return AdjustedParams(d, y);
}

/// Negated expected log-likelihood, psi(S) - psi(alpha_t) >= 0.
inline double expected_nll(const DirichletParams& d, const OneHotLabel& y) {
  detail::check_label(d, y);
  return special::digamma(d.strength()) - special::digamma(d[y.index()]);
}

/// KL divergence from Dir(alpha~) to the uniform Dirichlet Dir(1, ..., 1).
inline double kl_to_uniform(const AdjustedParams& at) {
  const auto& a = at.alpha();
  double sum = 0.0;
  for (double v : a) sum += v;
  const double psi_sum = special::digamma(sum);
  double kl = special::log_gamma(sum) - special::log_gamma(static_cast<double>(a.size()));
  for (double v : a) {
    kl -= special::log_gamma(v);
    if (v != 1.0) kl += (v - 1.0) * (special::digamma(v) - psi_sum);
  }
  // Exact zero at alpha~ = 1 is lost to rounding in the log-gamma terms.
  return std::max(kl, 0.0);
}

inline double sample_loss(const DirichletParams& d, const OneHotLabel& y, double lambda) {
  const double nll = expected_nll(d, y);
  if (lambda == 0.0) return nll;
  return nll + lambda * kl_to_uniform(adjusted_params(d, y));
}

/// Analytic d sample_loss / d alpha.
///
///   d nll / d alpha_j = psi'(S) - [j = t] psi'(alpha_t)
///   d KL  / d alpha_j = (alpha~_j - 1) psi'(alpha~_j) - (S~ - K) psi'(S~),  j != t
///
/// and zero KL gradient at j = t since alpha~_t is held at 1.
inline std::vector<double> sample_loss_grad(const DirichletParams& d, const OneHotLabel& y,
                                            double lambda) {
  detail::check_label(d, y);
  const std::size_t k_count = d.num_classes();
  const std::size_t t = y.index();
  std::vector<double> grad(k_count, special::trigamma(d.strength()));
  grad[t] -= special::trigamma(d[t]);
  if (lambda == 0.0) return grad;

  const double s_tilde = d.strength() - d[t] + 1.0;
  const double excess = s_tilde - static_cast<double>(k_count);
  const double shared = excess * special::trigamma(s_tilde);
  for (std::size_t j = 0; j < k_count; ++j) {
    if (j == t) continue;
    const double own = d[j] > 1.0 ? (d[j] - 1.0) * special::trigamma(d[j]) : 0.0;
    grad[j] += lambda * (own - shared);
  }
  return grad;
}

}  // namespace tmc
