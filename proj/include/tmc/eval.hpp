#pragma once

// Uncertainty-aware evaluation over per-sample prediction records.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmc/data.hpp"
#include "tmc/error.hpp"
#include "tmc/model.hpp"

namespace tmc {

struct Record {
  int truth = 0;
  int predicted = 0;
  double uncertainty = 1.0;           // fused u
  std::vector<double> belief;         // fused b_k
  std::vector<double> probabilities;  // fused Dirichlet mean
};

inline constexpr const char* kAurocDefinition =
    "macro-averaged one-vs-rest AUROC, class-k score = fused expected probability of k, "
    "ties by midrank";

inline double accuracy(std::span<const Record> records) {
  if (records.empty()) throw InvalidArgument("accuracy: no records");
  std::size_t correct = 0;
  for (const auto& r : records) correct += r.truth == r.predicted;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

/// Mann-Whitney AUROC of `scores` for the positives flagged in `positive`,
/// with tied scores sharing their mean rank.
inline double binary_auroc(std::span<const double> scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

/// Macro one-vs-rest AUROC on the fused expected probabilities. Classes with
/// no positive (or no negative) sample are skipped and reported in `warnings`.
inline double auroc(std::span<const Record> records, std::vector<std::string>* warnings = nullptr) {
  if (records.empty()) throw InvalidArgument("auroc: no records");
  const std::size_t k_count = records.front().probabilities.size();
  double sum = 0.0;
  int used = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    std::vector<double> scores;
    std::vector<bool> positive;
    std::size_t pos = 0;
    for (const auto& r : records) {
      scores.push_back(r.probabilities.at(k));
      positive.push_back(r.truth == static_cast<int>(k));
      pos += positive.back();
    }
    if (pos == 0 || pos == records.size()) {
      if (warnings != nullptr) {
        warnings->push_back("class " + std::to_string(k) +
                            (pos == 0 ? " absent from truth" : " is the only class present") +
                            "; excluded from macro AUROC");
      }
      continue;
    }
    sum += binary_auroc(scores, positive);
    ++used;
  }
  if (used == 0) throw InvalidArgument("auroc: need at least two classes present in the truth");
  return sum / used;
}

struct ThresholdPoint {
  double tau;
  double coverage;
  std::optional<double> accuracy;  // empty when nothing is retained
};

/// Keeps samples with u <= tau for each tau of an ascending grid.
inline std::vector<ThresholdPoint> threshold_curve(std::span<const Record> records,
                                                   std::span<const double> grid) {
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw InvalidArgument("threshold_curve: grid must be sorted ascending");
  }
  std::vector<ThresholdPoint> out;
  for (double tau : grid) {
    std::size_t kept = 0;
    std::size_t correct = 0;
    for (const auto& r : records) {
      if (r.uncertainty <= tau) {
        ++kept;
        correct += r.truth == r.predicted;
      }
    }
    ThresholdPoint p{tau, records.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(records.size()),
                     std::nullopt};
    if (kept > 0) p.accuracy = static_cast<double>(correct) / static_cast<double>(kept);
    out.push_back(p);
  }
  return out;
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 1]
  std::vector<std::size_t> counts;
};

inline Histogram uncertainty_density(std::span<const Record> records, int bins) {
  if (bins < 2) throw InvalidArgument("uncertainty_density: need at least 2 bins");
  Histogram h;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(static_cast<double>(i) / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (const auto& r : records) {
    auto idx = static_cast<long>(std::floor(r.uncertainty * bins));
    idx = std::clamp(idx, 0L, static_cast<long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  return h;
}

/// Confusion matrix with an extra "uncertain" column for samples whose
/// uncertainty exceeds their largest belief mass.
struct SubjectiveConfusion {
  int num_classes = 0;
  // num_classes rows x (num_classes + 1) columns; last column is "uncertain".
  std::vector<std::vector<std::size_t>> counts;
  std::vector<std::vector<double>> proportions;  // rows of absent classes stay zero
  double overall_misclassification = 0.0;
  double retained_misclassification = 0.0;  // over non-uncertain samples; 0 if none retained
  std::size_t retained = 0;
};

inline bool is_uncertain(const Record& r) {
  double max_b = 0.0;
  for (double b : r.belief) max_b = std::max(max_b, b);
  return r.uncertainty > max_b;
}

inline SubjectiveConfusion subjective_confusion(std::span<const Record> records) {
  if (records.empty()) throw InvalidArgument("subjective_confusion: no records");
  SubjectiveConfusion sc;
  sc.num_classes = static_cast<int>(records.front().probabilities.size());
  const auto k = static_cast<std::size_t>(sc.num_classes);
  sc.counts.assign(k, std::vector<std::size_t>(k + 1, 0));
  std::size_t wrong = 0;
  std::size_t retained_wrong = 0;
  for (const auto& r : records) {
    const auto row = static_cast<std::size_t>(r.truth);
    wrong += r.truth != r.predicted;
    if (is_uncertain(r)) {
      ++sc.counts[row][k];
    } else {
      ++sc.counts[row][static_cast<std::size_t>(r.predicted)];
      ++sc.retained;
      retained_wrong += r.truth != r.predicted;
    }
  }
  sc.proportions.assign(k, std::vector<double>(k + 1, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t total = 0;
    for (auto c : sc.counts[i]) total += c;
    if (total == 0) continue;
    for (std::size_t j = 0; j <= k; ++j) {
      sc.proportions[i][j] = static_cast<double>(sc.counts[i][j]) / static_cast<double>(total);
    }
  }
  sc.overall_misclassification = static_cast<double>(wrong) / static_cast<double>(records.size());
  sc.retained_misclassification =
      sc.retained == 0 ? 0.0 : static_cast<double>(retained_wrong) / static_cast<double>(sc.retained);
  return sc;
}

struct EvalReport {
  double accuracy = 0.0;
  double auroc = 0.0;
  std::vector<Record> records;
  std::vector<std::string> warnings;
};

inline std::vector<Record> make_records(const std::vector<Prediction>& preds, std::span<const int> truth) {
  std::vector<Record> records;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    records.push_back({truth[i], preds[i].label, preds[i].fused.uncertainty(), preds[i].fused.belief(),
                       preds[i].probabilities});
  }
  return records;
}

inline EvalReport evaluate(const TmcModel& model, const MultiViewDataset& ds,
                           const std::optional<Matrix>& pseudo = std::nullopt) {
  EvalReport rep;
  rep.records = make_records(predict(model, make_batch(ds, pseudo)), ds.labels());
  rep.accuracy = accuracy(rep.records);
  rep.auroc = auroc(rep.records, &rep.warnings);
  return rep;
}

struct SweepRow {
  double sigma;
  double accuracy;
  double mean_uncertainty;
};

/// Re-evaluates on a freshly noised copy of `test` for each sigma. The
/// pseudo-view, if any, is rebuilt from the noised views.
inline std::vector<SweepRow> noise_sweep(const TmcModel& model, const MultiViewDataset& test,
                                         std::span<const double> sigmas, std::vector<std::size_t> views,
                                         std::uint64_t seed) {
  std::vector<SweepRow> rows;
  for (double sigma : sigmas) {
    const auto noisy = inject_noise(test, {sigma, views, seed});
    const auto records = make_records(predict(model, make_batch(noisy)), noisy.labels());
    double mean_u = 0.0;
    for (const auto& r : records) mean_u += r.uncertainty;
    rows.push_back({sigma, accuracy(records), mean_u / static_cast<double>(records.size())});
  }
  return rows;
}

// ---- serialization -------------------------------------------------------

/// Rounds to 12 significant digits so reruns serialize identically.
inline double round12(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

inline std::string format12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline nlohmann::json rounded(std::span<const double> v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(round12(x));
  return a;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["accuracy"] = round12(rep.accuracy);
  j["auroc"] = round12(rep.auroc);
  j["auroc_definition"] = kAurocDefinition;
  j["num_samples"] = rep.records.size();
  j["warnings"] = rep.warnings;
  j["records"] = nlohmann::json::array();
  for (const auto& r : rep.records) {
    j["records"].push_back({{"truth", r.truth},
                            {"predicted", r.predicted},
                            {"uncertainty", round12(r.uncertainty)},
                            {"probabilities", rounded(r.probabilities)}});
  }
  return j;
}

inline void write_threshold_csv(std::ostream& out, std::span<const ThresholdPoint> curve) {
  out << "# columns: tau,coverage,accuracy (accuracy over samples with u <= tau; null if none)\n";
  for (const auto& p : curve) {
    out << format12(p.tau) << ',' << format12(p.coverage) << ','
        << (p.accuracy ? format12(*p.accuracy) : std::string("null")) << '\n';
  }
}

inline void write_density_csv(std::ostream& out, const Histogram& h) {
  out << "# columns: bin_low,bin_high,count (fused uncertainty histogram over [0,1])\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << format12(h.edges[i]) << ',' << format12(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
  }
}

inline void write_confusion_csv(std::ostream& out, const SubjectiveConfusion& sc) {
  out << "# columns: true_class,pred_0..pred_" << sc.num_classes - 1
      << ",uncertain (row proportions; uncertain when u > max belief); overall_misclassification="
      << format12(sc.overall_misclassification)
      << " retained_misclassification=" << format12(sc.retained_misclassification) << '\n';
  for (int i = 0; i < sc.num_classes; ++i) {
    out << i;
    for (double p : sc.proportions[static_cast<std::size_t>(i)]) out << ',' << format12(p);
    out << '\n';
  }
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "# columns: sigma,accuracy,mean_uncertainty\n";
  for (const auto& r : rows) {
    out << format12(r.sigma) << ',' << format12(r.accuracy) << ',' << format12(r.mean_uncertainty) << '\n';
  }
}

}  // namespace tmc
