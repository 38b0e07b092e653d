#pragma once

// Evidential per-view classifiers, their opinion-level fusion, and training.
//
// Each view m has a fully connected net mapping x^m to a pre-activation o^m;
// evidence is softplus(o^m) and alpha^m = evidence + 1. Opinions of all views
// (plus the concatenated pseudo-view when ETMC is enabled) are fused left to
// right and the fused opinion is turned back into a Dirichlet. Training
// minimizes, averaged over the batch,
//
//   loss(fused alpha) + sum_m loss(alpha^m) [+ loss(pseudo alpha)]
//
// with gradients propagated by hand through the fusion rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tmc/data.hpp"
#include "tmc/error.hpp"
#include "tmc/fusion.hpp"
#include "tmc/loss.hpp"
#include "tmc/opinion.hpp"
#include "tmc/rng.hpp"

namespace tmc {

enum class Activation { kRelu, kTanh };

inline std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

namespace detail {

// ln(1 + e^x) without overflow
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Gradient buffers with the same shapes as a net's layers.
struct NetGrad {
  std::vector<DenseLayer> layers;
};

class EvidentialNet {
 public:
  /// `widths` = {input, hidden..., K}. Weights and biases are drawn from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  EvidentialNet(std::vector<Eigen::Index> widths, Activation hidden, Rng& rng)
      : EvidentialNet(std::move(widths), hidden) {
    for (auto& layer : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
        layer.weight.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
      }
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
        layer.bias(i) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
  }

  /// All-zero parameters.
  EvidentialNet(std::vector<Eigen::Index> widths, Activation hidden) : hidden_(hidden) {
    if (widths.size() < 2) throw InvalidArgument("EvidentialNet: need input and output widths");
    if (widths.back() < 2) throw InvalidArgument("EvidentialNet: need at least 2 classes");
    for (auto w : widths) {
      if (w < 1) throw InvalidArgument("EvidentialNet: layer widths must be positive");
    }
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      layers_.push_back({Matrix::Zero(widths[i + 1], widths[i]), Vector::Zero(widths[i + 1])});
    }
  }

  explicit EvidentialNet(std::vector<DenseLayer> layers, Activation hidden)
      : layers_(std::move(layers)), hidden_(hidden) {
    if (layers_.empty()) throw InvalidArgument("EvidentialNet: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].bias.size() != layers_[i].weight.rows() ||
          (i > 0 && layers_[i].weight.cols() != layers_[i - 1].weight.rows())) {
        throw InvalidArgument("EvidentialNet: inconsistent layer shapes");
      }
    }
  }

  Eigen::Index input_width() const { return layers_.front().weight.cols(); }
  Eigen::Index num_classes() const { return layers_.back().weight.rows(); }
  Activation hidden_activation() const { return hidden_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::vector<Eigen::Index> widths() const {
    std::vector<Eigen::Index> w{input_width()};
    for (const auto& l : layers_) w.push_back(l.weight.rows());
    return w;
  }

  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  /// Output-layer pre-activations (B x K) for inputs x (B x input_width).
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    if (x.cols() != input_width()) {
      throw InvalidArgument("EvidentialNet: input width " + std::to_string(x.cols()) +
                            " does not match net width " + std::to_string(input_width()));
    }
    if (cache != nullptr) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = h * layers_[i].weight.transpose();
      z.rowwise() += layers_[i].bias.transpose();
      if (cache != nullptr) {
        cache->inputs.push_back(h);
        cache->pre.push_back(z);
      }
      if (i + 1 == layers_.size()) return z;
      h = hidden_ == Activation::kRelu ? Matrix(z.cwiseMax(0.0)) : Matrix(z.array().tanh());
    }
    return h;  // unreachable
  }

  /// alpha = softplus(o) + 1, one row per sample.
  Matrix alpha(const Matrix& x) const { return alpha_from_output(forward(x)); }

  static Matrix alpha_from_output(const Matrix& o) {
    return o.unaryExpr([](double v) { return detail::softplus(v) + 1.0; });
  }

  /// Accumulates parameter gradients into `grad` given d loss / d output.
  void backward(const Cache& cache, Matrix grad_out, NetGrad& grad) const {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      grad.layers[i].weight.noalias() += grad_out.transpose() * cache.inputs[i];
      grad.layers[i].bias += grad_out.colwise().sum().transpose();
      if (i == 0) break;
      Matrix g_in = grad_out * layers_[i].weight;
      const Matrix& z = cache.pre[i - 1];
      if (hidden_ == Activation::kRelu) {
        g_in = (z.array() > 0.0).select(g_in, 0.0);
      } else {
        g_in.array() *= 1.0 - z.array().tanh().square();
      }
      grad_out = std::move(g_in);
    }
  }

  NetGrad zero_grad() const {
    NetGrad g;
    for (const auto& l : layers_) {
      g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    return g;
  }

 private:
  std::vector<DenseLayer> layers_;
  Activation hidden_ = Activation::kRelu;
};

/// Dirichlet of a single input vector.
inline DirichletParams forward_view(const EvidentialNet& net, std::span<const double> x) {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), row.data());
  const Matrix a = net.alpha(row);
  return DirichletParams(std::vector<double>(a.data(), a.data() + a.size()));
}

/// Default hidden width: max(64, input / 2).
inline Eigen::Index default_hidden_width(Eigen::Index input) { return std::max<Eigen::Index>(64, input / 2); }

struct ModelShape {
  std::vector<Eigen::Index> view_widths;
  int num_classes = 2;
  bool etmc = false;
  // Hidden layer widths per net; empty means one layer of default_hidden_width.
  std::optional<std::vector<Eigen::Index>> hidden;
  Activation activation = Activation::kRelu;
};

class TmcModel {
 public:
  TmcModel(std::vector<EvidentialNet> views, std::optional<EvidentialNet> pseudo)
      : views_(std::move(views)), pseudo_(std::move(pseudo)) {
    if (views_.empty()) throw InvalidArgument("TmcModel: need at least one view");
    const auto k = views_.front().num_classes();
    Eigen::Index total_width = 0;
    for (const auto& n : views_) {
      if (n.num_classes() != k) throw InvalidArgument("TmcModel: nets disagree on K");
      total_width += n.input_width();
    }
    if (pseudo_) {
      if (pseudo_->num_classes() != k) throw InvalidArgument("TmcModel: pseudo net disagrees on K");
      if (pseudo_->input_width() != total_width) {
        throw InvalidArgument("TmcModel: pseudo-view width must equal the sum of view widths");
      }
    }
  }

  static TmcModel create(const ModelShape& shape, std::uint64_t seed) {
    Rng rng(seed);
    auto make = [&](Eigen::Index input) {
      std::vector<Eigen::Index> widths{input};
      if (shape.hidden) {
        widths.insert(widths.end(), shape.hidden->begin(), shape.hidden->end());
      } else {
        widths.push_back(default_hidden_width(input));
      }
      widths.push_back(shape.num_classes);
      return EvidentialNet(widths, shape.activation, rng);
    };
    std::vector<EvidentialNet> nets;
    Eigen::Index total = 0;
    for (auto w : shape.view_widths) {
      nets.push_back(make(w));
      total += w;
    }
    std::optional<EvidentialNet> pseudo;
    if (shape.etmc) pseudo = make(total);
    return TmcModel(std::move(nets), std::move(pseudo));
  }

  std::size_t num_views() const { return views_.size(); }
  int num_classes() const { return static_cast<int>(views_.front().num_classes()); }
  bool etmc() const { return pseudo_.has_value(); }
  std::size_t num_nets() const { return views_.size() + (pseudo_ ? 1 : 0); }

  const EvidentialNet& view_net(std::size_t m) const { return views_.at(m); }
  EvidentialNet& view_net(std::size_t m) { return views_.at(m); }
  const std::optional<EvidentialNet>& pseudo_net() const { return pseudo_; }

  /// Views first, then the pseudo-view net.
  const EvidentialNet& net(std::size_t i) const { return i < views_.size() ? views_[i] : *pseudo_; }
  EvidentialNet& net(std::size_t i) { return i < views_.size() ? views_[i] : *pseudo_; }

  std::vector<Eigen::Index> view_widths() const {
    std::vector<Eigen::Index> w;
    for (const auto& n : views_) w.push_back(n.input_width());
    return w;
  }

 private:
  std::vector<EvidentialNet> views_;
  std::optional<EvidentialNet> pseudo_;
};

struct ModelGrad {
  std::vector<NetGrad> nets;  // same order as TmcModel::net(i)
};

/// Inputs for a batch: one matrix per view. The pseudo-view input is the
/// concatenation of the views unless a precomputed matrix is supplied.
struct Batch {
  std::vector<Matrix> views;
  std::optional<Matrix> pseudo;
  std::vector<int> labels;
};

inline Batch make_batch(const MultiViewDataset& ds, std::span<const std::size_t> rows,
                        const std::optional<Matrix>& pseudo = std::nullopt) {
  Batch b;
  for (const auto& v : ds.views()) {
    Matrix sub(static_cast<Eigen::Index>(rows.size()), v.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) = v.row(static_cast<Eigen::Index>(rows[r]));
    }
    b.views.push_back(std::move(sub));
  }
  if (pseudo) {
    Matrix sub(static_cast<Eigen::Index>(rows.size()), pseudo->cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) = pseudo->row(static_cast<Eigen::Index>(rows[r]));
    }
    b.pseudo = std::move(sub);
  }
  for (auto r : rows) b.labels.push_back(ds.label(r));
  return b;
}

inline Batch make_batch(const MultiViewDataset& ds, const std::optional<Matrix>& pseudo = std::nullopt) {
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return make_batch(ds, rows, pseudo);
}

namespace detail {

inline Matrix concatenate(const std::vector<Matrix>& views) {
  Eigen::Index width = 0;
  for (const auto& v : views) width += v.cols();
  Matrix out(views.front().rows(), width);
  Eigen::Index col = 0;
  for (const auto& v : views) {
    out.middleCols(col, v.cols()) = v;
    col += v.cols();
  }
  return out;
}

inline fusion::Masses masses_from_alpha(const double* alpha, std::size_t k_count) {
  fusion::Masses m;
  m.belief.resize(k_count);
  double s = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) s += alpha[k];
  for (std::size_t k = 0; k < k_count; ++k) m.belief[k] = (alpha[k] - 1.0) / s;
  m.uncertainty = static_cast<double>(k_count) / s;
  return m;
}

inline std::vector<double> alpha_from_masses(const fusion::Masses& m) {
  const double s = static_cast<double>(m.belief.size()) / m.uncertainty;
  std::vector<double> alpha(m.belief.size());
  for (std::size_t k = 0; k < alpha.size(); ++k) alpha[k] = m.belief[k] * s + 1.0;
  return alpha;
}

// Row-major (B x K) alpha rows as spans.
inline std::span<const double> row(const Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace detail

/// Everything computed on the way from inputs to fused Dirichlets for a batch.
struct BatchForward {
  std::vector<EvidentialNet::Cache> caches;  // per net
  std::vector<Matrix> outputs;               // per net, B x K pre-activations
  std::vector<Matrix> alphas;                // per net, B x K
  // Per sample: opinion of each active net, then fold accumulators.
  std::vector<std::vector<fusion::Masses>> opinions;
  std::vector<std::vector<fusion::Masses>> partials;  // partials[i][j] = fold after j+1 combines
  std::vector<std::vector<double>> normalizers;
  Matrix fused_alpha;  // B x K
  std::vector<std::size_t> active;  // indices of nets taking part in fusion
};

/// `active_views` restricts fusion to a subset of nets (indices as in
/// TmcModel::net); default is all nets.
inline BatchForward forward_batch(const TmcModel& model, const Batch& batch, bool keep_cache,
                                  std::optional<std::vector<std::size_t>> active_views = std::nullopt) {
  if (batch.views.size() != model.num_views()) {
    throw InvalidArgument("batch has " + std::to_string(batch.views.size()) + " views, model expects " +
                          std::to_string(model.num_views()));
  }
  const auto k_count = static_cast<std::size_t>(model.num_classes());
  BatchForward f;
  f.caches.resize(model.num_nets());
  for (std::size_t i = 0; i < model.num_nets(); ++i) {
    Matrix input;
    const Matrix* x = nullptr;
    if (i < model.num_views()) {
      x = &batch.views[i];
    } else if (batch.pseudo) {
      x = &*batch.pseudo;
    } else {
      input = detail::concatenate(batch.views);
      x = &input;
    }
    f.outputs.push_back(model.net(i).forward(*x, keep_cache ? &f.caches[i] : nullptr));
    f.alphas.push_back(EvidentialNet::alpha_from_output(f.outputs.back()));
  }
  if (active_views) {
    f.active = *active_views;
  } else {
    for (std::size_t i = 0; i < model.num_nets(); ++i) f.active.push_back(i);
  }
  if (f.active.empty()) throw InvalidArgument("forward_batch: no active views");

  const Eigen::Index rows = batch.views.front().rows();
  f.fused_alpha.resize(rows, static_cast<Eigen::Index>(k_count));
  f.opinions.resize(static_cast<std::size_t>(rows));
  f.partials.resize(static_cast<std::size_t>(rows));
  f.normalizers.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    auto& ops = f.opinions[static_cast<std::size_t>(r)];
    for (auto i : f.active) {
      ops.push_back(detail::masses_from_alpha(f.alphas[i].data() + r * f.alphas[i].cols(), k_count));
    }
    auto& partial = f.partials[static_cast<std::size_t>(r)];
    auto& norm = f.normalizers[static_cast<std::size_t>(r)];
    fusion::Masses acc = ops.front();
    for (std::size_t j = 1; j < ops.size(); ++j) {
      double d = 0.0;
      acc = fusion::combine(acc, ops[j], &d);
      partial.push_back(acc);
      norm.push_back(d);
    }
    const auto alpha = detail::alpha_from_masses(acc);
    std::copy(alpha.begin(), alpha.end(), f.fused_alpha.data() + r * f.fused_alpha.cols());
  }
  return f;
}

struct FusedOutput {
  std::vector<SubjectiveOpinion> view_opinions;  // per active net
  SubjectiveOpinion fused;
  DirichletParams fused_dirichlet;
};

/// Opinions for a single sample given one feature vector per view.
inline FusedOutput forward_fused(const TmcModel& model, const std::vector<std::vector<double>>& xs) {
  if (xs.size() != model.num_views()) throw InvalidArgument("forward_fused: wrong number of views");
  Batch b;
  for (const auto& x : xs) {
    Matrix row(1, static_cast<Eigen::Index>(x.size()));
    std::copy(x.begin(), x.end(), row.data());
    b.views.push_back(std::move(row));
  }
  const auto f = forward_batch(model, b, false);
  std::vector<SubjectiveOpinion> ops;
  for (auto i : f.active) {
    ops.push_back(opinion_from_dirichlet(DirichletParams(
        std::vector<double>(f.alphas[i].data(), f.alphas[i].data() + f.alphas[i].size()))));
  }
  SubjectiveOpinion fused = combine_all(ops);
  DirichletParams dir = dirichlet_from_opinion(fused);
  return {std::move(ops), std::move(fused), std::move(dir)};
}

namespace detail {

inline double loss_row(std::span<const double> alpha, int label, double lambda) {
  return sample_loss(DirichletParams(std::vector<double>(alpha.begin(), alpha.end())),
                     OneHotLabel(static_cast<std::size_t>(label), alpha.size()), lambda);
}

}  // namespace detail

/// Mean over the batch of fused loss + per-net losses.
inline double batch_loss(const TmcModel& model, const Batch& batch, double lambda) {
  const auto f = forward_batch(model, batch, false);
  const Eigen::Index rows = f.fused_alpha.rows();
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int y = batch.labels.at(static_cast<std::size_t>(r));
    double sample = detail::loss_row(detail::row(f.fused_alpha, r), y, lambda);
    for (std::size_t i = 0; i < model.num_nets(); ++i) {
      sample += detail::loss_row(detail::row(f.alphas[i], r), y, lambda);
    }
    total += sample;
  }
  return total / static_cast<double>(rows);
}

struct LossAndGrad {
  double loss = 0.0;
  ModelGrad grad;
};

inline LossAndGrad batch_loss_and_grad(const TmcModel& model, const Batch& batch, double lambda) {
  const auto f = forward_batch(model, batch, true);
  const Eigen::Index rows = f.fused_alpha.rows();
  const auto k_count = static_cast<std::size_t>(model.num_classes());
  const double scale = 1.0 / static_cast<double>(rows);

  std::vector<Matrix> grad_alpha;
  for (std::size_t i = 0; i < model.num_nets(); ++i) {
    grad_alpha.push_back(Matrix::Zero(rows, static_cast<Eigen::Index>(k_count)));
  }

  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const int y = batch.labels.at(ri);
    const OneHotLabel label(static_cast<std::size_t>(y), k_count);

    // Per-net terms.
    for (std::size_t i = 0; i < model.num_nets(); ++i) {
      const auto a = detail::row(f.alphas[i], r);
      const DirichletParams d(std::vector<double>(a.begin(), a.end()));
      total += sample_loss(d, label, lambda);
      const auto g = sample_loss_grad(d, label, lambda);
      for (std::size_t k = 0; k < k_count; ++k) grad_alpha[i](r, static_cast<Eigen::Index>(k)) += g[k] * scale;
    }

    // Fused term, back through alpha = b K / u + 1 and the fold.
    const auto fa = detail::row(f.fused_alpha, r);
    const DirichletParams fused(std::vector<double>(fa.begin(), fa.end()));
    total += sample_loss(fused, label, lambda);
    const auto g_alpha = sample_loss_grad(fused, label, lambda);

    const auto& ops = f.opinions[ri];
    const auto& partial = f.partials[ri];
    const fusion::Masses& fused_masses = partial.empty() ? ops.front() : partial.back();
    const double u = fused_masses.uncertainty;
    const double kk = static_cast<double>(k_count);
    fusion::Masses g_acc;
    g_acc.belief.resize(k_count);
    g_acc.uncertainty = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      g_acc.belief[k] = g_alpha[k] * scale * kk / u;
      g_acc.uncertainty -= g_alpha[k] * scale * fused_masses.belief[k] * kk / (u * u);
    }
    std::vector<fusion::Masses> g_ops(ops.size());
    for (std::size_t j = ops.size() - 1; j >= 1; --j) {
      const fusion::Masses& lhs = j == 1 ? ops.front() : partial[j - 2];
      const auto g = fusion::combine_backward(lhs, ops[j], partial[j - 1], f.normalizers[ri][j - 1], g_acc);
      g_ops[j] = g.rhs;
      g_acc = g.lhs;
    }
    g_ops[0] = g_acc;

    // Masses -> alpha: d b_k / d alpha_j = ([k=j] - b_k) / S, d u / d alpha_j = -u / S.
    for (std::size_t j = 0; j < ops.size(); ++j) {
      const std::size_t net = f.active[j];
      const auto a = detail::row(f.alphas[net], r);
      double s = 0.0;
      for (double v : a) s += v;
      double shared = g_ops[j].uncertainty * ops[j].uncertainty;
      for (std::size_t k = 0; k < k_count; ++k) shared += g_ops[j].belief[k] * ops[j].belief[k];
      for (std::size_t k = 0; k < k_count; ++k) {
        grad_alpha[net](r, static_cast<Eigen::Index>(k)) += (g_ops[j].belief[k] - shared) / s;
      }
    }
  }

  LossAndGrad out;
  out.loss = total * scale;
  for (std::size_t i = 0; i < model.num_nets(); ++i) {
    // alpha = softplus(o) + 1
    Matrix g_out = grad_alpha[i].cwiseProduct(f.outputs[i].unaryExpr([](double v) { return detail::sigmoid(v); }));
    NetGrad g = model.net(i).zero_grad();
    model.net(i).backward(f.caches[i], std::move(g_out), g);
    out.grad.nets.push_back(std::move(g));
  }
  return out;
}

// Flat parameter access, in net order, layer order, weights (row-major) then bias.

inline std::vector<double> flatten_parameters(const TmcModel& model) {
  std::vector<double> flat;
  for (std::size_t i = 0; i < model.num_nets(); ++i) {
    for (const auto& l : model.net(i).layers()) {
      flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
      flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
  }
  return flat;
}

inline void assign_parameters(TmcModel& model, std::span<const double> flat) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i < model.num_nets(); ++i) {
    for (auto& l : model.net(i).layers()) {
      const auto nw = static_cast<std::size_t>(l.weight.size());
      const auto nb = static_cast<std::size_t>(l.bias.size());
      if (pos + nw + nb > flat.size()) throw InvalidArgument("assign_parameters: vector too short");
      std::copy_n(flat.begin() + static_cast<long>(pos), nw, l.weight.data());
      pos += nw;
      std::copy_n(flat.begin() + static_cast<long>(pos), nb, l.bias.data());
      pos += nb;
    }
  }
  if (pos != flat.size()) throw InvalidArgument("assign_parameters: vector too long");
}

inline std::vector<double> flatten_gradient(const ModelGrad& grad) {
  std::vector<double> flat;
  for (const auto& n : grad.nets) {
    for (const auto& l : n.layers) {
      flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
      flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
  }
  return flat;
}

struct TrainConfig {
  int epochs = 100;
  int batch_size = 200;
  double learning_rate = 3e-3;
  double weight_decay = 1e-4;
  int anneal_epochs = 50;
  std::uint64_t seed = 0;
};

/// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(const TmcModel& model, double lr, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    const auto n = flatten_parameters(model).size();
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  }

  void step(TmcModel& model, const ModelGrad& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t pos = 0;
    auto update = [&](double* param, const double* g, Eigen::Index count) {
      for (Eigen::Index i = 0; i < count; ++i, ++pos) {
        const double gi = g[i] + wd_ * param[i];
        m_[pos] = beta1_ * m_[pos] + (1.0 - beta1_) * gi;
        v_[pos] = beta2_ * v_[pos] + (1.0 - beta2_) * gi * gi;
        param[i] -= lr_ * (m_[pos] / c1) / (std::sqrt(v_[pos] / c2) + eps_);
      }
    };
    for (std::size_t i = 0; i < model.num_nets(); ++i) {
      auto& layers = model.net(i).layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& gl = grad.nets[i].layers[l];
        update(layers[l].weight.data(), gl.weight.data(), layers[l].weight.size());
        update(layers[l].bias.data(), gl.bias.data(), layers[l].bias.size());
      }
    }
  }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> epoch_lambda;
  double train_accuracy = 0.0;
};

struct Prediction {
  int label;
  SubjectiveOpinion fused;
  std::vector<double> probabilities;
};

/// Fused prediction for every row of `batch`: argmax of the fused Dirichlet
/// mean, ties to the lowest class index.
inline std::vector<Prediction> predict(const TmcModel& model, const Batch& batch,
                                       std::optional<std::vector<std::size_t>> active_views = std::nullopt) {
  const auto f = forward_batch(model, batch, false, std::move(active_views));
  std::vector<Prediction> out;
  for (Eigen::Index r = 0; r < f.fused_alpha.rows(); ++r) {
    const auto a = detail::row(f.fused_alpha, r);
    DirichletParams d(std::vector<double>(a.begin(), a.end()));
    auto probs = expected_probabilities(d);
    const auto& ops = f.opinions[static_cast<std::size_t>(r)];
    const auto& partial = f.partials[static_cast<std::size_t>(r)];
    const fusion::Masses& m = partial.empty() ? ops.front() : partial.back();
    // Renormalize away rounding so the opinion invariant holds exactly.
    double total = m.uncertainty;
    for (double b : m.belief) total += b;
    std::vector<double> belief(m.belief);
    for (double& b : belief) b /= total;
    out.push_back({static_cast<int>(argmax(probs)), SubjectiveOpinion(std::move(belief), m.uncertainty / total),
                   std::move(probs)});
  }
  return out;
}

inline Prediction predict(const TmcModel& model, const std::vector<std::vector<double>>& xs) {
  Batch b;
  for (const auto& x : xs) {
    Matrix row(1, static_cast<Eigen::Index>(x.size()));
    std::copy(x.begin(), x.end(), row.data());
    b.views.push_back(std::move(row));
  }
  return predict(model, b).front();
}

inline double train_accuracy(const TmcModel& model, const Batch& batch) {
  const auto preds = predict(model, batch);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].label == batch.labels[i];
  return preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
}

/// Mini-batch Adam on the summed TMC objective. The KL weight ramps as
/// min(1, epoch / anneal_epochs) with 0-based epochs. Deterministic in
/// `cfg.seed`.
inline TrainReport train(TmcModel& model, const MultiViewDataset& ds, const TrainConfig& cfg,
                         const std::optional<Matrix>& pseudo = std::nullopt) {
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || !(cfg.learning_rate > 0.0) ||
      cfg.weight_decay < 0.0 || cfg.anneal_epochs <= 0) {
    throw ConfigError("train: invalid TrainConfig");
  }
  if (ds.num_views() != model.num_views() || ds.num_classes() != model.num_classes()) {
    throw InvalidArgument("train: dataset does not match the model's views or classes");
  }
  const auto widths = model.view_widths();
  for (std::size_t m = 0; m < widths.size(); ++m) {
    if (ds.view(m).cols() != widths[m]) {
      throw InvalidArgument("train: view " + std::to_string(m) + " width mismatch");
    }
  }
  TrainReport report;
  if (cfg.epochs == 0 || ds.size() == 0) return report;

  Rng rng(cfg.seed);
  Adam opt(model, cfg.learning_rate, cfg.weight_decay);
  const AnnealSchedule sched{cfg.anneal_epochs};
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lambda = anneal_lambda(epoch, sched);
    rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const Batch batch = make_batch(ds, std::span<const std::size_t>(order).subspan(start, end - start), pseudo);
      auto lg = batch_loss_and_grad(model, batch, lambda);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start));
      }
      opt.step(model, lg.grad);
      sum += lg.loss;
      ++batches;
    }
    report.epoch_loss.push_back(sum / batches);
    report.epoch_lambda.push_back(lambda);
  }
  for (double p : flatten_parameters(model)) {
    if (!std::isfinite(p)) throw NumericError("non-finite parameter after training");
  }
  report.train_accuracy = train_accuracy(model, make_batch(ds, pseudo));
  return report;
}

// Checkpoints: one JSON document.
//
//   {"format": "tmc-checkpoint", "version": 1, "num_classes": K,
//    "activation": "relu", "views": [net...], "pseudo": net | null,
//    "view_names": [...], "standardizer": [{"mean": [...], "scale": [...]}],
//    "config": {...}}
//   net = {"layers": [{"rows": r, "cols": c, "weight": [row-major], "bias": [...]}]}

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json net_to_json(const EvidentialNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size())},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"layers", layers}};
}

inline EvidentialNet net_from_json(const nlohmann::json& j, Activation act) {
  std::vector<DenseLayer> layers;
  for (const auto& lj : j.at("layers")) {
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    const auto w = lj.at("weight").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
      throw InvalidArgument("checkpoint: layer array sizes do not match declared shape");
    }
    DenseLayer l{Matrix(rows, cols), Vector(rows)};
    std::copy(w.begin(), w.end(), l.weight.data());
    std::copy(b.begin(), b.end(), l.bias.data());
    layers.push_back(std::move(l));
  }
  return EvidentialNet(std::move(layers), act);
}

}  // namespace detail

struct Checkpoint {
  TmcModel model;
  std::vector<std::string> view_names;
  std::vector<ViewStats> standardizer;
  nlohmann::json config = nlohmann::json::object();
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "tmc-checkpoint";
  j["version"] = kCheckpointVersion;
  j["num_classes"] = c.model.num_classes();
  j["activation"] = to_string(c.model.view_net(0).hidden_activation());
  j["views"] = nlohmann::json::array();
  for (std::size_t m = 0; m < c.model.num_views(); ++m) j["views"].push_back(detail::net_to_json(c.model.view_net(m)));
  j["pseudo"] = c.model.pseudo_net() ? detail::net_to_json(*c.model.pseudo_net()) : nlohmann::json(nullptr);
  j["view_names"] = c.view_names;
  j["standardizer"] = nlohmann::json::array();
  for (const auto& s : c.standardizer) {
    j["standardizer"].push_back({{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
                                 {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}});
  }
  j["config"] = c.config;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "tmc-checkpoint") throw InvalidArgument("not a tmc checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw InvalidArgument("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    const Activation act = activation_from_string(j.at("activation").get<std::string>());
    std::vector<EvidentialNet> views;
    for (const auto& v : j.at("views")) views.push_back(detail::net_from_json(v, act));
    std::optional<EvidentialNet> pseudo;
    if (!j.at("pseudo").is_null()) pseudo = detail::net_from_json(j.at("pseudo"), act);
    TmcModel model(std::move(views), std::move(pseudo));
    if (model.num_classes() != j.at("num_classes").get<int>()) {
      throw InvalidArgument("checkpoint: num_classes disagrees with output layers");
    }
    std::vector<ViewStats> stats;
    for (const auto& s : j.at("standardizer")) {
      const auto mean = s.at("mean").get<std::vector<double>>();
      const auto scale = s.at("scale").get<std::vector<double>>();
      stats.push_back({Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                       Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(scale.size()))});
    }
    return {std::move(model), j.at("view_names").get<std::vector<std::string>>(), std::move(stats),
            j.value("config", nlohmann::json::object())};
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write '" + path.string() + "'");
  out << checkpoint_to_json(c).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = csv::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace tmc
