// tmc: train, evaluate, fuse and noise-sweep trusted multi-view classifiers.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data
// error, 4 numeric failure (non-finite training loss, total conflict).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tmc/tmc.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Flat JSON object -> option values of the chosen subcommand. Keys are long
// flag names without the leading dashes; arrays feed multi-value options.
// Flags on the command line take precedence.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw tmc::ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw tmc::ConfigError("config file must hold a flat JSON object");
    const auto chosen = app_->get_subcommands();
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      if (!chosen.empty()) item.parents = {chosen.front()->get_name()};
      if (value.is_object()) throw tmc::ConfigError("config key '" + key + "': nested objects are not allowed");
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(key, v));
      } else {
        item.inputs.push_back(scalar(key, value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw tmc::ConfigError("config key '" + key + "': expected a string, number, boolean or array of those");
  }

  const CLI::App* app_;
};

struct Options {
  std::string manifest;
  std::string checkpoint;
  std::string out;
  std::string opinions;
  std::uint64_t seed = 0;
  bool etmc = false;
  int epochs = 100;
  int batch_size = 200;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  int anneal_epochs = 50;
  double test_fraction = 0.2;
  std::vector<Eigen::Index> hidden;
  std::string activation = "relu";
  double sigma = 0.0;
  std::vector<std::size_t> noise_views{0};
  std::vector<double> sigmas{0.0, 1.0, 10.0, 100.0};
  std::string split = "test";
  int bins = 20;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw tmc::DataError(tmc::DataError::Kind::kMissingFile, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw tmc::DataError(tmc::DataError::Kind::kMissingFile, "cannot write '" + path.string() + "'");
  return out;
}

fs::path run_dir(const Options& o) {
  fs::path dir = o.out;
  if (dir.empty()) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream name;
    name << "runs/" << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-seed" << o.seed;
    dir = name.str();
  }
  fs::create_directories(dir);
  return dir;
}

// Held-out split, standardized with training statistics. A precomputed
// pseudo-view rides along as an extra view until the end.
struct Prepared {
  tmc::MultiViewDataset train;
  tmc::MultiViewDataset test;
  std::optional<tmc::Matrix> train_pseudo;
  std::optional<tmc::Matrix> test_pseudo;
  std::vector<tmc::ViewStats> stats;
  std::vector<std::string> warnings;
};

tmc::MultiViewDataset drop_last_view(const tmc::MultiViewDataset& ds) {
  std::vector<tmc::Matrix> views(ds.views().begin(), ds.views().end() - 1);
  std::vector<std::string> names(ds.view_names().begin(), ds.view_names().end() - 1);
  return tmc::MultiViewDataset(std::move(views), std::move(names), ds.labels(), ds.num_classes(), ds.row_ids());
}

Prepared prepare(const tmc::LoadedManifest& loaded, double fraction, std::uint64_t seed,
                 const std::vector<tmc::ViewStats>* stats) {
  const bool pseudo = loaded.pseudo_view.has_value();
  const auto ds = pseudo ? loaded.dataset.with_view_appended(*loaded.pseudo_view, "pseudo") : loaded.dataset;
  auto s = tmc::split(ds, fraction, seed);
  Prepared p{s.train, s.test, std::nullopt, std::nullopt, {}, s.warnings};
  if (stats != nullptr) {
    p.stats = *stats;
    p.train = tmc::apply_standardizer(s.train, p.stats);
    p.test = tmc::apply_standardizer(s.test, p.stats);
  } else {
    auto z = tmc::standardize(s.train, s.test);
    p.train = std::move(z.train);
    p.test = std::move(z.test);
    p.stats = std::move(z.stats);
  }
  if (pseudo) {
    p.train_pseudo = p.train.views().back();
    p.test_pseudo = p.test.views().back();
    p.train = drop_last_view(p.train);
    p.test = drop_last_view(p.test);
  }
  return p;
}

json split_json(const Options& o, const Prepared& p) {
  return {{"seed", o.seed}, {"test_fraction", o.test_fraction}, {"train_size", p.train.size()},
          {"test_size", p.test.size()}};
}

int cmd_train(const Options& o) {
  const auto loaded = tmc::load_manifest_with_pseudo(o.manifest);
  // A precomputed pseudo-view only matters for ETMC.
  const auto p = prepare(o.etmc ? loaded : tmc::LoadedManifest{loaded.dataset, std::nullopt}, o.test_fraction,
                         o.seed, nullptr);

  tmc::ModelShape shape;
  shape.view_widths = p.train.view_widths();
  shape.num_classes = p.train.num_classes();
  shape.etmc = o.etmc;
  if (!o.hidden.empty()) shape.hidden = o.hidden;
  shape.activation = tmc::activation_from_string(o.activation);
  if (p.train_pseudo) {
    Eigen::Index total = 0;
    for (auto w : shape.view_widths) total += w;
    if (p.train_pseudo->cols() != total) {
      throw tmc::DataError(tmc::DataError::Kind::kFormat,
                           "precomputed pseudo-view has " + std::to_string(p.train_pseudo->cols()) +
                               " columns; the pseudo-view net expects the sum of view widths, " +
                               std::to_string(total));
    }
  }
  auto model = tmc::TmcModel::create(shape, o.seed);

  tmc::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.lr;
  cfg.weight_decay = o.weight_decay;
  cfg.anneal_epochs = o.anneal_epochs;
  cfg.seed = o.seed;
  const auto report = tmc::train(model, p.train, cfg, p.train_pseudo);

  const auto dir = run_dir(o);
  json config = {{"manifest", o.manifest},
                 {"seed", o.seed},
                 {"test_fraction", o.test_fraction},
                 {"etmc", o.etmc},
                 {"precomputed_pseudo", p.train_pseudo.has_value()},
                 {"epochs", o.epochs},
                 {"batch_size", o.batch_size},
                 {"lr", o.lr},
                 {"weight_decay", o.weight_decay},
                 {"anneal_epochs", o.anneal_epochs},
                 {"hidden", o.hidden},
                 {"activation", o.activation}};
  tmc::save_checkpoint({model, p.train.view_names(), p.stats, config}, dir / "checkpoint.json");

  auto loss_csv = open_out(dir / "train_loss.csv");
  loss_csv << "# columns: epoch,kl_weight,mean_batch_loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    loss_csv << e << ',' << tmc::format12(report.epoch_lambda[e]) << ',' << tmc::format12(report.epoch_loss[e])
             << '\n';
  }

  auto rep = tmc::evaluate(model, p.test, p.test_pseudo);
  rep.warnings.insert(rep.warnings.begin(), p.warnings.begin(), p.warnings.end());
  json j = tmc::report_to_json(rep);
  j["split"] = split_json(o, p);
  j["train_accuracy"] = tmc::round12(report.train_accuracy);
  write_json(dir / "report.json", j);
  std::cout << "test accuracy " << tmc::format12(rep.accuracy) << ", auroc " << tmc::format12(rep.auroc)
            << " -> " << dir.string() << '\n';
  return 0;
}

struct Loaded {
  tmc::Checkpoint checkpoint;
  Prepared data;
  std::uint64_t split_seed;
  double fraction;
  bool precomputed_pseudo;
};

Loaded load_for_eval(const Options& o) {
  auto c = tmc::load_checkpoint(o.checkpoint);
  const auto loaded = tmc::load_manifest_with_pseudo(o.manifest);
  const auto& ds = loaded.dataset;
  const auto& m = c.model;
  if (ds.num_classes() != m.num_classes() || ds.num_views() != m.num_views() || ds.view_widths() != m.view_widths()) {
    std::ostringstream msg;
    msg << "shape mismatch: checkpoint expects K=" << m.num_classes() << " and view widths [";
    for (auto w : m.view_widths()) msg << ' ' << w;
    msg << " ], manifest has K=" << ds.num_classes() << " and [";
    for (auto w : ds.view_widths()) msg << ' ' << w;
    msg << " ]";
    throw tmc::DataError(tmc::DataError::Kind::kFormat, msg.str());
  }
  const bool precomputed = c.config.value("precomputed_pseudo", false);
  if (precomputed && !loaded.pseudo_view) {
    throw tmc::DataError(tmc::DataError::Kind::kFormat,
                         "checkpoint was trained with a precomputed pseudo-view; the manifest names none");
  }
  const auto seed = c.config.value("seed", std::uint64_t{0});
  const double fraction = c.config.value("test_fraction", 0.2);
  tmc::LoadedManifest use{ds, precomputed ? loaded.pseudo_view : std::nullopt};
  auto whole = [&] {
    const auto ds_all = precomputed ? ds.with_view_appended(*loaded.pseudo_view, "pseudo") : ds;
    const auto z = tmc::apply_standardizer(ds_all, c.standardizer);
    if (!precomputed) return Prepared{z, z, std::nullopt, std::nullopt, c.standardizer, {}};
    const auto views = drop_last_view(z);
    return Prepared{views, views, std::nullopt, z.views().back(), c.standardizer, {}};
  };
  auto p = o.split == "all" ? whole() : prepare(use, fraction, seed, &c.standardizer);
  return {std::move(c), std::move(p), seed, fraction, precomputed};
}

int cmd_evaluate(const Options& o) {
  const auto l = load_for_eval(o);
  const auto noisy = tmc::inject_noise(l.data.test, {o.sigma, o.noise_views, o.seed});
  auto rep = tmc::evaluate(l.checkpoint.model, noisy, l.data.test_pseudo);
  if (o.sigma > 0.0 && l.data.test_pseudo) {
    rep.warnings.push_back("precomputed pseudo-view is not noised");
  }

  const auto dir = run_dir(o);
  json j = tmc::report_to_json(rep);
  j["split"] = {{"which", o.split}, {"seed", l.split_seed}, {"test_fraction", l.fraction},
                {"size", noisy.size()}};
  j["noise"] = {{"sigma", o.sigma}, {"views", o.noise_views}, {"seed", o.seed}};
  write_json(dir / "report.json", j);

  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  auto curve = open_out(dir / "threshold.csv");
  tmc::write_threshold_csv(curve, tmc::threshold_curve(rep.records, grid));
  auto density = open_out(dir / "density.csv");
  tmc::write_density_csv(density, tmc::uncertainty_density(rep.records, o.bins));
  auto confusion = open_out(dir / "confusion.csv");
  tmc::write_confusion_csv(confusion, tmc::subjective_confusion(rep.records));

  std::cout << "accuracy " << tmc::format12(rep.accuracy) << ", auroc " << tmc::format12(rep.auroc) << " -> "
            << dir.string() << '\n';
  return 0;
}

int cmd_noise_sweep(const Options& o) {
  const auto l = load_for_eval(o);
  if (l.precomputed_pseudo) {
    std::cerr << "warning: precomputed pseudo-view is not noised\n";
  }
  std::vector<tmc::SweepRow> rows;
  for (double sigma : o.sigmas) {
    const auto noisy = tmc::inject_noise(l.data.test, {sigma, o.noise_views, o.seed});
    const auto rep = tmc::evaluate(l.checkpoint.model, noisy, l.data.test_pseudo);
    double mean_u = 0.0;
    for (const auto& r : rep.records) mean_u += r.uncertainty;
    rows.push_back({sigma, rep.accuracy, mean_u / static_cast<double>(rep.records.size())});
  }
  const auto dir = run_dir(o);
  auto out = open_out(dir / "sweep.csv");
  tmc::write_sweep_csv(out, rows);
  tmc::write_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_fuse(const Options& o) {
  const std::string text = tmc::csv::read_file(o.opinions);
  std::vector<tmc::SubjectiveOpinion> ops;
  try {
    const json j = json::parse(text);
    const json& list = j.is_object() ? j.at("opinions") : j;
    if (!list.is_array()) throw tmc::InvalidArgument("expected an array of opinions");
    for (const auto& op : list) ops.push_back(op.get<tmc::SubjectiveOpinion>());
    if (ops.empty()) throw tmc::InvalidArgument("no opinions to fuse");
  } catch (const json::exception& e) {
    throw tmc::DataError(tmc::DataError::Kind::kFormat, o.opinions + ": " + e.what());
  } catch (const tmc::InvalidArgument& e) {
    throw tmc::DataError(tmc::DataError::Kind::kFormat, o.opinions + ": " + e.what());
  }
  const auto fused = tmc::combine_all(ops);
  json j = {{"belief", tmc::rounded(fused.belief())}, {"uncertainty", tmc::round12(fused.uncertainty())}};
  if (fused.uncertainty() > 0.0) j["dirichlet"] = tmc::rounded(tmc::dirichlet_from_opinion(fused).alpha());
  std::cout << j.dump() << '\n';
  if (!o.out.empty()) write_json(o.out, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trusted multi-view classification: train, evaluate, fuse, noise-sweep"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.allow_config_extras(false);
  app.fallthrough();
  app.set_config("--config", "", "Flat JSON file of option values; flags override it");
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--manifest", o.manifest, "Dataset manifest JSON")->required();
    sub->add_option("--out", o.out, "Output directory (default runs/<time>-seed<seed>)");
    sub->add_option("--seed", o.seed, "Seed for splits, initialization, shuffling and noise")->required();
  };
  auto add_noise = [&](CLI::App* sub) {
    sub->add_option("--noise-views", o.noise_views, "Views receiving Gaussian noise")->delimiter(',');
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
    sub->add_option("--split", o.split, "Rows to evaluate: held-out test split or all")
        ->check(CLI::IsMember({"test", "all"}));
  };

  auto* train = app.add_subcommand("train", "Train on the manifest's training split, report on its test split");
  add_common(train);
  train->add_flag("--etmc", o.etmc, "Add the concatenated pseudo-view");
  train->add_option("--epochs", o.epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--lr", o.lr)->check(CLI::PositiveNumber);
  train->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--weight-decay", o.weight_decay)->check(CLI::NonNegativeNumber);
  train->add_option("--anneal-epochs", o.anneal_epochs)->check(CLI::PositiveNumber);
  train->add_option("--test-fraction", o.test_fraction)->check(CLI::Range(0.0, 1.0));
  train->add_option("--hidden", o.hidden, "Hidden layer widths (default max(64, input/2))")->delimiter(',');
  train->add_option("--activation", o.activation)->check(CLI::IsMember({"relu", "tanh"}));

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint, optionally under noise");
  add_common(evaluate);
  add_noise(evaluate);
  evaluate->add_option("--sigma", o.sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
  evaluate->add_option("--bins", o.bins, "Uncertainty histogram bins")->check(CLI::Range(2, 1000));

  auto* sweep = app.add_subcommand("noise-sweep", "Accuracy and mean uncertainty across noise levels");
  add_common(sweep);
  add_noise(sweep);
  sweep->add_option("--sigmas", o.sigmas, "Noise levels")->delimiter(',');

  auto* fuse = app.add_subcommand("fuse", "Fuse subjective opinions from a JSON file");
  fuse->add_option("opinions", o.opinions, "JSON array of {belief, uncertainty}")->required();
  fuse->add_option("--out", o.out, "Also write the fused opinion here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const tmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*sweep) return cmd_noise_sweep(o);
    if (*fuse) return cmd_fuse(o);
  } catch (const tmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const tmc::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const tmc::ConflictError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const tmc::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}
