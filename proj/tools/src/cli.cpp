#include "caa/cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>

#include "caa/error.hpp"
#include "caa/eval/config.hpp"
#include "caa/eval/metrics.hpp"
#include "caa/eval/report.hpp"
#include "caa/eval/sweep.hpp"
#include "caa/training/checkpoint.hpp"

namespace caa::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  std::string checkpoint;
};

eval::ToolConfig resolve_config(const CommonOptions& o) {
  eval::ToolConfig c = o.config.empty() ? eval::ToolConfig{} : eval::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) {
    if (*o.threads == 0) throw InvalidArgument("--threads must be at least 1");
    c.threads = *o.threads;
  }
  return c;
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw InvalidArgument(std::string(flag) + " is required for this command");
  return value;
}

training::CnnModel load_model(const CommonOptions& o, const training::Dataset& data) {
  training::ModelParams p = training::load_checkpoint(require(o.checkpoint, "--checkpoint"));
  training::check_compatible(p, data.channels(), data.side(), data.num_classes);
  return training::CnnModel(std::move(p));
}

int cmd_dataset_gen(const CommonOptions& o, std::ostream& out) {
  const eval::ToolConfig cfg = resolve_config(o);
  const fs::path dir = require(o.out, "--out");
  fs::create_directories(dir);
  const training::Dataset d = cfg.load_dataset();
  training::write_cifar10_batch(d.train, dir / "train.bin");
  training::write_cifar10_batch(d.test, dir / "test.bin");
  out << "wrote " << d.train.size() << " training and " << d.test.size() << " test images to " << dir.string()
      << "\n";
  return 0;
}

int cmd_dataset_check(const CommonOptions& o, const std::string& dir_flag, std::ostream& out) {
  const eval::ToolConfig cfg = resolve_config(o);
  const std::string dir = dir_flag.empty() ? cfg.cifar_dir : dir_flag;
  const training::Dataset d = training::load_cifar10(require(dir, "--dir"));
  out << "train records: " << d.train.size() << "\ntest records: " << d.test.size() << "\n";
  if (d.train.size() != 50000 || d.test.size() != 10000) {
    throw FormatError("expected 50000/10000 records in the official split, found " + std::to_string(d.train.size()) +
                      "/" + std::to_string(d.test.size()));
  }
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& regime, std::ostream& out, std::ostream& err) {
  const eval::ToolConfig cfg = resolve_config(o);
  const fs::path target = require(o.out, "--out");
  training::Dataset data = cfg.load_dataset();
  training::TrainConfig tc = cfg.train_config();
  if (!o.checkpoint.empty()) {
    tc.initial = training::load_checkpoint(o.checkpoint);
  } else if (regime == "gat" || regime == "trades") {
    err << "note: no --checkpoint given, adversarial training starts from scratch\n";
  }
  tc.on_epoch = [&out](const training::EpochLog& log) {
    out << "epoch " << log.epoch << " lr " << eval::format_number(log.learning_rate) << " loss "
        << eval::format_number(log.train_loss) << " test_acc " << eval::format_number(log.test_accuracy) << "\n";
  };
  training::TrainResult r;
  if (regime == "standard") {
    r = training::train_standard(data, tc);
  } else if (regime == "gat") {
    r = training::train_gat(data, tc);
  } else if (regime == "trades") {
    r = training::train_trades(data, tc);
  } else {
    std::vector<attack::AttackComponent> semantic;
    for (const auto& c : tc.pool) {
      if (transforms::is_semantic(c.kind)) semantic.push_back(c);
    }
    data = training::generate_rsp_dataset(data, semantic, cfg.seed);
    r = training::train_standard(data, tc);
  }
  r.params.metadata = {{"regime", regime},
                       {"seed", std::to_string(cfg.seed)},
                       {"epochs", std::to_string(tc.epochs)},
                       {"best_epoch", std::to_string(r.best_epoch)},
                       {"best_test_accuracy", eval::format_number(r.best_accuracy)},
                       {"config", cfg.to_json()}};
  training::save_checkpoint(r.params, target);
  out << "best epoch " << r.best_epoch << " test_acc " << eval::format_number(r.best_accuracy) << "\nwrote "
      << target.string() << "\n";
  return 0;
}

json state_json(const transforms::PerturbationState& s) {
  if (transforms::is_semantic(s.kind)) return s.delta[0];
  float m = 0.0f;
  for (float v : s.delta.data()) m = std::max(m, std::abs(v));
  return {{"max_abs", m}};
}

int cmd_attack(const CommonOptions& o, std::size_t index, std::size_t count, std::ostream& out) {
  const eval::ToolConfig cfg = resolve_config(o);
  const training::Dataset data = cfg.load_dataset();
  const training::CnnModel model = load_model(o, data);
  if (count == 0 || index >= data.test.size() || count > data.test.size() - index) {
    throw InvalidArgument("--index/--count select samples outside the test split (" +
                          std::to_string(data.test.size()) + " images)");
  }
  const training::LabeledImages samples = data.test.head(index + count);
  const ad::Tensor images = samples.images.slice_rows(index, count);
  const std::vector<int> labels(samples.labels.begin() + static_cast<std::ptrdiff_t>(index), samples.labels.end());
  const composite::AttackPool pool(cfg.attack_pool());
  Rng rng(cfg.seed);
  const auto results = composite::run_caa_batch(pool, images, labels, model, cfg.attack_caa(), rng, cfg.threads);
  json arr = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const attack::AttackResult& r = results[i];
    json order = json::array();
    for (std::size_t k : r.order) order.push_back(std::string(transforms::to_string(pool[k].kind)));
    json deltas = json::object();
    for (const auto& s : r.deltas) deltas[std::string(transforms::to_string(s.kind))] = state_json(s);
    json traces = json::array();
    for (const auto& t : r.traces) {
      traces.push_back({{"kind", std::string(transforms::to_string(t.kind))}, {"iteration", t.iteration}, {"losses", t.losses}});
    }
    arr.push_back({{"index", index + i},
                   {"label", labels[i]},
                   {"clean_correct", r.clean_correct},
                   {"success", r.success},
                   {"prediction", r.prediction},
                   {"order", order},
                   {"applied", r.applied},
                   {"success_iteration", r.success_iteration ? json(*r.success_iteration) : json(nullptr)},
                   {"final_loss", r.final_loss},
                   {"deltas", deltas},
                   {"traces", traces}});
  }
  const std::string text = arr.dump(2) + "\n";
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text)) throw IoError("cannot write " + o.out);
  }
  out << text;
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::vector<std::string>& suites_flag, const std::string& format,
             std::ostream& out) {
  eval::ToolConfig cfg = resolve_config(o);
  if (!suites_flag.empty()) cfg.eval_suites = suites_flag;
  const training::Dataset data = cfg.load_dataset();
  const training::CnnModel model = load_model(o, data);
  const training::LabeledImages samples = eval::select_eval_subset(data.test, cfg.eval_samples, cfg.seed);

  eval::MetricsReport report;
  report.n = samples.size();
  report.seed = cfg.seed;
  report.clean_accuracy = training::accuracy(model, samples);
  report.config_json = cfg.to_json();
  const eval::SuiteOptions opts = cfg.suite_options();
  for (const std::string& name : cfg.eval_suites) {
    for (const eval::AttackSuite& suite : eval::resolve_suites(name, opts)) {
      report.suites.push_back(eval::evaluate_suite(model, samples, suite, cfg.seed, cfg.threads));
    }
  }
  const std::string text = eval::report_csv(report);
  if (!o.out.empty()) {
    eval::ReportFormat f = eval::ReportFormat::Csv;
    if (!format.empty()) {
      f = eval::parse_report_format(format);
    } else if (fs::path(o.out).extension() == ".json") {
      f = eval::ReportFormat::Json;
    }
    eval::write_report(report, o.out, f);
  }
  out << text;
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& kind_flag, std::size_t points_flag, std::ostream& out) {
  const eval::ToolConfig cfg = resolve_config(o);
  const training::Dataset data = cfg.load_dataset();
  const training::CnnModel model = load_model(o, data);
  const transforms::PerturbationKind kind = kind_flag.empty() ? cfg.sweep_kind : transforms::parse_kind(kind_flag);
  const std::size_t points = points_flag ? points_flag : cfg.sweep_points;
  const training::LabeledImages samples = eval::select_eval_subset(data.test, cfg.sweep_samples, cfg.seed);
  const eval::SweepResult r =
      eval::loss_landscape_sweep(model, samples, kind, cfg.suite_options().interval(kind), points);
  const fs::path target = require(o.out, "--out");
  eval::write_sweep_csv(r, target);
  out << "wrote " << r.losses.size() << " x " << r.grid.size() << " sweep to " << target.string() << "\n";
  return 0;
}

void add_common(CLI::App& app, CommonOptions& o) {
  app.add_option("--config", o.config, "JSON configuration file");
  app.add_option("--seed", o.seed, "Seed for training and attacks (overrides the config)");
  app.add_option("--out", o.out, "Output path");
  app.add_option("--threads", o.threads, "Worker threads for per-sample attacks");
  app.add_option("--checkpoint", o.checkpoint, "Model checkpoint");
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Composite adversarial attacks and generalized adversarial training", "caa"};
  app.require_subcommand(1);
  CommonOptions common;

  CLI::App* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  CLI::App* gen = dataset->add_subcommand("gen", "Write the synthetic dataset in CIFAR-10 binary layout");
  add_common(*gen, common);
  std::string check_dir;
  CLI::App* check = dataset->add_subcommand("fetch-check", "Verify a CIFAR-10 binary directory");
  add_common(*check, common);
  check->add_option("--dir", check_dir, "Directory with data_batch_*.bin and test_batch.bin");

  CLI::App* train = app.add_subcommand("train", "Train a classifier");
  add_common(*train, common);
  std::string regime;
  train->add_option("regime", regime, "standard, gat, trades or rsp")
      ->required()
      ->check(CLI::IsMember({"standard", "gat", "trades", "rsp"}));

  CLI::App* attack_cmd = app.add_subcommand("attack", "Run the composite attack on test images");
  add_common(*attack_cmd, common);
  std::size_t index = 0, count = 1;
  attack_cmd->add_option("--index", index, "First test image");
  attack_cmd->add_option("--count", count, "Number of test images");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate attack suites and write a report");
  add_common(*eval_cmd, common);
  std::vector<std::string> suites;
  std::string format;
  eval_cmd->add_option("--suite", suites, "Suite name (repeatable; overrides the config)");
  eval_cmd->add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "json"}));

  CLI::App* sweep = app.add_subcommand("sweep", "Loss landscape of one semantic attack");
  add_common(*sweep, common);
  std::string kind;
  std::size_t points = 0;
  sweep->add_option("--kind", kind, "hue, saturation, rotation, brightness or contrast");
  sweep->add_option("--points", points, "Grid points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'caa --help' for usage\n";
    return 1;
  }

  try {
    if (*dataset) {
      if (*gen) return cmd_dataset_gen(common, out);
      return cmd_dataset_check(common, check_dir, out);
    }
    if (*train) return cmd_train(common, regime, out, err);
    if (*attack_cmd) return cmd_attack(common, index, count, out);
    if (*eval_cmd) return cmd_eval(common, suites, format, out);
    if (*sweep) return cmd_sweep(common, kind, points, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace caa::cli
