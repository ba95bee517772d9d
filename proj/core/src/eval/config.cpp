#include "caa/eval/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "caa/error.hpp"

namespace caa::eval {
namespace {

using json = nlohmann::ordered_json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw FormatError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.contains(it.key())) throw FormatError("config: unknown key '" + where + "." + it.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<transforms::PerturbationKind> read_kinds(const json& j) {
  std::vector<transforms::PerturbationKind> out;
  for (const auto& k : j) out.push_back(transforms::parse_kind(k.get<std::string>()));
  return out;
}

json kinds_json(const std::vector<transforms::PerturbationKind>& kinds) {
  json a = json::array();
  for (auto k : kinds) a.push_back(std::string(transforms::to_string(k)));
  return a;
}

std::vector<attack::AttackComponent> build_pool(const std::vector<transforms::PerturbationKind>& kinds,
                                                const SuiteOptions& opts) {
  std::vector<attack::AttackComponent> out;
  if (kinds.empty()) {
    for (auto k : transforms::kAllKinds) out.push_back(attack::make_component(k, opts.interval(k)));
  } else {
    for (auto k : kinds) out.push_back(attack::make_component(k, opts.interval(k)));
  }
  return out;
}

}  // namespace

training::Dataset ToolConfig::load_dataset() const {
  if (dataset_source == "cifar10") {
    if (cifar_dir.empty()) throw InvalidArgument("dataset.source is cifar10 but dataset.cifar_dir is empty");
    return training::load_cifar10(cifar_dir);
  }
  return training::generate_synthetic_dataset(dataset_seed, n_train, n_test);
}

SuiteOptions ToolConfig::suite_options() const {
  SuiteOptions o;
  o.intervals = intervals;
  o.comp_pgd = attack_pgd;
  o.iterations = attack_iterations;
  o.schedule_rate = schedule_rate;
  o.sinkhorn_iterations = sinkhorn_iterations;
  return o;
}

std::vector<attack::AttackComponent> ToolConfig::attack_pool() const { return build_pool(attack_kinds, suite_options()); }
std::vector<attack::AttackComponent> ToolConfig::train_pool() const { return build_pool(train_kinds, suite_options()); }

composite::CaaConfig ToolConfig::attack_caa() const {
  composite::CaaConfig c;
  c.mode = attack_order;
  c.fixed_order = attack_fixed_order;
  c.iterations = attack_iterations;
  c.comp_pgd = attack_pgd;
  c.schedule_rate = schedule_rate;
  c.sinkhorn_iterations = sinkhorn_iterations;
  return c;
}

training::TrainConfig ToolConfig::train_config() const {
  training::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.warmup_epochs = warmup_epochs;
  t.lr_decay = lr_decay;
  t.momentum = momentum;
  t.weight_decay = weight_decay;
  t.trades_beta = trades_beta;
  t.seed = seed;
  t.pool = train_pool();
  t.caa.mode = train_order;
  t.caa.iterations = train_iterations;
  t.caa.comp_pgd.steps = train_steps;
  t.caa.schedule_rate = schedule_rate;
  t.caa.sinkhorn_iterations = sinkhorn_iterations;
  t.eval_samples = train_eval_samples;
  return t;
}

std::string ToolConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["dataset"] = {{"source", dataset_source}, {"seed", dataset_seed}, {"n_train", n_train}, {"n_test", n_test}, {"cifar_dir", cifar_dir}};
  json iv = json::object();
  for (auto k : transforms::kAllKinds) {
    const auto v = suite_options().interval(k);
    if (k == transforms::PerturbationKind::Linf) {
      iv["linf"] = v.high;
    } else {
      iv[std::string(transforms::to_string(k))] = {v.low, v.high};
    }
  }
  j["intervals"] = iv;
  j["attack"] = {{"kinds", kinds_json(attack_kinds)},
                 {"order", std::string(to_string(attack_order))},
                 {"fixed_order", attack_fixed_order},
                 {"steps", attack_pgd.steps},
                 {"restarts", attack_pgd.restarts},
                 {"early_stop", attack_pgd.early_stop},
                 {"iterations", attack_iterations},
                 {"schedule_rate", schedule_rate},
                 {"sinkhorn_iterations", sinkhorn_iterations}};
  j["train"] = {{"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"warmup_epochs", warmup_epochs},
                {"lr_decay", lr_decay},
                {"momentum", momentum},
                {"weight_decay", weight_decay},
                {"trades_beta", trades_beta},
                {"kinds", kinds_json(train_kinds)},
                {"order", std::string(to_string(train_order))},
                {"steps", train_steps},
                {"iterations", train_iterations},
                {"eval_samples", train_eval_samples}};
  j["eval"] = {{"suites", eval_suites}, {"samples", eval_samples}};
  j["sweep"] = {{"kind", std::string(transforms::to_string(sweep_kind))}, {"points", sweep_points},
                {"samples", sweep_samples}};
  return j.dump();
}

ToolConfig parse_config(const std::string& json_text) {
  ToolConfig c;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    check_keys(j, "", {"seed", "threads", "dataset", "intervals", "attack", "train", "eval", "sweep"});
    read(j, "seed", c.seed);
    read(j, "threads", c.threads);
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      check_keys(d, "dataset", {"source", "seed", "n_train", "n_test", "cifar_dir"});
      read(d, "source", c.dataset_source);
      read(d, "seed", c.dataset_seed);
      read(d, "n_train", c.n_train);
      read(d, "n_test", c.n_test);
      read(d, "cifar_dir", c.cifar_dir);
      if (c.dataset_source != "synthetic" && c.dataset_source != "cifar10") {
        throw FormatError("config: dataset.source must be 'synthetic' or 'cifar10'");
      }
    }
    if (j.contains("intervals")) {
      const json& iv = j["intervals"];
      check_keys(iv, "intervals", {"hue", "saturation", "rotation", "brightness", "contrast", "linf"});
      for (auto it = iv.begin(); it != iv.end(); ++it) {
        const auto kind = transforms::parse_kind(it.key());
        transforms::PerturbationInterval v;
        if (kind == transforms::PerturbationKind::Linf) {
          const double eps = it.value().get<double>();
          v = {-eps, eps};
        } else {
          const auto pair = it.value().get<std::vector<double>>();
          if (pair.size() != 2) throw FormatError("config: intervals." + it.key() + " must be [low, high]");
          v = {pair[0], pair[1]};
        }
        transforms::validate(kind, v);
        c.intervals[kind] = v;
      }
    }
    if (j.contains("attack")) {
      const json& a = j["attack"];
      check_keys(a, "attack", {"kinds", "order", "fixed_order", "steps", "restarts", "early_stop", "iterations",
                               "schedule_rate", "sinkhorn_iterations"});
      if (a.contains("kinds")) c.attack_kinds = read_kinds(a["kinds"]);
      if (a.contains("order")) c.attack_order = parse_schedule_mode(a["order"].get<std::string>());
      read(a, "fixed_order", c.attack_fixed_order);
      read(a, "steps", c.attack_pgd.steps);
      read(a, "restarts", c.attack_pgd.restarts);
      read(a, "early_stop", c.attack_pgd.early_stop);
      read(a, "iterations", c.attack_iterations);
      read(a, "schedule_rate", c.schedule_rate);
      read(a, "sinkhorn_iterations", c.sinkhorn_iterations);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      check_keys(t, "train", {"epochs", "batch_size", "learning_rate", "warmup_epochs", "lr_decay", "momentum",
                              "weight_decay", "trades_beta", "kinds", "order", "steps", "iterations",
                              "eval_samples"});
      read(t, "epochs", c.epochs);
      read(t, "batch_size", c.batch_size);
      read(t, "learning_rate", c.learning_rate);
      read(t, "warmup_epochs", c.warmup_epochs);
      read(t, "lr_decay", c.lr_decay);
      read(t, "momentum", c.momentum);
      read(t, "weight_decay", c.weight_decay);
      read(t, "trades_beta", c.trades_beta);
      if (t.contains("kinds")) c.train_kinds = read_kinds(t["kinds"]);
      if (t.contains("order")) c.train_order = parse_schedule_mode(t["order"].get<std::string>());
      read(t, "steps", c.train_steps);
      read(t, "iterations", c.train_iterations);
      read(t, "eval_samples", c.train_eval_samples);
    }
    if (j.contains("eval")) {
      const json& e = j["eval"];
      check_keys(e, "eval", {"suites", "samples"});
      read(e, "suites", c.eval_suites);
      read(e, "samples", c.eval_samples);
    }
    if (j.contains("sweep")) {
      const json& s = j["sweep"];
      check_keys(s, "sweep", {"kind", "points", "samples"});
      if (s.contains("kind")) c.sweep_kind = transforms::parse_kind(s["kind"].get<std::string>());
      read(s, "points", c.sweep_points);
      read(s, "samples", c.sweep_samples);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config has a value of the wrong type: ") + e.what());
  }
  // Cross-field checks.
  c.attack_pgd.validate();
  c.attack_caa().validate(c.attack_pool().size());
  if (c.threads == 0) throw FormatError("config: threads must be at least 1");
  return c;
}

ToolConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace caa::eval
