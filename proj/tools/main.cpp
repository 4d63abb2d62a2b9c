// tvlab command line front end: train / sweep / eval / conflict / geometry / lens.
// One command per process; every run directory gets a manifest.json written
// last, so its presence marks a completed run.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tvlab/analysis.hpp"
#include "tvlab/checkpoint.hpp"
#include "tvlab/errors.hpp"
#include "tvlab/hypothesis.hpp"
#include "tvlab/model.hpp"
#include "tvlab/rng.hpp"
#include "tvlab/tasks.hpp"
#include "tvlab/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tvlab;

namespace {

constexpr const char* kVersion = "tvlab 0.1.0";

json default_config() {
  return json{
      {"model",
       {{"n_layers", 8},
        {"d_model", 128},
        {"n_heads", 4},
        {"d_ff", 512},
        {"vocab_size", 54},
        {"max_seq_len", 64}}},
      {"train",
       {{"steps", 20000},
        {"batch_size", 64},
        {"lr", 3e-4},
        {"lr_min_factor", 0.1},
        {"k_min", 2},
        {"k_max", 6},
        {"eval_every", 250},
        {"dev_episodes", 25},
        {"dev_k", 5},
        {"dev_bijections", 8},
        {"early_stop", true},
        {"gate_builtin", 0.9},
        {"gate_bijection", 0.8}}},
      {"data", {{"n_bijections", 64}}},
      {"eval",
       {{"episodes", 100},
        {"k", 5},
        {"layer", 0},  // 0 = pick via a layer sweep
        {"tasks", json::array()},
        {"metric", "cosine"},
        {"vectors_per_task", 50},
        {"lens_top_k", 10},
        {"sweep_episodes", 20},
        {"pairs",
         json::array({json::array({"next_symbol", "to_upper"}),
                      json::array({"list_last", "list_first"}),
                      json::array({"next_symbol", "prev_symbol"})})}}},
      {"seed", {{"model", 0}, {"data", 0}, {"eval", 0}}}};
}

// "eval.layer=3" style assignment into nested json; value keeps the type of
// the key it replaces when one exists, otherwise best-effort parse.
void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty override key");
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  json& slot = (*node)[parts.back()];

  try {
    if (slot.is_string())
      slot = value;
    else if (slot.is_boolean())
      slot = (value == "true" || value == "1");
    else if (slot.is_number_integer() || slot.is_number_unsigned())
      slot = std::stoll(value);
    else if (slot.is_number_float())
      slot = std::stod(value);
    else
      slot = json::parse(value, nullptr, true);
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + path + ": " + value);
  }
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json user;
    try {
      in >> user;
    } catch (const json::exception& e) {
      throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    cfg.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

ModelConfig model_config_from(const json& cfg) {
  ModelConfig mc;
  const json& m = cfg.at("model");
  mc.n_layers = m.at("n_layers").get<int>();
  mc.d_model = m.at("d_model").get<int>();
  mc.n_heads = m.at("n_heads").get<int>();
  mc.d_ff = m.at("d_ff").get<int>();
  mc.vocab_size = m.at("vocab_size").get<int>();
  mc.max_seq_len = m.at("max_seq_len").get<int>();
  mc.seed = cfg.at("seed").at("model").get<uint64_t>();
  return mc;
}

TrainConfig train_config_from(const json& cfg) {
  TrainConfig tc;
  const json& t = cfg.at("train");
  tc.steps = t.at("steps").get<int>();
  tc.batch_size = t.at("batch_size").get<int>();
  tc.lr = t.at("lr").get<float>();
  tc.lr_min_factor = t.at("lr_min_factor").get<float>();
  tc.k_min = t.at("k_min").get<int>();
  tc.k_max = t.at("k_max").get<int>();
  tc.eval_every = t.at("eval_every").get<int>();
  tc.dev_episodes = t.at("dev_episodes").get<int>();
  tc.dev_k = t.at("dev_k").get<int>();
  tc.dev_bijections = t.at("dev_bijections").get<int>();
  tc.early_stop = t.at("early_stop").get<bool>();
  tc.gate_builtin = t.at("gate_builtin").get<double>();
  tc.gate_bijection = t.at("gate_bijection").get<double>();
  if (t.contains("mixture_weights"))
    tc.mixture_weights = t.at("mixture_weights").get<std::vector<float>>();
  tc.seed = cfg.at("seed").at("data").get<uint64_t>();
  return tc;
}

std::vector<TaskSpec> tasks_from(const json& cfg) {
  std::vector<TaskSpec> tasks;
  for (const auto& name : cfg.at("eval").at("tasks"))
    tasks.push_back(task_by_name(name.get<std::string>()));
  if (tasks.empty()) tasks = builtin_tasks();
  return tasks;
}

Metric metric_from(const json& cfg) {
  const std::string m = cfg.at("eval").at("metric").get<std::string>();
  if (m == "cosine") return Metric::CosineDistance;
  if (m == "euclidean") return Metric::Euclidean;
  throw ConfigError("eval.metric must be cosine or euclidean, got " + m);
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  return h;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Collects artifacts as they are written; manifest.json goes down last.
class RunDir {
 public:
  RunDir(const std::string& out_flag, const std::string& command, const json& cfg)
      : command_(command), cfg_(cfg) {
    dir_ = out_flag.empty() ? fs::path("runs") / (timestamp_utc() + "-" + command)
                            : fs::path(out_flag);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create run directory " + dir_.string());
    start_ = std::chrono::steady_clock::now();
  }

  const fs::path& dir() const { return dir_; }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void emit(const std::string& name, const std::string& contents) {
    write_file_atomic(path(name), contents);
    artifacts_.push_back(name);
  }

  // for artifacts written by library serializers (checkpoints, theta sets)
  void note(const std::string& name) { artifacts_.push_back(name); }

  void note_checkpoint(const std::string& path) {
    checkpoints_[path] = file_hash(path);
  }

  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json hashes = json::object();
    for (const auto& [p, h] : checkpoints_) hashes[p] = h;
    json manifest{{"command", command_},   {"config", cfg_},
                  {"seeds", cfg_.at("seed")}, {"checkpoint_hashes", hashes},
                  {"artifacts", artifacts_}, {"wall_seconds", secs},
                  {"version", kVersion}};
    write_file_atomic(path("manifest.json"), manifest.dump(2) + "\n");
    std::cout << "run complete: " << dir_.string() << "\n";
  }

 private:
  fs::path dir_;
  std::string command_;
  json cfg_;
  std::vector<std::string> artifacts_;
  std::map<std::string, uint64_t> checkpoints_;
  std::chrono::steady_clock::time_point start_;
};

TransformerModel load_model(const std::string& checkpoint, RunDir& run) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required for this command");
  TransformerModel m = load_checkpoint(checkpoint);
  run.note_checkpoint(checkpoint);
  return m;
}

int pick_layer(const json& cfg, const TransformerModel& model,
               const std::vector<TaskSpec>& tasks, uint64_t seed) {
  const int layer = cfg.at("eval").at("layer").get<int>();
  if (layer > 0) {
    if (layer > model.config().n_layers)
      throw ConfigError("eval.layer exceeds the model's layer count");
    return layer;
  }
  const int eps = cfg.at("eval").at("sweep_episodes").get<int>();
  const int k = cfg.at("eval").at("k").get<int>();
  std::cout << "no layer given; sweeping " << model.config().n_layers << " layers\n";
  return layer_sweep(model, tasks, eps, k, seed).best_layer;
}

std::string sweep_csv(const LayerSweepReport& report) {
  std::ostringstream out;
  out << "layer,mean_accuracy";
  for (const auto& [name, acc] : report.per_task[0]) out << "," << name;
  out << "\n";
  for (size_t i = 0; i < report.mean_accuracy.size(); ++i) {
    out << (i + 1) << "," << report.mean_accuracy[i];
    for (const auto& [name, acc] : report.per_task[i]) out << "," << acc;
    out << "\n";
  }
  return out.str();
}

std::string procedures_csv(const std::array<ProcedureResult, 3>& results) {
  std::ostringstream out;
  out << "task,procedure,accuracy,n,L\n";
  for (const auto& r : results)
    for (const auto& [task, acc] : r.per_task)
      out << task << "," << r.procedure << "," << acc << "," << r.n_episodes << ","
          << (r.procedure == "Hypothesis" ? std::to_string(r.layer) : "") << "\n";
  return out.str();
}

std::string conflict_csv(const std::vector<ConflictResult>& results) {
  std::ostringstream out;
  out << "task_a,task_b,regular_on_a,conflicting_on_a,conflicting_on_b,n\n";
  for (const auto& r : results)
    out << r.task_a << "," << r.task_b << "," << r.regular_on_a << "," << r.conflicting_on_a
        << "," << r.conflicting_on_b << "," << r.n_episodes << "\n";
  return out.str();
}

int cmd_train(const json& cfg, const std::string& out_flag) {
  RunDir run(out_flag, "train", cfg);
  ModelConfig mc = model_config_from(cfg);
  TrainConfig tc = train_config_from(cfg);
  tc.validate(mc.max_seq_len);

  std::vector<TaskSpec> mixture = builtin_tasks();
  const int n_bij = cfg.at("data").at("n_bijections").get<int>();
  for (int i = 0; i < n_bij; ++i) mixture.push_back(random_bijection_task(i));

  TransformerModel model(mc);
  TrainReport report = train(model, mixture, tc, &std::cout);
  save_checkpoint(model, run.path("checkpoint.tvl"));
  run.note("checkpoint.tvl");
  run.note_checkpoint(run.path("checkpoint.tvl"));
  report.checkpoint_path = "checkpoint.tvl";
  run.emit("train_report.json", train_report_json(report));
  run.emit("loss.csv", loss_curve_csv(report));
  run.emit("accuracy.csv", accuracy_curve_csv(report));
  run.finish();
  return 0;
}

int cmd_sweep(const json& cfg, const std::string& checkpoint, const std::string& out_flag) {
  RunDir run(out_flag, "sweep", cfg);
  TransformerModel model = load_model(checkpoint, run);
  const auto tasks = tasks_from(cfg);
  const uint64_t seed = cfg.at("seed").at("eval").get<uint64_t>();
  const int eps = cfg.at("eval").at("sweep_episodes").get<int>();
  const int k = cfg.at("eval").at("k").get<int>();

  LayerSweepReport report = layer_sweep(model, tasks, eps, k, seed);
  run.emit("sweep.csv", sweep_csv(report));
  json summary{{"best_layer", report.best_layer}, {"mean_accuracy", report.mean_accuracy}};
  run.emit("sweep.json", summary.dump(2) + "\n");
  std::cout << "best layer: " << report.best_layer << "\n";
  run.finish();
  return 0;
}

int cmd_eval(const json& cfg, const std::string& checkpoint, const std::string& out_flag) {
  RunDir run(out_flag, "eval", cfg);
  TransformerModel model = load_model(checkpoint, run);
  const auto tasks = tasks_from(cfg);
  const uint64_t seed = cfg.at("seed").at("eval").get<uint64_t>();
  const int layer = pick_layer(cfg, model, tasks, seed);
  const int eps = cfg.at("eval").at("episodes").get<int>();
  const int k = cfg.at("eval").at("k").get<int>();

  auto results = evaluate_procedures(model, tasks, layer, eps, k, seed);
  run.emit("report.csv", procedures_csv(results));
  run.finish();
  return 0;
}

int cmd_conflict(const json& cfg, const std::string& checkpoint, const std::string& out_flag) {
  RunDir run(out_flag, "conflict", cfg);
  TransformerModel model = load_model(checkpoint, run);
  const uint64_t seed = cfg.at("seed").at("eval").get<uint64_t>();
  const int eps = cfg.at("eval").at("episodes").get<int>();
  const int k = cfg.at("eval").at("k").get<int>();

  std::vector<std::pair<TaskSpec, TaskSpec>> pairs;
  for (const auto& p : cfg.at("eval").at("pairs")) {
    if (!p.is_array() || p.size() != 2)
      throw ConfigError("eval.pairs entries must be [task_a, task_b]");
    pairs.emplace_back(task_by_name(p[0].get<std::string>()),
                       task_by_name(p[1].get<std::string>()));
  }
  if (pairs.empty()) throw ConfigError("eval.pairs is empty");

  std::vector<TaskSpec> sweep_tasks;
  for (const auto& [a, b] : pairs) sweep_tasks.push_back(a);
  const int layer = pick_layer(cfg, model, sweep_tasks, seed);

  std::vector<ConflictResult> results;
  for (const auto& [a, b] : pairs)
    results.push_back(run_conflicting_experiment(model, a, b, layer, eps, k, seed));
  run.emit("conflict.csv", conflict_csv(results));
  run.finish();
  return 0;
}

int cmd_geometry(const json& cfg, const std::string& checkpoint, const std::string& out_flag) {
  RunDir run(out_flag, "geometry", cfg);
  TransformerModel model = load_model(checkpoint, run);
  const auto tasks = tasks_from(cfg);
  const uint64_t seed = cfg.at("seed").at("eval").get<uint64_t>();
  const int layer = pick_layer(cfg, model, tasks, seed);
  const int n = cfg.at("eval").at("vectors_per_task").get<int>();
  const int k = cfg.at("eval").at("k").get<int>();

  VectorSet vs = collect_task_vectors(model, tasks, n, layer, k, seed);
  save_task_vectors(run.path("theta.bin"), vs.vectors);
  run.note("theta.bin");
  run.emit("distances.json", distance_report_json(distance_stats(vs, metric_from(cfg))));
  run.emit("projection.csv", projection_csv(project_2d(vs)));
  run.finish();
  return 0;
}

int cmd_lens(const json& cfg, const std::string& checkpoint, const std::string& out_flag) {
  RunDir run(out_flag, "lens", cfg);
  TransformerModel model = load_model(checkpoint, run);
  const auto tasks = tasks_from(cfg);
  const uint64_t seed = cfg.at("seed").at("eval").get<uint64_t>();
  const int layer = pick_layer(cfg, model, tasks, seed);
  const int k = cfg.at("eval").at("k").get<int>();
  const int top_k = cfg.at("eval").at("lens_top_k").get<int>();

  VectorSet vs = collect_task_vectors(model, tasks, 1, layer, k, seed);
  std::vector<LensEntry> entries;
  for (const auto& tv : vs.vectors) entries.push_back(logit_lens(model, tv, top_k));
  run.emit("lens.json", lens_report_json(entries));
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-vector laboratory for a toy in-context-learning transformer"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir, tasks_csv, metric;
  std::vector<std::string> overrides;
  int64_t seed = -1, episodes = -1, k = -1, layer = -1;

  auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "run directory (default runs/<timestamp>-<command>)");
    sub->add_option("--set", overrides, "dotted-path config override key.path=value")
        ->take_all();
    sub->add_option("--seed", seed, "override the command's root seed");
    if (needs_checkpoint) {
      sub->add_option("--checkpoint", checkpoint, "model checkpoint (.tvl)")->required();
      sub->add_option("--tasks", tasks_csv, "comma-separated task names");
      sub->add_option("--episodes", episodes, "episodes per task");
      sub->add_option("--k", k, "demonstrations per episode");
      sub->add_option("--layer", layer, "injection layer (omit to sweep)");
      sub->add_option("--metric", metric, "cosine|euclidean")
          ->check(CLI::IsMember({"cosine", "euclidean"}));
    }
  };

  add_common(app.add_subcommand("train", "meta-train a model on the task mixture"), false);
  add_common(app.add_subcommand("sweep", "hypothesis accuracy per injection layer"), true);
  add_common(app.add_subcommand("eval", "Regular / Hypothesis / Baseline accuracies"), true);
  add_common(app.add_subcommand("conflict", "inject theta_B against demos for task A"), true);
  add_common(app.add_subcommand("geometry", "task-vector distances and 2-D projection"), true);
  add_common(app.add_subcommand("lens", "theta through the unembedding, top tokens"), true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();

    json cfg = load_config(config_path, overrides);
    if (seed >= 0) {
      if (cmd == "train")
        cfg["seed"]["data"] = seed;
      else
        cfg["seed"]["eval"] = seed;
    }
    if (episodes >= 0) cfg["eval"]["episodes"] = episodes;
    if (k >= 0) cfg["eval"]["k"] = k;
    if (layer >= 0) cfg["eval"]["layer"] = layer;
    if (!metric.empty()) cfg["eval"]["metric"] = metric;
    if (!tasks_csv.empty()) {
      json names = json::array();
      std::stringstream ss(tasks_csv);
      std::string name;
      while (std::getline(ss, name, ',')) names.push_back(name);
      cfg["eval"]["tasks"] = names;
    }

    if (cmd == "train") return cmd_train(cfg, out_dir);
    if (cmd == "sweep") return cmd_sweep(cfg, checkpoint, out_dir);
    if (cmd == "eval") return cmd_eval(cfg, checkpoint, out_dir);
    if (cmd == "conflict") return cmd_conflict(cfg, checkpoint, out_dir);
    if (cmd == "geometry") return cmd_geometry(cfg, checkpoint, out_dir);
    if (cmd == "lens") return cmd_lens(cfg, checkpoint, out_dir);
    throw ContractError("unhandled subcommand " + cmd);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
