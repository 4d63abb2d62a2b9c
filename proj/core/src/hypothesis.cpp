#include "tvlab/hypothesis.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "tvlab/checkpoint.hpp"
#include "tvlab/ops.hpp"
#include "tvlab/rng.hpp"
#include "tvlab/trainer.hpp"

namespace tvlab {

uint64_t hash_demos(const std::vector<Demonstration>& demos) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& d : demos) {
    h = fnv1a(d.input.data(), d.input.size() * sizeof(int), h);
    h = fnv1a(&d.output, sizeof(int), h);
  }
  return h;
}

namespace {

int final_argmax(const ForwardTrace& trace, std::vector<float>* logits_out = nullptr) {
  const int v = trace.logits.last_dim();
  const float* row =
      trace.logits.data() + (trace.tokens.size() - 1) * static_cast<size_t>(v);
  if (logits_out) logits_out->assign(row, row + v);
  return ops::argmax(row, v);
}

void require_dummy_disjoint(const std::vector<Demonstration>& demos, const SymbolSeq& dummy) {
  for (const auto& d : demos)
    if (d.input == dummy)
      throw ContractError("dummy query collides with a demonstration input");
}

SymbolSeq draw_dummy(const TaskSpec& task, const std::vector<Demonstration>& demos,
                     const SymbolSeq& real_query, Rng& rng) {
  std::vector<SymbolSeq> exclude;
  exclude.reserve(demos.size() + 1);
  for (const auto& d : demos) exclude.push_back(d.input);
  exclude.push_back(real_query);
  return sample_input_excluding(task, rng, exclude);
}

}  // namespace

TaskVector extract_task_vector(const TransformerModel& model,
                               const std::vector<Demonstration>& demos,
                               const SymbolSeq& dummy_query, int layer,
                               const std::string& task_name) {
  require_dummy_disjoint(demos, dummy_query);
  if (layer < 0 || layer > model.config().n_layers)
    throw DimensionError("extract_task_vector: layer out of range");
  const auto prompt = render_prompt(demos, dummy_query);
  ForwardTrace trace = model.forward(prompt);
  TaskVector tv;
  tv.theta = read_hidden(trace, layer, static_cast<int>(prompt.size()) - 1);
  tv.layer = layer;
  tv.task_name = task_name;
  tv.demos_hash = hash_demos(demos);
  tv.dummy_query = dummy_query;
  return tv;
}

TaskVector extract_task_vector_blocked(const TransformerModel& model,
                                       const std::vector<Demonstration>& demos,
                                       const SymbolSeq& query, int layer,
                                       const std::string& task_name) {
  if (layer < 0 || layer > model.config().n_layers)
    throw DimensionError("extract_task_vector_blocked: layer out of range");
  const auto prompt = render_prompt(demos, query);
  // the query span sits just before the final arrow
  const int end = static_cast<int>(prompt.size()) - 1;
  const int begin = end - (static_cast<int>(query.size()) * 2 - 1);
  ForwardTrace trace = model.forward_blocked(prompt, begin, end);
  TaskVector tv;
  tv.theta = read_hidden(trace, layer, static_cast<int>(prompt.size()) - 1);
  tv.layer = layer;
  tv.task_name = task_name;
  tv.demos_hash = hash_demos(demos);
  tv.dummy_query = query;
  return tv;
}

int apply_task_vector(const TransformerModel& model, const SymbolSeq& query,
                      const TaskVector& tv, std::vector<float>* logits_out,
                      int placeholder_token) {
  auto tokens = render_query_only(query);
  tokens.back() = placeholder_token;
  PatchSpec patch{tv.layer, static_cast<int>(tokens.size()) - 1, tv.theta};
  ForwardTrace trace = model.forward_with_patch(tokens, patch);
  return final_argmax(trace, logits_out);
}

int run_regular(const TransformerModel& model, const std::vector<Demonstration>& demos,
                const SymbolSeq& query) {
  return final_argmax(model.forward(render_prompt(demos, query)));
}

int run_baseline(const TransformerModel& model, const SymbolSeq& query) {
  return final_argmax(model.forward(render_query_only(query)));
}

int run_conflicting(const TransformerModel& model, const std::vector<Demonstration>& demos_a,
                    const TaskVector& tv_b, const SymbolSeq& query) {
  const auto prompt = render_prompt(demos_a, query);
  PatchSpec patch{tv_b.layer, static_cast<int>(prompt.size()) - 1, tv_b.theta};
  return final_argmax(model.forward_with_patch(prompt, patch));
}

LayerSweepReport layer_sweep(const TransformerModel& model, const std::vector<TaskSpec>& tasks,
                             int episodes_per_task, int k, uint64_t seed) {
  LayerSweepReport report;
  const int n_layers = model.config().n_layers;
  double best = -1.0;
  for (int layer = 1; layer <= n_layers; ++layer) {
    std::vector<std::pair<std::string, double>> per_task;
    double total = 0.0;
    for (const auto& task : tasks) {
      int hits = 0;
      for (int i = 0; i < episodes_per_task; ++i) {
        const uint64_t es =
            episode_seed(mix_seed(seed, static_cast<uint64_t>(layer)), task.name, i);
        Episode ep = sample_episode(task, k, es);
        Rng rng(mix_seed(es, 0x64756d79ULL /* "dumy" */));
        const SymbolSeq dummy = draw_dummy(task, ep.demos, ep.query, rng);
        TaskVector tv = extract_task_vector(model, ep.demos, dummy, layer, task.name);
        if (apply_task_vector(model, ep.query, tv) == ep.gold) ++hits;
      }
      const double acc = static_cast<double>(hits) / episodes_per_task;
      per_task.emplace_back(task.name, acc);
      total += acc;
    }
    const double mean = total / static_cast<double>(tasks.size());
    report.mean_accuracy.push_back(mean);
    report.per_task.push_back(std::move(per_task));
    if (mean > best) {
      best = mean;
      report.best_layer = layer;
    }
  }
  return report;
}

std::array<ProcedureResult, 3> evaluate_procedures(const TransformerModel& model,
                                                   const std::vector<TaskSpec>& tasks, int layer,
                                                   int n_episodes, int k, uint64_t seed) {
  ProcedureResult regular{"Regular", {}, n_episodes, 0};
  ProcedureResult hypothesis{"Hypothesis", {}, n_episodes, layer};
  ProcedureResult baseline{"Baseline", {}, n_episodes, 0};
  for (const auto& task : tasks) {
    int hit_r = 0, hit_h = 0, hit_b = 0;
    for (int i = 0; i < n_episodes; ++i) {
      const uint64_t es = episode_seed(seed, task.name, i);
      Episode ep = sample_episode(task, k, es);  // identical (S, x) for all three
      if (run_regular(model, ep.demos, ep.query) == ep.gold) ++hit_r;
      if (run_baseline(model, ep.query) == ep.gold) ++hit_b;
      Rng rng(mix_seed(es, 0x64756d79ULL));
      const SymbolSeq dummy = draw_dummy(task, ep.demos, ep.query, rng);
      TaskVector tv = extract_task_vector(model, ep.demos, dummy, layer, task.name);
      if (apply_task_vector(model, ep.query, tv) == ep.gold) ++hit_h;
    }
    regular.per_task.emplace_back(task.name, static_cast<double>(hit_r) / n_episodes);
    hypothesis.per_task.emplace_back(task.name, static_cast<double>(hit_h) / n_episodes);
    baseline.per_task.emplace_back(task.name, static_cast<double>(hit_b) / n_episodes);
  }
  return {regular, hypothesis, baseline};
}

ConflictResult run_conflicting_experiment(const TransformerModel& model, const TaskSpec& task_a,
                                          const TaskSpec& task_b, int layer, int n_episodes,
                                          int k, uint64_t seed) {
  if (task_a.input_space != task_b.input_space)
    throw ContractError("conflicting tasks must share an input space: " + task_a.name + " vs " +
                        task_b.name);
  ConflictResult res;
  res.task_a = task_a.name;
  res.task_b = task_b.name;
  res.n_episodes = n_episodes;
  int reg_a = 0, conf_a = 0, conf_b = 0;
  for (int i = 0; i < n_episodes; ++i) {
    const uint64_t es = episode_seed(seed, task_a.name + "|" + task_b.name, i);
    Episode ep_a = sample_episode(task_a, k, es);
    // theta_B comes from its own independent demonstration set and dummy query
    Episode ep_b = sample_episode(task_b, k, mix_seed(es, 0x7468657462ULL /* "thetb" */));
    Rng rng(mix_seed(es, 0x64756d79ULL));
    const SymbolSeq dummy = draw_dummy(task_b, ep_b.demos, ep_a.query, rng);
    TaskVector tv_b = extract_task_vector(model, ep_b.demos, dummy, layer, task_b.name);

    if (run_regular(model, ep_a.demos, ep_a.query) == ep_a.gold) ++reg_a;
    const int pred = run_conflicting(model, ep_a.demos, tv_b, ep_a.query);
    if (pred == task_a.apply(ep_a.query)) ++conf_a;
    if (pred == task_b.apply(ep_a.query)) ++conf_b;
  }
  res.regular_on_a = static_cast<double>(reg_a) / n_episodes;
  res.conflicting_on_a = static_cast<double>(conf_a) / n_episodes;
  res.conflicting_on_b = static_cast<double>(conf_b) / n_episodes;
  return res;
}

void save_task_vectors(const std::string& path, const std::vector<TaskVector>& vectors) {
  nlohmann::json meta;
  meta["kind"] = "task_vectors";
  nlohmann::json info = nlohmann::json::array();
  std::vector<ContainerEntry> entries;
  std::map<std::string, int> counters;
  for (const auto& tv : vectors) {
    const int idx = counters[tv.task_name]++;
    entries.push_back({"theta/" + tv.task_name + "/" + std::to_string(idx),
                       {static_cast<int>(tv.theta.size())},
                       tv.theta});
    info.push_back({{"task", tv.task_name},
                    {"layer", tv.layer},
                    {"demos_hash", tv.demos_hash},
                    {"dummy_query", tv.dummy_query},
                    {"seed", tv.seed}});
  }
  meta["vectors"] = info;
  write_container(path, meta, entries);
}

std::vector<TaskVector> load_task_vectors(const std::string& path) {
  Container c = read_container(path);
  const auto& meta = *c.meta;
  if (!meta.contains("kind") || meta["kind"] != "task_vectors")
    throw IoError("not a task-vector container: " + path);
  const auto& info = meta.at("vectors");
  if (info.size() != c.entries.size())
    throw IoError("task-vector metadata/manifest mismatch in " + path);
  std::vector<TaskVector> out;
  for (size_t i = 0; i < c.entries.size(); ++i) {
    TaskVector tv;
    tv.theta = c.entries[i].data;
    tv.task_name = info[i].at("task").get<std::string>();
    tv.layer = info[i].at("layer").get<int>();
    tv.demos_hash = info[i].at("demos_hash").get<uint64_t>();
    tv.dummy_query = info[i].at("dummy_query").get<SymbolSeq>();
    tv.seed = info[i].at("seed").get<uint64_t>();
    out.push_back(std::move(tv));
  }
  return out;
}

}  // namespace tvlab
