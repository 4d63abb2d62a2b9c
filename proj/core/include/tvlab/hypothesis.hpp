#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tvlab/model.hpp"
#include "tvlab/tasks.hpp"

namespace tvlab {

/// The hidden state of the final arrow token at layer L, computed from
/// demonstrations S and a dummy query; treated as the parameters of the
/// rule-application function. Fully replayable from (model, demos, dummy
/// query, layer).
struct TaskVector {
  std::vector<float> theta;
  int layer = 1;
  std::string task_name;
  uint64_t demos_hash = 0;
  SymbolSeq dummy_query;
  uint64_t seed = 0;
};

uint64_t hash_demos(const std::vector<Demonstration>& demos);

/// theta = hidden state of the final arrow after layer L in a forward pass
/// over [S, x', ->]. The real query never enters this computation.
TaskVector extract_task_vector(const TransformerModel& model,
                               const std::vector<Demonstration>& demos,
                               const SymbolSeq& dummy_query, int layer,
                               const std::string& task_name = "");

/// Rejected-alternative extraction: forward over [S, x, ->] with the query
/// span invisible to the rest of the prompt (kept for comparison runs only).
TaskVector extract_task_vector_blocked(const TransformerModel& model,
                                       const std::vector<Demonstration>& demos,
                                       const SymbolSeq& query, int layer,
                                       const std::string& task_name = "");

/// Demonstration-free application: forward over [x, placeholder] with theta
/// patched at (layer, final position); returns the argmax token. The
/// placeholder defaults to the arrow but is overridden by the patch.
int apply_task_vector(const TransformerModel& model, const SymbolSeq& query,
                      const TaskVector& tv, std::vector<float>* logits_out = nullptr,
                      int placeholder_token = Vocab::kArrow);

/// Plain ICL: argmax at the final arrow of [S, x, ->].
int run_regular(const TransformerModel& model, const std::vector<Demonstration>& demos,
                const SymbolSeq& query);

/// Demonstration-free forward on [x, ->], no patching.
int run_baseline(const TransformerModel& model, const SymbolSeq& query);

/// Demonstrations for task A in the prompt, theta for task B patched at the
/// final arrow.
int run_conflicting(const TransformerModel& model, const std::vector<Demonstration>& demos_a,
                    const TaskVector& tv_b, const SymbolSeq& query);

struct ProcedureResult {
  std::string procedure;  // Regular | Hypothesis | Baseline
  std::vector<std::pair<std::string, double>> per_task;
  int n_episodes = 0;
  int layer = 0;  // Hypothesis only
};

struct LayerSweepReport {
  std::vector<double> mean_accuracy;                                   // index 0 -> L=1
  std::vector<std::vector<std::pair<std::string, double>>> per_task;   // same indexing
  int best_layer = 1;  // argmax of mean accuracy, ties to the smallest layer
};

/// Hypothesis-procedure accuracy for every L in 1..n_layers on fresh dev
/// episodes (fresh S, x', x per episode).
LayerSweepReport layer_sweep(const TransformerModel& model, const std::vector<TaskSpec>& tasks,
                             int episodes_per_task, int k, uint64_t seed);

/// Regular / Hypothesis / Baseline over identical episode draws (shared
/// seeds); Hypothesis additionally draws a dummy query per episode.
std::array<ProcedureResult, 3> evaluate_procedures(const TransformerModel& model,
                                                   const std::vector<TaskSpec>& tasks, int layer,
                                                   int n_episodes, int k, uint64_t seed);

struct ConflictResult {
  std::string task_a, task_b;
  double regular_on_a = 0.0;     // Regular forward pass scored against A
  double conflicting_on_a = 0.0; // theta_B injected, scored against A
  double conflicting_on_b = 0.0; // theta_B injected, scored against B
  int n_episodes = 0;
};

/// The conflicting-task experiment for one (A, B) pair. A and B must share
/// an input space.
ConflictResult run_conflicting_experiment(const TransformerModel& model, const TaskSpec& task_a,
                                          const TaskSpec& task_b, int layer, int n_episodes,
                                          int k, uint64_t seed);

void save_task_vectors(const std::string& path, const std::vector<TaskVector>& vectors);
std::vector<TaskVector> load_task_vectors(const std::string& path);

}  // namespace tvlab
