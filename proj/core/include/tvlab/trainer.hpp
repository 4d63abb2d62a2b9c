#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tvlab/model.hpp"
#include "tvlab/tasks.hpp"

namespace tvlab {

struct TrainConfig {
  int steps = 20000;
  int batch_size = 64;
  float lr = 3e-4f;
  float lr_min_factor = 0.1f;  // cosine decay floor, as a fraction of lr
  int k_min = 2;
  int k_max = 6;
  int eval_every = 250;
  int dev_episodes = 25;
  int dev_k = 5;
  int dev_bijections = 8;      // how many mixture bijections enter the dev set
  std::vector<float> mixture_weights;  // empty = uniform; else one positive weight per task
  bool early_stop = true;
  double gate_builtin = 0.9;   // mean dev Regular accuracy on algorithmic tasks
  double gate_bijection = 0.8; // mean dev Regular accuracy on dev bijections
  uint64_t seed = 0;           // data seed

  void validate(int max_seq_len) const;
};

struct DevPoint {
  int step = 0;
  std::vector<std::pair<std::string, double>> per_task;
  double mean_builtin = 0.0;
  double mean_bijection = 0.0;
};

struct TrainReport {
  std::vector<std::pair<int, float>> loss_curve;
  std::vector<DevPoint> acc_curve;
  int steps_run = 0;
  bool gate_reached = false;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

/// Meta-trains the model to predict the gold token at the final arrow
/// position over a uniform mixture of tasks. Deterministic per
/// (model seed, data seed, config). Throws ContractError naming the step on
/// loss divergence.
TrainReport train(TransformerModel& model, const std::vector<TaskSpec>& mixture,
                  const TrainConfig& cfg, std::ostream* log = nullptr);

/// Fraction of episodes whose final-position argmax equals the gold token;
/// n_episodes fresh seeded episodes per task.
std::vector<std::pair<std::string, double>> evaluate_regular(const TransformerModel& model,
                                                             const std::vector<TaskSpec>& tasks,
                                                             int n_episodes, int k,
                                                             uint64_t seed);

/// Same evaluation driven by an arbitrary prompt->token predictor (lets
/// tests swap in oracle stubs).
using Predictor = std::function<int(const Episode&, const std::vector<int>& prompt)>;
std::vector<std::pair<std::string, double>> evaluate_regular_with(
    const Predictor& predict, const std::vector<TaskSpec>& tasks, int n_episodes, int k,
    uint64_t seed);

/// Deterministic per-episode seed for (root seed, task name, index).
uint64_t episode_seed(uint64_t root, const std::string& task_name, int index);

std::string train_report_json(const TrainReport& report);
std::string loss_curve_csv(const TrainReport& report);
std::string accuracy_curve_csv(const TrainReport& report);

}  // namespace tvlab
