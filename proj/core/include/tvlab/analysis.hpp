#pragma once

#include <array>
#include <string>
#include <vector>

#include "tvlab/hypothesis.hpp"
#include "tvlab/model.hpp"
#include "tvlab/tasks.hpp"

namespace tvlab {

/// Task vectors collected at one layer, grouped by task name.
struct VectorSet {
  std::vector<TaskVector> vectors;
  int layer = 1;
  int d_model = 0;
};

/// n_per_task vectors per task, each from an independent (S, x') draw.
VectorSet collect_task_vectors(const TransformerModel& model, const std::vector<TaskSpec>& tasks,
                               int n_per_task, int layer, int k, uint64_t seed);

enum class Metric { CosineDistance, Euclidean };

struct DistanceReport {
  struct TaskStats {
    std::string task;
    std::vector<double> within;   // pairwise distances inside the task
    std::vector<double> between;  // distances from this task to all others
    double within_mean = 0.0;
    double between_mean = 0.0;
  };
  Metric metric = Metric::CosineDistance;
  std::vector<TaskStats> per_task;
  /// fraction of tasks with within_mean < between_mean
  double clustered_fraction = 0.0;
};

/// All pairwise distances partitioned into within-task / between-task.
/// Requires at least two vectors per task.
DistanceReport distance_stats(const VectorSet& vs, Metric metric);

struct Projection2d {
  std::vector<std::string> task;          // parallel to coords
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> explained_variance_fraction{0.0, 0.0};
};

/// Projection onto the top-2 principal components of the mean-centered set.
/// Deterministic: each component's largest-magnitude loading is made
/// positive. Raw coordinate routine exposed for tests.
Projection2d project_2d(const VectorSet& vs);
Projection2d project_2d_rows(const std::vector<std::vector<float>>& rows,
                             const std::vector<std::string>& labels);

struct LensEntry {
  std::string task;
  int layer = 0;
  std::vector<std::pair<int, double>> top;  // (token id, probability), descending
};

/// Vocabulary distribution induced by theta through the final layer norm and
/// unembedding; top-k with ties broken by token id.
LensEntry logit_lens(const TransformerModel& model, const TaskVector& tv, int k);

std::string distance_report_json(const DistanceReport& report);
std::string projection_csv(const Projection2d& proj);
std::string lens_report_json(const std::vector<LensEntry>& entries);

}  // namespace tvlab
