#include "tvlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tvlab/rng.hpp"
#include "tvlab/trainer.hpp"

namespace tvlab {

VectorSet collect_task_vectors(const TransformerModel& model, const std::vector<TaskSpec>& tasks,
                               int n_per_task, int layer, int k, uint64_t seed) {
  VectorSet vs;
  vs.layer = layer;
  vs.d_model = model.config().d_model;
  for (const auto& task : tasks) {
    for (int i = 0; i < n_per_task; ++i) {
      const uint64_t es = episode_seed(mix_seed(seed, 0x636f6c6cULL /* "coll" */), task.name, i);
      // an episode gives an independent S; its query doubles as the dummy x'
      Episode ep = sample_episode(task, k, es);
      TaskVector tv = extract_task_vector(model, ep.demos, ep.query, layer, task.name);
      tv.seed = es;
      vs.vectors.push_back(std::move(tv));
    }
  }
  return vs;
}

namespace {

double distance(const std::vector<float>& a, const std::vector<float>& b, Metric metric) {
  if (metric == Metric::Euclidean) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw ContractError("cosine distance undefined for a zero vector");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace

DistanceReport distance_stats(const VectorSet& vs, Metric metric) {
  std::vector<std::string> order;
  for (const auto& tv : vs.vectors)
    if (std::find(order.begin(), order.end(), tv.task_name) == order.end())
      order.push_back(tv.task_name);

  DistanceReport report;
  report.metric = metric;
  int clustered = 0;
  for (const auto& name : order) {
    DistanceReport::TaskStats st;
    st.task = name;
    std::vector<const TaskVector*> mine, others;
    for (const auto& tv : vs.vectors)
      (tv.task_name == name ? mine : others).push_back(&tv);
    if (mine.size() < 2)
      throw ContractError("distance_stats: task '" + name + "' has fewer than 2 vectors");
    for (size_t i = 0; i < mine.size(); ++i)
      for (size_t j = i + 1; j < mine.size(); ++j)
        st.within.push_back(distance(mine[i]->theta, mine[j]->theta, metric));
    for (const auto* a : mine)
      for (const auto* b : others)
        st.between.push_back(distance(a->theta, b->theta, metric));
    st.within_mean = mean(st.within);
    st.between_mean = mean(st.between);
    if (!st.between.empty() && st.within_mean < st.between_mean) ++clustered;
    report.per_task.push_back(std::move(st));
  }
  report.clustered_fraction =
      report.per_task.empty() ? 0.0
                              : static_cast<double>(clustered) /
                                    static_cast<double>(report.per_task.size());
  return report;
}

Projection2d project_2d_rows(const std::vector<std::vector<float>>& rows,
                             const std::vector<std::string>& labels) {
  const size_t n = rows.size();
  if (n < 3) throw ContractError("project_2d: need at least 3 vectors");
  const size_t d = rows[0].size();

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (size_t i = 0; i < n; ++i) {
    if (rows[i].size() != d) throw DimensionError("project_2d: ragged input");
    for (size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;

  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  const double total_var = cov.trace();
  if (total_var < 1e-18)
    throw ContractError("project_2d: degenerate input (all vectors identical)");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw ContractError("project_2d: eigensolver failed");

  Projection2d out;
  out.task = labels;
  out.coords.resize(n);
  const Eigen::Index last = static_cast<Eigen::Index>(d) - 1;
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(last - c);  // eigenvalues ascend
    // deterministic sign: largest-magnitude loading positive
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (size_t i = 0; i < n; ++i)
      out.coords[i][static_cast<size_t>(c)] = proj(static_cast<Eigen::Index>(i));
    out.explained_variance_fraction[static_cast<size_t>(c)] =
        es.eigenvalues()(last - c) / total_var;
  }
  return out;
}

Projection2d project_2d(const VectorSet& vs) {
  std::vector<std::vector<float>> rows;
  std::vector<std::string> labels;
  for (const auto& tv : vs.vectors) {
    rows.push_back(tv.theta);
    labels.push_back(tv.task_name);
  }
  return project_2d_rows(rows, labels);
}

LensEntry logit_lens(const TransformerModel& model, const TaskVector& tv, int k) {
  if (k > model.config().vocab_size)
    throw ContractError("logit_lens: k exceeds vocab size");
  const std::vector<float> probs = model.project_to_vocab(tv.theta);
  std::vector<int> ids(probs.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  std::sort(ids.begin(), ids.end(), [&probs](int a, int b) {
    if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)])
      return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    return a < b;
  });
  LensEntry entry;
  entry.task = tv.task_name;
  entry.layer = tv.layer;
  for (int i = 0; i < k; ++i)
    entry.top.emplace_back(ids[static_cast<size_t>(i)],
                           static_cast<double>(probs[static_cast<size_t>(ids[static_cast<size_t>(i)])]));
  return entry;
}

std::string distance_report_json(const DistanceReport& report) {
  nlohmann::json j;
  j["metric"] = report.metric == Metric::CosineDistance ? "cosine" : "euclidean";
  j["clustered_fraction"] = report.clustered_fraction;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& st : report.per_task) {
    tasks.push_back({{"task", st.task},
                     {"within_mean", st.within_mean},
                     {"between_mean", st.between_mean},
                     {"n_within", st.within.size()},
                     {"n_between", st.between.size()},
                     {"margin", st.between_mean - st.within_mean}});
  }
  j["per_task"] = tasks;
  return j.dump(2);
}

std::string projection_csv(const Projection2d& proj) {
  std::string out = "task,index,x,y\n";
  std::map<std::string, int> counters;
  for (size_t i = 0; i < proj.coords.size(); ++i) {
    out += proj.task[i] + "," + std::to_string(counters[proj.task[i]]++) + "," +
           std::to_string(proj.coords[i][0]) + "," + std::to_string(proj.coords[i][1]) + "\n";
  }
  return out;
}

std::string lens_report_json(const std::vector<LensEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json tokens = nlohmann::json::array();
    for (const auto& [id, p] : e.top)
      tokens.push_back({{"token_id", id}, {"text", Vocab::token_text(id)}, {"p", p}});
    j.push_back({{"task", e.task}, {"layer", e.layer}, {"top", tokens}});
  }
  return j.dump(2);
}

}  // namespace tvlab
