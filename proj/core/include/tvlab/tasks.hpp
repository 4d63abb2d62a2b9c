#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tvlab/rng.hpp"

namespace tvlab {

/// Closed symbol vocabulary: 26 "lower" symbols, their 26 paired "upper"
/// symbols, an arrow and a separator. Rendered as a..z / A..Z / "→" / ",".
struct Vocab {
  static constexpr int kNumSymbols = 26;
  static constexpr int kArrow = 52;
  static constexpr int kSep = 53;
  static constexpr int kSize = 54;

  static int lower(int i) { return i; }
  static int upper(int i) { return kNumSymbols + i; }
  static bool is_lower(int id) { return id >= 0 && id < kNumSymbols; }
  static bool is_upper(int id) { return id >= kNumSymbols && id < 2 * kNumSymbols; }
  static std::string token_text(int id);
};

using SymbolSeq = std::vector<int>;

/// A deterministic single-token mapping rule plus a sampler over its valid
/// inputs. Immutable and freely shareable.
struct TaskSpec {
  enum class Category { Algorithmic, Bijection };

  std::string name;
  Category category = Category::Algorithmic;
  int input_len = 1;               // tokens per input (1, or 3 for list tasks)
  std::string input_space;         // tasks sharing this string share inputs
  std::function<int(const SymbolSeq&)> apply;
  std::function<SymbolSeq(Rng&)> input_sampler;
};

struct Demonstration {
  SymbolSeq input;
  int output = 0;
};

/// One sampled ICL instance: k demonstrations, a query and its gold output.
struct Episode {
  TaskSpec task;
  std::vector<Demonstration> demos;
  SymbolSeq query;
  int gold = 0;
  uint64_t seed = 0;
};

/// The six algorithmic tasks: next_symbol, prev_symbol (cyclic), list_first,
/// list_last (lists of 3), to_upper, to_lower.
std::vector<TaskSpec> builtin_tasks();

/// Seeded random permutation over the lower symbols.
TaskSpec random_bijection_task(uint64_t seed);

/// Test constructor taking an explicit permutation.
TaskSpec bijection_task_from_permutation(const std::array<int, Vocab::kNumSymbols>& perm,
                                         const std::string& name);

/// Registry lookup: builtin names, or "bijection:<seed>".
TaskSpec task_by_name(const std::string& name);

/// k distinct-input demonstrations plus a query distinct from all of them;
/// deterministic per (task, k, seed).
Episode sample_episode(const TaskSpec& task, int k, uint64_t seed);

/// A fresh valid input distinct from everything in `exclude` (used for dummy
/// queries).
SymbolSeq sample_input_excluding(const TaskSpec& task, Rng& rng,
                                 const std::vector<SymbolSeq>& exclude);

/// [in1 → out1, in2 → out2, ..., x →]; list inputs expand elementwise with
/// "," between elements. The final token is always the arrow.
std::vector<int> render_prompt(const std::vector<Demonstration>& demos, const SymbolSeq& query);

/// Prompt for the demonstration-free baseline: [x, →].
std::vector<int> render_query_only(const SymbolSeq& query);

std::string render_text(const std::vector<int>& tokens);

}  // namespace tvlab
