#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "neon/expr.hpp"
#include "neon/semgraph.hpp"
#include "neon/task.hpp"

namespace neon {

// A supervised example for the saliency network: the lower part of a split
// expression tree, expanded one level, with binary targets over the front
// (positive iff the candidate occurs as a subtree of the origin tree, with
// add/mul operand order normalized).
struct LabeledExpansion {
  SemGraph graph;
  std::vector<int> front;             // application node ids
  std::vector<std::uint8_t> targets;  // per front node
  ExprTree origin;
  int split_depth = 0;
};

// Random expression of height in [1, max_height] that references at least one
// variable; leaves split 50/50 between variables and constants.
ExprTree gen_training_expression(Rng& rng, int arity, int max_height = 6);

// Inputs i.i.d. standard normal; rows with non-finite targets are rejected
// and resampled.  Throws after 10,000 consecutive rejections.
SrTask gen_task(const ExprTree& p, int n, Rng& rng, int arity = -1,
                std::string id = "");

// Splits p at the given depth (lower part = subtrees rooted there), inserts
// the lower subtrees into one graph, expands once, and labels the front.
// Returns nullopt when the item must be discarded (empty front or expansion
// budget exceeded).
std::optional<LabeledExpansion> split_at_depth(const ExprTree& p,
                                               std::shared_ptr<const SrTask> task,
                                               int depth, int node_budget = 10000);

// Same, with the depth drawn uniformly from [1, height(p)].
std::optional<LabeledExpansion> split_and_label(const ExprTree& p,
                                                std::shared_ptr<const SrTask> task,
                                                Rng& rng, int node_budget = 10000);

// ---------------------------------------------------------------------------
// Corpus

struct CorpusItem {
  ExprTree origin;
  int arity = 1;
  int split_depth = 1;
  std::uint64_t item_seed = 0;
  int operators = 0;  // realized complexity
};

struct Corpus {
  std::vector<CorpusItem> train;
  std::vector<CorpusItem> valid;
};

// `count` items with distinct origin expressions; the first 60 form the
// validation split.  Every item is verified to materialize (non-empty front).
Corpus build_corpus(int count, Rng& rng, int node_budget = 10000, int task_n = 100);

// Rebuilds an item's task and labeled graph; `salt` selects the variable
// resample block (0 = the original instantiation).
struct MaterializedItem {
  std::shared_ptr<const SrTask> task;
  LabeledExpansion labeled;
};
std::optional<MaterializedItem> materialize_item(const CorpusItem& item, int salt,
                                                 int node_budget = 10000,
                                                 int task_n = 100);

// JSON-lines persistence: origin s-expression, arity, split depth, seed, role.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace neon
