#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "neon/expr.hpp"
#include "neon/gat.hpp"
#include "neon/task.hpp"

namespace neon {

// Bounded FIFO of subprograms; eviction is strictly oldest-first.
class Library {
 public:
  explicit Library(std::size_t capacity) : cap_(capacity) {}

  void push(ExprTree tree) {
    q_.push_back(std::move(tree));
    if (q_.size() > cap_) q_.pop_front();
  }

  bool empty() const { return q_.empty(); }
  std::size_t size() const { return q_.size(); }
  std::size_t capacity() const { return cap_; }
  const ExprTree& at(std::size_t i) const { return q_.at(i); }  // 0 = oldest

  const ExprTree& sample(Rng& rng) const {
    if (q_.empty()) throw Error("cannot sample from an empty library");
    return q_[std::uniform_int_distribution<std::size_t>(0, q_.size() - 1)(rng)];
  }

 private:
  std::deque<ExprTree> q_;
  std::size_t cap_;
};

enum class SelectionMode { Gnn, Random };

struct ExpanderConfig {
  double draw_fraction = 0.2;
  int top_k = 5;
  double saliency_threshold = 0.5;
  SelectionMode mode = SelectionMode::Gnn;
  int node_budget = 10000;
};

// Test hook: replaces the front-selection step. Receives the front size and
// optional scores (null in random mode), returns selected front indices.
using FrontSelector =
    std::function<std::vector<int>(int front_size, const Eigen::VectorXf* scores, Rng&)>;

struct ExpandStats {
  int drawn = 0;
  int expanded = 0;         // graphs expanded within budget
  int skipped_budget = 0;   // programs whose expansion exceeded the budget
  int pushed = 0;           // trees enqueued to the library
  std::int64_t front_total = 0;
  // deterministic trace of the pre-selection pipeline (for diffing variants)
  std::vector<int> drawn_indices;
  std::vector<std::string> sampled_subtrees;
  std::vector<int> front_sizes;
};

// One expander pass: draw ceil(draw_fraction * |pop|) programs without
// replacement, sample a height-biased subtree from each, expand its graph one
// level, select promising front nodes (saliency threshold + top-k in Gnn
// mode, uniform up-to-k in Random mode), and push their candidate trees.
// Candidates are never fitness-evaluated; the population is left untouched.
ExpandStats expand_population(const std::vector<ExprTree>& pop,
                              std::shared_ptr<const SrTask> task, const GatModel* model,
                              Library& lib, const ExpanderConfig& cfg, Rng& rng,
                              const FrontSelector* selector_override = nullptr);

// Tree-swapping crossover with a uniformly drawn library program; the parent
// is not modified.  Throws when the library is empty.
ExprTree graft(const ExprTree& parent, const Library& lib, Rng& rng);

}  // namespace neon
