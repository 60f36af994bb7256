#include "neon/neon_ops.hpp"

#include <algorithm>
#include <numeric>

#include "neon/semgraph.hpp"

namespace neon {

namespace {

std::vector<int> select_gnn(const Eigen::VectorXf& scores, double threshold, int top_k) {
  std::vector<int> kept;
  for (int i = 0; i < scores.size(); ++i)
    if (scores[i] >= static_cast<float>(threshold)) kept.push_back(i);
  std::stable_sort(kept.begin(), kept.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  if (static_cast<int>(kept.size()) > top_k) kept.resize(top_k);
  return kept;
}

std::vector<int> select_random(int front_size, int top_k, Rng& rng) {
  std::vector<int> idx(front_size);
  std::iota(idx.begin(), idx.end(), 0);
  const int take = std::min(front_size, top_k);
  for (int i = 0; i < take; ++i) {
    int j = std::uniform_int_distribution<int>(i, front_size - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());  // push in creation order
  return idx;
}

}  // namespace

ExpandStats expand_population(const std::vector<ExprTree>& pop,
                              std::shared_ptr<const SrTask> task, const GatModel* model,
                              Library& lib, const ExpanderConfig& cfg, Rng& rng,
                              const FrontSelector* selector_override) {
  ExpandStats stats;
  if (pop.empty()) return stats;
  if (cfg.mode == SelectionMode::Gnn && !model && !selector_override)
    throw Error("expander requires a model in Gnn selection mode");

  const int n_pop = static_cast<int>(pop.size());
  const int n_draw = std::min(
      n_pop, static_cast<int>(std::ceil(cfg.draw_fraction * static_cast<double>(n_pop))));

  // partial Fisher-Yates, then process in population order
  std::vector<int> idx(n_pop);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n_draw; ++i) {
    int j = std::uniform_int_distribution<int>(i, n_pop - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n_draw);
  std::sort(idx.begin(), idx.end());
  stats.drawn = n_draw;
  stats.drawn_indices = idx;

  const auto terminals = terminal_set(task->arity);
  for (int pi : idx) {
    const ExprTree& p = pop[pi];
    NodePath path = sample_subtree_height_biased(p, rng);
    const ExprTree& s = p.at(path);
    stats.sampled_subtrees.push_back(canonical_string(s));

    SemGraph graph(task);
    graph.add_subtree(s);
    std::vector<int> front;
    try {
      front = graph.expand(terminals, cfg.node_budget);
    } catch (const BudgetError&) {
      stats.skipped_budget++;
      stats.front_sizes.push_back(-1);
      continue;
    }
    stats.expanded++;
    stats.front_total += static_cast<std::int64_t>(front.size());
    stats.front_sizes.push_back(static_cast<int>(front.size()));
    if (front.empty()) continue;

    std::vector<int> selected;
    if (selector_override) {
      Eigen::VectorXf scores;
      const Eigen::VectorXf* sp = nullptr;
      if (cfg.mode == SelectionMode::Gnn && model) {
        scores = saliency_map(*model, graph).scores;
        sp = &scores;
      }
      selected = (*selector_override)(static_cast<int>(front.size()), sp, rng);
    } else if (cfg.mode == SelectionMode::Gnn) {
      SaliencyMap sal = saliency_map(*model, graph);
      selected = select_gnn(sal.scores, cfg.saliency_threshold, cfg.top_k);
    } else {
      selected = select_random(static_cast<int>(front.size()), cfg.top_k, rng);
    }
    for (int f : selected) {
      lib.push(graph.candidate_tree(front[f]));
      stats.pushed++;
    }
  }
  return stats;
}

ExprTree graft(const ExprTree& parent, const Library& lib, Rng& rng) {
  if (lib.empty()) throw Error("graft requires a non-empty library");
  NodePath at = uniform_node(parent, rng);
  const ExprTree& program = lib.sample(rng);
  return parent.with_replaced(at, program);
}

}  // namespace neon
