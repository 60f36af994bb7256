#pragma once

#include <memory>
#include <string>
#include <vector>

#include "neon/neon_ops.hpp"
#include "neon/task.hpp"

namespace neon {

enum class Variant { GP, NEON, NEON_HH, NEON_ABL };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_uses_expander(Variant v);
bool variant_needs_model(Variant v);

struct RunConfig {
  Variant variant = Variant::GP;
  int population_size = 100;
  int generations = 50;
  int tournament_size = 7;
  double mutation_prob = 0.2;
  int height_limit = 13;
  double success_threshold = 1e-10;
  std::uint64_t seed = 0;
  ExpanderConfig expander;
  bool stop_on_zero = true;  // an exact-zero MSE can never be improved on
  int init_min_height = 1;
  int init_max_height = 6;

  // wiring, not serialized configuration
  const GatModel* model = nullptr;
  const FrontSelector* selector_override = nullptr;
};

struct GenRecord {
  int gen = 0;
  double gen_best = 0.0;
  double best_ever = 0.0;
  double mean_finite = 0.0;  // mean fitness over finite individuals
  int finite_count = 0;
  int lib_fill = 0;
  double mean_size = 0.0;
  double mean_height = 0.0;
  int pushed = 0;
  int skipped_budget = 0;
};

struct RunResult {
  ExprTree best_tree;
  double best_mse = std::numeric_limits<double>::infinity();
  bool success = false;
  int best_size = 0;
  std::vector<GenRecord> records;
  int generations_run = 0;
  bool stopped_early = false;
  double wall_seconds = 0.0;  // reported on the console, never serialized
};

// Mean squared error over all rows; any non-finite evaluation gives +inf.
double fitness_mse(const ExprTree& tree, const SrTask& task);

// Tournament of `tsize` draws with replacement; lowest fitness wins, ties
// broken uniformly.
int tournament_select(const std::vector<double>& fitness, int tsize, Rng& rng);

ExprTree subtree_crossover(const ExprTree& p1, const ExprTree& p2, Rng& rng);

// Uniform node; replacement grown to height h' ~ U[0, h] where h is the
// height of the replaced subtree, so mutation alone never grows the tree.
ExprTree subtree_mutation(const ExprTree& p, Rng& rng, int arity);

RunResult evolve(std::shared_ptr<const SrTask> task, const RunConfig& config);

}  // namespace neon
