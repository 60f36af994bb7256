#include "neon/evolution.hpp"

#include <chrono>
#include <cmath>

#include "neon/errors.hpp"

namespace neon {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::GP: return "GP";
    case Variant::NEON: return "NEON";
    case Variant::NEON_HH: return "NEON-HH";
    case Variant::NEON_ABL: return "NEON-ABL";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "GP" || name == "gp") return Variant::GP;
  if (name == "NEON" || name == "neon") return Variant::NEON;
  if (name == "NEON-HH" || name == "neon-hh" || name == "NEON_HH") return Variant::NEON_HH;
  if (name == "NEON-ABL" || name == "neon-abl" || name == "NEON_ABL")
    return Variant::NEON_ABL;
  throw ConfigError("unknown variant '" + name + "' (GP, NEON, NEON-HH, NEON-ABL)");
}

bool variant_uses_expander(Variant v) { return v != Variant::GP; }
bool variant_needs_model(Variant v) {
  return v == Variant::NEON || v == Variant::NEON_HH;
}

double fitness_mse(const ExprTree& tree, const SrTask& task) {
  Eigen::VectorXd out = eval_tree(tree, task.inputs);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    const double r = out[j] - task.targets[j];
    acc += r * r;
  }
  acc /= static_cast<double>(out.size());
  return std::isfinite(acc) ? acc : std::numeric_limits<double>::infinity();
}

int tournament_select(const std::vector<double>& fitness, int tsize, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(fitness.size()) - 1);
  double best = std::numeric_limits<double>::infinity();
  int sampled[64];
  int count = 0;
  for (int i = 0; i < tsize; ++i) {
    int j = pick(rng);
    if (fitness[j] < best) {
      best = fitness[j];
      sampled[0] = j;
      count = 1;
    } else if (fitness[j] == best && count < 64) {
      sampled[count++] = j;
    }
  }
  return sampled[std::uniform_int_distribution<int>(0, count - 1)(rng)];
}

ExprTree subtree_crossover(const ExprTree& p1, const ExprTree& p2, Rng& rng) {
  NodePath at = uniform_node(p1, rng);
  NodePath from = uniform_node(p2, rng);
  return p1.with_replaced(at, p2.at(from));
}

ExprTree subtree_mutation(const ExprTree& p, Rng& rng, int arity) {
  NodePath at = uniform_node(p, rng);
  const int h = p.at(at).height();
  const int h_new = std::uniform_int_distribution<int>(0, h)(rng);
  return p.with_replaced(at, random_tree_grow(rng, h_new, arity));
}

namespace {

// Ramped half-and-half over heights [min, max].
std::vector<ExprTree> init_population(int size, int min_h, int max_h, int arity,
                                      Rng& rng) {
  std::vector<ExprTree> pop;
  pop.reserve(size);
  const int levels = max_h - min_h + 1;
  for (int i = 0; i < size; ++i) {
    const int h = min_h + (i / 2) % levels;
    pop.push_back(i % 2 == 0 ? random_tree_grow(rng, h, arity)
                             : random_tree_full(rng, h, arity));
  }
  return pop;
}

}  // namespace

RunResult evolve(std::shared_ptr<const SrTask> task, const RunConfig& config) {
  const Variant variant = config.variant;
  if (variant_needs_model(variant) && !config.model && !config.selector_override)
    throw ConfigError(std::string(variant_name(variant)) +
                      " requires a trained model (none was provided)");

  ExpanderConfig exp_cfg = config.expander;
  exp_cfg.mode =
      variant == Variant::NEON_ABL ? SelectionMode::Random : SelectionMode::Gnn;

  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(config.seed);
  std::vector<ExprTree> pop = init_population(
      config.population_size, config.init_min_height, config.init_max_height,
      task->arity, rng);
  Library lib(static_cast<std::size_t>(config.population_size));

  RunResult result;
  std::vector<double> fitness(pop.size());
  std::vector<ExprTree> next;
  next.reserve(pop.size());

  for (int gen = 0; gen < config.generations; ++gen) {
    GenRecord rec;
    rec.gen = gen;
    double gen_best = std::numeric_limits<double>::infinity();
    double finite_sum = 0.0;
    std::int64_t size_sum = 0, height_sum = 0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      fitness[i] = fitness_mse(pop[i], *task);
      if (fitness[i] < gen_best) gen_best = fitness[i];
      if (std::isfinite(fitness[i])) {
        finite_sum += fitness[i];
        rec.finite_count++;
      }
      size_sum += pop[i].size();
      height_sum += pop[i].height();
      if (fitness[i] < result.best_mse) {
        result.best_mse = fitness[i];
        result.best_tree = pop[i];
      }
    }
    rec.gen_best = gen_best;
    rec.best_ever = result.best_mse;
    rec.mean_finite = rec.finite_count ? finite_sum / rec.finite_count : 0.0;
    rec.mean_size = static_cast<double>(size_sum) / static_cast<double>(pop.size());
    rec.mean_height = static_cast<double>(height_sum) / static_cast<double>(pop.size());

    if (variant_uses_expander(variant)) {
      ExpandStats stats = expand_population(pop, task, config.model, lib, exp_cfg, rng,
                                            config.selector_override);
      rec.pushed = stats.pushed;
      rec.skipped_budget = stats.skipped_budget;
    }
    rec.lib_fill = static_cast<int>(lib.size());
    result.records.push_back(rec);
    result.generations_run = gen + 1;

    if (config.stop_on_zero && result.best_mse == 0.0) {
      result.stopped_early = gen + 1 < config.generations;
      break;
    }
    if (gen + 1 == config.generations) break;  // the last population is final

    next.clear();
    std::bernoulli_distribution mutate(config.mutation_prob);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < pop.size(); ++i) {
      const ExprTree& p1 = pop[tournament_select(fitness, config.tournament_size, rng)];
      ExprTree child = p1;
      bool use_graft = false;
      switch (variant) {
        case Variant::GP: break;
        case Variant::NEON:
        case Variant::NEON_ABL: use_graft = true; break;
        case Variant::NEON_HH: use_graft = coin(rng); break;
      }
      if (use_graft && !lib.empty()) {
        child = graft(p1, lib, rng);
      } else {
        // crossover; grafting falls back here while the library is empty
        const ExprTree& p2 =
            pop[tournament_select(fitness, config.tournament_size, rng)];
        child = subtree_crossover(p1, p2, rng);
      }
      if (child.height() > config.height_limit) child = p1;
      if (mutate(rng)) {
        ExprTree mutated = subtree_mutation(child, rng, task->arity);
        if (mutated.height() <= config.height_limit) child = std::move(mutated);
      }
      next.push_back(std::move(child));
    }
    pop.swap(next);
  }

  result.success = result.best_mse < config.success_threshold;
  result.best_size = result.best_tree.size();
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace neon
