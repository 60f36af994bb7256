#include "neon/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "neon/errors.hpp"

namespace neon {

namespace {

struct LiveItem {
  MaterializedItem mat;
  GatGraph gat;
  std::vector<int> val_examples;  // fixed instantiation subset (validation only)
};

LiveItem make_live(const CorpusItem& item, int salt, const TrainConfig& cfg) {
  auto mat = materialize_item(item, salt, cfg.node_budget, cfg.task_n);
  if (!mat)
    throw TrainError("corpus item '" + canonical_string(item.origin) +
                     "' failed to materialize");
  LiveItem live{std::move(*mat), {}, {}};
  live.gat = build_gat_graph(live.mat.labeled.graph);
  return live;
}

// loss on `k` instantiations of the item, drawn by `pick`
template <typename PickFn>
float item_loss(const GatModel& model, const LiveItem& item, int k, PickFn&& pick,
                float pos_weight, GatModel* grads) {
  const int m = item.gat.num_nodes;
  MatX<float> x(static_cast<Eigen::Index>(m) * k, kFeatureDim);
  MatX<float> block;
  for (int b = 0; b < k; ++b) {
    fill_feature_block<float>(item.mat.labeled.graph, item.gat, pick(b), 1, block);
    x.middleRows(static_cast<Eigen::Index>(b) * m, m) = block;
  }
  return gat_front_bce<float>(model, item.gat, x, k, item.mat.labeled.targets,
                              pos_weight, grads);
}

}  // namespace

TrainResult train_gat(GatModel& model, const Corpus& corpus, const TrainConfig& cfg) {
  if (corpus.train.empty()) throw TrainError("training corpus is empty");

  std::vector<LiveItem> train_items, valid_items;
  train_items.reserve(corpus.train.size());
  for (const auto& item : corpus.train) train_items.push_back(make_live(item, 0, cfg));
  valid_items.reserve(corpus.valid.size());
  for (const auto& item : corpus.valid) {
    LiveItem live = make_live(item, 0, cfg);
    Rng vrng = derive_rng(item.item_seed, 7777);
    const int n = static_cast<int>(live.mat.task->n());
    for (int k = 0; k < cfg.val_examples_per_item; ++k)
      live.val_examples.push_back(std::uniform_int_distribution<int>(0, n - 1)(vrng));
    valid_items.push_back(std::move(live));
  }

  Rng rng = derive_rng(cfg.seed, 0xacce5);
  AdamState adam;
  adam.cfg.lr = cfg.lr;

  auto eval_split = [&](const std::vector<LiveItem>& items, Rng* sample_rng) {
    double total = 0.0;
    for (const auto& item : items) {
      const int n = static_cast<int>(item.mat.task->n());
      float loss;
      if (sample_rng) {
        std::uniform_int_distribution<int> pick_dist(0, n - 1);
        std::vector<int> picks(cfg.train_examples_per_item);
        for (auto& p : picks) p = pick_dist(*sample_rng);
        loss = item_loss(model, item, static_cast<int>(picks.size()),
                         [&](int b) { return picks[b]; }, cfg.pos_weight, nullptr);
      } else {
        loss = item_loss(model, item, static_cast<int>(item.val_examples.size()),
                         [&](int b) { return item.val_examples[b]; }, cfg.pos_weight,
                         nullptr);
      }
      total += loss;
    }
    return total / static_cast<double>(items.size());
  };

  TrainResult result;
  {
    Rng eval_rng = derive_rng(cfg.seed, 0xe0e0);
    result.history.push_back(
        {0, eval_split(train_items, &eval_rng), eval_split(valid_items, nullptr)});
  }

  double best_valid = result.history.front().valid_loss;
  int stagnant = 0;
  std::vector<int> order(train_items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  GatModel grads = zero_like(model);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (epoch > 1 && (epoch - 1) % cfg.resample_every == 0) {
      const int salt = (epoch - 1) / cfg.resample_every;
      for (std::size_t i = 0; i < train_items.size(); ++i) {
        auto mat = materialize_item(corpus.train[i], salt, cfg.node_budget, cfg.task_n);
        if (!mat) continue;  // keep the previous instantiation
        train_items[i].mat = std::move(*mat);
        train_items[i].gat = build_gat_graph(train_items[i].mat.labeled.graph);
      }
    }

    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::uniform_int_distribution<int> any_int;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      grads = zero_like(model);
      for (std::size_t oi = b0; oi < b1; ++oi) {
        const LiveItem& item = train_items[order[oi]];
        const int n = static_cast<int>(item.mat.task->n());
        std::uniform_int_distribution<int> pick_dist(0, n - 1);
        std::vector<int> picks(cfg.train_examples_per_item);
        for (auto& p : picks) p = pick_dist(rng);
        float loss = item_loss(model, item, static_cast<int>(picks.size()),
                               [&](int b) { return picks[b]; }, cfg.pos_weight, &grads);
        if (!std::isfinite(loss))
          throw TrainError("non-finite training loss on item '" +
                           canonical_string(item.mat.labeled.origin) + "'");
        epoch_loss += loss;
      }
      // mean over the batch
      const float inv = 1.0f / static_cast<float>(b1 - b0);
      auto views = param_views(grads);
      for (auto& v : views)
        for (std::size_t i = 0; i < v.size; ++i) v.data[i] *= inv;
      adam_step(model, grads, adam);
    }
    epoch_loss /= static_cast<double>(train_items.size());

    const double valid_loss = eval_split(valid_items, nullptr);
    if (!std::isfinite(valid_loss)) throw TrainError("non-finite validation loss");
    result.history.push_back({epoch, epoch_loss, valid_loss});
    result.epochs = epoch;
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %4d  train %.5f  valid %.5f\n", epoch, epoch_loss,
                   valid_loss);

    if (valid_loss < best_valid - cfg.stagnation_eps) {
      best_valid = valid_loss;
      stagnant = 0;
    } else if (++stagnant >= cfg.stagnation_patience) {
      result.stop_reason = "validation loss stagnated";
      return result;
    }
  }
  result.stop_reason = "epoch limit reached";
  return result;
}

FrontEval evaluate_front_accuracy(const GatModel& model,
                                  const std::vector<CorpusItem>& items, int node_budget,
                                  int task_n) {
  FrontEval ev;
  std::int64_t actual_pos = 0, actual_neg = 0, true_neg = 0;
  for (const auto& item : items) {
    auto mat = materialize_item(item, 0, node_budget, task_n);
    if (!mat) continue;
    SaliencyMap sal = saliency_map(model, mat->labeled.graph);
    for (std::size_t f = 0; f < mat->labeled.targets.size(); ++f) {
      const bool predicted = sal.scores[f] >= 0.5f;
      const bool actual = mat->labeled.targets[f] != 0;
      ev.nodes++;
      if (actual) {
        actual_pos++;
        if (predicted) ev.true_pos++;
      } else {
        actual_neg++;
        if (predicted)
          ev.false_pos++;
        else
          true_neg++;
      }
      if (predicted == actual) ev.correct++;
    }
  }
  ev.positives = actual_pos;
  if (ev.nodes > 0) {
    ev.accuracy = static_cast<double>(ev.correct) / ev.nodes;
    ev.positive_rate = static_cast<double>(actual_pos) / ev.nodes;
    ev.constant_baseline = std::max(ev.positive_rate, 1.0 - ev.positive_rate);
  }
  const double tpr = actual_pos ? static_cast<double>(ev.true_pos) / actual_pos : 0.0;
  const double tnr = actual_neg ? static_cast<double>(true_neg) / actual_neg : 0.0;
  ev.balanced_accuracy = 0.5 * (tpr + tnr);
  return ev;
}

}  // namespace neon
