#pragma once

#include <string>
#include <vector>

#include "neon/gat.hpp"
#include "neon/taskgen.hpp"

namespace neon {

struct TrainConfig {
  int max_epochs = 1000;
  int batch_size = 32;
  float lr = 1e-3f;
  double stagnation_eps = 1e-4;   // validation-loss improvement threshold
  int stagnation_patience = 50;   // consecutive epochs without improvement
  int resample_every = 50;        // variable re-instantiation period
  int train_examples_per_item = 1;
  int val_examples_per_item = 2;
  float pos_weight = 1.0f;
  int node_budget = 10000;
  int task_n = 100;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct EpochRecord {
  int epoch;  // 0 = pre-training evaluation
  double train_loss;
  double valid_loss;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int epochs = 0;
  std::string stop_reason;
};

TrainResult train_gat(GatModel& model, const Corpus& corpus, const TrainConfig& cfg);

// Validation-front classification quality at the 0.5 saliency threshold,
// with saliency averaged over every task row.
struct FrontEval {
  std::int64_t nodes = 0;
  std::int64_t positives = 0;
  std::int64_t correct = 0;
  std::int64_t true_pos = 0;
  std::int64_t false_pos = 0;
  double accuracy = 0.0;
  double positive_rate = 0.0;
  double constant_baseline = 0.0;  // accuracy of the best constant prediction
  double balanced_accuracy = 0.0;
};

FrontEval evaluate_front_accuracy(const GatModel& model,
                                  const std::vector<CorpusItem>& items,
                                  int node_budget = 10000, int task_n = 100);

}  // namespace neon
