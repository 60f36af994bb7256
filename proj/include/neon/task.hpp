#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

#include "neon/errors.hpp"
#include "neon/expr.hpp"

namespace neon {

// A regression task: n rows of inputs with finite scalar targets.
struct SrTask {
  std::string id;
  int arity = 0;
  Eigen::MatrixXd inputs;   // n x arity
  Eigen::VectorXd targets;  // n
  std::optional<ExprTree> ground_truth;

  SrTask() = default;
  SrTask(std::string id_, int arity_, Eigen::MatrixXd inputs_, Eigen::VectorXd targets_,
         std::optional<ExprTree> truth = std::nullopt)
      : id(std::move(id_)),
        arity(arity_),
        inputs(std::move(inputs_)),
        targets(std::move(targets_)),
        ground_truth(std::move(truth)) {
    if (inputs.rows() < 1) throw Error("task '" + id + "' has no rows");
    if (inputs.cols() != arity)
      throw Error("task '" + id + "' input width does not match arity");
    if (targets.size() != inputs.rows())
      throw Error("task '" + id + "' target length does not match inputs");
    if (!targets.allFinite()) throw Error("task '" + id + "' has non-finite targets");
  }

  Eigen::Index n() const { return inputs.rows(); }
};

}  // namespace neon
