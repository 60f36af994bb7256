#include <doctest.h>

#include <cstring>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "neon/semgraph.hpp"
#include "neon/taskgen.hpp"
#include "test_util.hpp"

using namespace neon;

namespace {

std::shared_ptr<const SrTask> make_task(int arity, int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd inputs(n, arity);
  std::normal_distribution<double> normal;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < arity; ++j) inputs(i, j) = normal(rng);
  Eigen::VectorXd targets = inputs.col(0);
  return std::make_shared<const SrTask>("t", arity, inputs, targets);
}

// --- independent enumeration oracle -----------------------------------------
// Recomputes the expected expansion front size from the subtree alone:
// value classes come from fingerprinting every distinct subtree evaluation,
// existing applications from the tree structure, and the front from the
// stated tuple rules.  No SemGraph machinery is used.

struct OracleGraph {
  std::unordered_map<Digest, int, DigestHash> classes;
  std::set<std::tuple<int, int, int>> app_keys;  // (op, a, b) normalized
  std::set<int> subtree_classes;                 // Q

  int class_of(const Eigen::VectorXd& vals, Eigen::Index n_task) {
    Digest d = value_fingerprint({vals.data(), static_cast<std::size_t>(n_task)},
                                 {vals.data() + n_task, kProbeRows});
    auto [it, fresh] = classes.emplace(d, static_cast<int>(classes.size()));
    return it->second;
  }
};

int walk_subtrees(OracleGraph& og, const ExprTree& t, const Eigen::MatrixXd& ext,
                  Eigen::Index n_task) {
  int cls = og.class_of(eval_tree(t, ext), n_task);
  og.subtree_classes.insert(cls);
  if (!t.is_terminal()) {
    int a = walk_subtrees(og, t.child(0), ext, n_task);
    int b = t.num_children() == 2 ? walk_subtrees(og, t.child(1), ext, n_task) : -1;
    if (op_info(t.op()).commutative && b < a) std::swap(a, b);
    og.app_keys.insert({static_cast<int>(t.op()), a, b});
  }
  return cls;
}

int oracle_front_count(const ExprTree& s, const SrTask& task) {
  Eigen::MatrixXd ext(task.n() + kProbeRows, task.arity);
  ext.topRows(task.n()) = task.inputs;
  ext.bottomRows(kProbeRows) = probe_inputs(task.arity);

  OracleGraph og;
  walk_subtrees(og, s, ext, task.n());

  std::set<int> all = og.subtree_classes;
  for (const Terminal& t : terminal_set(task.arity)) {
    Eigen::VectorXd vals = t.kind == Terminal::Kind::Variable
                               ? Eigen::VectorXd(ext.col(t.index))
                               : Eigen::VectorXd::Constant(ext.rows(), t.value);
    all.insert(og.class_of(vals, task.n()));
  }

  const auto& q = og.subtree_classes;
  auto counted = og.app_keys;  // existing applications never recreated
  int fresh = 0;
  for (int oi = 0; oi < kNumOps; ++oi) {
    const auto& info = op_info(static_cast<Op>(oi));
    for (int a : all) {
      if (info.arity == 1) {
        if (q.contains(a) && counted.insert({oi, a, -1}).second) ++fresh;
        continue;
      }
      for (int b : all) {
        if (info.commutative && b < a) continue;
        if (!q.contains(a) && !q.contains(b)) continue;
        if (counted.insert({oi, a, b}).second) ++fresh;
      }
    }
  }
  return fresh;
}

}  // namespace

TEST_CASE("tree_to_graph merges shared semantics") {
  auto task = make_task(1, 2, 1);
  SUBCASE("add(x0,x0) has one variable node and one application") {
    Eigen::MatrixXd inputs(2, 1);
    inputs << 1, 2;
    auto t2 = std::make_shared<const SrTask>("t", 1, inputs, Eigen::VectorXd::Zero(2));
    SemGraph g = SemGraph::from_tree(parse_expr("(add x0 x0)"), t2);
    int vars = 0;
    for (const auto& v : g.values())
      if (v.kind == ValueNode::Kind::Variable) ++vars;
    CHECK(vars == 1);
    CHECK(g.apps().size() == 1);
    CHECK(g.values()[g.root_value()].values[0] == 2.0);
    CHECK(g.values()[g.root_value()].values[1] == 4.0);
  }
  SUBCASE("mul(2,x0) and add(x0,x0) share one result value node") {
    SemGraph g(task);
    int a = g.add_subtree(parse_expr("(mul 2 x0)"));
    int b = g.add_subtree(parse_expr("(add x0 x0)"));
    CHECK(a == b);
    CHECK(g.apps().size() == 2);  // two applications, one shared value
  }
  SUBCASE("a bare variable is a single node") {
    SemGraph g = SemGraph::from_tree(parse_expr("x0"), task);
    CHECK(g.values().size() == 1);
    CHECK(g.apps().empty());
    CHECK(g.values()[0].kind == ValueNode::Kind::Variable);
  }
}

TEST_CASE("root value matches eval_tree") {
  // dedup may canonicalize -0.0 / NaN payloads, so compare IEEE-wise
  Rng rng(88);
  auto task = make_task(3, 20, 2);
  for (int i = 0; i < 50; ++i) {
    ExprTree s = random_tree_grow(rng, 4, 3);
    SemGraph g = SemGraph::from_tree(s, task);
    Eigen::VectorXd direct = eval_tree(s, task->inputs);
    const auto& stored = g.values()[g.root_value()].values;
    for (Eigen::Index j = 0; j < task->n(); ++j) {
      double a = direct[j], b = stored[j];
      if (std::isnan(a)) {
        CHECK(std::isnan(b));
      } else {
        CHECK(a == b);
      }
    }
  }
}

TEST_CASE("expansion of a bare variable") {
  auto task = make_task(1, 4, 3);
  SemGraph g = SemGraph::from_tree(parse_expr("x0"), task);
  auto front = g.expand(terminal_set(1));

  // ordered-tuple census from the written-out rule: 4 * (6^2 - 5^2) + 7
  CHECK(4 * (36 - 25) + 7 == 51);
  // with add/mul argument order canonicalized, pairs {x0,t} count once
  const int expected = oracle_front_count(parse_expr("x0"), *task);
  CHECK(expected == 2 * 6 + 2 * 11 + 7);
  CHECK(static_cast<int>(front.size()) == expected);
  for (int id : front) CHECK(g.apps()[id].is_expansion);
}

TEST_CASE("identity applications reuse the existing value node") {
  auto task = make_task(1, 4, 4);
  SemGraph g = SemGraph::from_tree(parse_expr("x0"), task);
  const int x0 = g.root_value();
  g.expand(terminal_set(1));
  int zero_node = -1;
  for (const auto& v : g.values())
    if (v.kind == ValueNode::Kind::Value && v.terminal_origin && v.values[0] == 0.0 &&
        v.min_tree.is_constant())
      zero_node = v.id;
  REQUIRE(zero_node >= 0);
  bool found = false;
  for (const auto& a : g.apps()) {
    if (a.op == Op::Add && a.num_args == 2 &&
        ((a.args[0] == x0 && a.args[1] == zero_node) ||
         (a.args[0] == zero_node && a.args[1] == x0))) {
      CHECK(a.result == x0);  // add(x0, 0) folds into x0's node
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("fingerprints stay pairwise distinct after expansion") {
  Rng rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    const int arity = 1 + static_cast<int>(rng() % 3);
    auto task = make_task(arity, 10, 1000 + trial);
    ExprTree s = random_tree_grow(rng, 3, arity);
    SemGraph g = SemGraph::from_tree(s, task);
    g.expand(terminal_set(arity));
    for (std::size_t i = 0; i < g.values().size(); ++i)
      for (std::size_t j = i + 1; j < g.values().size(); ++j)
        CHECK(!(g.values()[i].digest == g.values()[j].digest));
  }
}

TEST_CASE("front size equals the enumeration oracle") {
  Rng rng(777);
  for (int trial = 0; trial < 40; ++trial) {
    const int arity = 1 + static_cast<int>(rng() % 3);
    auto task = make_task(arity, 12, 2000 + trial);
    ExprTree s = random_tree_grow(rng, 4, arity);
    SemGraph g = SemGraph::from_tree(s, task);
    auto front = g.expand(terminal_set(arity));
    CHECK(static_cast<int>(front.size()) == oracle_front_count(s, *task));
  }
}

TEST_CASE("recomputability holds for every application") {
  Rng rng(11);
  auto task = make_task(2, 8, 5);
  ExprTree s = random_tree_grow(rng, 3, 2);
  SemGraph g = SemGraph::from_tree(s, task);
  g.expand(terminal_set(2));
  for (const auto& a : g.apps()) {
    const auto& va = g.values()[a.args[0]].values;
    Eigen::VectorXd recomputed(va.size());
    for (Eigen::Index j = 0; j < va.size(); ++j)
      recomputed[j] = a.num_args == 1
                          ? apply_op(a.op, va[j])
                          : apply_op(a.op, va[j], g.values()[a.args[1]].values[j]);
    Digest d = value_fingerprint({recomputed.data(), static_cast<std::size_t>(task->n())},
                                 {recomputed.data() + task->n(), kProbeRows});
    CHECK(d == g.values()[a.result].digest);
  }
}

TEST_CASE("expansion budget raises a structured error") {
  auto task = make_task(2, 6, 6);
  SemGraph g = SemGraph::from_tree(parse_expr("(add x0 x1)"), task);
  CHECK_THROWS_WITH_AS(g.expand(terminal_set(2), 10), doctest::Contains("10"),
                       BudgetError);
}

TEST_CASE("candidate trees") {
  auto task = make_task(1, 4, 7);
  SUBCASE("direct reconstruction") {
    SemGraph g = SemGraph::from_tree(parse_expr("x0"), task);
    auto front = g.expand(terminal_set(1));
    bool found = false;
    for (int id : front) {
      ExprTree t = g.candidate_tree(id);
      if (canonical_string(t) == "(add x0 2)" || canonical_string(t) == "(add 2 x0)")
        found = true;
    }
    CHECK(found);
  }
  SUBCASE("merged values reconstruct through the smaller, earlier tree") {
    SemGraph g(task);
    g.add_subtree(parse_expr("(mul 2 x0)"));
    g.add_subtree(parse_expr("(add x0 x0)"));  // merges with the first
    int merged = g.apps()[0].result;
    CHECK(g.values()[merged].min_tree == parse_expr("(mul 2 x0)"));
    CHECK(g.values()[merged].min_size == 3);
  }
  SUBCASE("candidate evaluation matches the stored result values") {
    Rng rng(321);
    int checked = 0;
    for (int trial = 0; trial < 25 && checked < 1000; ++trial) {
      const int arity = 1 + static_cast<int>(rng() % 2);
      auto t2 = make_task(arity, 10, 4000 + trial);
      ExprTree s = random_tree_grow(rng, 3, arity);
      SemGraph g = SemGraph::from_tree(s, t2);
      auto front = g.expand(terminal_set(arity));
      for (int id : front) {
        Eigen::VectorXd direct = eval_tree(g.candidate_tree(id), t2->inputs);
        const auto& stored = g.values()[g.apps()[id].result].values;
        for (Eigen::Index j = 0; j < t2->n(); ++j) {
          if (!std::isfinite(direct[j]) || !std::isfinite(stored[j])) continue;
          CHECK(direct[j] ==
                doctest::Approx(stored[j]).epsilon(1e-7).scale(std::abs(stored[j]) + 1));
        }
        ++checked;
      }
    }
    CHECK(checked >= 1000);
  }
}

TEST_CASE("value fingerprint semantics") {
  Eigen::VectorXd probes(3);
  probes << 0.0, 1.5, -2.0;
  auto fp = [&](std::initializer_list<double> vals) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    int i = 0;
    for (double x : vals) v[i++] = x;
    return value_fingerprint({v.data(), static_cast<std::size_t>(v.size())},
                             {probes.data(), 3});
  };
  // 2*x == x+x bitwise
  CHECK(fp({2.0, 4.0, -6.0}) == fp({1.0 + 1.0, 2.0 + 2.0, -3.0 + -3.0}));
  // x0 vs x0 + 1e-3 differ when a probe row hits 0
  CHECK(!(fp({0.0, 1.0, 2.0}) == fp({1e-3, 1.0 + 1e-3, 2.0 + 1e-3})));
  // x - x == 0
  CHECK(fp({0.0, 0.0, 0.0}) == fp({1.5 - 1.5, -2.0 + 2.0, 0.0}));
  // non-finite sentinels
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(fp({inf, 0, 0}) == fp({inf, 0, 0}));
  CHECK(!(fp({inf, 0, 0}) == fp({-inf, 0, 0})));
  CHECK(!(fp({nan, 0, 0}) == fp({inf, 0, 0})));
  CHECK(fp({nan, 0, 0}) == fp({nan, 0, 0}));
  // relative tolerance: 1e-6 at unit scale splits, 1e-12 does not
  CHECK(!(fp({1.0, 0, 0}) == fp({1.0 + 1e-6, 0, 0})));
  CHECK(fp({0.5, 0, 0}) == fp({0.5 + 1e-12, 0, 0}));
  // large values keep relative resolution
  CHECK(!(fp({1e12, 0, 0}) == fp({1e12 * (1 + 1e-6), 0, 0})));
  CHECK(fp({1e12, 0, 0}) == fp({1e12 + 1.0, 0, 0}));
}

TEST_CASE("graph dump lists nodes") {
  auto task = make_task(1, 4, 8);
  SemGraph g = SemGraph::from_tree(parse_expr("(add x0 1)"), task);
  std::ostringstream os;
  g.dump(os);
  const std::string text = os.str();
  CHECK(text.find("var(x0)") != std::string::npos);
  CHECK(text.find("add(") != std::string::npos);
}

TEST_CASE("probe rows are fixed and deterministic") {
  Eigen::MatrixXd a = probe_inputs(3), b = probe_inputs(5);
  CHECK(a.rows() == kProbeRows);
  // shared variables get identical probes regardless of arity
  for (int r = 0; r < kProbeRows; ++r)
    for (int c = 0; c < 3; ++c) CHECK(a(r, c) == b(r, c));
}
