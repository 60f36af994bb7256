#include "neon/taskgen.hpp"

#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "neon/errors.hpp"

namespace neon {

using nlohmann::json;

ExprTree gen_training_expression(Rng& rng, int arity, int max_height) {
  std::uniform_int_distribution<int> height_dist(1, max_height);
  for (;;) {
    int target = height_dist(rng);
    ExprTree t = random_tree_grow(rng, target, arity);
    if (t.height() >= 1 && t.max_var_index() >= 0) return t;
  }
}

SrTask gen_task(const ExprTree& p, int n, Rng& rng, int arity, std::string id) {
  if (arity < 0) arity = p.max_var_index() + 1;
  if (arity < 1) arity = 1;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd inputs(n, arity);
  Eigen::VectorXd targets(n);
  Eigen::MatrixXd row(1, arity);
  int filled = 0, consecutive_rejects = 0;
  while (filled < n) {
    for (int c = 0; c < arity; ++c) row(0, c) = normal(rng);
    double y = eval_tree(p, row)[0];
    if (std::isfinite(y)) {
      inputs.row(filled) = row.row(0);
      targets[filled] = y;
      ++filled;
      consecutive_rejects = 0;
    } else if (++consecutive_rejects > 10000) {
      throw Error("expression '" + canonical_string(p) +
                  "' produced 10,000 consecutive non-finite samples");
    }
  }
  return SrTask(std::move(id), arity, std::move(inputs), std::move(targets), p);
}

namespace {

void subtrees_at_depth(const ExprTree& t, int depth, std::vector<ExprTree>& out) {
  if (depth == 0) {
    out.push_back(t);
    return;
  }
  for (int i = 0; i < t.num_children(); ++i)
    subtrees_at_depth(t.child(i), depth - 1, out);
}

void collect_subtree_strings(const ExprTree& t, std::unordered_set<std::string>& out) {
  out.insert(normalized_string(t));
  for (int i = 0; i < t.num_children(); ++i) collect_subtree_strings(t.child(i), out);
}

}  // namespace

std::optional<LabeledExpansion> split_at_depth(const ExprTree& p,
                                               std::shared_ptr<const SrTask> task,
                                               int depth, int node_budget) {
  std::vector<ExprTree> lower;
  subtrees_at_depth(p, depth, lower);
  if (lower.empty()) return std::nullopt;

  SemGraph graph(task);
  for (const ExprTree& s : lower) graph.add_subtree(s);
  std::vector<int> front;
  try {
    front = graph.expand(terminal_set(task->arity), node_budget);
  } catch (const BudgetError&) {
    return std::nullopt;
  }
  if (front.empty()) return std::nullopt;

  std::unordered_set<std::string> subtree_strings;
  collect_subtree_strings(p, subtree_strings);

  LabeledExpansion out{std::move(graph), std::move(front), {}, p, depth};
  out.targets.reserve(out.front.size());
  for (int app : out.front) {
    const std::string key = normalized_string(out.graph.candidate_tree(app));
    out.targets.push_back(subtree_strings.contains(key) ? 1 : 0);
  }
  return out;
}

std::optional<LabeledExpansion> split_and_label(const ExprTree& p,
                                                std::shared_ptr<const SrTask> task,
                                                Rng& rng, int node_budget) {
  if (p.height() < 1) return std::nullopt;
  int depth = std::uniform_int_distribution<int>(1, p.height())(rng);
  return split_at_depth(p, std::move(task), depth, node_budget);
}

// ---------------------------------------------------------------------------

namespace {

int count_operators(const ExprTree& t) {
  if (t.is_terminal()) return 0;
  int n = 1;
  for (int i = 0; i < t.num_children(); ++i) n += count_operators(t.child(i));
  return n;
}

}  // namespace

std::optional<MaterializedItem> materialize_item(const CorpusItem& item, int salt,
                                                 int node_budget, int task_n) {
  Rng task_rng = derive_rng(item.item_seed, 1000 + static_cast<std::uint64_t>(salt));
  auto task = std::make_shared<const SrTask>(
      gen_task(item.origin, task_n, task_rng, item.arity));
  auto labeled = split_at_depth(item.origin, task, item.split_depth, node_budget);
  if (!labeled) return std::nullopt;
  return MaterializedItem{std::move(task), std::move(*labeled)};
}

Corpus build_corpus(int count, Rng& rng, int node_budget, int task_n) {
  if (count <= 60) throw Error("corpus size must exceed the 60-item validation split");
  std::unordered_set<std::string> seen;
  std::vector<CorpusItem> items;
  items.reserve(count);
  while (static_cast<int>(items.size()) < count) {
    CorpusItem item;
    item.item_seed = rng();
    Rng item_rng = derive_rng(item.item_seed, 0);
    item.arity = std::uniform_int_distribution<int>(1, 6)(item_rng);
    item.origin = gen_training_expression(item_rng, item.arity);
    item.operators = count_operators(item.origin);
    if (!seen.insert(canonical_string(item.origin)).second) continue;
    item.split_depth = std::uniform_int_distribution<int>(1, item.origin.height())(item_rng);
    if (!materialize_item(item, 0, node_budget, task_n)) continue;
    items.push_back(std::move(item));
  }
  Corpus corpus;
  corpus.valid.assign(items.begin(), items.begin() + 60);
  corpus.train.assign(items.begin() + 60, items.end());
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  auto write = [&os](const CorpusItem& item, const char* role) {
    json j{{"expr", canonical_string(item.origin)},
           {"arity", item.arity},
           {"depth", item.split_depth},
           {"seed", item.item_seed},
           {"ops", item.operators},
           {"role", role}};
    os << j.dump() << '\n';
  };
  for (const auto& item : corpus.valid) write(item, "valid");
  for (const auto& item : corpus.train) write(item, "train");
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open corpus file '" + path.string() + "'");
  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw IoError("corpus line " + std::to_string(line_no) + " is not valid JSON");
    CorpusItem item;
    item.origin = parse_expr(j.at("expr").get<std::string>());
    item.arity = j.at("arity").get<int>();
    item.split_depth = j.at("depth").get<int>();
    item.item_seed = j.at("seed").get<std::uint64_t>();
    item.operators = j.value("ops", count_operators(item.origin));
    const std::string role = j.at("role").get<std::string>();
    (role == "valid" ? corpus.valid : corpus.train).push_back(std::move(item));
  }
  return corpus;
}

}  // namespace neon
