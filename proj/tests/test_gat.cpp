#include <doctest.h>

#include <cstring>
#include <fstream>
#include <numeric>

#include "neon/gat.hpp"
#include "neon/taskgen.hpp"
#include "test_util.hpp"

using namespace neon;

namespace {

std::shared_ptr<const SrTask> small_task(int arity, int n, std::uint64_t seed) {
  Rng rng(seed);
  ExprTree p =
      ExprTree::apply(Op::Add, {ExprTree::variable(0), ExprTree::constant(1.0)});
  return std::make_shared<const SrTask>(gen_task(p, n, rng, arity));
}

struct SmallGraph {
  std::shared_ptr<const SrTask> task;
  SemGraph graph;
  GatGraph gat;
};

// graph from a random subtree; expanded when it stays tiny, so front rows
// exist for loss tests
SmallGraph small_graph(std::uint64_t seed, int max_height = 2, bool expand = false) {
  Rng rng(seed);
  auto task = small_task(2, 4, seed ^ 0x99);
  for (;;) {
    ExprTree s = random_tree_grow(rng, max_height, 2);
    SemGraph g = SemGraph::from_tree(s, task);
    if (expand) {
      try {
        g.expand(terminal_set(task->arity), 400);
      } catch (const BudgetError&) {
        continue;
      }
      if (g.front().empty()) continue;
    }
    GatGraph gg = build_gat_graph(g);
    if (expand && gg.num_nodes > 80) continue;
    return {task, std::move(g), std::move(gg)};
  }
}

template <typename T>
MatX<T> features_for(const SemGraph& g, const GatGraph& gg, int batch) {
  MatX<T> x;
  fill_feature_block<T>(g, gg, 0, batch, x);
  return x;
}

}  // namespace

TEST_CASE("forward output range and shape") {
  auto [task, graph, gat] = small_graph(1);
  Rng rng(5);
  GatModel model = GatModel::random_init(rng);
  MatX<float> x = features_for<float>(graph, gat, 2);
  VecX<float> scores = gat_forward<float>(model, gat, x, 2);
  REQUIRE(scores.size() == 2 * gat.num_nodes);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    CHECK(scores[i] > 0.0f);
    CHECK(scores[i] < 1.0f);
  }
}

TEST_CASE("zero output head scores exactly one half") {
  auto [task, graph, gat] = small_graph(2);
  Rng rng(6);
  GatModel model = GatModel::random_init(rng);
  model.out_w.setZero();
  model.out_b.setZero();
  MatX<float> x = features_for<float>(graph, gat, 1);
  VecX<float> scores = gat_forward<float>(model, gat, x, 1);
  for (Eigen::Index i = 0; i < scores.size(); ++i) CHECK(scores[i] == 0.5f);
}

TEST_CASE("attention weights sum to one over every in-neighborhood") {
  auto [task, graph, gat] = small_graph(3, 3);
  Rng rng(7);
  GatModel model = GatModel::random_init(rng);
  MatX<float> x = features_for<float>(graph, gat, 2);
  ForwardTrace<float> trace;
  gat_forward<float>(model, gat, x, 2, &trace);
  for (int l = 0; l < kGatLayers; ++l)
    for (int hd = 0; hd < kHeads; ++hd)
      for (int b = 0; b < 2; ++b)
        for (int i = 0; i < gat.num_nodes; ++i) {
          float sum = 0;
          for (int e = gat.row_ptr[i]; e < gat.row_ptr[i + 1]; ++e)
            sum += trace.layers[l].edge_alpha[hd][b * gat.num_edges() + e];
          CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));
        }
}

TEST_CASE("single isolated node reduces to projections of its own state") {
  // one-node graph: a bare variable; its only in-edge is the self-loop, so
  // every attention softmax is 1 and each layer is ELU of the concatenated
  // head projections.
  auto task = small_task(1, 3, 77);
  SemGraph g = SemGraph::from_tree(ExprTree::variable(0), task);
  GatGraph gg = build_gat_graph(g);
  REQUIRE(gg.num_nodes == 1);
  REQUIRE(gg.num_edges() == 1);

  Rng rng(8);
  GatModelT<double> model = GatModelT<double>::random_init(rng);
  MatX<double> x = features_for<double>(g, gg, 1);
  VecX<double> scores = gat_forward<double>(model, gg, x, 1);

  Eigen::VectorXd h = model.in_w * x.row(0).transpose() + model.in_b;
  for (int l = 0; l < kGatLayers; ++l) {
    Eigen::VectorXd next(kStateDim);
    for (int hd = 0; hd < kHeads; ++hd)
      next.segment(hd * kHeadDim, kHeadDim) = model.layers[l][hd].weight * h;
    for (int i = 0; i < kStateDim; ++i)
      next[i] = next[i] > 0 ? next[i] : std::exp(next[i]) - 1.0;
    h = next;
  }
  const double logit = model.out_w.dot(h) + model.out_b[0];
  const double expected = 1.0 / (1.0 + std::exp(-logit));
  CHECK(scores[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("permutation equivariance") {
  auto [task, graph, gat] = small_graph(11, 3);
  Rng rng(12);
  GatModel model = GatModel::random_init(rng);
  MatX<float> x = features_for<float>(graph, gat, 1);
  VecX<float> base = gat_forward<float>(model, gat, x, 1);

  // apply a rotation permutation to the node order
  const int m = gat.num_nodes;
  std::vector<int> perm(m);
  for (int i = 0; i < m; ++i) perm[i] = (i + 3) % m;  // new index of old node i

  GatGraph pg;
  pg.num_nodes = m;
  pg.kind.resize(m);
  pg.op_slot.resize(m);
  pg.value_id.resize(m);
  pg.app_id.resize(m);
  std::vector<std::vector<int>> in_nbrs(m);
  for (int i = 0; i < m; ++i) {
    pg.kind[perm[i]] = gat.kind[i];
    pg.op_slot[perm[i]] = gat.op_slot[i];
    pg.value_id[perm[i]] = gat.value_id[i];
    pg.app_id[perm[i]] = gat.app_id[i];
    for (int e = gat.row_ptr[i]; e < gat.row_ptr[i + 1]; ++e)
      in_nbrs[perm[i]].push_back(perm[gat.col_idx[e]]);
  }
  pg.row_ptr.assign(m + 1, 0);
  for (int i = 0; i < m; ++i) {
    std::sort(in_nbrs[i].begin(), in_nbrs[i].end());
    pg.row_ptr[i + 1] = pg.row_ptr[i] + static_cast<int>(in_nbrs[i].size());
    for (int v : in_nbrs[i]) pg.col_idx.push_back(v);
  }
  MatX<float> px(m, kFeatureDim);
  for (int i = 0; i < m; ++i) px.row(perm[i]) = x.row(i);

  VecX<float> permuted = gat_forward<float>(model, pg, px, 1);
  for (int i = 0; i < m; ++i)
    CHECK(permuted[perm[i]] == doctest::Approx(base[i]).epsilon(1e-5));
}

TEST_CASE("analytic gradients match central finite differences") {
  // double precision model over small expanded graphs
  Rng rng(21);
  for (int trial = 0; trial < 2; ++trial) {
    SmallGraph sg = small_graph(500 + trial, 1, true);
    GatModelT<double> model = GatModelT<double>::random_init(rng);
    MatX<double> x = features_for<double>(sg.graph, sg.gat, 1);

    std::vector<std::uint8_t> targets(sg.graph.front().size());
    for (auto& t : targets) t = rng() % 2;

    GatModelT<double> grads = zero_like(model);
    gat_front_bce<double>(model, sg.gat, x, 1, targets, 1.0, &grads);

    auto params = param_views(model);
    auto gview = param_views(grads);
    int checked = 0, bad = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
      const std::size_t stride = std::max<std::size_t>(1, params[t].size / 8);
      for (std::size_t i = 0; i < params[t].size; i += stride) {
        const double h = 1e-5 * std::max(1.0, std::abs(params[t].data[i]));
        const double orig = params[t].data[i];
        params[t].data[i] = orig + h;
        const double up = gat_front_bce<double>(model, sg.gat, x, 1, targets, 1.0, nullptr);
        params[t].data[i] = orig - h;
        const double down =
            gat_front_bce<double>(model, sg.gat, x, 1, targets, 1.0, nullptr);
        params[t].data[i] = orig;
        const double fd = (up - down) / (2 * h);
        const double an = gview[t].data[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        if (std::abs(fd - an) / denom >= 1e-4) ++bad;
        ++checked;
      }
    }
    CHECK(checked > 50);
    CHECK(bad == 0);
  }
}

TEST_CASE("training determinism is bitwise") {
  Rng seed_rng(31);
  auto run_once = [&]() {
    Rng rng(42);
    GatModel model = GatModel::random_init(rng);
    SmallGraph sg = small_graph(900, 1, true);
    std::vector<std::uint8_t> targets(sg.graph.front().size(), 0);
    targets[0] = 1;
    AdamState adam;
    MatX<float> x = features_for<float>(sg.graph, sg.gat, 1);
    for (int step = 0; step < 5; ++step) {
      GatModel grads = zero_like(model);
      gat_front_bce<float>(model, sg.gat, x, 1, targets, 1.0f, &grads);
      adam_step(model, grads, adam);
    }
    return model;
  };
  GatModel a = run_once();
  GatModel b = run_once();
  auto va = param_views(a), vb = param_views(b);
  for (std::size_t t = 0; t < va.size(); ++t)
    CHECK(std::memcmp(va[t].data, vb[t].data, va[t].size * sizeof(float)) == 0);
}

TEST_CASE("adam reduces the loss on a fixed batch") {
  Rng rng(55);
  GatModel model = GatModel::random_init(rng);
  SmallGraph sg = small_graph(901, 1, true);
  std::vector<std::uint8_t> targets(sg.graph.front().size(), 0);
  for (std::size_t i = 0; i < targets.size(); i += 3) targets[i] = 1;
  MatX<float> x = features_for<float>(sg.graph, sg.gat, 1);
  AdamState adam;
  const float first = gat_front_bce<float>(model, sg.gat, x, 1, targets, 1.0f, nullptr);
  float last = first;
  for (int step = 0; step < 60; ++step) {
    GatModel grads = zero_like(model);
    last = gat_front_bce<float>(model, sg.gat, x, 1, targets, 1.0f, &grads);
    adam_step(model, grads, adam);
  }
  CHECK(last < 0.5f * first);
}

TEST_CASE("saliency averages per-example scores") {
  auto task = small_task(2, 6, 1234);
  Rng rng(77);
  ExprTree s = parse_expr("(add x0 x1)");
  SemGraph g = SemGraph::from_tree(s, task);
  g.expand(terminal_set(2), 2000);
  GatGraph gg = build_gat_graph(g);
  GatModel model = GatModel::random_init(rng);

  SaliencyMap sal = saliency_map(model, g, gg);
  REQUIRE(sal.scores.size() == static_cast<Eigen::Index>(g.front().size()));
  CHECK(sal.app_ids == g.front());

  // recompute the mean independently, one example at a time
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(sal.scores.size());
  for (int j = 0; j < task->n(); ++j) {
    MatX<float> x;
    fill_feature_block<float>(g, gg, j, 1, x);
    VecX<float> scores = gat_forward<float>(model, gg, x, 1);
    for (std::size_t f = 0; f < gg.front_rows.size(); ++f)
      acc[f] += scores[gg.front_rows[f]];
  }
  acc /= task->n();
  for (Eigen::Index f = 0; f < sal.scores.size(); ++f) {
    CHECK(std::abs(acc[f] - sal.scores[f]) < 1e-6);
    CHECK(sal.scores[f] > 0.0f);
    CHECK(sal.scores[f] < 1.0f);
  }
}

TEST_CASE("model save/load round-trips bit-exactly") {
  Rng rng(99);
  GatModel model = GatModel::random_init(rng);
  auto dir = neon_test::tmp_dir("gat");
  auto path = dir / "model.neongat";
  save_model(model, path);

  GatModel loaded = load_model(path);
  auto va = param_views(model), vb = param_views(loaded);
  REQUIRE(va.size() == vb.size());
  for (std::size_t t = 0; t < va.size(); ++t) {
    CHECK(va[t].name == vb[t].name);
    CHECK(va[t].dims == vb[t].dims);
    CHECK(std::memcmp(va[t].data, vb[t].data, va[t].size * sizeof(float)) == 0);
  }

  SUBCASE("tensor listing without loading") {
    auto infos = list_model_tensors(path);
    REQUIRE(infos.size() == va.size());
    CHECK(infos[0].name == "input.weight");
    CHECK(infos[0].dims == std::vector<std::uint32_t>{kStateDim, kFeatureDim});
  }
  SUBCASE("bad magic fails") {
    auto bad = dir / "bad.neongat";
    std::ofstream os(bad, std::ios::binary);
    os << "NOTAMODL" << std::string(64, '\0');
    os.close();
    CHECK_THROWS_WITH_AS(load_model(bad), doctest::Contains("magic"), IoError);
  }
  SUBCASE("truncation fails") {
    auto trunc = dir / "trunc.neongat";
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    std::ofstream os(trunc, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    os.close();
    CHECK_THROWS_AS(load_model(trunc), IoError);
  }
}
