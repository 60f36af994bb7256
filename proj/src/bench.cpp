#include "neon/bench.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "neon/errors.hpp"

namespace neon {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Problems file

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

ProblemsFile load_problems(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open problems file '" + path.string() + "'");
  ProblemsFile out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cols = split(t, '\t');
    if (cols.size() != 4)
      throw ParseError("problems line " + std::to_string(line_no) +
                           ": expected 4 tab-separated columns, got " +
                           std::to_string(cols.size()),
                       static_cast<std::size_t>(line_no));
    ProblemSpec spec;
    spec.id = trim(cols[0]);
    try {
      spec.arity = std::stoi(cols[1]);
    } catch (const std::exception&) {
      throw ParseError("problems line " + std::to_string(line_no) + ": bad arity '" +
                           cols[1] + "'",
                       static_cast<std::size_t>(line_no));
    }
    spec.formula = trim(cols[2]);
    try {
      spec.tree = parse_expr(spec.formula);
    } catch (const ParseError& e) {
      // functions outside the instruction set reject the row; anything else
      // is a malformed file
      const std::string what = e.what();
      if (what.find("unknown operator") != std::string::npos) {
        out.rejections.push_back("problem '" + spec.id + "' (line " +
                                 std::to_string(line_no) + ") rejected: " + what);
        continue;
      }
      throw ParseError("problems line " + std::to_string(line_no) + ": " + what,
                       static_cast<std::size_t>(line_no));
    }
    if (spec.tree.max_var_index() >= spec.arity)
      throw ParseError("problems line " + std::to_string(line_no) +
                           ": formula uses x" +
                           std::to_string(spec.tree.max_var_index()) +
                           " but arity is " + std::to_string(spec.arity),
                       static_cast<std::size_t>(line_no));
    for (const auto& r : split(trim(cols[3]), ',')) {
      auto parts = split(r, ':');
      if (parts.size() != 2)
        throw ParseError("problems line " + std::to_string(line_no) +
                             ": bad range '" + r + "'",
                         static_cast<std::size_t>(line_no));
      spec.ranges.emplace_back(std::stod(parts[0]), std::stod(parts[1]));
    }
    if (static_cast<int>(spec.ranges.size()) != spec.arity)
      throw ParseError("problems line " + std::to_string(line_no) + ": " +
                           std::to_string(spec.ranges.size()) + " ranges for arity " +
                           std::to_string(spec.arity),
                       static_cast<std::size_t>(line_no));
    out.problems.push_back(std::move(spec));
  }
  return out;
}

std::optional<const ProblemSpec*> find_problem(const ProblemsFile& pf,
                                               const std::string& id) {
  for (const auto& p : pf.problems)
    if (p.id == id) return &p;
  return std::nullopt;
}

SrTask materialize_task(const ProblemSpec& spec, std::uint64_t seed) {
  std::uint64_t id_hash = 0xcbf29ce484222325ULL;
  for (char c : spec.id) id_hash = (id_hash ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  Rng rng = derive_rng(seed, id_hash);
  Eigen::MatrixXd inputs(spec.samples, spec.arity);
  Eigen::VectorXd targets(spec.samples);
  Eigen::MatrixXd row(1, spec.arity);
  int filled = 0, rejects = 0;
  while (filled < spec.samples) {
    for (int c = 0; c < spec.arity; ++c) {
      std::uniform_real_distribution<double> u(spec.ranges[c].first,
                                               spec.ranges[c].second);
      row(0, c) = u(rng);
    }
    const double y = eval_tree(spec.tree, row)[0];
    if (std::isfinite(y)) {
      inputs.row(filled) = row.row(0);
      targets[filled] = y;
      ++filled;
      rejects = 0;
    } else if (++rejects > 10000) {
      throw Error("problem '" + spec.id + "' produced 10,000 consecutive non-finite rows");
    }
  }
  return SrTask(spec.id, spec.arity, std::move(inputs), std::move(targets), spec.tree);
}

// ---------------------------------------------------------------------------
// Config hashing / run serialization

namespace {

json config_json(const ProblemSpec& spec, const RunConfig& c,
                 const std::string& model_digest) {
  return json{{"problem", spec.id},
              {"formula", spec.formula},
              {"samples", spec.samples},
              {"variant", variant_name(c.variant)},
              {"pop", c.population_size},
              {"generations", c.generations},
              {"tournament", c.tournament_size},
              {"mutation_prob", c.mutation_prob},
              {"height_limit", c.height_limit},
              {"success_threshold", c.success_threshold},
              {"seed", c.seed},
              {"draw_fraction", c.expander.draw_fraction},
              {"top_k", c.expander.top_k},
              {"saliency_threshold", c.expander.saliency_threshold},
              {"node_budget", c.expander.node_budget},
              {"stop_on_zero", c.stop_on_zero},
              {"init_heights", {c.init_min_height, c.init_max_height}},
              {"model", model_digest}};
}

}  // namespace

std::uint64_t cell_config_hash(const ProblemSpec& spec, const RunConfig& config,
                               const std::string& model_digest) {
  const std::string s = config_json(spec, config, model_digest).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return h;
}

std::string file_sha_hex(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "";
  std::uint64_t h1 = 0xcbf29ce484222325ULL, h2 = 0x84222325cbf29ce4ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h1 = (h1 ^ static_cast<unsigned char>(buf[i])) * 0x100000001b3ULL;
      h2 = (h2 ^ static_cast<unsigned char>(buf[i])) * 0xc6a4a7935bd1e995ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << h1 << std::setw(16) << h2;
  return os.str();
}

std::string cell_file_name(const std::string& problem, Variant v, int pop,
                           std::uint64_t seed) {
  std::string id = problem;
  for (char& c : id)
    if (c == '/' || c == ' ' || c == '\t') c = '_';
  return id + "__" + variant_name(v) + "__pop" + std::to_string(pop) + "__seed" +
         std::to_string(seed) + ".jsonl";
}

void write_run_jsonl(std::ostream& os, const ProblemSpec& spec, const RunConfig& config,
                     const RunResult& result, std::uint64_t config_hash) {
  for (const GenRecord& r : result.records) {
    json j{{"type", "gen"},
           {"gen", r.gen},
           {"gen_best", r.gen_best},
           {"best_ever", r.best_ever},
           {"mean_finite_mse", r.mean_finite},
           {"finite", r.finite_count},
           {"lib_fill", r.lib_fill},
           {"mean_size", r.mean_size},
           {"mean_height", r.mean_height},
           {"pushed", r.pushed},
           {"skipped_budget", r.skipped_budget}};
    os << j.dump() << '\n';
  }
  json j{{"type", "summary"},
         {"problem", spec.id},
         {"arity", spec.arity},
         {"variant", variant_name(config.variant)},
         {"pop", config.population_size},
         {"seed", config.seed},
         {"success", result.success},
         {"best_mse", result.best_mse},
         {"best_size", result.best_size},
         {"best_height", result.best_tree.height()},
         {"best_expr", canonical_string(result.best_tree)},
         {"generations_run", result.generations_run},
         {"stopped_early", result.stopped_early},
         {"config_hash", config_hash}};
  os << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Experiment driver

namespace {

bool cell_is_complete(const std::filesystem::path& file, std::uint64_t expect_hash) {
  std::ifstream is(file);
  if (!is) return false;
  std::string line, last;
  while (std::getline(is, line))
    if (!line.empty()) last = line;
  if (last.empty()) return false;
  json j = json::parse(last, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  return j.value("type", "") == "summary" &&
         j.value("config_hash", std::uint64_t(0)) == expect_hash;
}

struct Cell {
  const ProblemSpec* spec;
  Variant variant;
  int pop;
  std::uint64_t seed;
};

}  // namespace

ExperimentOutcome run_experiment(const ExperimentPlan& plan) {
  namespace fs = std::filesystem;
  ExperimentOutcome outcome;
  if (plan.problems.empty() || plan.variants.empty() || plan.pops.empty() ||
      plan.seeds.empty())
    throw ConfigError("experiment plan has an empty dimension");
  const bool needs_model = std::any_of(plan.variants.begin(), plan.variants.end(),
                                       variant_needs_model);
  if (needs_model && !plan.model)
    throw ConfigError("plan includes GNN-guided variants but no model was provided");

  fs::create_directories(plan.out_dir);
  std::vector<Cell> cells;
  for (const auto& p : plan.problems)
    for (Variant v : plan.variants)
      for (int pop : plan.pops)
        for (std::uint64_t seed : plan.seeds) cells.push_back({&p, v, pop, seed});
  outcome.total = static_cast<int>(cells.size());

  // manifest: plan-level hash plus one entry per cell
  json manifest{{"cells", json::array()}};
  for (const Cell& c : cells) {
    RunConfig cfg = plan.base;
    cfg.variant = c.variant;
    cfg.population_size = c.pop;
    cfg.expander.draw_fraction = plan.base.expander.draw_fraction;
    cfg.seed = c.seed;
    const std::uint64_t h = cell_config_hash(*c.spec, cfg,
                                             variant_needs_model(c.variant)
                                                 ? plan.model_digest
                                                 : "");
    manifest["cells"].push_back({{"file", cell_file_name(c.spec->id, c.variant, c.pop,
                                                         c.seed)},
                                 {"config_hash", h},
                                 {"config", config_json(*c.spec, cfg,
                                                        variant_needs_model(c.variant)
                                                            ? plan.model_digest
                                                            : "")}});
  }
  {
    std::ofstream mo(plan.out_dir / "manifest.json");
    mo << manifest.dump(2) << '\n';
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> executed{0}, resumed{0};
  std::mutex io_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& c = cells[i];
      RunConfig cfg = plan.base;
      cfg.variant = c.variant;
      cfg.population_size = c.pop;
      cfg.seed = c.seed;
      cfg.model = variant_needs_model(c.variant) ? plan.model : nullptr;
      const std::string digest = variant_needs_model(c.variant) ? plan.model_digest : "";
      const std::uint64_t h = cell_config_hash(*c.spec, cfg, digest);
      const fs::path file =
          plan.out_dir / cell_file_name(c.spec->id, c.variant, c.pop, c.seed);
      if (cell_is_complete(file, h)) {
        resumed.fetch_add(1);
        continue;
      }
      SrTask task = materialize_task(*c.spec, c.seed);
      RunResult result = evolve(std::make_shared<const SrTask>(std::move(task)), cfg);
      const fs::path tmp = file.string() + ".tmp";
      {
        std::ofstream os(tmp);
        write_run_jsonl(os, *c.spec, cfg, result, h);
      }
      fs::rename(tmp, file);
      executed.fetch_add(1);
      std::lock_guard<std::mutex> lock(io_mutex);
      std::cerr << "[" << executed.load() + resumed.load() << "/" << cells.size() << "] "
                << file.filename().string() << (result.success ? "  solved" : "")
                << "  (" << std::fixed << std::setprecision(1) << result.wall_seconds
                << "s)\n";
    }
  };

  const int threads = std::max(1, plan.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  outcome.executed = executed.load();
  outcome.resumed = resumed.load();
  return outcome;
}

// ---------------------------------------------------------------------------
// Reports

ReportData collect_report(const std::filesystem::path& results_dir) {
  namespace fs = std::filesystem;
  ReportData data;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream is(file);
    std::string line, last;
    while (std::getline(is, line))
      if (!line.empty()) last = line;
    if (last.empty()) continue;
    json j = json::parse(last, nullptr, false);
    if (j.is_discarded() || j.value("type", "") != "summary") continue;
    SummaryRow row;
    row.problem = j.value("problem", "");
    row.variant = j.value("variant", "");
    row.pop = j.value("pop", 0);
    row.seed = j.value("seed", std::uint64_t(0));
    row.arity = j.value("arity", 0);
    row.success = j.value("success", false);
    row.best_mse = j.value("best_mse", json()).is_number()
                       ? j["best_mse"].get<double>()
                       : std::numeric_limits<double>::infinity();
    row.best_size = j.value("best_size", 0);
    data.rows.push_back(row);

    auto& vp = data.by_variant_pop[{row.variant, row.pop}];
    vp.second++;
    if (row.success) vp.first++;
    auto& vap = data.by_variant_arity_pop[{row.variant, row.arity, row.pop}];
    vap.second++;
    if (row.success) vap.first++;
    if (row.success)
      data.solved_sizes[{row.variant, row.arity, row.pop}].push_back(row.best_size);
  }
  return data;
}

void write_report(const ReportData& data, const std::filesystem::path& csv_dir,
                  std::ostream& console) {
  namespace fs = std::filesystem;
  fs::create_directories(csv_dir);

  {
    std::ofstream csv(csv_dir / "success_rates.csv");
    csv << "variant,pop,runs,successes,rate\n";
    console << "\nSuccess rates by variant and population size\n";
    for (const auto& [key, val] : data.by_variant_pop) {
      const double rate = val.second ? static_cast<double>(val.first) / val.second : 0.0;
      csv << key.first << ',' << key.second << ',' << val.second << ',' << val.first
          << ',' << std::setprecision(4) << std::fixed << rate << '\n';
      console << "  " << std::setw(9) << std::left << key.first << " pop "
              << std::setw(5) << std::right << key.second << "  " << val.first << "/"
              << val.second << " = " << std::setprecision(4) << std::fixed << rate
              << '\n';
    }
  }
  {
    std::ofstream csv(csv_dir / "success_by_arity.csv");
    csv << "variant,arity,pop,runs,successes,rate\n";
    console << "\nSuccess rates by variant, arity, and population size\n";
    for (const auto& [key, val] : data.by_variant_arity_pop) {
      const auto& [variant, arity, pop] = key;
      const double rate = val.second ? static_cast<double>(val.first) / val.second : 0.0;
      csv << variant << ',' << arity << ',' << pop << ',' << val.second << ','
          << val.first << ',' << std::setprecision(4) << std::fixed << rate << '\n';
      console << "  " << std::setw(9) << std::left << variant << " arity " << arity
              << " pop " << std::setw(5) << std::right << pop << "  " << val.first
              << "/" << val.second << " = " << std::setprecision(4) << std::fixed
              << rate << '\n';
    }
  }
  {
    std::ofstream csv(csv_dir / "solved_sizes.csv");
    csv << "variant,arity,pop,solved,mean_size\n";
    console << "\nMean size of successfully synthesized expressions\n";
    for (const auto& [key, val] : data.by_variant_arity_pop) {
      const auto& [variant, arity, pop] = key;
      auto it = data.solved_sizes.find(key);
      std::string mean = "--";
      int solved = 0;
      if (it != data.solved_sizes.end() && !it->second.empty()) {
        solved = static_cast<int>(it->second.size());
        double m = 0;
        for (int s : it->second) m += s;
        m /= solved;
        std::ostringstream tmp;
        tmp << std::setprecision(2) << std::fixed << m;
        mean = tmp.str();
      }
      csv << variant << ',' << arity << ',' << pop << ',' << solved << ',' << mean
          << '\n';
      console << "  " << std::setw(9) << std::left << variant << " arity " << arity
              << " pop " << std::setw(5) << std::right << pop << "  " << mean << " ("
              << solved << " solved)\n";
    }
  }
  console << '\n';
}

}  // namespace neon
