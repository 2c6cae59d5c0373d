// nasbot command-line front end.
//
// Exit codes: 0 ok, 2 bad input, 3 semantic error, 4 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nasbot/nasbot.hpp"

namespace fs = std::filesystem;
using namespace nasbot;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

Architecture load_arch(const std::string& path) {
  try {
    return parse_json(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

Architecture load_valid(const std::string& path, const DomainLimits& limits = {}) {
  Architecture a = load_arch(path);
  auto rep = validate(a, limits);
  if (!rep.ok()) throw InputError(path + ": " + rep.summary());
  return a;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

DistanceParams distance_params(ArchClass cls, double big, const std::vector<double>& grid) {
  auto p = DistanceParams::defaults(cls);
  p.penalty = default_penalty(cls, big);
  if (!grid.empty()) p.nu_grid = grid;
  return p;
}

// ---------------------------------------------------------------------------

struct ValidateOpts {
  std::vector<std::string> files;
  bool json = false;
};

int cmd_validate(const ValidateOpts& o) {
  nlohmann::json out = nlohmann::json::array();
  bool all_ok = true;
  for (const auto& path : o.files) {
    nlohmann::json entry{{"file", path}};
    std::vector<nlohmann::json> problems;
    try {
      auto a = load_arch(path);
      auto rep = validate(a);
      for (const auto& v : rep.violations) problems.push_back({{"rule", v.rule}, {"message", v.message}, {"layers", v.layers}});
      entry["hash"] = structural_hash(a);
    } catch (const InputError& e) {
      problems.push_back({{"rule", "parse"}, {"message", e.what()}, {"layers", nlohmann::json::array()}});
    }
    entry["ok"] = problems.empty();
    entry["violations"] = problems;
    all_ok = all_ok && problems.empty();
    if (!o.json) {
      if (problems.empty()) {
        std::cout << "ok      " << path << "\n";
      } else {
        std::cout << "invalid " << path << "\n";
        for (const auto& p : problems)
          std::cout << "  [" << p["rule"].get<std::string>() << "] " << p["message"].get<std::string>() << "\n";
      }
    }
    out.push_back(std::move(entry));
  }
  if (o.json) std::cout << out.dump(2) << "\n";
  return all_ok ? 0 : 2;
}

// ---------------------------------------------------------------------------

struct DistOpts {
  std::string a, b;
  std::optional<double> nu;
  std::vector<double> grid;
  bool normalized = false;
  bool json = false;
  double big = 10.0;
};

int cmd_dist(const DistOpts& o) {
  const auto g1 = load_valid(o.a), g2 = load_valid(o.b);
  require_same_class(g1.cls, g2.cls);
  auto params = distance_params(g1.cls, o.big, o.nu ? std::vector<double>{*o.nu} : o.grid);
  auto prof = distance_profile(g1, g2, params);
  if (o.json) {
    nlohmann::json j;
    j["a"] = o.a;
    j["b"] = o.b;
    j["hash_a"] = prof.hash_a;
    j["hash_b"] = prof.hash_b;
    j["class"] = std::string(class_name(g1.cls));
    j["nu"] = params.nu_grid;
    j["d"] = prof.d;
    j["d_bar"] = prof.d_bar;
    j["total_mass"] = {total_mass(g1, params.mass), total_mass(g2, params.mass)};
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  const auto& values = o.normalized ? prof.d_bar : prof.d;
  if (o.nu) {
    std::cout << fixed6(values.front()) << "\n";
    auto r = distance(g1, g2, *o.nu, params);
    const Eigen::Index n1 = r.plan.coupling.rows() - 1, n2 = r.plan.coupling.cols() - 1;
    int pairs = 0;
    for (Eigen::Index i = 0; i < n1; ++i)
      for (Eigen::Index j = 0; j < n2; ++j)
        if (r.plan.coupling(i, j) > 1e-12) ++pairs;
    const double matched = r.plan.coupling.topLeftCorner(n1, n2).sum();
    std::cerr << "matched mass " << fixed6(matched) << " over " << pairs << " layer pairs; unassigned "
              << fixed6(r.plan.coupling.col(n2).head(n1).sum()) << " (a) and "
              << fixed6(r.plan.coupling.row(n1).head(n2).sum()) << " (b)\n";
  } else {
    for (std::size_t g = 0; g < values.size(); ++g)
      std::cout << "nu=" << format_number(params.nu_grid[g]) << " " << fixed6(values[g]) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct DistmatOpts {
  std::vector<std::string> files;
  std::vector<double> grid;
  std::string csv;
  double big = 10.0;
  unsigned threads = 0;
};

int cmd_distmat(const DistmatOpts& o) {
  std::vector<Architecture> archs;
  std::vector<std::string> names;
  for (const auto& f : o.files) {
    archs.push_back(load_valid(f));
    names.push_back(fs::path(f).filename().string());
  }
  if (archs.empty()) throw InputError("distmat: no architectures given");
  for (const auto& a : archs) require_same_class(a.cls, archs.front().cls);
  auto params = distance_params(archs.front().cls, o.big, o.grid);
  auto prof = pairwise_matrix(archs, params, o.threads ? o.threads : default_threads());
  if (!o.csv.empty()) {
    for (const auto& p : write_distance_csvs(o.csv, names, prof, params.nu_grid)) std::cout << p.string() << "\n";
    return 0;
  }
  for (std::size_t g = 0; g < prof.grid(); ++g) {
    std::cout << "nu=" << format_number(params.nu_grid[g]) << "\n";
    for (Eigen::Index i = 0; i < prof.d[g].rows(); ++i) {
      for (Eigen::Index j = 0; j < prof.d[g].cols(); ++j) std::cout << (j ? " " : "") << fixed6(prof.d[g](i, j));
      std::cout << "  " << names[static_cast<std::size_t>(i)] << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct MutateOpts {
  std::string in;
  int steps = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string subset = "all";
};

int cmd_mutate(const MutateOpts& o) {
  MutationConfig cfg;
  auto subset = parse_modifier_subset(o.subset);
  if (!subset) throw InputError("--subset: expected all, units or structure");
  cfg.subset = *subset;
  const auto arch = load_valid(o.in, cfg.limits);
  std::mt19937_64 rng(o.seed);
  auto r = o.steps > 0 ? mutate_steps(arch, o.steps, cfg, rng) : mutate(arch, cfg, rng);
  const std::string text = to_json(r.arch) + "\n";
  if (o.out.empty())
    std::cout << text;
  else
    write_file(o.out, text);
  std::cerr << "applied " << r.steps_applied << " of " << r.steps_drawn << " steps\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GenpoolOpts {
  std::string cls = "cnn";
  std::string out;
};

int cmd_genpool(const GenpoolOpts& o) {
  auto cls = parse_class(o.cls);
  if (!cls) throw InputError("--class: expected cnn or mlp");
  auto pool = initial_pool(*cls);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%s_%02zu.json", o.cls.c_str(), i);
    const fs::path path = fs::path(o.out) / name;
    write_file(path, to_json(pool[i]) + "\n");
    std::cout << path.string() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SearchOpts {
  std::string method = "nasbot";
  std::string objective = "f3";
  std::string cls;
  std::string objective_cmd;
  std::string config;
  std::string out = "run";
  int budget = 50;
  int workers = 1;
  std::uint64_t seed = 0;
  double timeout = 0.0;
  unsigned threads = 0;
};

int cmd_search(const SearchOpts& o, const CLI::App& sub) {
  SearchConfig cfg;
  if (!o.config.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(o.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(o.config + ": " + e.what());
    }
    apply_config_json(cfg, j);
  }
  const bool from_file = !o.config.empty();
  auto given = [&](const char* flag) { return sub.count(flag) > 0 || !from_file; };
  if (given("--method")) {
    auto m = parse_method(o.method);
    if (!m) throw InputError("--method: expected nasbot, ea or random");
    cfg.method = *m;
  }
  if (given("--objective")) {
    cfg.objective.name = o.objective;
    if (auto k = parse_synthetic(o.objective); k && !sub.count("--class"))
      if (auto need = synthetic_class(*k)) cfg.cls = *need;
  }
  if (sub.count("--class")) {
    auto c = parse_class(o.cls);
    if (!c) throw InputError("--class: expected cnn or mlp");
    cfg.cls = *c;
  }
  if (sub.count("--objective-cmd")) cfg.objective.command = o.objective_cmd;
  if (sub.count("--timeout")) cfg.objective.timeout_s = o.timeout;
  if (given("--budget")) cfg.budget = o.budget;
  if (given("--workers")) cfg.workers = o.workers;
  if (given("--seed")) cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.check();

  auto res = run(cfg);
  write_run_dir(o.out, cfg, res);
  for (const auto& line : res.log) std::cerr << "note: " << line << "\n";
  std::cout << "best " << format_number(res.best) << " " << (res.best_arch ? structural_hash(*res.best_arch) : "-")
            << "\nevaluations " << res.history.size() << " failures " << res.failures << "\nwrote " << o.out << "\n";
  if (res.failures * 5 > cfg.budget) {
    std::cerr << "error: " << res.failures << " of " << cfg.budget << " evaluations failed\n";
    return 4;
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural architecture search with optimal-transport distances and Bayesian optimisation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::uint64_t seed = 0;
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", seed, "Random seed"); };

  ValidateOpts vo;
  auto* validate_cmd = app.add_subcommand("validate", "Check architecture files");
  validate_cmd->add_option("files", vo.files, "Architecture JSON files")->required();
  validate_cmd->add_flag("--json", vo.json, "Machine-readable report");
  add_seed(validate_cmd);

  DistOpts dopt;
  auto* dist_cmd = app.add_subcommand("dist", "Distance between two architectures");
  dist_cmd->add_option("a", dopt.a, "First architecture")->required();
  dist_cmd->add_option("b", dopt.b, "Second architecture")->required();
  dist_cmd->add_option("--nu", dopt.nu, "Structural weight (default: the whole grid)")->check(CLI::PositiveNumber);
  dist_cmd->add_option("--nu-grid", dopt.grid, "Weights to report when --nu is absent")->delimiter(',');
  dist_cmd->add_flag("--normalized", dopt.normalized, "Report d divided by the summed total masses");
  dist_cmd->add_flag("--json", dopt.json, "Full profile as JSON");
  dist_cmd->add_option("--big", dopt.big, "Finite stand-in for forbidden label matches")->check(CLI::PositiveNumber);
  add_seed(dist_cmd);

  DistmatOpts mo;
  auto* distmat_cmd = app.add_subcommand("distmat", "Pairwise distances over a set of architectures");
  distmat_cmd->add_option("files", mo.files, "Architecture JSON files")->required();
  distmat_cmd->add_option("--nu-grid", mo.grid, "Structural weights")->delimiter(',');
  distmat_cmd->add_option("--csv", mo.csv, "Write one CSV per weight into this directory");
  distmat_cmd->add_option("--big", mo.big, "Finite stand-in for forbidden label matches")->check(CLI::PositiveNumber);
  distmat_cmd->add_option("--threads", mo.threads, "Worker threads (0: all cores)");
  add_seed(distmat_cmd);

  MutateOpts uo;
  auto* mutate_cmd = app.add_subcommand("mutate", "Apply random modifiers to an architecture");
  mutate_cmd->add_option("in", uo.in, "Architecture JSON file")->required();
  mutate_cmd->add_option("--steps", uo.steps, "Number of one-step modifiers (0: draw a compound count)")
      ->check(CLI::NonNegativeNumber);
  mutate_cmd->add_option("--out", uo.out, "Output file (default: standard output)");
  mutate_cmd->add_option("--subset", uo.subset, "Modifier subset: all, units or structure");
  add_seed(mutate_cmd);

  GenpoolOpts go;
  auto* genpool_cmd = app.add_subcommand("genpool", "Write the initial pool");
  genpool_cmd->add_option("--class", go.cls, "cnn or mlp")->required();
  genpool_cmd->add_option("--out", go.out, "Output directory")->required();
  add_seed(genpool_cmd);

  SearchOpts so;
  auto* search_cmd = app.add_subcommand("search", "Run an architecture search");
  search_cmd->add_option("--method", so.method, "nasbot, ea or random");
  search_cmd->add_option("--objective", so.objective, "f0, f1, f2, f3 or external");
  search_cmd->add_option("--budget", so.budget, "Number of evaluations");
  search_cmd->add_option("--workers", so.workers, "Parallel evaluations");
  search_cmd->add_option("--out", so.out, "Run directory");
  search_cmd->add_option("--class", so.cls, "cnn or mlp (default: implied by the objective)");
  search_cmd->add_option("--objective-cmd", so.objective_cmd, "External evaluator; {arch} is replaced by a JSON path");
  search_cmd->add_option("--timeout", so.timeout, "External evaluator timeout in seconds");
  search_cmd->add_option("--config", so.config, "Configuration JSON (flags given explicitly override it)");
  search_cmd->add_option("--threads", so.threads, "Threads for acquisition scoring (0: all cores)");
  search_cmd->add_option("--seed", so.seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  uo.seed = seed;
  try {
    if (*validate_cmd) return cmd_validate(vo);
    if (*dist_cmd) return cmd_dist(dopt);
    if (*distmat_cmd) return cmd_distmat(mo);
    if (*mutate_cmd) return cmd_mutate(uo);
    if (*genpool_cmd) return cmd_genpool(go);
    if (*search_cmd) return cmd_search(so, *search_cmd);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SemanticError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
