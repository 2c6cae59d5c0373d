#include <gtest/gtest.h>

#include <Eigen/LU>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "nasbot/nasbot.hpp"
#include "random_arch.hpp"

using namespace nasbot;

namespace {

SearchConfig small(SearchMethod m, int budget, std::uint64_t seed = 1) {
  SearchConfig c;
  c.method = m;
  c.budget = budget;
  c.seed = seed;
  c.threads = 1;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

} // namespace

TEST(Schedule, KnownPoints) {
  EXPECT_EQ(schedule(1), std::make_pair(20, 5));
  EXPECT_EQ(schedule(4), std::make_pair(40, 7));
  EXPECT_EQ(schedule(100), std::make_pair(200, 15));
  EXPECT_EQ(schedule(10000), std::make_pair(500, 23));
  EXPECT_THROW(schedule(0), InputError);
}

TEST(Schedule, Monotone) {
  auto prev = schedule(1);
  for (int t = 2; t <= 2000; ++t) {
    auto cur = schedule(t);
    EXPECT_GE(cur.first, prev.first);
    EXPECT_GE(cur.second, prev.second);
    prev = cur;
  }
}

TEST(Config, JsonRoundTrip) {
  SearchConfig c;
  c.method = SearchMethod::ea;
  c.cls = ArchClass::cnn;
  c.objective.name = "f1";
  c.budget = 77;
  c.seed = 12345678901234ULL;
  c.nu_grid = {0.3, 0.6};
  c.hyper_samples = 3;
  c.sched.c1 = 7;
  c.hallucination = Hallucination::constant_liar;
  SearchConfig d;
  apply_config_json(d, config_to_json(c));
  EXPECT_EQ(config_to_json(d), config_to_json(c));
  EXPECT_NO_THROW(d.check());
}

TEST(Config, Rejections) {
  SearchConfig c;
  EXPECT_THROW(apply_config_json(c, nlohmann::json{{"bogus", 1}}), InputError);
  EXPECT_THROW(apply_config_json(c, nlohmann::json{{"budget", "ten"}}), InputError);
  EXPECT_THROW(apply_config_json(c, nlohmann::json{{"hyper_box", {{"beta", {5, 1}}}}}), InputError);
  EXPECT_THROW(apply_config_json(c, nlohmann::json::array()), InputError);

  SearchConfig b;
  b.budget = 0;
  EXPECT_THROW(b.check(), InputError);
  SearchConfig w;
  w.objective.name = "f1"; // cnn objective on the default mlp class
  EXPECT_THROW(w.check(), SemanticError);
  SearchConfig e;
  e.objective.name = "external";
  EXPECT_THROW(e.check(), InputError);
}

TEST(History, CsvLayout) {
  std::vector<HistoryRow> rows{{1, "abc", 0.5, 0.5, 1.0}, {2, "def", 0.25, 0.5, 2.0}};
  auto csv = history_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,arch,value,best,elapsed_s");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Run, RandomBudgetTwenty) {
  auto res = run(small(SearchMethod::random, 20));
  ASSERT_EQ(res.history.size(), 20u);
  EXPECT_EQ(res.failures, 0);
  double best = -1e300;
  std::set<std::string> hashes;
  for (std::size_t i = 0; i < res.history.size(); ++i) {
    const auto& r = res.history[i];
    EXPECT_EQ(r.step, static_cast<int>(i) + 1);
    best = std::max(best, r.value);
    EXPECT_DOUBLE_EQ(r.best, best);
    EXPECT_TRUE(hashes.insert(r.arch).second) << "re-evaluated " << r.arch;
    EXPECT_NEAR(r.value, eval_f(3, res.evaluated[i].arch), 1e-12);
  }
  EXPECT_DOUBLE_EQ(res.best, best);
  ASSERT_TRUE(res.best_arch);
  EXPECT_DOUBLE_EQ(eval_f(3, *res.best_arch), best);
}

TEST(Run, BudgetEqualToPoolEvaluatesExactlyThePool) {
  for (auto m : {SearchMethod::nasbot, SearchMethod::ea, SearchMethod::random}) {
    auto res = run(small(m, 10));
    auto pool = initial_pool(ArchClass::mlp);
    std::set<std::string> want, got;
    for (const auto& a : pool) want.insert(structural_hash(a));
    for (const auto& r : res.history) got.insert(r.arch);
    EXPECT_EQ(got, want) << method_name(m);
  }
}

TEST(Run, CustomPoolIsUsed) {
  std::mt19937_64 rng(3);
  std::vector<Architecture> pool;
  for (int i = 0; i < 4; ++i) pool.push_back(gen::random_arch(ArchClass::mlp, rng));
  auto res = run(small(SearchMethod::random, 4), make_objective({}), pool);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(res.history[i].arch, structural_hash(pool[i]));
  auto cnn = initial_pool(ArchClass::cnn);
  EXPECT_THROW(run(small(SearchMethod::random, 4), make_objective({}), cnn), SemanticError);
}

TEST(Run, DeterministicPerSeed) {
  for (auto m : {SearchMethod::nasbot, SearchMethod::ea, SearchMethod::random}) {
    auto a = run(small(m, 16, 9));
    auto b = run(small(m, 16, 9));
    EXPECT_EQ(history_csv(a.history), history_csv(b.history)) << method_name(m);
  }
  auto c = run(small(SearchMethod::random, 16, 10));
  EXPECT_NE(history_csv(run(small(SearchMethod::random, 16, 9)).history), history_csv(c.history));
}

TEST(Run, ThreadCountDoesNotChangeResult) {
  auto c1 = small(SearchMethod::nasbot, 14, 4);
  auto c2 = c1;
  c2.threads = 3;
  EXPECT_EQ(history_csv(run(c1).history), history_csv(run(c2).history));
}

TEST(Run, ParallelWorkersNeverRepeat) {
  for (auto m : {SearchMethod::nasbot, SearchMethod::ea}) {
    auto c = small(m, 18, 2);
    c.workers = 3;
    auto res = run(c);
    ASSERT_EQ(res.history.size(), 18u);
    std::set<std::string> hashes;
    for (const auto& r : res.history) EXPECT_TRUE(hashes.insert(r.arch).second);
    std::set<int> workers;
    for (const auto& r : res.evaluated) workers.insert(r.worker);
    EXPECT_EQ(workers.size(), 3u);
  }
}

TEST(Run, FailuresAreCountedAndSkipped) {
  int calls = 0;
  Objective flaky = [&](const Architecture& a) {
    if (++calls % 3 == 0) throw std::runtime_error("boom");
    return eval_f(3, a);
  };
  auto res = run(small(SearchMethod::nasbot, 15), flaky);
  ASSERT_EQ(res.history.size(), 15u);
  EXPECT_EQ(res.failures, 5);
  int nan_rows = 0;
  for (const auto& r : res.history) nan_rows += std::isnan(r.value);
  EXPECT_EQ(nan_rows, 5);
  EXPECT_TRUE(std::isfinite(res.best));
}

TEST(Run, AllFailuresLeaveNoBest) {
  auto res = run(small(SearchMethod::nasbot, 12), [](const Architecture&) -> double { throw std::runtime_error("x"); });
  EXPECT_EQ(res.failures, 12);
  EXPECT_FALSE(res.best_arch);
}

TEST(Run, EaBaselineGenerationSize) {
  auto c = small(SearchMethod::ea, 30, 5);
  EXPECT_EQ(c.ea_n_mut, 10);
  Searcher s(c);
  // drain the pool, then every EA generation is queued ten at a time
  for (int i = 0; i < 10; ++i) {
    auto x = s.next_point();
    s.record(x, eval_f(3, x), i, 0);
  }
  auto first = s.next_point();
  EXPECT_EQ(s.state().t, 1);
  EXPECT_EQ(s.state().ea_queue.size(), 9u);
  s.record(first, eval_f(3, first), 10, 0);
}

TEST(Hallucination, EqualsIndependentPosteriorMean) {
  std::mt19937_64 rng(8);
  const auto params = DistanceParams::defaults(ArchClass::mlp);
  const std::size_t n = 6, extra = 3;
  std::vector<Architecture> archs;
  while (archs.size() < n + extra) archs.push_back(gen::random_arch(ArchClass::mlp, rng));
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(eval_f(3, archs[i]));
  KernelHyper h;
  h.alpha = 1.3;
  h.alpha_bar = 0.7;
  h.beta = {0.004, 0.002, 0.001, 0.0005};
  h.beta_bar = {2.0, 1.0, 0.5, 0.25};
  h.noise_var = 1e-3;

  auto prof = pairwise_matrix(archs, params, 1);
  auto fake = hallucinate(prof, y, h);
  ASSERT_EQ(fake.size(), extra);

  // dense oracle: distances recomputed pair by pair, solved with LU
  auto k = [&](const Architecture& a, const Architecture& b) {
    auto p = distance_profile(a, b, params);
    return kernel(p.d, p.d_bar, h);
  };
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd r(n);
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    r(i) = y[i] - m;
    for (std::size_t j = 0; j < n; ++j) K(i, j) = k(archs[i], archs[j]) + (i == j ? h.noise_var : 0.0);
  }
  Eigen::VectorXd w = K.fullPivLu().solve(r);
  for (std::size_t p = 0; p < extra; ++p) {
    double mu = m;
    for (std::size_t i = 0; i < n; ++i) mu += k(archs[n + p], archs[i]) * w(i);
    EXPECT_NEAR(fake[p], mu, 1e-9);
  }
}

TEST(RunDir, WritesAllArtifacts) {
  auto dir = std::filesystem::temp_directory_path() / "nasbot_test_rundir";
  std::filesystem::remove_all(dir);
  auto cfg = small(SearchMethod::random, 12);
  auto res = run(cfg);
  write_run_dir(dir, cfg, res);
  EXPECT_EQ(slurp(dir / "history.csv"), history_csv(res.history));
  auto best = nlohmann::json::parse(slurp(dir / "best.json"));
  EXPECT_EQ(best["hash"], structural_hash(*res.best_arch));
  EXPECT_DOUBLE_EQ(best["value"].get<double>(), res.best);
  SearchConfig back;
  apply_config_json(back, nlohmann::json::parse(slurp(dir / "config.json")));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "pool")) {
    ++files;
    auto a = parse_json(slurp(e.path()));
    EXPECT_EQ(structural_hash(a) + ".json", e.path().filename().string());
  }
  EXPECT_EQ(files, 12);
  std::filesystem::remove_all(dir);
}
