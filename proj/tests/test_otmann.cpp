#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lp_oracle.hpp"
#include "nasbot/nasbot.hpp"
#include "path_oracle.hpp"
#include "random_arch.hpp"

using namespace nasbot;
using L = LayerLabel;

namespace {

Architecture split_a() {
  return ChainBuilder(ArchClass::cnn, 3).add(L::conv3, 16).add(L::conv3, 32).finish();
}

Architecture split_b() {
  Architecture a;
  a.cls = ArchClass::cnn;
  a.input_channels = 3;
  a.layers = {{0, L::ip, {}, {}},      {1, L::conv3, 16, 1},    {2, L::conv3, 16, 1},
              {3, L::conv3, 16, 1},    {4, L::softmax, {}, {}}, {5, L::op, {}, {}}};
  a.edges = {{0, 1}, {1, 2}, {1, 3}, {2, 4}, {3, 4}, {4, 5}};
  return a;
}

// Matching program in the inequality form, solved by the generic LP oracle.
double primal_oracle(const Architecture& a, const Architecture& b, double nu, const LabelPenalty& pen) {
  auto fa = compute_features(a), fb = compute_features(b);
  auto str = structural_cost_matrix(fa, fb);
  std::vector<std::vector<double>> lab(a.size(), std::vector<double>(b.size()));
  std::vector<std::vector<double>> s(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      lab[i][j] = pen.raw[label_index(a.layers[i].label)][label_index(b.layers[j].label)];
      s[i][j] = str(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  return oracle::matching_primal(fa.masses, fb.masses, lab, s, nu);
}

gen::Options small_options() {
  gen::Options o;
  o.max_processing = 4;
  o.max_decision = 1;
  return o;
}

} // namespace

TEST(Penalty, TableEntries) {
  auto c = default_penalty(ArchClass::cnn);
  EXPECT_DOUBLE_EQ(c(L::conv3, L::conv5), 0.2);
  EXPECT_DOUBLE_EQ(c(L::conv5, L::conv7), 0.2);
  EXPECT_DOUBLE_EQ(c(L::conv3, L::conv7), 0.3);
  EXPECT_DOUBLE_EQ(c(L::max_pool, L::avg_pool), 0.25);
  EXPECT_DOUBLE_EQ(c(L::res3, L::res7), 0.3);
  EXPECT_NEAR(c(L::res3, L::conv5), 0.28, 1e-15);
  EXPECT_NEAR(c(L::res3, L::conv3), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(c(L::conv3, L::fc), 10.0);
  EXPECT_DOUBLE_EQ(c(L::softmax, L::fc), 10.0);
  EXPECT_DOUBLE_EQ(c(L::ip, L::op), 10.0);
  EXPECT_DOUBLE_EQ(c(L::ip, L::ip), 0.0);

  auto m = default_penalty(ArchClass::mlp);
  EXPECT_DOUBLE_EQ(m(L::relu, L::logistic), 0.25);
  EXPECT_DOUBLE_EQ(m(L::relu, L::elu), 0.1);
  EXPECT_DOUBLE_EQ(m(L::tanh, L::logistic), 0.1);
  EXPECT_DOUBLE_EQ(m(L::linear, L::relu), 10.0);
  EXPECT_DOUBLE_EQ(m(L::linear, L::linear), 0.0);
}

TEST(Penalty, TriangleCheck) {
  for (ArchClass cls : {ArchClass::cnn, ArchClass::mlp}) {
    EXPECT_FALSE(check_triangle(default_penalty(cls)).has_value());
    EXPECT_FALSE(check_triangle(default_penalty(cls, 1000.0)).has_value());
  }
  Eigen::MatrixXd bad(3, 3);
  bad << 0, 1, 5, 1, 0, 1, 5, 1, 0;
  auto v = check_triangle(bad);
  ASSERT_TRUE(v);
  EXPECT_EQ(*v, (std::array<int, 3>{0, 1, 2}));
  EXPECT_FALSE(check_triangle(Eigen::MatrixXd::Zero(4, 4)));

  auto p = default_penalty(ArchClass::cnn);
  p.set(L::conv3, L::conv7, 0.9);
  EXPECT_TRUE(check_triangle(p));
  DistanceParams params = DistanceParams::defaults(ArchClass::cnn);
  params.penalty = p;
  EXPECT_THROW(distance(split_a(), split_a(), 0.1, params), SemanticError);
}

TEST(CostMatrices, MismatchEntries) {
  auto a = ChainBuilder(ArchClass::cnn, 3).add(L::conv3, 8).add(L::fc, 8).finish();
  auto b = ChainBuilder(ArchClass::cnn, 3).add(L::conv5, 8).finish();
  auto m = mismatch_cost_matrix(a, b, default_penalty(ArchClass::cnn));
  ASSERT_EQ(m.rows(), 5);
  ASSERT_EQ(m.cols(), 4);
  EXPECT_DOUBLE_EQ(m(1, 1), 0.2);
  EXPECT_DOUBLE_EQ(m(2, 1), 10.0);
  EXPECT_DOUBLE_EQ(m(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m(3, 2), 0.0);
  EXPECT_DOUBLE_EQ(m(4, 3), 0.0);
}

TEST(CostMatrices, ClassMismatchThrows) {
  auto mlp = ChainBuilder(ArchClass::mlp).add(L::relu, 8).finish();
  EXPECT_THROW(mismatch_cost_matrix(split_a(), mlp, default_penalty(ArchClass::cnn)), SemanticError);
  EXPECT_THROW(distance(split_a(), mlp, 0.1, DistanceParams::defaults(ArchClass::cnn)), SemanticError);
}

TEST(CostMatrices, StructuralMatchesOracle) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 30; ++t) {
    const ArchClass cls = t % 2 ? ArchClass::cnn : ArchClass::mlp;
    auto a = gen::random_arch(cls, rng), b = gen::random_arch(cls, rng);
    auto c = structural_cost_matrix(a, b);
    const auto groups = label_groups(cls);
    std::vector<std::vector<oracle::PathStats>> pa, pb;
    for (LabelGroup g : groups)
      for (PathAnchor an : kPathAnchors) {
        pa.push_back(oracle::enumerate_paths(a, an, g));
        pb.push_back(oracle::enumerate_paths(b, an, g));
      }
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) {
        double total = 0.0;
        for (std::size_t k = 0; k < pa.size(); ++k) {
          const auto &x = pa[k][i], &y = pb[k][j];
          total += std::abs(x.sp - y.sp) + std::abs(x.lp - y.lp) + std::abs(x.rw - y.rw);
        }
        // mean over groups of a mean over the six statistics
        const double want = total / (6.0 * static_cast<double>(groups.size()));
        EXPECT_NEAR(c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), want, 1e-12);
      }
    EXPECT_TRUE(c.transpose().isApprox(structural_cost_matrix(b, a)));
  }
}

TEST(CostMatrices, StructuralHandChains) {
  // ip -> relu x2 -> linear -> op (5 layers) against relu x4 (7 layers)
  auto a = ChainBuilder(ArchClass::mlp).add(L::relu, 8).add(L::relu, 8).finish();
  auto b = ChainBuilder(ArchClass::mlp).add(L::relu, 8).add(L::relu, 8).add(L::relu, 8).add(L::relu, 8).finish();
  auto c = structural_cost_matrix(a, b);
  // first relu: all group: to op 3 vs 5 (sp, lp, rw), from ip 1 vs 1
  //             rect group: to op 1 vs 3, from ip 1 vs 1; sigm: all zero
  const double all = (3 * 2.0) / 6.0, rect = (3 * 2.0) / 6.0;
  EXPECT_NEAR(c(1, 1), (all + rect + 0.0) / 3.0, 1e-12);
}

TEST(Distance, SelfDistanceZeroOnPools) {
  for (ArchClass cls : {ArchClass::cnn, ArchClass::mlp}) {
    auto params = DistanceParams::defaults(cls);
    for (const auto& a : initial_pool(cls)) {
      auto p = distance_profile(a, a, params);
      for (double d : p.d) EXPECT_NEAR(d, 0.0, 1e-9);
    }
  }
}

TEST(Distance, SplitInvariancePair) {
  auto params = DistanceParams::defaults(ArchClass::cnn);
  ASSERT_TRUE(validate(split_b()).ok());
  auto p = distance_profile(split_a(), split_b(), params);
  for (std::size_t g = 0; g < p.d.size(); ++g) {
    EXPECT_NEAR(p.d[g], 0.0, 1e-9);
    EXPECT_NEAR(p.d_bar[g], 0.0, 1e-9);
  }
  // the masses line up layer for layer
  EXPECT_DOUBLE_EQ(total_mass(split_a()), total_mass(split_b()));
}

TEST(Distance, PlanConservesMass) {
  std::mt19937_64 rng(32);
  auto params = DistanceParams::defaults(ArchClass::cnn);
  for (int t = 0; t < 20; ++t) {
    auto a = gen::random_arch(ArchClass::cnn, rng), b = gen::random_arch(ArchClass::cnn, rng);
    auto r = distance(a, b, 0.4, params);
    const auto& inst = r.instance;
    for (std::size_t i = 0; i < inst.supplies.size(); ++i)
      EXPECT_NEAR(r.plan.coupling.row(static_cast<Eigen::Index>(i)).sum(), inst.supplies[i],
                  1e-8 * (1 + inst.supplies[i]));
    for (std::size_t j = 0; j < inst.demands.size(); ++j)
      EXPECT_NEAR(r.plan.coupling.col(static_cast<Eigen::Index>(j)).sum(), inst.demands[j],
                  1e-8 * (1 + inst.demands[j]));
    EXPECT_NEAR(inst.supplies.back(), total_mass(b), 1e-9 * total_mass(b));
    EXPECT_NEAR(inst.demands.back(), total_mass(a), 1e-9 * total_mass(a));
  }
}

TEST(Distance, DisjointLabelsUnassignProcessingMass) {
  auto a = ChainBuilder(ArchClass::cnn, 3).add(L::conv3, 8).add(L::conv3, 8).finish();
  auto b = ChainBuilder(ArchClass::cnn, 3).add(L::fc, 16).finish();
  auto params = DistanceParams::defaults(ArchClass::cnn);
  const auto ma = layer_masses(a), mb = layer_masses(b);
  // ip, decision and op match freely at nu = 0; conv and fc mass is unassigned
  double matched = 0.0;
  for (auto [i, j] : {std::pair{0, 0}, {3, 2}, {4, 3}}) matched += std::min(ma[i], mb[j]);
  const double want = total_mass(a) + total_mass(b) - 2.0 * matched;
  EXPECT_NEAR(distance(a, b, 0.0, params).d, want, 1e-9);
  EXPECT_NEAR(primal_oracle(a, b, 0.0, params.penalty), want, 1e-7);
}

TEST(Distance, PrimalEqualsAugmentedTransport) {
  std::mt19937_64 rng(33);
  for (int t = 0; t < 40; ++t) {
    const ArchClass cls = t % 2 ? ArchClass::cnn : ArchClass::mlp;
    auto params = DistanceParams::defaults(cls);
    auto a = gen::random_arch(cls, rng, small_options()), b = gen::random_arch(cls, rng, small_options());
    for (double nu : {0.1, 0.8}) {
      const double d = distance(a, b, nu, params).d;
      const double p = primal_oracle(a, b, nu, params.penalty);
      ASSERT_FALSE(std::isnan(p));
      EXPECT_NEAR(d, p, 1e-7 * (1.0 + d)) << "trial " << t;
    }
  }
}

TEST(Distance, PruningDoesNotChangeTheOptimum) {
  std::mt19937_64 rng(34);
  for (int t = 0; t < 40; ++t) {
    const ArchClass cls = t % 2 ? ArchClass::cnn : ArchClass::mlp;
    auto on = DistanceParams::defaults(cls), off = on;
    off.prune = false;
    auto a = gen::random_arch(cls, rng), b = gen::random_arch(cls, rng);
    auto p = distance_profile(a, b, on), q = distance_profile(a, b, off);
    for (std::size_t g = 0; g < p.d.size(); ++g) EXPECT_NEAR(p.d[g], q.d[g], 1e-9 * (1 + q.d[g]));
  }
}

TEST(Distance, BigInvariance) {
  std::mt19937_64 rng(35);
  for (int t = 0; t < 40; ++t) {
    const ArchClass cls = t % 2 ? ArchClass::cnn : ArchClass::mlp;
    auto p10 = DistanceParams::defaults(cls), p1000 = p10;
    p1000.penalty = default_penalty(cls, 1000.0);
    auto a = gen::random_arch(cls, rng), b = gen::random_arch(cls, rng);
    auto x = distance_profile(a, b, p10), y = distance_profile(a, b, p1000);
    for (std::size_t g = 0; g < x.d.size(); ++g) EXPECT_NEAR(x.d[g], y.d[g], 1e-7);
  }
}

TEST(Distance, MonotoneInNuAndNormalisedAtMostOne) {
  std::mt19937_64 rng(36);
  for (int t = 0; t < 60; ++t) {
    const ArchClass cls = t % 2 ? ArchClass::cnn : ArchClass::mlp;
    auto params = DistanceParams::defaults(cls);
    auto a = gen::random_arch(cls, rng), b = gen::random_arch(cls, rng);
    auto p = distance_profile(a, b, params);
    const double norm = total_mass(a) + total_mass(b);
    for (std::size_t g = 0; g < p.d.size(); ++g) {
      EXPECT_GE(p.d[g], 0.0);
      EXPECT_LE(p.d_bar[g], 1.0 + 1e-12);
      EXPECT_NEAR(p.d_bar[g], p.d[g] / norm, 1e-12);
      if (g) EXPECT_GE(p.d[g], p.d[g - 1] - 1e-9);
      EXPECT_NEAR(p.d[g], distance(a, b, params.nu_grid[g], params).d, 1e-9 * (1 + p.d[g]));
    }
  }
}

TEST(Distance, SymmetricAndTriangle) {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 30; ++t) {
    const ArchClass cls = t % 2 ? ArchClass::cnn : ArchClass::mlp;
    auto params = DistanceParams::defaults(cls);
    auto a = gen::random_arch(cls, rng), b = gen::random_arch(cls, rng), c = gen::random_arch(cls, rng);
    auto ab = distance_profile(a, b, params), ba = distance_profile(b, a, params);
    auto bc = distance_profile(b, c, params), ac = distance_profile(a, c, params);
    for (std::size_t g = 0; g < ab.d.size(); ++g) {
      EXPECT_NEAR(ab.d[g], ba.d[g], 1e-9 * (1 + ab.d[g]));
      EXPECT_LE(ac.d[g], ab.d[g] + bc.d[g] + 1e-7);
    }
  }
}

TEST(Distance, RelabellingDoesNotMatter) {
  std::mt19937_64 rng(38);
  auto params = DistanceParams::defaults(ArchClass::mlp);
  for (int t = 0; t < 20; ++t) {
    auto a = gen::random_arch(ArchClass::mlp, rng), b = gen::random_arch(ArchClass::mlp, rng);
    auto p = distance_profile(a, b, params), q = distance_profile(gen::relabel(a, rng), b, params);
    for (std::size_t g = 0; g < p.d.size(); ++g) EXPECT_NEAR(p.d[g], q.d[g], 1e-9 * (1 + p.d[g]));
    EXPECT_NEAR(distance_profile(a, gen::relabel(a, rng), params).d[0], 0.0, 1e-9);
  }
}

TEST(Distance, RejectsBadNu) {
  auto params = DistanceParams::defaults(ArchClass::cnn);
  EXPECT_THROW(distance(split_a(), split_b(), -1.0, params), InputError);
  params.nu_grid = {};
  EXPECT_THROW(distance_profile(split_a(), split_b(), params), InputError);
}

TEST(Pairwise, MatchesIndependentCalls) {
  auto pool = initial_pool(ArchClass::mlp);
  auto params = DistanceParams::defaults(ArchClass::mlp);
  auto m = pairwise_matrix(pool, params, 2);
  ASSERT_EQ(m.size(), 10u);
  ASSERT_EQ(m.grid(), 4u);
  for (std::size_t g = 0; g < m.grid(); ++g) {
    EXPECT_LE((m.d[g] - m.d[g].transpose()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(m.d[g].diagonal().cwiseAbs().maxCoeff(), 0.0);
  }
  for (auto [i, j] : {std::pair{0, 1}, {2, 7}, {3, 9}, {5, 4}, {8, 6}}) {
    auto p = distance_profile(pool[i], pool[j], params);
    for (std::size_t g = 0; g < m.grid(); ++g) {
      EXPECT_NEAR(m.d[g](i, j), p.d[g], 1e-9 * (1 + p.d[g]));
      EXPECT_NEAR(m.d_bar[g](i, j), p.d_bar[g], 1e-12);
    }
  }
  auto one = pairwise_matrix({pool[0]}, params, 1);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_EQ(one.d[0](0, 0), 0.0);
}

TEST(Pairwise, MixedClassesRejected) {
  std::vector<Architecture> mixed{initial_pool(ArchClass::mlp)[0], split_a()};
  EXPECT_THROW(pairwise_matrix(mixed, DistanceParams::defaults(ArchClass::mlp), 1), SemanticError);
}

TEST(Pairwise, CsvExport) {
  auto pool = initial_pool(ArchClass::cnn);
  pool.resize(3);
  auto params = DistanceParams::defaults(ArchClass::cnn);
  auto m = pairwise_matrix(pool, params, 1);
  const auto dir = std::filesystem::temp_directory_path() / "nasbot_csv_test";
  std::filesystem::remove_all(dir);
  auto files = write_distance_csvs(dir, {"a.json", "b,c.json", "d.json"}, m, params.nu_grid);
  ASSERT_EQ(files.size(), 8u);
  EXPECT_EQ(files[0].filename(), "d_nu0.1.csv");
  EXPECT_EQ(files[1].filename(), "dbar_nu0.1.csv");
  std::ifstream f(files[0]);
  std::string header, row;
  std::getline(f, header);
  EXPECT_EQ(header, ",a.json,\"b,c.json\",d.json");
  std::getline(f, row);
  EXPECT_EQ(row.substr(0, 9), "a.json,0,");
  std::filesystem::remove_all(dir);
}

TEST(Engine, CachesByHash) {
  DistanceEngine engine(DistanceParams::defaults(ArchClass::mlp));
  auto pool = initial_pool(ArchClass::mlp);
  auto a = engine.prepare(pool[0]), b = engine.prepare(pool[1]);
  auto p = engine.profile(*a, *b);
  EXPECT_EQ(engine.cached_profiles(), 1u);
  auto q = engine.profile(*b, *a);
  EXPECT_EQ(engine.cached_profiles(), 1u);
  EXPECT_EQ(p.d, q.d);
  EXPECT_EQ(q.hash_a, b->hash);
  std::mt19937_64 rng(1);
  auto c = engine.prepare(gen::relabel(pool[0], rng));
  EXPECT_EQ(c.get(), a.get());
}
