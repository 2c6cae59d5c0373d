#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nasbot/nasbot.hpp"

namespace fs = std::filesystem;

namespace {

struct Output {
  int status = -1;
  std::string out;
};

// stdout only; stderr is discarded unless the command redirects it
Output cli(const std::string& args) {
  const std::string cmd = std::string(NASBOT_CLI) + " " + args + " 2>/dev/null";
  Output o;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return o;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
  const int st = pclose(p);
  o.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("nasbot_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return path(name);
  }

  // pool written by genpool
  std::vector<std::string> pool(const std::string& cls) const {
    EXPECT_EQ(cli("genpool --class " + cls + " --out " + path(cls)).status, 0);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir / cls)) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    return files;
  }

  fs::path dir;
};

} // namespace

TEST_F(Cli, GenpoolWritesTenValidFiles) {
  for (std::string cls : {"cnn", "mlp"}) {
    auto files = pool(cls);
    ASSERT_EQ(files.size(), 10u);
    for (const auto& f : files) {
      auto a = nasbot::parse_json(slurp(f));
      EXPECT_TRUE(nasbot::validate(a).ok()) << f;
      EXPECT_EQ(nasbot::class_name(a.cls), cls);
    }
    std::string all;
    for (const auto& f : files) all += " " + f;
    EXPECT_EQ(cli("validate" + all).status, 0);
  }
}

TEST_F(Cli, DistIdenticalAndSplitPair) {
  auto files = pool("mlp");
  EXPECT_EQ(cli("dist --nu 0.2 " + files[3] + " " + files[3]).out, "0.000000\n");
  const std::string data = NASBOT_SAMPLE_DATA;
  for (std::string nu : {"0.1", "0.8"}) {
    auto o = cli("dist --nu " + nu + " " + data + "/split_a.json " + data + "/split_b.json");
    EXPECT_EQ(o.status, 0);
    EXPECT_EQ(o.out, "0.000000\n");
    EXPECT_EQ(cli("dist --normalized --nu " + nu + " " + data + "/split_a.json " + data + "/split_b.json").out,
              "0.000000\n");
  }
}

TEST_F(Cli, DistGrowsWithNu) {
  auto files = pool("cnn");
  for (std::size_t i = 1; i < files.size(); ++i) {
    const double lo = std::stod(cli("dist --nu 0.2 " + files[0] + " " + files[i]).out);
    const double hi = std::stod(cli("dist --nu 0.8 " + files[0] + " " + files[i]).out);
    EXPECT_GE(hi, lo);
    EXPECT_GT(lo, 0.0);
  }
}

TEST_F(Cli, DistJsonHasProfile) {
  auto files = pool("mlp");
  auto o = cli("dist --json " + files[0] + " " + files[1]);
  ASSERT_EQ(o.status, 0);
  auto j = nlohmann::json::parse(o.out);
  EXPECT_TRUE(j.is_object());
  EXPECT_NE(o.out.find("d_bar"), std::string::npos);
}

TEST_F(Cli, DistmatCsvSymmetricWithZeroDiagonal) {
  auto files = pool("cnn");
  std::string args = "distmat --threads 1 --nu-grid 0.1 0.4 --csv " + path("mats");
  for (const auto& f : files) args += " " + f;
  ASSERT_EQ(cli(args).status, 0);
  for (std::string name : {"d_nu0.1.csv", "d_nu0.4.csv", "dbar_nu0.1.csv", "dbar_nu0.4.csv"}) {
    std::ifstream f(dir / "mats" / name);
    ASSERT_TRUE(f) << name;
    std::string line;
    std::getline(f, line); // header
    std::vector<std::vector<double>> m;
    while (std::getline(f, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');
      m.emplace_back();
      while (std::getline(ss, cell, ',')) m.back().push_back(std::stod(cell));
    }
    ASSERT_EQ(m.size(), files.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      ASSERT_EQ(m[i].size(), files.size());
      EXPECT_EQ(m[i][i], 0.0);
      for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(m[i][j], m[j][i]) << name << " " << i << "," << j;
    }
  }
}

TEST_F(Cli, MutateIsSeeded) {
  auto files = pool("mlp");
  auto a = cli("mutate --steps 1 --seed 7 " + files[2]);
  auto b = cli("mutate --steps 1 --seed 7 " + files[2]);
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_TRUE(nasbot::validate(nasbot::parse_json(a.out)).ok());
  EXPECT_NE(a.out, nasbot::to_json(nasbot::parse_json(slurp(files[2]))) + "\n");
  ASSERT_EQ(cli("mutate --steps 3 --seed 7 --out " + path("m.json") + " " + files[2]).status, 0);
  EXPECT_TRUE(nasbot::validate(nasbot::parse_json(slurp(path("m.json")))).ok());
}

TEST_F(Cli, SearchRandomTwentyRowsReproducible) {
  const std::string args = "search --method random --objective f3 --budget 20 --seed 1 --out ";
  ASSERT_EQ(cli(args + path("r1")).status, 0);
  ASSERT_EQ(cli(args + path("r2")).status, 0);
  auto h1 = slurp(dir / "r1" / "history.csv");
  std::size_t lines = std::count(h1.begin(), h1.end(), '\n');
  EXPECT_EQ(lines, 21u);
  for (std::string f : {"history.csv", "best.json", "config.json"})
    EXPECT_EQ(slurp(dir / "r1" / f), slurp(dir / "r2" / f)) << f;
  int n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "r1" / "pool")) ++n;
  EXPECT_EQ(n, 20);
}

TEST_F(Cli, SearchNasbotWithConfigFile) {
  auto cfg = write("cfg.json", R"({"method": "nasbot", "budget": 14, "mcmc": {"samples": 2}})");
  ASSERT_EQ(cli("search --config " + cfg + " --objective f1 --seed 3 --out " + path("r")).status, 0);
  auto saved = nlohmann::json::parse(slurp(dir / "r" / "config.json"));
  EXPECT_EQ(saved["class"], "cnn");
  EXPECT_EQ(saved["budget"], 14);
  EXPECT_EQ(saved["mcmc"]["samples"], 2);
  auto h = slurp(dir / "r" / "history.csv");
  EXPECT_EQ(std::count(h.begin(), h.end(), '\n'), 15);
}

TEST_F(Cli, SearchExternalFailuresExitFour) {
  auto o = cli("search --method random --objective external --objective-cmd 'exit 1' --budget 10 --out " + path("r"));
  EXPECT_EQ(o.status, 4);
  auto ok = cli("search --method random --objective external --objective-cmd 'echo 0.5' --budget 10 --out " +
                path("r2"));
  EXPECT_EQ(ok.status, 0);
}

TEST_F(Cli, ExitCodes) {
  auto files = pool("mlp");
  auto cnn = pool("cnn");
  EXPECT_EQ(cli("--no-such-flag").status, 2);
  EXPECT_EQ(cli("dist " + files[0]).status, 2);
  EXPECT_EQ(cli("dist " + files[0] + " " + path("missing.json")).status, 2);
  auto junk = write("junk.json", "{not json");
  EXPECT_EQ(cli("validate " + junk).status, 2);
  EXPECT_EQ(cli("dist " + files[0] + " " + cnn[0]).status, 3);
  EXPECT_EQ(cli("search --objective f1 --class mlp --budget 5 --out " + path("r")).status, 3);
  EXPECT_EQ(cli("search --method nope --budget 5 --out " + path("r")).status, 2);
  EXPECT_EQ(cli("genpool --class xyz --out " + path("p")).status, 2);

  // structurally broken architecture: op unreachable
  auto bad = write("bad.json", R"({"class":"mlp","input_channels":4,
    "layers":[{"id":0,"label":"ip"},{"id":1,"label":"relu","units":8},{"id":2,"label":"linear","units":1},{"id":3,"label":"op"}],
    "edges":[[0,1],[1,2]]})");
  auto v = cli("validate " + bad);
  EXPECT_NE(v.status, 0);
  EXPECT_NE(v.status, 4);
}
