// A short NASBOT run on the synthetic MLP objective f3 next to the random
// baseline with the same seed.

#include <cstdio>

#include "nasbot/nasbot.hpp"

using namespace nasbot;

int main(int argc, char** argv) {
  const int budget = argc > 1 ? std::atoi(argv[1]) : 30;
  for (auto method : {SearchMethod::nasbot, SearchMethod::random}) {
    SearchConfig cfg;
    cfg.method = method;
    cfg.cls = ArchClass::mlp;
    cfg.objective.name = "f3";
    cfg.budget = budget;
    cfg.workers = 2;
    cfg.seed = 11;
    auto res = run(cfg);
    std::printf("%-7s best %.4f after %zu evaluations (%s)\n", std::string(method_name(method)).c_str(), res.best,
                res.history.size(), res.best_arch ? structural_hash(*res.best_arch).c_str() : "-");
  }
}
