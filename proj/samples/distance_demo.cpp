// Distances between the CNN pool members, and between two networks that
// differ only by splitting a layer into two parallel halves.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nasbot/nasbot.hpp"

using namespace nasbot;

static Architecture load(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return parse_json(s.str());
}

int main(int argc, char** argv) {
  const std::string data = argc > 1 ? argv[1] : NASBOT_SAMPLE_DATA;
  auto a = load(data + "/split_a.json");
  auto b = load(data + "/split_b.json");
  auto params = DistanceParams::defaults(ArchClass::cnn);
  auto prof = distance_profile(a, b, params);
  std::cout << "split pair:";
  for (std::size_t g = 0; g < prof.d.size(); ++g) std::printf("  nu=%g d=%.6f", params.nu_grid[g], prof.d[g]);
  std::cout << "\n\n";

  auto pool = initial_pool(ArchClass::cnn);
  auto mat = pairwise_matrix(pool, params);
  std::cout << "normalised distances at nu=" << params.nu_grid.back() << "\n";
  for (Eigen::Index i = 0; i < mat.d_bar.back().rows(); ++i) {
    for (Eigen::Index j = 0; j < mat.d_bar.back().cols(); ++j) std::printf(" %.3f", mat.d_bar.back()(i, j));
    std::printf("   (%zu layers)\n", pool[static_cast<std::size_t>(i)].size());
  }
}
