#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace nasbot {

struct MHSettings {
  double step = 0.3;
  int burn_in = 200;
  int thin = 10;
};

/// Random-walk Metropolis-Hastings over a box in log coordinates. The
/// prior is uniform on the box, so proposals that leave it are rejected and
/// the acceptance ratio only involves `log_target`. Returns `n_samples`
/// states (in log coordinates) after burn-in, keeping every `thin`-th one.
template <class Rng>
std::vector<std::vector<double>> metropolis_log_box(const std::function<double(const std::vector<double>&)>& log_target,
                                                    const std::vector<double>& lo, const std::vector<double>& hi,
                                                    std::vector<double> x, int n_samples, const MHSettings& s,
                                                    Rng& rng) {
  std::vector<std::vector<double>> out;
  if (n_samples <= 0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double lp = log_target(x);
  std::vector<double> y(x.size());
  const long total = s.burn_in + static_cast<long>(n_samples) * std::max(1, s.thin);
  for (long it = 0; it < total; ++it) {
    bool inside = true;
    for (std::size_t i = 0; i < x.size(); ++i) {
      y[i] = x[i] + s.step * normal(rng);
      inside = inside && y[i] >= lo[i] && y[i] <= hi[i];
    }
    const double u = unif(rng);
    if (inside) {
      const double ly = log_target(y);
      if (std::isfinite(ly) && (!std::isfinite(lp) || std::log(u) < ly - lp)) {
        x = y;
        lp = ly;
      }
    }
    if (it >= s.burn_in && (it - s.burn_in + 1) % std::max(1, s.thin) == 0) out.push_back(x);
  }
  return out;
}

} // namespace nasbot
