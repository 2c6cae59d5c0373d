#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "nasbot/errors.hpp"
#include "nasbot/mcmc.hpp"
#include "nasbot/otmann.hpp"

namespace nasbot {

/// Ensemble kernel hyperparameters: one (alpha, beta) family over the raw
/// distances, one (alpha_bar, beta_bar) family over the normalised ones.
struct KernelHyper {
  double alpha = 1.0;
  double alpha_bar = 1.0;
  std::vector<double> beta;
  std::vector<double> beta_bar;
  double noise_var = 1e-6;

  std::size_t dim() const { return 3 + beta.size() + beta_bar.size(); }

  /// Flattened as [alpha, alpha_bar, beta..., beta_bar..., noise_var].
  std::vector<double> to_vector() const {
    std::vector<double> v{alpha, alpha_bar};
    v.insert(v.end(), beta.begin(), beta.end());
    v.insert(v.end(), beta_bar.begin(), beta_bar.end());
    v.push_back(noise_var);
    return v;
  }

  static KernelHyper from_vector(const std::vector<double>& v, std::size_t grid) {
    KernelHyper h;
    h.alpha = v[0];
    h.alpha_bar = v[1];
    h.beta.assign(v.begin() + 2, v.begin() + 2 + static_cast<long>(grid));
    h.beta_bar.assign(v.begin() + 2 + static_cast<long>(grid), v.begin() + 2 + 2 * static_cast<long>(grid));
    h.noise_var = v[2 + 2 * grid];
    return h;
  }
};

namespace detail {

inline double power(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  return std::pow(x, p);
}

inline double kernel_raw(const double* d, const double* d_bar, std::size_t grid, const KernelHyper& h, double p,
                         double p_bar) {
  double s = 0.0, s_bar = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    s += h.beta[i] * power(d[i], p);
    s_bar += h.beta_bar[i] * power(d_bar[i], p_bar);
  }
  return h.alpha * std::exp(-s) + h.alpha_bar * std::exp(-s_bar);
}

} // namespace detail

inline double kernel(const std::vector<double>& d, const std::vector<double>& d_bar, const KernelHyper& h,
                     double p = 1.0, double p_bar = 2.0) {
  if (d.size() != h.beta.size() || d_bar.size() != h.beta_bar.size())
    throw InputError("kernel: distance profile has " + std::to_string(d.size()) + " entries but " +
                     std::to_string(h.beta.size()) + " beta values");
  return detail::kernel_raw(d.data(), d_bar.data(), d.size(), h, p, p_bar);
}

inline double kernel(const DistanceProfile& prof, const KernelHyper& h, double p = 1.0, double p_bar = 2.0) {
  return kernel(prof.d, prof.d_bar, h, p, p_bar);
}

/// Kernel matrix over the training set (no noise term).
inline Eigen::MatrixXd gram_matrix(const PairwiseProfiles& prof, const KernelHyper& h, double p = 1.0,
                                   double p_bar = 2.0) {
  const auto n = static_cast<Eigen::Index>(prof.size());
  const std::size_t grid = prof.grid();
  if (grid != h.beta.size() || grid != h.beta_bar.size()) throw InputError("kernel: grid length mismatch");
  Eigen::MatrixXd k(n, n);
  std::vector<double> d(grid), d_bar(grid);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      for (std::size_t g = 0; g < grid; ++g) {
        d[g] = prof.d[g](i, j);
        d_bar[g] = prof.d_bar[g](i, j);
      }
      k(i, j) = k(j, i) = detail::kernel_raw(d.data(), d_bar.data(), grid, h, p, p_bar);
    }
  return k;
}

struct GramFactor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0; // absolute amount added to the diagonal
};

/// Cholesky of `a`, adding diagonal jitter 1e-10 * mean(diag) and growing
/// it tenfold up to 1e-4 * mean(diag) until the factorisation succeeds.
inline GramFactor factorize_with_jitter(const Eigen::MatrixXd& a) {
  GramFactor f;
  f.llt.compute(a);
  if (f.llt.info() == Eigen::Success) return f;
  const double base = std::max(a.diagonal().mean(), std::numeric_limits<double>::min());
  for (double rel = 1e-10; rel <= 1e-4 * 1.0000001; rel *= 10.0) {
    Eigen::MatrixXd b = a;
    b.diagonal().array() += rel * base;
    f.llt.compute(b);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = rel * base;
      return f;
    }
  }
  throw ComputeError("gp: kernel matrix is not positive definite even with jitter " +
                     std::to_string(1e-4 * base));
}

struct Prediction {
  double mean = 0.0;
  double var = 0.0;
};

/// A fitted GP over architectures. Training inputs enter only through
/// their pairwise distance profiles; queries supply profiles against every
/// training point.
class GPModel {
public:
  GPModel() = default;

  /// Fits with a constant prior mean equal to the mean of `y`.
  static GPModel fit(const PairwiseProfiles& prof, std::vector<double> y, KernelHyper h) {
    double m = 0.0;
    for (double v : y) m += v;
    if (!y.empty()) m /= static_cast<double>(y.size());
    return fit(prof, std::move(y), std::move(h), m);
  }

  static GPModel fit(const PairwiseProfiles& prof, std::vector<double> y, KernelHyper h, double prior_mean) {
    if (prof.size() != y.size())
      throw InputError("gp: " + std::to_string(y.size()) + " observations for " + std::to_string(prof.size()) +
                       " architectures");
    if (y.empty()) throw InputError("gp: no observations");
    GPModel g;
    g.hyper_ = std::move(h);
    g.prior_mean_ = prior_mean;
    g.y_ = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    Eigen::MatrixXd a = gram_matrix(prof, g.hyper_);
    a.diagonal().array() += g.hyper_.noise_var;
    g.factor_ = factorize_with_jitter(a);
    g.alpha_ = g.factor_.llt.solve((g.y_.array() - prior_mean).matrix());
    return g;
  }

  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  const KernelHyper& hyper() const { return hyper_; }
  double prior_mean() const { return prior_mean_; }
  double jitter() const { return factor_.jitter; }
  double prior_var() const { return hyper_.alpha + hyper_.alpha_bar; }

  /// `cross[i]` is the profile between the query and training point i.
  Prediction predict(const std::vector<DistanceProfile>& cross) const {
    if (cross.size() != size()) throw InputError("gp: query needs one profile per training point");
    Eigen::VectorXd k(static_cast<Eigen::Index>(cross.size()));
    for (std::size_t i = 0; i < cross.size(); ++i) k(static_cast<Eigen::Index>(i)) = kernel(cross[i], hyper_);
    Prediction p;
    p.mean = prior_mean_ + k.dot(alpha_);
    Eigen::VectorXd v = factor_.llt.matrixL().solve(k);
    p.var = std::max(0.0, prior_var() - v.squaredNorm());
    return p;
  }

  double log_marginal_likelihood() const {
    const Eigen::VectorXd r = y_.array() - prior_mean_;
    const auto& l = factor_.llt.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
    return -0.5 * r.dot(alpha_) - 0.5 * log_det -
           0.5 * static_cast<double>(y_.size()) * std::log(2.0 * std::numbers::pi);
  }

private:
  KernelHyper hyper_;
  double prior_mean_ = 0.0;
  Eigen::VectorXd y_;
  Eigen::VectorXd alpha_;
  GramFactor factor_;
};

// ---------------------------------------------------------------------------
// Hyperparameter posterior

/// Log-uniform prior box over the flattened hyperparameter vector.
struct HyperBox {
  std::vector<double> lo, hi; // natural (not log) scale

  std::size_t dim() const { return lo.size(); }
};

/// Relative ranges from which the default box is built.
struct HyperBoxScale {
  double alpha_lo = 0.05, alpha_hi = 5.0;  // times var(Y)
  double beta_lo = 0.01, beta_hi = 100.0;  // divided by median nonzero distance
  double noise_lo = 1e-6, noise_hi = 1.0;  // times var(Y)
};

namespace detail {

inline double median_nonzero(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !(x > 0.0); }), v.end());
  if (v.empty()) return 1.0;
  auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline double variance(const std::vector<double>& y) {
  if (y.size() < 2) return 0.0;
  double m = 0.0;
  for (double v : y) m += v;
  m /= static_cast<double>(y.size());
  double s = 0.0;
  for (double v : y) s += (v - m) * (v - m);
  return s / static_cast<double>(y.size() - 1);
}

} // namespace detail

/// Box scaled by the data: signal and noise by var(Y) (1 when the
/// observations are constant), each beta by the median nonzero pairwise
/// distance at its nu.
inline HyperBox default_hyper_box(const PairwiseProfiles& prof, const std::vector<double>& y,
                                  const HyperBoxScale& s = {}) {
  double var = detail::variance(y);
  if (!(var > 0.0)) var = 1.0;
  const std::size_t grid = prof.grid();
  HyperBox box;
  box.lo = {s.alpha_lo * var, s.alpha_lo * var};
  box.hi = {s.alpha_hi * var, s.alpha_hi * var};
  auto add_betas = [&](const std::vector<Eigen::MatrixXd>& mats) {
    for (std::size_t g = 0; g < grid; ++g) {
      std::vector<double> vals;
      const auto& m = mats[g];
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.cols(); ++j) vals.push_back(m(i, j));
      const double med = detail::median_nonzero(std::move(vals));
      box.lo.push_back(s.beta_lo / med);
      box.hi.push_back(s.beta_hi / med);
    }
  };
  add_betas(prof.d);
  add_betas(prof.d_bar);
  box.lo.push_back(s.noise_lo * var);
  box.hi.push_back(s.noise_hi * var);
  return box;
}

template <class Rng>
KernelHyper draw_from_box(const HyperBox& box, std::size_t grid, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> v(box.dim());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::exp(std::log(box.lo[i]) + unif(rng) * (std::log(box.hi[i]) - std::log(box.lo[i])));
  return KernelHyper::from_vector(v, grid);
}

/// Draws from the hyperparameter posterior (marginal likelihood times the
/// log-uniform box prior). With fewer than two observations the likelihood
/// carries no information and plain prior draws are returned.
template <class Rng>
std::vector<KernelHyper> sample_hypers(const PairwiseProfiles& prof, const std::vector<double>& y,
                                       const HyperBox& box, Rng& rng, int n_samples, const MHSettings& mh = {}) {
  std::vector<KernelHyper> out;
  if (n_samples <= 0) return out;
  const std::size_t grid = prof.grid();
  if (y.size() < 2) {
    for (int i = 0; i < n_samples; ++i) out.push_back(draw_from_box(box, grid, rng));
    return out;
  }
  std::vector<double> lo(box.dim()), hi(box.dim());
  for (std::size_t i = 0; i < box.dim(); ++i) {
    lo[i] = std::log(box.lo[i]);
    hi[i] = std::log(box.hi[i]);
  }
  auto log_target = [&](const std::vector<double>& x) {
    std::vector<double> nat(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) nat[i] = std::exp(x[i]);
    try {
      return GPModel::fit(prof, y, KernelHyper::from_vector(nat, grid)).log_marginal_likelihood();
    } catch (const ComputeError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  auto start = draw_from_box(box, grid, rng).to_vector();
  for (double& v : start) v = std::log(v);
  for (const auto& x : metropolis_log_box(log_target, lo, hi, start, n_samples, mh, rng)) {
    std::vector<double> nat(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) nat[i] = std::exp(x[i]);
    out.push_back(KernelHyper::from_vector(nat, grid));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Acquisition

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// E[max(0, f - incumbent)] for f ~ N(mean, sigma^2).
inline double expected_improvement(double mean, double sigma, double incumbent) {
  if (!(sigma > 0.0)) return std::max(0.0, mean - incumbent);
  const double gamma = (mean - incumbent) / sigma;
  return std::max(0.0, sigma * (gamma * normal_cdf(gamma) + normal_pdf(gamma)));
}

inline double expected_improvement(const GPModel& model, const std::vector<DistanceProfile>& cross,
                                   double incumbent) {
  auto p = model.predict(cross);
  return expected_improvement(p.mean, std::sqrt(p.var), incumbent);
}

} // namespace nasbot
