#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "nasbot/arch_json.hpp"
#include "nasbot/evo.hpp"
#include "nasbot/format.hpp"
#include "nasbot/external.hpp"
#include "nasbot/gp.hpp"
#include "nasbot/objectives.hpp"
#include "nasbot/otmann.hpp"
#include "nasbot/pool.hpp"

namespace nasbot {

enum class SearchMethod { nasbot, ea, random };

inline std::string_view method_name(SearchMethod m) {
  switch (m) {
  case SearchMethod::nasbot: return "nasbot";
  case SearchMethod::ea: return "ea";
  case SearchMethod::random: return "random";
  }
  return "?";
}

inline std::optional<SearchMethod> parse_method(std::string_view s) {
  if (s == "nasbot") return SearchMethod::nasbot;
  if (s == "ea") return SearchMethod::ea;
  if (s == "random" || s == "rand") return SearchMethod::random;
  return std::nullopt;
}

enum class Hallucination { kriging_believer, constant_liar };

/// n_ea = min(cap, c1 * ceil(sqrt(t))), n_mut = max(mut_floor, ceil(sqrt(n_ea))).
struct ScheduleParams {
  int c1 = 20;
  int cap = 500;
  int mut_floor = 5;
};

inline std::pair<int, int> schedule(int t, const ScheduleParams& p = {}) {
  if (t < 1) throw InputError("schedule: t must be >= 1");
  const int n_ea = std::min(p.cap, p.c1 * static_cast<int>(std::ceil(std::sqrt(static_cast<double>(t)))));
  const int n_mut = std::max(p.mut_floor, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_ea)))));
  return {n_ea, n_mut};
}

struct ObjectiveSpec {
  /// "f0".."f3" or "external".
  std::string name = "f3";
  std::string command; // external only; `{arch}` is replaced by a JSON path
  double timeout_s = 0.0;

  bool external() const { return name == "external"; }
};

struct SearchConfig {
  SearchMethod method = SearchMethod::nasbot;
  ArchClass cls = ArchClass::mlp;
  int budget = 50;              // evaluations
  double budget_seconds = 0.0;  // 0: no wall-clock limit
  int workers = 1;
  std::uint64_t seed = 1;
  std::vector<double> nu_grid{0.1, 0.2, 0.4, 0.8};
  MutationConfig mutation;
  HyperBoxScale hyper_box;
  MHSettings mh;
  int hyper_samples = 4;
  ScheduleParams sched;
  int ea_n_mut = 10; // generation size of the EA baseline
  Hallucination hallucination = Hallucination::kriging_believer;
  int duplicate_retries = 5;
  ObjectiveSpec objective;
  /// Threads used to score acquisition candidates (0: all cores). Results do
  /// not depend on it, so it is not part of the saved configuration.
  unsigned threads = 0;

  void check() const {
    if (budget < 1) throw InputError("search: budget must be positive");
    if (budget_seconds < 0) throw InputError("search: budget_seconds must be non-negative");
    if (workers < 1) throw InputError("search: workers must be >= 1");
    if (nu_grid.empty()) throw InputError("search: nu grid is empty");
    for (double nu : nu_grid)
      if (!(nu > 0)) throw InputError("search: nu grid entries must be positive");
    if (hyper_samples < 1) throw InputError("search: hyper_samples must be >= 1");
    if (ea_n_mut < 1) throw InputError("search: ea_n_mut must be >= 1");
    mutation.check();
    if (objective.external()) {
      if (objective.command.empty()) throw InputError("search: external objective needs a command");
    } else {
      auto k = parse_synthetic(objective.name);
      if (!k) throw InputError("search: unknown objective \"" + objective.name + "\"");
      if (auto need = synthetic_class(*k); need && *need != cls)
        throw SemanticError("search: " + objective.name + " is defined for " + std::string(class_name(*need)) +
                            " architectures, not " + std::string(class_name(cls)));
    }
  }
};

inline nlohmann::json config_to_json(const SearchConfig& c) {
  nlohmann::json j;
  j["method"] = std::string(method_name(c.method));
  j["class"] = std::string(class_name(c.cls));
  j["budget"] = c.budget;
  j["budget_seconds"] = c.budget_seconds;
  j["workers"] = c.workers;
  j["seed"] = c.seed;
  j["nu_grid"] = c.nu_grid;
  j["mutation"] = {{"step_probabilities", c.mutation.step_probabilities},
                   {"max_attempts", c.mutation.max_attempts},
                   {"subset", c.mutation.subset == ModifierSubset::all          ? "all"
                              : c.mutation.subset == ModifierSubset::units_only ? "units"
                                                                                 : "structure"}};
  j["hyper_box"] = {{"alpha", {c.hyper_box.alpha_lo, c.hyper_box.alpha_hi}},
                    {"beta", {c.hyper_box.beta_lo, c.hyper_box.beta_hi}},
                    {"noise", {c.hyper_box.noise_lo, c.hyper_box.noise_hi}}};
  j["mcmc"] = {{"step", c.mh.step}, {"burn_in", c.mh.burn_in}, {"thin", c.mh.thin}, {"samples", c.hyper_samples}};
  j["schedule"] = {{"c1", c.sched.c1}, {"cap", c.sched.cap}, {"mut_floor", c.sched.mut_floor}, {"ea_n_mut", c.ea_n_mut}};
  j["hallucination"] = c.hallucination == Hallucination::kriging_believer ? "kriging_believer" : "constant_liar";
  j["duplicate_retries"] = c.duplicate_retries;
  j["objective"] = {{"name", c.objective.name}, {"command", c.objective.command}, {"timeout_s", c.objective.timeout_s}};
  return j;
}

/// Overrides fields of `c` with those present in `j` (same layout as
/// config_to_json). Unknown keys are rejected.
inline void apply_config_json(SearchConfig& c, const nlohmann::json& j) {
  auto pair_of = [](const nlohmann::json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number() || !(v[0].get<double>() > 0) ||
        v[1].get<double>() < v[0].get<double>())
      throw InputError(path + ": expected [lo, hi] with 0 < lo <= hi");
    return std::pair<double, double>{v[0].get<double>(), v[1].get<double>()};
  };
  try {
    if (!j.is_object()) throw InputError("config: expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "method") {
        auto m = parse_method(v.get<std::string>());
        if (!m) throw InputError("config.method: unknown method");
        c.method = *m;
      } else if (k == "class") {
        auto cl = parse_class(v.get<std::string>());
        if (!cl) throw InputError("config.class: unknown class");
        c.cls = *cl;
      } else if (k == "budget") {
        c.budget = v.get<int>();
      } else if (k == "budget_seconds") {
        c.budget_seconds = v.get<double>();
      } else if (k == "workers") {
        c.workers = v.get<int>();
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (k == "nu_grid") {
        c.nu_grid = v.get<std::vector<double>>();
      } else if (k == "mutation") {
        for (auto m = v.begin(); m != v.end(); ++m) {
          if (m.key() == "step_probabilities")
            c.mutation.step_probabilities = m.value().get<std::vector<double>>();
          else if (m.key() == "max_attempts")
            c.mutation.max_attempts = m.value().get<int>();
          else if (m.key() == "subset") {
            auto s = parse_modifier_subset(m.value().get<std::string>());
            if (!s) throw InputError("config.mutation.subset: expected all, units or structure");
            c.mutation.subset = *s;
          } else
            throw InputError("config.mutation." + m.key() + ": unknown field");
        }
      } else if (k == "hyper_box") {
        for (auto m = v.begin(); m != v.end(); ++m) {
          auto [lo, hi] = pair_of(m.value(), "config.hyper_box." + m.key());
          if (m.key() == "alpha") c.hyper_box.alpha_lo = lo, c.hyper_box.alpha_hi = hi;
          else if (m.key() == "beta") c.hyper_box.beta_lo = lo, c.hyper_box.beta_hi = hi;
          else if (m.key() == "noise") c.hyper_box.noise_lo = lo, c.hyper_box.noise_hi = hi;
          else throw InputError("config.hyper_box." + m.key() + ": unknown field");
        }
      } else if (k == "mcmc") {
        for (auto m = v.begin(); m != v.end(); ++m) {
          if (m.key() == "step") c.mh.step = m.value().get<double>();
          else if (m.key() == "burn_in") c.mh.burn_in = m.value().get<int>();
          else if (m.key() == "thin") c.mh.thin = m.value().get<int>();
          else if (m.key() == "samples") c.hyper_samples = m.value().get<int>();
          else throw InputError("config.mcmc." + m.key() + ": unknown field");
        }
      } else if (k == "schedule") {
        for (auto m = v.begin(); m != v.end(); ++m) {
          if (m.key() == "c1") c.sched.c1 = m.value().get<int>();
          else if (m.key() == "cap") c.sched.cap = m.value().get<int>();
          else if (m.key() == "mut_floor") c.sched.mut_floor = m.value().get<int>();
          else if (m.key() == "ea_n_mut") c.ea_n_mut = m.value().get<int>();
          else throw InputError("config.schedule." + m.key() + ": unknown field");
        }
      } else if (k == "hallucination") {
        const auto h = v.get<std::string>();
        if (h == "kriging_believer") c.hallucination = Hallucination::kriging_believer;
        else if (h == "constant_liar") c.hallucination = Hallucination::constant_liar;
        else throw InputError("config.hallucination: expected kriging_believer or constant_liar");
      } else if (k == "duplicate_retries") {
        c.duplicate_retries = v.get<int>();
      } else if (k == "objective") {
        for (auto m = v.begin(); m != v.end(); ++m) {
          if (m.key() == "name") c.objective.name = m.value().get<std::string>();
          else if (m.key() == "command") c.objective.command = m.value().get<std::string>();
          else if (m.key() == "timeout_s") c.objective.timeout_s = m.value().get<double>();
          else throw InputError("config.objective." + m.key() + ": unknown field");
        }
      } else {
        throw InputError("config." + k + ": unknown field");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// State

struct EvalRecord {
  Architecture arch;
  std::string hash;
  double value = 0.0; // NaN when the evaluation failed
  double timestamp = 0.0;
  int worker = 0;
  std::string error;

  bool failed() const { return std::isnan(value); }
};

struct PendingRecord {
  Architecture arch;
  std::string hash;
  int worker = 0;
};

struct SearchState {
  std::vector<EvalRecord> evaluated;
  std::vector<PendingRecord> pending;
  int t = 0; // proposals made after the initial pool
  double best = -std::numeric_limits<double>::infinity();
  std::optional<Architecture> best_arch;
  std::unordered_set<std::string> seen; // evaluated or pending hashes
  std::deque<Architecture> ea_queue;    // EA baseline: children awaiting dispatch
  std::vector<std::string> log;

  bool known(const std::string& hash) const { return seen.count(hash) > 0; }
};

struct HistoryRow {
  int step = 0;
  std::string arch;
  double value = 0.0;
  double best = 0.0;
  double elapsed = 0.0;
};

inline std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "step,arch,value,best,elapsed_s\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.elapsed);
    out += std::to_string(r.step) + "," + r.arch + "," + format_number(r.value) + "," + format_number(r.best) + "," +
           buf + "\n";
  }
  return out;
}

struct SearchResult {
  std::vector<HistoryRow> history;
  std::vector<EvalRecord> evaluated;
  std::optional<Architecture> best_arch;
  double best = -std::numeric_limits<double>::infinity();
  int failures = 0;
  std::vector<std::string> log;
};

// ---------------------------------------------------------------------------
// GP pieces exposed for reuse and testing

/// Pairwise profiles of the given prepared architectures (cached pairs).
inline PairwiseProfiles training_profiles(DistanceEngine& engine, const std::vector<PreparedPtr>& archs) {
  return pairwise_matrix(engine, archs, 1);
}

/// Sub-matrix of `prof` restricted to the first n architectures.
inline PairwiseProfiles leading_block(const PairwiseProfiles& prof, std::size_t n) {
  PairwiseProfiles out;
  const auto k = static_cast<Eigen::Index>(n);
  for (const auto& m : prof.d) out.d.push_back(m.topLeftCorner(k, k));
  for (const auto& m : prof.d_bar) out.d_bar.push_back(m.topLeftCorner(k, k));
  return out;
}

/// Kriging believer: the posterior mean at each pending point of the model
/// fitted to the real observations only. `prof` covers evaluated points
/// first, then pending ones.
inline std::vector<double> hallucinate(const PairwiseProfiles& prof, const std::vector<double>& y,
                                       const KernelHyper& h) {
  const std::size_t n = y.size(), total = prof.size();
  auto model = GPModel::fit(leading_block(prof, n), y, h);
  std::vector<double> out;
  for (std::size_t p = n; p < total; ++p) {
    std::vector<DistanceProfile> cross;
    for (std::size_t i = 0; i < n; ++i) cross.push_back(prof.at(p, i));
    out.push_back(model.predict(cross).mean);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Searcher

/// Owns the search state and proposes points. Evaluation is driven by
/// run(), which simulates (or, for external commands, really runs)
/// asynchronous workers.
class Searcher {
public:
  explicit Searcher(SearchConfig cfg, std::vector<Architecture> pool = {})
      : cfg_(std::move(cfg)), engine_(make_params(cfg_)), rng_(cfg_.seed) {
    cfg_.check();
    pool_ = pool.empty() ? initial_pool(cfg_.cls) : std::move(pool);
    for (const auto& a : pool_) {
      auto rep = validate(a, cfg_.mutation.limits);
      if (!rep.ok()) throw InputError("search: invalid pool architecture: " + rep.summary());
      if (a.cls != cfg_.cls) throw SemanticError("search: pool architecture has the wrong class");
    }
  }

  const SearchConfig& config() const { return cfg_; }
  SearchState& state() { return state_; }
  const std::vector<Architecture>& pool() const { return pool_; }
  DistanceEngine& engine() { return engine_; }
  std::mt19937_64& rng() { return rng_; }

  /// Next architecture to evaluate (not already evaluated or pending).
  Architecture next_point() {
    for (const auto& a : pool_)
      if (!state_.known(structural_hash(a))) return a;
    for (int attempt = 0; attempt <= cfg_.duplicate_retries; ++attempt) {
      Architecture x = propose();
      if (!state_.known(structural_hash(x))) return x;
    }
    state_.log.push_back("duplicate proposals; using a random mutation of the incumbent");
    return forced_mutation();
  }

  void mark_pending(const Architecture& a, int worker) {
    auto h = structural_hash(a);
    state_.pending.push_back({a, h, worker});
    state_.seen.insert(h);
  }

  void record(const Architecture& a, double value, double timestamp, int worker, std::string error = {}) {
    auto h = structural_hash(a);
    state_.pending.erase(std::remove_if(state_.pending.begin(), state_.pending.end(),
                                        [&](const PendingRecord& p) { return p.hash == h; }),
                         state_.pending.end());
    state_.seen.insert(h);
    state_.evaluated.push_back({a, h, value, timestamp, worker, std::move(error)});
    if (!std::isnan(value) && value > state_.best) {
      state_.best = value;
      state_.best_arch = a;
    }
  }

  /// Averaged-EI acquisition over the current data, with hallucinated
  /// values for pending points. Exposed for inspection and tests.
  struct Acquisition {
    std::vector<GPModel> models;
    std::vector<PreparedPtr> train; // evaluated (successful) then pending
    std::vector<double> hallucinated; // per model, concatenated over pending
    double incumbent = 0.0;
  };

  Acquisition build_acquisition() {
    Acquisition acq;
    std::vector<double> y;
    for (const auto& r : state_.evaluated)
      if (!r.failed()) {
        acq.train.push_back(engine_.prepare(r.arch));
        y.push_back(r.value);
      }
    if (y.empty()) throw ComputeError("no successful evaluations");
    for (const auto& p : state_.pending) acq.train.push_back(engine_.prepare(p.arch));
    acq.incumbent = *std::max_element(y.begin(), y.end());
    auto prof = training_profiles(engine_, acq.train);
    auto prof_eval = leading_block(prof, y.size());
    auto box = default_hyper_box(prof_eval, y, cfg_.hyper_box);
    auto hypers = sample_hypers(prof_eval, y, box, rng_, cfg_.hyper_samples, cfg_.mh);
    std::string last_error;
    for (const auto& h : hypers) {
      try {
        std::vector<double> y_all = y;
        if (!state_.pending.empty()) {
          std::vector<double> fake;
          if (cfg_.hallucination == Hallucination::kriging_believer)
            fake = hallucinate(prof, y, h);
          else
            fake.assign(state_.pending.size(), acq.incumbent);
          acq.hallucinated.insert(acq.hallucinated.end(), fake.begin(), fake.end());
          y_all.insert(y_all.end(), fake.begin(), fake.end());
        }
        acq.models.push_back(GPModel::fit(prof, y_all, h));
      } catch (const ComputeError& e) {
        last_error = e.what();
      }
    }
    // Samples whose kernel matrix cannot be repaired are dropped.
    if (acq.models.empty()) throw ComputeError(last_error);
    return acq;
  }

  double acquisition_value(const Acquisition& acq, const Architecture& x) {
    auto px = engine_.prepare(x, false);
    std::vector<DistanceProfile> cross;
    cross.reserve(acq.train.size());
    for (const auto& t : acq.train) cross.push_back(engine_.profile(*px, *t, false));
    double s = 0.0;
    for (const auto& m : acq.models) s += expected_improvement(m, cross, acq.incumbent);
    return s / static_cast<double>(acq.models.size());
  }

private:
  static DistanceParams make_params(const SearchConfig& c) {
    auto p = DistanceParams::defaults(c.cls);
    p.nu_grid = c.nu_grid;
    return p;
  }

  std::vector<Architecture> ea_seeds() const {
    std::vector<Architecture> seeds;
    std::unordered_set<std::string> have;
    for (const auto& a : pool_)
      if (have.insert(structural_hash(a)).second) seeds.push_back(a);
    for (const auto& r : state_.evaluated)
      if (!r.failed() && have.insert(r.hash).second) seeds.push_back(r.arch);
    return seeds;
  }

  /// Runs the EA on g and returns its best child that is new to the search.
  Architecture optimise(const BatchObjective& g) {
    ++state_.t;
    auto [n_ea, n_mut] = schedule(state_.t, cfg_.sched);
    auto seeds = ea_seeds();
    const int total = std::max(n_ea, static_cast<int>(seeds.size()) + n_mut);
    auto res = ea_maximize(g, seeds, total, n_mut, cfg_.mutation, rng_);
    std::optional<std::size_t> best;
    for (std::size_t i = seeds.size(); i < res.history.size(); ++i) {
      if (state_.known(structural_hash(res.history[i].first))) continue;
      if (!best || res.history[i].second > res.history[*best].second) best = i;
    }
    if (!best) return forced_mutation();
    return res.history[*best].first;
  }

  Architecture propose() {
    switch (cfg_.method) {
    case SearchMethod::random: {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      return optimise([&](const std::vector<Architecture>& b) {
        std::vector<double> v(b.size());
        for (double& x : v) x = unif(rng_);
        return v;
      });
    }
    case SearchMethod::ea: {
      if (state_.ea_queue.empty()) {
        ++state_.t;
        std::vector<double> values;
        std::vector<const Architecture*> archs;
        for (const auto& r : state_.evaluated)
          if (!r.failed()) {
            values.push_back(r.value);
            archs.push_back(&r.arch);
          }
        if (values.empty()) return forced_mutation();
        for (int p : select_candidates(values, cfg_.ea_n_mut, rng_))
          state_.ea_queue.push_back(mutate(*archs[static_cast<std::size_t>(p)], cfg_.mutation, rng_).arch);
      }
      Architecture x = std::move(state_.ea_queue.front());
      state_.ea_queue.pop_front();
      return x;
    }
    case SearchMethod::nasbot: {
      try {
        auto acq = build_acquisition();
        return optimise([&](const std::vector<Architecture>& b) {
          std::vector<double> v(b.size());
          parallel_for(
              b.size(), [&](std::size_t i) { v[i] = acquisition_value(acq, b[i]); },
              cfg_.threads ? cfg_.threads : default_threads());
          return v;
        });
      } catch (const ComputeError& e) {
        state_.log.push_back(std::string("GP step failed (") + e.what() + "); using a random mutation");
        return forced_mutation();
      }
    }
    }
    return forced_mutation();
  }

  /// A mutation of the incumbent (or a pool member) not seen before.
  Architecture forced_mutation() {
    const Architecture& base = state_.best_arch ? *state_.best_arch : pool_.front();
    Architecture x = base;
    for (int i = 0; i < 200; ++i) {
      x = mutate(i < 100 ? base : x, cfg_.mutation, rng_).arch;
      if (!state_.known(structural_hash(x))) return x;
    }
    return x;
  }

  SearchConfig cfg_;
  DistanceEngine engine_;
  std::mt19937_64 rng_;
  std::vector<Architecture> pool_;
  SearchState state_;
};

// ---------------------------------------------------------------------------
// Run loop

using Objective = std::function<double(const Architecture&)>;

inline Objective make_objective(const ObjectiveSpec& spec) {
  if (spec.external()) {
    return [spec](const Architecture& a) { return external_evaluate(spec.command, a, spec.timeout_s); };
  }
  auto k = parse_synthetic(spec.name);
  if (!k) throw InputError("unknown objective \"" + spec.name + "\"");
  return [k = *k](const Architecture& a) { return eval_f(k, a); };
}

namespace detail {

struct Completion {
  Architecture arch;
  double value = 0.0;
  std::string error;
  int worker = 0;
  double time = 0.0;
  long seq = 0;
};

inline Completion evaluate_one(const Objective& f, Architecture a, int worker) {
  Completion c;
  c.worker = worker;
  try {
    c.value = f(a);
    if (!std::isfinite(c.value)) {
      c.error = "objective returned a non-finite value";
      c.value = std::numeric_limits<double>::quiet_NaN();
    }
  } catch (const ExternalError& e) {
    c.error = std::string(external_error_name(e.kind)) + ": " + e.what();
    c.value = std::numeric_limits<double>::quiet_NaN();
  } catch (const std::exception& e) {
    c.error = e.what();
    c.value = std::numeric_limits<double>::quiet_NaN();
  }
  c.arch = std::move(a);
  return c;
}

} // namespace detail

/// Runs a search. Synthetic objectives use a simulated clock in which every
/// evaluation takes one unit, so the result depends only on (config, seed);
/// external objectives run on real threads and report wall-clock time.
inline SearchResult run(const SearchConfig& cfg, const Objective& objective, std::vector<Architecture> pool = {}) {
  Searcher s(cfg, std::move(pool));
  SearchResult res;
  const bool simulated = !cfg.objective.external();
  const auto wall0 = std::chrono::steady_clock::now();
  auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count(); };

  int dispatched = 0;
  long seq = 0;
  double now = 0.0;
  std::vector<int> free_workers;
  for (int w = cfg.workers - 1; w >= 0; --w) free_workers.push_back(w);

  // Simulated: completions kept in an ordered queue keyed by (time, seq).
  std::multimap<std::pair<double, long>, detail::Completion> sim_queue;
  // Threaded: completions pushed by worker threads.
  std::mutex mu;
  std::condition_variable cv;
  std::deque<detail::Completion> done;
  std::vector<std::thread> threads;
  int in_flight = 0;

  auto budget_left = [&] {
    if (dispatched >= cfg.budget) return false;
    if (cfg.budget_seconds > 0 && wall() >= cfg.budget_seconds) return false;
    return true;
  };

  auto dispatch = [&] {
    while (!free_workers.empty() && budget_left()) {
      const int w = free_workers.back();
      free_workers.pop_back();
      Architecture x = s.next_point();
      s.mark_pending(x, w);
      ++dispatched;
      ++in_flight;
      if (simulated) {
        auto c = detail::evaluate_one(objective, std::move(x), w);
        c.time = now + 1.0;
        c.seq = seq++;
        sim_queue.emplace(std::make_pair(c.time, c.seq), std::move(c));
      } else {
        threads.emplace_back([&, x = std::move(x), w]() mutable {
          auto c = detail::evaluate_one(objective, std::move(x), w);
          std::lock_guard lock(mu);
          done.push_back(std::move(c));
          cv.notify_one();
        });
      }
    }
  };

  auto complete = [&](detail::Completion c) {
    --in_flight;
    free_workers.push_back(c.worker);
    const double ts = simulated ? c.time : wall();
    if (std::isnan(c.value)) {
      ++res.failures;
      s.state().log.push_back("evaluation failed: " + c.error);
    }
    s.record(c.arch, c.value, ts, c.worker, c.error);
    res.history.push_back({static_cast<int>(res.history.size()) + 1, structural_hash(c.arch), c.value,
                           s.state().best, ts});
  };

  try {
    dispatch();
    while (in_flight > 0) {
      if (simulated) {
        now = sim_queue.begin()->first.first;
        while (!sim_queue.empty() && sim_queue.begin()->first.first <= now) {
          auto node = sim_queue.extract(sim_queue.begin());
          complete(std::move(node.mapped()));
        }
      } else {
        std::deque<detail::Completion> batch;
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [&] { return !done.empty(); });
          batch.swap(done);
        }
        for (auto& c : batch) complete(std::move(c));
      }
      dispatch();
    }
  } catch (...) {
    for (auto& t : threads) t.join();
    throw;
  }
  for (auto& t : threads) t.join();

  res.evaluated = s.state().evaluated;
  res.best = s.state().best;
  res.best_arch = s.state().best_arch;
  res.log = s.state().log;
  return res;
}

inline SearchResult run(const SearchConfig& cfg) { return run(cfg, make_objective(cfg.objective)); }

/// Writes config.json, pool/<hash>.json, history.csv and best.json.
inline void write_run_dir(const std::filesystem::path& dir, const SearchConfig& cfg, const SearchResult& res) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "pool");
  auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ComputeError("cannot write " + p.string());
    f << text;
  };
  write(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  for (const auto& r : res.evaluated) write(dir / "pool" / (r.hash + ".json"), to_json(r.arch) + "\n");
  write(dir / "history.csv", history_csv(res.history));
  nlohmann::json best;
  if (res.best_arch) {
    best["hash"] = structural_hash(*res.best_arch);
    best["value"] = res.best;
    best["arch"] = arch_to_json_value(*res.best_arch);
  } else {
    best["hash"] = nullptr;
    best["value"] = nullptr;
    best["arch"] = nullptr;
  }
  write(dir / "best.json", best.dump(2) + "\n");
}

} // namespace nasbot
