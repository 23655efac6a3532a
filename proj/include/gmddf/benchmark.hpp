#pragma once

#include "gmddf/config.hpp"
#include "gmddf/ddf.hpp"
#include "gmddf/grid.hpp"
#include "gmddf/random_problem.hpp"

#include <cstdio>

namespace gmddf {

/// One roster entry. Budget means samples per mixand for DLS and total samples for IGS/IS-WEM;
/// closed-form methods take a single zero budget.
struct BenchMethod {
  MethodKind kind;
  std::vector<std::size_t> budgets{0};
};

struct BenchConfig {
  int trials = 20;
  std::uint64_t seed = 1;
  RandomProblemConfig agent = reference_agent_config();
  RandomProblemConfig common = reference_common_config();
  int grid_resolution = 400;
  double grid_sigmas = 5.0;
  WepRule rule = WepRule::Minimax;
  std::size_t omega_truth_samples = 5000;
  ProposalConfig proposal = [] {
    ProposalConfig p;
    p.kind = ProposalKind::Ingis;
    return p;
  }();
  std::size_t max_components = 0;
  bool record_timing = true;
  std::vector<BenchMethod> exact_methods;
  std::vector<BenchMethod> wep_methods;

  void validate() const {
    if (trials < 1) throw InputError("bench: trials must be >= 1");
    if (grid_resolution < 2) throw InputError("bench: grid resolution must be >= 2");
    if (exact_methods.empty() && wep_methods.empty()) throw InputError("bench: method roster is empty");
    agent.validate();
    common.validate();
    proposal.validate();
    if (agent.dim > 3) throw InputError("bench: grid truth supports at most 3 dimensions");
  }
};

inline RandomProblemConfig random_problem_from_json(const Json& j, RandomProblemConfig c) {
  c.dim = config_get<Index>(j, "dim", c.dim);
  c.min_components = config_get(j, "min_components", c.min_components);
  c.max_components = config_get(j, "max_components", c.max_components);
  c.box_low = config_get(j, "box_low", c.box_low);
  c.box_high = config_get(j, "box_high", c.box_high);
  c.wishart_dof = config_get(j, "wishart_dof", c.wishart_dof);
  c.wishart_scale = config_get(j, "wishart_scale", c.wishart_scale);
  c.normalize_by_dof = config_get(j, "normalize_by_dof", c.normalize_by_dof);
  return c;
}

inline ProposalConfig proposal_from_json(const Json& j, ProposalConfig p) {
  if (j.contains("kind")) p.kind = parse_proposal_kind(j.at("kind").get<std::string>());
  p.alpha = config_get(j, "alpha", p.alpha);
  p.scales = config_get(j, "scales", p.scales);
  p.weights = config_get(j, "weights", p.weights);
  p.heavy_tail_count = config_get(j, "heavy_tail_count", p.heavy_tail_count);
  p.default_max_scale = config_get(j, "default_max_scale", p.default_max_scale);
  p.n_samples = config_get(j, "samples_per_mixand", p.n_samples);
  return p;
}

inline WepRule parse_rule(const std::string& s) {
  if (s == "chernoff") return WepRule::Chernoff;
  if (s == "minimax") return WepRule::Minimax;
  throw InputError("unknown WEP rule '" + s + "' (expected chernoff or minimax)");
}

inline BenchConfig bench_config_from_json(const Json& j) {
  BenchConfig c;
  c.trials = config_get(j, "trials", c.trials);
  c.seed = config_get(j, "seed", c.seed);
  if (j.contains("agent")) c.agent = random_problem_from_json(j["agent"], c.agent);
  if (j.contains("common")) c.common = random_problem_from_json(j["common"], c.common);
  if (j.contains("grid")) {
    c.grid_resolution = config_get(j["grid"], "resolution", c.grid_resolution);
    c.grid_sigmas = config_get(j["grid"], "sigmas", c.grid_sigmas);
  }
  if (j.contains("rule")) c.rule = parse_rule(j["rule"].get<std::string>());
  c.omega_truth_samples = config_get(j, "omega_truth_samples", c.omega_truth_samples);
  if (j.contains("proposal")) c.proposal = proposal_from_json(j["proposal"], c.proposal);
  c.max_components = config_get(j, "max_components", c.max_components);
  c.record_timing = config_get(j, "record_timing", c.record_timing);
  const auto roster = [](const Json& arr, const std::string& where) {
    std::vector<BenchMethod> out;
    if (!arr.is_array()) throw InputError("bench: '" + where + "' must be an array of methods");
    for (const auto& e : arr) {
      try {
        BenchMethod m{parse_method_kind(e.at("method").get<std::string>())};
        m.budgets = config_get(e, "budgets", m.budgets);
        if (m.budgets.empty()) throw InputError("bench: '" + where + "' entry has no budgets");
        out.push_back(std::move(m));
      } catch (const Json::exception& ex) {
        throw InputError("bench: bad entry in '" + where + "': " + ex.what());
      }
    }
    return out;
  };
  if (j.contains("methods")) {
    const auto& m = j["methods"];
    if (m.contains("exact")) c.exact_methods = roster(m["exact"], "methods.exact");
    if (m.contains("wep")) c.wep_methods = roster(m["wep"], "methods.wep");
  }
  return c;
}

struct BenchRow {
  int trial = 0;
  std::uint64_t seed = 0;
  std::string mode;
  std::string method;
  std::size_t budget = 0;
  double kld = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  std::optional<double> omega;
  std::optional<double> ess_min, ess_median;
  Flags flags;
  bool failed = false;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  [[nodiscard]] std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const BenchRow& r) { return r.failed; }));
  }
};

namespace detail {

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string join(const Flags& f, const char* sep = ";") {
  std::string out;
  for (std::size_t k = 0; k < f.size(); ++k) out += (k ? sep : "") + f[k];
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& bench_csv_columns() {
  static const std::vector<std::string> cols{"trial", "seed", "mode", "method", "budget", "kld_nats", "wall_ms", "omega", "ess_min", "ess_median", "flags"};
  return cols;
}

inline std::string bench_csv(const BenchReport& rep) {
  std::string out = detail::join(bench_csv_columns(), ",") + "\n";
  for (const auto& r : rep.rows) {
    const auto opt = [](const std::optional<double>& v) { return v ? detail::fmt_num(*v) : std::string(); };
    out += std::to_string(r.trial) + "," + std::to_string(r.seed) + "," + r.mode + "," + r.method + "," + std::to_string(r.budget) + "," +
           detail::fmt_num(r.kld) + "," + detail::fmt_num(r.wall_ms) + "," + opt(r.omega) + "," + opt(r.ess_min) + "," + opt(r.ess_median) +
           "," + detail::csv_field(detail::join(r.flags)) + "\n";
  }
  return out;
}

struct BenchSummaryRow {
  std::string mode, method;
  std::size_t budget;
  double median_kld;
  double median_wall_ms;
  std::size_t ok, failed;
};

/// Median KLD per (mode, method, budget), in roster order.
inline std::vector<BenchSummaryRow> bench_summary(const BenchReport& rep) {
  std::vector<BenchSummaryRow> out;
  std::map<std::tuple<std::string, std::string, std::size_t>, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::map<std::tuple<std::string, std::string, std::size_t>, std::size_t> failed;
  std::vector<std::tuple<std::string, std::string, std::size_t>> order;
  for (const auto& r : rep.rows) {
    const auto key = std::make_tuple(r.mode, r.method, r.budget);
    if (!groups.count(key) && !failed.count(key)) order.push_back(key);
    if (r.failed) {
      ++failed[key];
      groups[key];
    } else {
      groups[key].first.push_back(r.kld);
      groups[key].second.push_back(r.wall_ms);
      failed[key] += 0;
    }
  }
  for (const auto& key : order) {
    const auto& g = groups[key];
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), detail::median(g.first), detail::median(g.second), g.first.size(),
                   failed[key]});
  }
  return out;
}

inline Json bench_json(const BenchReport& rep, const BenchConfig& cfg) {
  Json rows = Json::array();
  for (const auto& r : rep.rows) {
    Json j{{"trial", r.trial}, {"seed", r.seed}, {"mode", r.mode}, {"method", r.method}, {"budget", r.budget},
           {"kld_nats", std::isnan(r.kld) ? Json(nullptr) : Json(r.kld)}, {"wall_ms", r.wall_ms}, {"flags", r.flags}};
    j["omega"] = r.omega ? Json(*r.omega) : Json(nullptr);
    j["ess_min"] = r.ess_min ? Json(*r.ess_min) : Json(nullptr);
    j["ess_median"] = r.ess_median ? Json(*r.ess_median) : Json(nullptr);
    rows.push_back(std::move(j));
  }
  Json summary = Json::array();
  for (const auto& s : bench_summary(rep))
    summary.push_back({{"mode", s.mode}, {"method", s.method}, {"budget", s.budget},
                       {"median_kld_nats", std::isnan(s.median_kld) ? Json(nullptr) : Json(s.median_kld)},
                       {"median_wall_ms", std::isnan(s.median_wall_ms) ? Json(nullptr) : Json(s.median_wall_ms)}, {"ok", s.ok}, {"failed", s.failed}});
  return {{"trials", cfg.trials}, {"seed", cfg.seed}, {"grid_resolution", cfg.grid_resolution}, {"rows", std::move(rows)}, {"summary", std::move(summary)}};
}

struct BenchProblem {
  GaussianMixture p_i, p_j, p_c;
};

/// The trial's inputs; the trial stream is derive_stream(seed, trial).
inline BenchProblem bench_problem(const BenchConfig& cfg, int trial) {
  Rng rng = derive_stream(cfg.seed, static_cast<std::uint64_t>(trial));
  BenchProblem p;
  p.p_i = random_gm(cfg.agent, rng);
  p.p_j = random_gm(cfg.agent, rng);
  p.p_c = random_gm(cfg.common, rng);
  return p;
}

namespace detail {

inline FusionMethod bench_fusion_method(const BenchConfig& cfg, MethodKind kind, std::size_t budget) {
  FusionMethod m;
  m.kind = kind;
  m.proposal = cfg.proposal;
  if (budget > 0) {
    m.proposal.n_samples = budget;
    m.n_samples = budget;
  }
  m.omega_samples = cfg.omega_truth_samples;
  m.max_components = cfg.max_components;
  return m;
}

inline void run_roster(const BenchConfig& cfg, const std::vector<BenchMethod>& roster, const std::string& mode, int trial,
                       std::uint64_t trial_seed, const BenchProblem& prob, const FusionCommon& common, const GridDensity& truth,
                       const Flags& truth_flags, std::uint64_t stream_base, std::vector<BenchRow>& out) {
  for (std::size_t mi = 0; mi < roster.size(); ++mi) {
    for (std::size_t bi = 0; bi < roster[mi].budgets.size(); ++bi) {
      BenchRow row;
      row.trial = trial;
      row.seed = trial_seed;
      row.mode = mode;
      row.method = to_string(roster[mi].kind);
      row.budget = roster[mi].budgets[bi];
      row.flags = truth_flags;
      Rng rng = derive_stream(trial_seed, stream_base + 1000 * mi + bi);
      try {
        const auto rep = fuse(prob.p_i, prob.p_j, common, bench_fusion_method(cfg, roster[mi].kind, row.budget), rng);
        std::size_t clamped = 0;
        row.kld = kld_grid(truth, rep.gm, &clamped);
        if (clamped > 0) row.flags.push_back("kld_floor_cells=" + std::to_string(clamped));
        row.wall_ms = cfg.record_timing ? rep.wall_ms : 0.0;
        row.omega = rep.omega;
        if (!rep.ess_per_mixand.empty()) {
          row.ess_min = *std::min_element(rep.ess_per_mixand.begin(), rep.ess_per_mixand.end());
          row.ess_median = median(rep.ess_per_mixand);
        }
        row.flags.insert(row.flags.end(), rep.flags.begin(), rep.flags.end());
      } catch (const std::exception& e) {
        row.failed = true;
        row.flags.push_back(std::string("error: ") + e.what());
      }
      out.push_back(std::move(row));
    }
  }
}

}  // namespace detail

/**
 * Monte Carlo sweep over regenerated problems. Every trial, method and budget
 * draws from its own derived stream, so rows do not depend on roster order,
 * thread count or which other rows failed.
 */
inline BenchReport run_benchmark(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<BenchRow>> per_trial(static_cast<std::size_t>(cfg.trials));
  parallel_for(per_trial.size(), [&](std::size_t t) {
    const int trial = static_cast<int>(t);
    const std::uint64_t trial_seed = derive_seed(cfg.seed, t);
    auto& out = per_trial[t];
    const auto fail_all = [&](const std::vector<BenchMethod>& roster, const std::string& mode, const std::string& what) {
      for (const auto& m : roster)
        for (auto b : m.budgets) {
          BenchRow row;
          row.trial = trial;
          row.seed = trial_seed;
          row.mode = mode;
          row.method = to_string(m.kind);
          row.budget = b;
          row.failed = true;
          row.flags.push_back("error: " + what);
          out.push_back(std::move(row));
        }
    };
    BenchProblem prob;
    try {
      prob = bench_problem(cfg, trial);
    } catch (const std::exception& e) {
      fail_all(cfg.exact_methods, "exact", e.what());
      fail_all(cfg.wep_methods, "wep", e.what());
      return;
    }
    if (!cfg.exact_methods.empty()) {
      try {
        Flags tf;
        const auto q = expand_quotient(prob.p_i, prob.p_j, make_exact_common(prob.p_c));
        const auto [lo, hi] = grid_bounds({&prob.p_i, &prob.p_j, &prob.p_c}, cfg.grid_sigmas);
        const auto truth = grid_truth([&](const Vec& x) { return q.log_eval(x); }, lo, hi, cfg.grid_resolution, &tf);
        detail::run_roster(cfg, cfg.exact_methods, "exact", trial, trial_seed, prob, FusionCommon::exact_gm(prob.p_c), truth, tf, 1'000'000, out);
      } catch (const std::exception& e) {
        fail_all(cfg.exact_methods, "exact", e.what());
      }
    }
    if (!cfg.wep_methods.empty()) {
      try {
        Flags tf;
        Rng wrng = derive_stream(trial_seed, 1);
        const double omega = optimize_omega(prob.p_i, prob.p_j, cfg.rule, cfg.omega_truth_samples, wrng).omega;
        const auto [lo, hi] = grid_bounds({&prob.p_i, &prob.p_j}, cfg.grid_sigmas);
        const auto truth =
            grid_truth([&](const Vec& x) { return wep_log_eval(prob.p_i, prob.p_j, omega, x); }, lo, hi, cfg.grid_resolution, &tf);
        FusionCommon common = FusionCommon::wep(cfg.rule, omega);
        detail::run_roster(cfg, cfg.wep_methods, "wep", trial, trial_seed, prob, common, truth, tf, 2'000'000, out);
      } catch (const std::exception& e) {
        fail_all(cfg.wep_methods, "wep", e.what());
      }
    }
  });
  BenchReport rep;
  for (auto& rows : per_trial)
    for (auto& r : rows) rep.rows.push_back(std::move(r));
  return rep;
}

// ---- ESS comparison harness ----

struct EssHarnessConfig {
  RandomProblemConfig agent = [] {
    RandomProblemConfig c;
    c.min_components = c.max_components = 4;
    c.normalize_by_dof = false;
    c.box_low = -6.0;
    c.box_high = 6.0;
    return c;
  }();
  RandomProblemConfig common = [] {
    RandomProblemConfig c;
    c.min_components = c.max_components = 6;
    c.normalize_by_dof = false;
    c.box_low = -8.0;
    c.box_high = 8.0;
    return c;
  }();
  std::size_t n_samples = 500;
  double alpha = 5.0;
  std::size_t heavy_tail_count = 5;
  int grid_resolution = 400;
};

struct EssRow {
  std::size_t mixand;
  double true_log_weight;     ///< grid, normalized over the posterior
  double log_bound;           ///< weight bound, same normalization
  double sampled_log_weight;  ///< LAGIS estimate, same normalization
  std::array<double, 3> ess_fraction;  ///< INGIS, LAGIS, heavy tail
};

/// True when every mixand has a finite weight bound, which guarantees ∫m_vr < ∞.
inline bool bounded_exact_problem(const GaussianMixture& p_i, const GaussianMixture& p_j, const GaussianMixture& p_c) {
  const auto q = expand_quotient(p_i, p_j, make_exact_common(p_c));
  return std::all_of(q.mixands().begin(), q.mixands().end(), [](const QuotientMixand& m) { return std::isfinite(log_weight_upper_bound(m)); });
}

/// Draws p_i, p_j, then redraws p_c until the exact quotient is provably integrable.
inline BenchProblem ess_problem(const EssHarnessConfig& cfg, Rng& rng, int max_tries = 1000) {
  BenchProblem p;
  p.p_i = random_gm(cfg.agent, rng);
  p.p_j = random_gm(cfg.agent, rng);
  for (int k = 0; k < max_tries; ++k) {
    p.p_c = random_gm(cfg.common, rng);
    if (bounded_exact_problem(p.p_i, p.p_j, p.p_c)) return p;
  }
  throw Error("ess_problem: no integrable common-information draw found");
}

/// Per-mixand ESS fraction of each proposal family on one exact problem, plus true and bounded weights.
inline std::vector<EssRow> ess_harness(const GaussianMixture& p_i, const GaussianMixture& p_j, const GaussianMixture& p_c,
                                       const EssHarnessConfig& cfg, std::uint64_t seed) {
  const auto q = expand_quotient(p_i, p_j, make_exact_common(p_c));
  const auto [lo, hi] = grid_bounds({&p_i, &p_j, &p_c});
  const auto truth = grid_truth([&](const Vec& x) { return q.log_eval(x); }, lo, hi, cfg.grid_resolution);
  const double log_z = truth.log_normalizer;
  std::vector<EssRow> rows(q.size());
  const std::array<ProposalKind, 3> kinds{ProposalKind::Ingis, ProposalKind::Lagis, ProposalKind::HeavyTail};
  parallel_for(q.size(), [&](std::size_t k) {
    const auto& m = q[k];
    EssRow& row = rows[k];
    row.mixand = k;
    std::vector<double> cell(truth.cells());
    for (std::size_t c = 0; c < truth.cells(); ++c) cell[c] = m.log_eval(truth.center(c));
    row.true_log_weight = m.log_pre_weight + log_sum_exp(cell) + std::log(truth.cell_volume) - log_z;
    row.log_bound = log_weight_upper_bound(m) - log_z;
    for (std::size_t p = 0; p < kinds.size(); ++p) {
      ProposalConfig pc;
      pc.kind = kinds[p];
      pc.alpha = cfg.alpha;
      pc.heavy_tail_count = cfg.heavy_tail_count;
      pc.n_samples = cfg.n_samples;
      Rng rng = derive_stream(seed, 100 * k + p);
      const auto est = estimate_moments([&](const Vec& x) { return m.log_eval(x); }, detail::dls_proposal(m, pc), cfg.n_samples, rng);
      row.ess_fraction[p] = est.ess / static_cast<double>(cfg.n_samples);
      if (kinds[p] == ProposalKind::Lagis) row.sampled_log_weight = m.log_pre_weight + est.log_w0 - log_z;
    }
  });
  return rows;
}

inline std::string ess_csv(const std::vector<EssRow>& rows) {
  std::string out = "mixand,true_log_weight,log_bound,sampled_log_weight,ess_ingis,ess_lagis,ess_heavy_tail\n";
  for (const auto& r : rows)
    out += std::to_string(r.mixand) + "," + detail::fmt_num(r.true_log_weight) + "," + detail::fmt_num(r.log_bound) + "," +
           detail::fmt_num(r.sampled_log_weight) + "," + detail::fmt_num(r.ess_fraction[0]) + "," + detail::fmt_num(r.ess_fraction[1]) + "," +
           detail::fmt_num(r.ess_fraction[2]) + "\n";
  return out;
}

inline EssHarnessConfig ess_config_from_json(const Json& j) {
  EssHarnessConfig c;
  if (j.contains("agent")) c.agent = random_problem_from_json(j["agent"], c.agent);
  if (j.contains("common")) c.common = random_problem_from_json(j["common"], c.common);
  c.n_samples = config_get(j, "samples_per_mixand", c.n_samples);
  c.alpha = config_get(j, "alpha", c.alpha);
  c.heavy_tail_count = config_get(j, "heavy_tail_count", c.heavy_tail_count);
  c.grid_resolution = config_get(j, "grid_resolution", c.grid_resolution);
  c.agent.validate();
  c.common.validate();
  if (c.agent.dim > 3 || c.n_samples < 2 || c.grid_resolution < 2) throw InputError("ess: need dim <= 3, samples >= 2, grid >= 2");
  return c;
}

struct EssStudy {
  std::vector<std::vector<EssRow>> problems;
  std::array<double, 3> median_fraction{};  ///< over every mixand of every problem
  std::size_t mixands = 0;
  std::size_t bound_holds = 0;  ///< bound ≥ sampled weight
};

/// Runs the harness on `count` problems; problem p uses derive_stream(seed, p).
inline EssStudy ess_study(const EssHarnessConfig& cfg, int count, std::uint64_t seed) {
  if (count < 1) throw InputError("ess: problem count must be >= 1");
  EssStudy st;
  std::array<std::vector<double>, 3> fr;
  for (int p = 0; p < count; ++p) {
    Rng rng = derive_stream(seed, static_cast<std::uint64_t>(p));
    const auto prob = ess_problem(cfg, rng);
    st.problems.push_back(ess_harness(prob.p_i, prob.p_j, prob.p_c, cfg, derive_seed(seed, 1000 + static_cast<std::uint64_t>(p))));
    for (const auto& r : st.problems.back()) {
      for (std::size_t k = 0; k < 3; ++k) fr[k].push_back(r.ess_fraction[k]);
      ++st.mixands;
      if (r.log_bound >= r.sampled_log_weight) ++st.bound_holds;
    }
  }
  for (std::size_t k = 0; k < 3; ++k) st.median_fraction[k] = detail::median(fr[k]);
  return st;
}

}  // namespace gmddf
