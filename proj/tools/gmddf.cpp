// Command-line front end: fuse, bench, track, grid and ess subcommands.
//
// Exit codes: 0 clean, 1 usage or input error, 2 completed but degraded
// (fusion flags, failed benchmark rows or failed tracking runs).

#include "gmddf/gmddf.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace gmddf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitDegraded = 2;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

void apply_threads(int threads) {
  if (threads > 0) {
    set_thread_count(threads);
  } else if (const char* env = std::getenv("GMDDF_THREADS")) {
    try {
      set_thread_count(std::stoi(env));
    } catch (const std::exception&) {
      throw InputError("GMDDF_THREADS must be an integer");
    }
  }
}

// ---- fuse ----

struct FuseArgs {
  std::string pi, pj, pc, method = "dls", proposal = "lagis", rule = "minimax", out;
  std::size_t ns = 500;
  std::optional<double> omega;
  std::uint64_t seed = 0;
  std::size_t max_components = 0;
  int truth_res = 0;
  bool no_timing = false;
};

int cmd_fuse(const FuseArgs& a) {
  const auto p_i = load_gm_file(a.pi).gm;
  const auto p_j = load_gm_file(a.pj).gm;
  FusionMethod m;
  m.kind = parse_method_kind(a.method);
  m.proposal.kind = parse_proposal_kind(a.proposal);
  m.proposal.n_samples = a.ns;
  m.n_samples = a.ns;
  m.max_components = a.max_components;
  m.proposal.validate();
  if (m.kind == MethodKind::Mmgd && a.pc.empty()) throw InputError("--method mmgd needs --pc (exact common information)");
  std::optional<GaussianMixture> p_c;
  if (!a.pc.empty()) {
    p_c = load_gm_file(a.pc).gm;
    if (a.omega) throw InputError("--omega applies to WEP fusion only; drop it or drop --pc");
  }
  const auto common = p_c ? FusionCommon::exact_gm(*p_c) : FusionCommon::wep(parse_rule(a.rule), a.omega);
  Rng rng(a.seed);
  auto rep = fuse(p_i, p_j, common, m, rng);
  if (a.no_timing) rep.wall_ms = 0.0;
  if (a.truth_res > 0) {
    std::vector<const GaussianMixture*> all{&p_i, &p_j};
    if (p_c) all.push_back(&*p_c);
    const auto [lo, hi] = grid_bounds(all);
    GridDensity truth;
    if (p_c) {
      const auto q = expand_quotient(p_i, p_j, make_exact_common(*p_c));
      truth = grid_truth([&](const Vec& x) { return q.log_eval(x); }, lo, hi, a.truth_res, &rep.flags);
    } else {
      const double w = rep.omega.value_or(0.5);
      truth = grid_truth([&](const Vec& x) { return wep_log_eval(p_i, p_j, w, x); }, lo, hi, a.truth_res, &rep.flags);
    }
    rep.kld_vs_truth = kld_grid(truth, rep.gm);
  }
  const auto text = dump_json(report_to_json(rep));
  if (a.out.empty()) std::cout << text;
  else write_file(a.out, text);
  for (const auto& f : rep.flags) std::cerr << "flag: " << f << "\n";
  return rep.flags.empty() ? kExitOk : kExitDegraded;
}

// ---- bench ----

struct BenchArgs {
  std::string config, out;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  bool no_timing = false;
};

int cmd_bench(const BenchArgs& a) {
  auto cfg = bench_config_from_json(load_config(a.config));
  if (a.trials) cfg.trials = *a.trials;
  if (a.seed) cfg.seed = *a.seed;
  if (a.no_timing) cfg.record_timing = false;
  cfg.validate();
  const auto rep = run_benchmark(cfg);
  const fs::path dir(a.out);
  write_file(dir / "bench.csv", bench_csv(rep));
  write_file(dir / "bench.json", dump_json(bench_json(rep, cfg)));
  std::printf("%-6s %-12s %7s %14s %12s %5s %6s\n", "mode", "method", "budget", "median_kld", "median_ms", "ok", "failed");
  for (const auto& s : bench_summary(rep))
    std::printf("%-6s %-12s %7zu %14.6g %12.4g %5zu %6zu\n", s.mode.c_str(), s.method.c_str(), s.budget, s.median_kld, s.median_wall_ms, s.ok,
                s.failed);
  if (rep.failures() > 0) {
    std::cerr << rep.failures() << " benchmark row(s) failed; see the flags column of bench.csv\n";
    return kExitDegraded;
  }
  return kExitOk;
}

// ---- track ----

struct TrackArgs {
  std::string config, method = "both", out;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  bool full_scale = false;
};

int cmd_track(const TrackArgs& a) {
  Json j = a.config.empty() ? Json::object() : load_config(a.config);
  if (a.full_scale) {
    // the full-scale preset replaces the horizon and schedule of whatever the file says
    j["full_scale"] = true;
    j.erase("steps");
    j.erase("fusion_steps");
    j.erase("runs");
  }
  auto cfg = scenario_from_json(j);
  if (a.runs) cfg.runs = *a.runs;
  if (a.seed) cfg.seed = *a.seed;
  if (a.method == "igs") cfg.ddf_methods = {MethodKind::Igs};
  else if (a.method == "foci") cfg.ddf_methods = {MethodKind::Foci};
  else if (a.method != "both") throw InputError("--method must be igs, foci or both");
  cfg.validate();
  const auto res = run_scenario(cfg);
  const fs::path dir(a.out);
  for (int r = 0; r < cfg.runs; ++r) write_file(dir / ("track_run" + std::to_string(r) + ".csv"), track_csv(res, r));
  const auto summary = tracking_summary_json(res, cfg);
  write_file(dir / "track_summary.json", dump_json(summary));
  std::printf("%-12s %22s\n", "variant", "median_rmse_at_fusion_m");
  for (const auto& [name, v] : summary["median_position_rmse_at_fusion"].items()) std::printf("%-12s %22.4f\n", name.c_str(), v.get<double>());
  for (const auto& f : res.failures) std::cerr << "failure: " << f << "\n";
  return res.failures.empty() ? kExitOk : kExitDegraded;
}

// ---- grid ----

struct GridArgs {
  std::string pi, pj, pc, approx, rule = "minimax", out;
  std::optional<double> omega;
  int res = 400;
  double sigmas = 5.0;
  std::uint64_t seed = 0;
};

int cmd_grid(const GridArgs& a) {
  const auto p_i = load_gm_file(a.pi).gm;
  const auto p_j = load_gm_file(a.pj).gm;
  std::vector<const GaussianMixture*> all{&p_i, &p_j};
  std::optional<GaussianMixture> p_c;
  if (!a.pc.empty()) {
    p_c = load_gm_file(a.pc).gm;
    all.push_back(&*p_c);
  }
  const auto [lo, hi] = grid_bounds(all, a.sigmas);
  Flags flags;
  Json j;
  GridDensity truth;
  if (p_c) {
    const auto q = expand_quotient(p_i, p_j, make_exact_common(*p_c));
    truth = grid_truth([&](const Vec& x) { return q.log_eval(x); }, lo, hi, a.res, &flags);
    j["mode"] = "exact";
  } else {
    double w = 0.0;
    if (a.omega) {
      w = *a.omega;
    } else {
      Rng rng(a.seed);
      w = optimize_omega(p_i, p_j, parse_rule(a.rule), 5000, rng).omega;
    }
    truth = grid_truth([&](const Vec& x) { return wep_log_eval(p_i, p_j, w, x); }, lo, hi, a.res, &flags);
    j["mode"] = "wep";
    j["omega"] = w;
  }
  const auto mom = truth.moments();
  j["lo"] = to_json(lo);
  j["hi"] = to_json(hi);
  j["resolution"] = a.res;
  j["log_normalizer"] = truth.log_normalizer;
  j["boundary_mass"] = truth.boundary_mass;
  j["mean"] = to_json(mom.mean);
  j["cov"] = to_json(mom.cov);
  if (!a.approx.empty()) {
    std::size_t clamped = 0;
    j["kld_nats"] = kld_grid(truth, load_gm_file(a.approx).gm, &clamped);
    j["kld_floored_cells"] = clamped;
  }
  j["flags"] = flags;
  const auto text = dump_json(j);
  if (a.out.empty()) std::cout << text;
  else write_file(a.out, text);
  return flags.empty() ? kExitOk : kExitDegraded;
}

// ---- ess ----

struct EssArgs {
  std::string config, out;
  int problems = 10;
  std::uint64_t seed = 1;
};

int cmd_ess(const EssArgs& a) {
  const auto cfg = a.config.empty() ? EssHarnessConfig{} : ess_config_from_json(load_config(a.config));
  const auto st = ess_study(cfg, a.problems, a.seed);
  std::string csv = "problem," + std::string("mixand,true_log_weight,log_bound,sampled_log_weight,ess_ingis,ess_lagis,ess_heavy_tail\n");
  for (std::size_t p = 0; p < st.problems.size(); ++p) {
    const auto body = ess_csv(st.problems[p]);
    std::istringstream lines(body.substr(body.find('\n') + 1));
    for (std::string line; std::getline(lines, line);) csv += std::to_string(p) + "," + line + "\n";
  }
  write_file(fs::path(a.out) / "ess.csv", csv);
  std::printf("median ESS fraction  ingis %.4f  lagis %.4f  heavy-tail %.4f\n", st.median_fraction[0], st.median_fraction[1], st.median_fraction[2]);
  std::printf("bound >= sampled weight on %zu of %zu mixands\n", st.bound_holds, st.mixands);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian mixture decentralized data fusion"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: GMDDF_THREADS or all cores)")->check(CLI::NonNegativeNumber);

  FuseArgs fa;
  auto* fuse_cmd = app.add_subcommand("fuse", "fuse two Gaussian mixtures");
  fuse_cmd->add_option("--pi", fa.pi, "first mixture (JSON)")->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--pj", fa.pj, "second mixture (JSON)")->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--pc", fa.pc, "exact common information (JSON); WEP fusion when absent")->check(CLI::ExistingFile);
  fuse_cmd->add_option("--method", fa.method, "dls, igs, is-wem, mmgd, foci, naive-bayes or laplace")->capture_default_str();
  fuse_cmd->add_option("--proposal", fa.proposal, "DLS proposal: ingis, lagis or heavy-tail")->capture_default_str();
  fuse_cmd->add_option("--ns", fa.ns, "samples per mixand (DLS) or in total (IGS, IS-WEM)")->capture_default_str()->check(CLI::PositiveNumber);
  fuse_cmd->add_option("--rule", fa.rule, "WEP rule: minimax or chernoff")->capture_default_str();
  fuse_cmd->add_option("--omega", fa.omega, "fixed WEP exponent in [0, 1]")->check(CLI::Range(0.0, 1.0));
  fuse_cmd->add_option("--seed", fa.seed, "random seed")->required();
  fuse_cmd->add_option("--max-components", fa.max_components, "Runnalls cap on the output (0 = none)");
  fuse_cmd->add_option("--truth-res", fa.truth_res, "grid resolution for a KLD against grid truth (0 = skip)");
  fuse_cmd->add_option("-o,--out", fa.out, "report path (default: stdout)");
  fuse_cmd->add_flag("--no-timing", fa.no_timing, "write wall_ms as 0 for reproducible output");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "random-problem benchmark sweep");
  bench_cmd->add_option("--config", ba.config, "TOML or JSON config")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--trials", ba.trials, "override the trial count")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", ba.seed, "override the root seed");
  bench_cmd->add_option("-o,--out", ba.out, "output directory")->required();
  bench_cmd->add_flag("--no-timing", ba.no_timing, "write wall_ms as 0 for reproducible output");

  TrackArgs ta;
  auto* track_cmd = app.add_subcommand("track", "multi-platform maneuvering-target tracking scenario");
  track_cmd->add_option("--config", ta.config, "scenario TOML or JSON (default: desk scale)")->check(CLI::ExistingFile);
  track_cmd->add_option("--method", ta.method, "DDF variant: igs, foci or both")->capture_default_str();
  track_cmd->add_option("--runs", ta.runs, "override the Monte Carlo run count")->check(CLI::PositiveNumber);
  track_cmd->add_option("--seed", ta.seed, "override the root seed");
  track_cmd->add_flag("--full-scale", ta.full_scale, "422 steps, fusion every 60 steps, 50 runs");
  track_cmd->add_option("-o,--out", ta.out, "output directory")->required();

  GridArgs ga;
  auto* grid_cmd = app.add_subcommand("grid", "grid truth of an exact or WEP fusion posterior");
  grid_cmd->add_option("--pi", ga.pi, "first mixture (JSON)")->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("--pj", ga.pj, "second mixture (JSON)")->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("--pc", ga.pc, "exact common information (JSON)")->check(CLI::ExistingFile);
  grid_cmd->add_option("--approx", ga.approx, "mixture to score against the grid (JSON)")->check(CLI::ExistingFile);
  grid_cmd->add_option("--omega", ga.omega, "WEP exponent; searched with --rule when absent")->check(CLI::Range(0.0, 1.0));
  grid_cmd->add_option("--rule", ga.rule, "WEP rule for the ω search")->capture_default_str();
  grid_cmd->add_option("--res", ga.res, "cells per dimension")->capture_default_str()->check(CLI::Range(2, 100000));
  grid_cmd->add_option("--sigmas", ga.sigmas, "grid half-width in component standard deviations")->capture_default_str();
  grid_cmd->add_option("--seed", ga.seed, "seed for the ω search");
  grid_cmd->add_option("-o,--out", ga.out, "output path (default: stdout)");

  EssArgs ea;
  auto* ess_cmd = app.add_subcommand("ess", "per-mixand effective sample size study of the DLS proposals");
  ess_cmd->add_option("--config", ea.config, "TOML or JSON config")->check(CLI::ExistingFile);
  ess_cmd->add_option("--problems", ea.problems, "number of random exact problems")->capture_default_str()->check(CLI::PositiveNumber);
  ess_cmd->add_option("--seed", ea.seed, "root seed")->capture_default_str();
  ess_cmd->add_option("-o,--out", ea.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    apply_threads(threads);
    if (*fuse_cmd) return cmd_fuse(fa);
    if (*bench_cmd) return cmd_bench(ba);
    if (*track_cmd) return cmd_track(ta);
    if (*grid_cmd) return cmd_grid(ga);
    if (*ess_cmd) return cmd_ess(ea);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
