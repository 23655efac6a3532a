// Acceptance runner: one pass/fail line per criterion, non-zero exit when any fails.
// Usage: acceptance [--only 1,4,11]

#include "gmddf/gmddf.hpp"
#include "test_util.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

namespace {

using namespace gmddf;
using gmddf::testing::fd_gradient;
using gmddf::testing::fd_jacobian;
using gmddf::testing::random_mixture;
using gmddf::testing::random_spd;
using gmddf::testing::random_vec;
namespace fs = std::filesystem;

const std::string kCli = GMDDF_CLI_PATH;
const fs::path kConfigs = GMDDF_CONFIG_DIR;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---- 1: pointwise quotient identity ----

Outcome quotient_identity() {
  Rng rng(derive_seed(101, 0));
  double worst = 0.0;
  for (int p = 0; p < 50; ++p) {
    const auto pi = random_mixture(2, 3, rng, 4.0);
    const auto pj = random_mixture(2, 3, rng, 4.0);
    const auto pc = random_mixture(2, 4, rng, 4.0, 3.0, 8.0);
    const bool wep = p % 2 == 1;
    const auto u = wep ? make_wep_common(pi, pj, 0.2 + 0.6 * uniform01(rng)) : make_exact_common(pc);
    const auto q = expand_quotient(pi, pj, u);
    const Mat pts = gm_sample(naive_bayes_fuse(pi, pj), 50, rng);
    for (Index s = 0; s < pts.cols(); ++s) {
      const Vec x = pts.col(s);
      std::vector<double> terms;
      for (std::size_t z = 0; z < q.size(); ++z) terms.push_back(q[z].log_pre_weight + q[z].log_eval(x));
      const double lhs = log_sum_exp(terms);
      const double rhs = pi.log_pdf(x) + pj.log_pdf(x) - u->log_eval(x);
      worst = std::max(worst, std::abs(std::expm1(lhs - rhs)));
    }
  }
  return {worst < 1e-9, "max relative error " + num(worst) + " over 2500 points (limit 1e-9)"};
}

// ---- 2: per-mixand importance moments against quadrature ----

Outcome mixand_moments() {
  // Per-mixand maxima are not a usable gate: exact i.i.d. draws at n = 2000 already put the
  // covariance error above 5% for about one mixand in seven. The gate is the median over
  // the 20 mixands, with the worst case reported alongside.
  const auto cfg = bench_config_from_json(load_config((kConfigs / "reference_bench.toml").string()));
  ProposalConfig pc;
  pc.kind = ProposalKind::Lagis;
  Rng pick(derive_seed(202, 0));
  std::vector<double> mean_err, cov_err;
  double worst_boundary = 0.0;
  int within = 0;
  for (int trial = 0; mean_err.size() < 20; ++trial) {
    const auto prob = bench_problem(cfg, trial);
    const auto q = expand_quotient(prob.p_i, prob.p_j, make_exact_common(prob.p_c));
    // two mixands per problem, drawn uniformly among those with a finite weight bound
    std::vector<std::size_t> bounded;
    for (std::size_t z = 0; z < q.size(); ++z)
      if (best_bound_ratio(q[z])) bounded.push_back(z);
    for (int k = 0; k < 2 && !bounded.empty(); ++k) {
      const auto& m = q[bounded[std::uniform_int_distribution<std::size_t>(0, bounded.size() - 1)(pick)]];
      const auto lap = laplace_mixand(m);
      const Vec ls = lap.cov.diagonal().cwiseSqrt(), ns = m.numerator.cov().diagonal().cwiseSqrt();
      const Vec lo = (lap.mode - 10.0 * ls).cwiseMin(m.numerator.mean() - 10.0 * ns);
      const Vec hi = (lap.mode + 10.0 * ls).cwiseMax(m.numerator.mean() + 10.0 * ns);
      const auto f = [&](const Vec& x) { return m.log_eval(x); };
      const auto truth = grid_truth(f, lo, hi, 600);
      const auto tm = truth.moments();
      Rng rng = derive_stream(203, mean_err.size());
      const auto est = estimate_moments(f, detail::dls_proposal(m, pc), 2000, rng);
      mean_err.push_back((est.mean - tm.mean).norm() / tm.mean.norm());
      cov_err.push_back((est.cov - tm.cov).norm() / tm.cov.norm());
      within += mean_err.back() < 0.02 && cov_err.back() < 0.05 ? 1 : 0;
      worst_boundary = std::max(worst_boundary, truth.boundary_mass);
    }
  }
  const double mm = detail::median(mean_err), mc = detail::median(cov_err);
  const double xm = *std::max_element(mean_err.begin(), mean_err.end()), xc = *std::max_element(cov_err.begin(), cov_err.end());
  return {mm < 0.02 && mc < 0.05, "20 mixands, N_s=2000: median mean error " + num(100 * mm, 3) + "% of |mu| (limit 2%), median covariance error " +
                                      num(100 * mc, 3) + "% Frobenius (limit 5%); worst " + num(100 * xm, 3) + "% / " + num(100 * xc, 3) + "%, " +
                                      std::to_string(within) + "/20 within both limits, grid boundary mass <= " + num(worst_boundary, 2)};
}

// ---- 3, 4, 5: one benchmark run shared by three criteria ----

struct BenchOutcome {
  std::map<std::string, double> median;  // "mode/method/budget"
  double seconds = 0.0;
  std::size_t failures = 0;
};

const BenchOutcome& bench_outcome() {
  static const BenchOutcome out = [] {
    auto cfg = bench_config_from_json(load_config((kConfigs / "reference_bench.toml").string()));
    cfg.record_timing = false;
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = run_benchmark(cfg);
    BenchOutcome o;
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.failures = rep.failures();
    for (const auto& r : bench_summary(rep)) o.median[r.mode + "/" + r.method + "/" + std::to_string(r.budget)] = r.median_kld;
    return o;
  }();
  return out;
}

double med(const std::string& key) {
  const auto& m = bench_outcome().median;
  const auto it = m.find(key);
  if (it == m.end()) throw Error("benchmark summary lacks " + key);
  return it->second;
}

std::string bench_tail() {
  return "; " + std::to_string(bench_outcome().failures) + " failed rows, shared 20-trial run " + num(bench_outcome().seconds, 4) + " s";
}

Outcome exact_ranking() {
  const double dls = med("exact/dls/200"), igs = med("exact/igs/2000"), mmgd = med("exact/mmgd/0"), lap = med("exact/laplace/0");
  const bool pass = dls < igs && igs < mmgd && igs < lap;
  return {pass, "median KLD DLS200 " + num(dls) + " < IGS2000 " + num(igs) + " < MMGD " + num(mmgd) + ", IGS2000 < Laplace " + num(lap) +
                    bench_tail()};
}

Outcome wep_ranking() {
  const double dls = med("wep/dls/200"), igs = med("wep/igs/1000"), foci = med("wep/foci/0"), iswem = med("wep/is-wem/5000");
  const bool pass = dls < igs && igs < foci && igs <= iswem;
  return {pass, "median KLD DLS200 " + num(dls) + " < IGS1000 " + num(igs) + " < FOCI " + num(foci) + ", IGS1000 <= IS-WEM5000 " + num(iswem) +
                    bench_tail()};
}

Outcome budget_monotonicity() {
  std::string detail;
  bool pass = true;
  for (const std::string method : {"dls", "igs"}) {
    const std::vector<std::size_t> budgets = method == "dls" ? std::vector<std::size_t>{10, 50, 100, 200} : std::vector<std::size_t>{100, 500, 1000, 2000};
    int inversions = 0;
    bool large = false;
    detail += method + ":";
    double prev = 0.0;
    for (std::size_t k = 0; k < budgets.size(); ++k) {
      const double v = med("exact/" + method + "/" + std::to_string(budgets[k]));
      detail += " " + num(v);
      if (k > 0 && v > prev) {
        ++inversions;
        large = large || v > 1.1 * prev;
      }
      prev = v;
    }
    detail += " (" + std::to_string(inversions) + " inversions) ";
    pass = pass && inversions <= 1 && !large;
  }
  return {pass, detail + "; at most one inversion under 10% tolerated"};
}

// ---- 6: Chernoff weight against a quadrature scan ----

Outcome chernoff_omega() {
  Rng rng(derive_seed(606, 0));
  double worst = 0.0, worst_curv = 0.0;
  int within = 0;
  for (int p = 0; p < 50; ++p) {
    // separated pairs; near-identical densities leave the objective flat and ω* unidentifiable
    const double a = random_vec(1, rng, -3, 3)(0), sep = random_vec(1, rng, 1.5, 4)(0);
    const double b = uniform01(rng) < 0.5 ? a - sep : a + sep;
    const double va = random_vec(1, rng, 0.5, 2)(0), vb = random_vec(1, rng, 0.5, 2)(0);
    const auto pi = single_gaussian(Vec::Constant(1, a), Mat::Constant(1, 1, va));
    const auto pj = single_gaussian(Vec::Constant(1, b), Mat::Constant(1, 1, vb));
    // oracle: trapezoid in x, 2001-point scan in ω
    const double lo = std::min(a, b) - 12 * std::sqrt(std::max(va, vb)), hi = std::max(a, b) + 12 * std::sqrt(std::max(va, vb));
    const int nx = 6000;
    std::vector<double> li(nx + 1), lj(nx + 1);
    for (int k = 0; k <= nx; ++k) {
      const Vec x = Vec::Constant(1, lo + (hi - lo) * k / nx);
      li[static_cast<std::size_t>(k)] = pi.log_pdf(x);
      lj[static_cast<std::size_t>(k)] = pj.log_pdf(x);
    }
    double best = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (int s = 0; s <= 2000; ++s) {
      const double w = s / 2000.0;
      double sum = 0.0;
      for (std::size_t k = 0; k <= static_cast<std::size_t>(nx); ++k) sum += std::exp(w * li[k] + (1 - w) * lj[k]);
      if (sum < best_val) best_val = sum, best = w;
    }
    const auto r = optimize_omega(pi, pj, WepRule::Chernoff, 5000, rng);
    worst = std::max(worst, std::abs(r.omega - best));
    within += std::abs(r.omega - best) <= 0.02 ? 1 : 0;
    for (int s = 1; s < 100; ++s) {
      const double h = 0.01, w = s * h;
      const double c = chernoff_sum(r.samples, w - h) - 2 * chernoff_sum(r.samples, w) + chernoff_sum(r.samples, w + h);
      worst_curv = std::min(worst_curv, c / chernoff_sum(r.samples, w));
    }
  }
  const bool pass = worst <= 0.02 && worst_curv >= -1e-12;
  return {pass, "50 pairs, N_s=5000: max |omega - scan| " + num(worst, 3) + " (limit 0.02), " + std::to_string(within) + "/50 within, min relative second difference " + num(worst_curv, 3)};
}

// ---- 7: per-mixand ESS study ----

Outcome ess_ordering() {
  const auto cfg = ess_config_from_json(load_config((kConfigs / "ess.toml").string()));
  const auto st = ess_study(cfg, 10, 1);
  const auto& f = st.median_fraction;
  const bool pass = f[1] >= f[0] && f[2] >= f[0] && st.bound_holds == st.mixands;
  return {pass, "median ESS/N INGIS " + num(f[0], 3) + ", LAGIS " + num(f[1], 3) + ", heavy tail " + num(f[2], 3) + "; bound holds on " +
                    std::to_string(st.bound_holds) + "/" + std::to_string(st.mixands) + " mixands"};
}

// ---- 8: constrained EM recovery ----

Outcome sswem_recovery() {
  const Mat c1 = (Mat(2, 2) << 1.0, 0.3, 0.3, 0.8).finished();
  const Mat c2 = (Mat(2, 2) << 0.6, -0.2, -0.2, 1.2).finished();
  const Mat c3 = (Mat(2, 2) << 0.9, 0.0, 0.0, 0.5).finished();
  const GaussianMixture truth({GaussianComponent(0.5, Vec::Constant(2, 0.0), c1), GaussianComponent(0.3, (Vec(2) << 5.0, 1.0).finished(), c2),
                               GaussianComponent(0.2, (Vec(2) << 1.0, 6.0).finished(), c3)});
  // p_j equal to the wide common density makes the posterior exactly p_i
  const auto wide = single_gaussian(Vec::Zero(2), 1e4 * Mat::Identity(2, 2));
  const auto q = expand_quotient(truth, wide, make_exact_common(wide));
  Rng rng(derive_seed(808, 0));
  WeightedSampleSet set;
  set.points = gm_sample(truth, 50000, rng);
  set.log_theta = Vec::Zero(50000);
  cache_numerators(set, q);
  const auto fit = sswem_fit(set, q);
  double spread = 0.0;
  for (std::size_t a = 0; a < truth.size(); ++a)
    for (std::size_t b = 0; b < truth.size(); ++b) spread = std::max(spread, (truth[a].mean() - truth[b].mean()).norm());
  double dw = 0.0, dm = 0.0, dm_sigma = 0.0;
  bool sizes = fit.size() == truth.size();
  for (std::size_t k = 0; sizes && k < truth.size(); ++k) {
    dw = std::max(dw, std::abs(fit[k].weight() - truth[k].weight()));
    const double e = (fit[k].mean() - truth[k].mean()).norm();
    dm = std::max(dm, e / spread);
    dm_sigma = std::max(dm_sigma, e / std::sqrt(truth[k].cov().trace()));
  }
  // the same cached samples under a different common density must give identical bits
  const auto q2 = expand_quotient(truth, wide, make_wep_common(truth, wide, 0.4));
  const auto fit2 = sswem_fit(set, q2);
  bool bitwise = fit2.size() == fit.size();
  for (std::size_t k = 0; bitwise && k < fit.size(); ++k)
    bitwise = fit[k].weight() == fit2[k].weight() && fit[k].mean() == fit2[k].mean() && fit[k].cov() == fit2[k].cov();
  const bool pass = sizes && dw <= 0.02 && dm <= 0.02 && bitwise;
  return {pass, "N_s=5e4: max weight error " + num(dw, 3) + " (limit 0.02), max mean error " + num(100 * dm, 3) +
                    "% of component spread (limit 2%; " + num(dm_sigma, 3) + " component sd), u-invariance " + (bitwise ? "bitwise" : "broken")};
}

// ---- 9: Runnalls compression ----

Outcome runnalls() {
  Rng rng(derive_seed(909, 0));
  double worst = 0.0;
  bool identity = true;
  for (int t = 0; t < 100; ++t) {
    const Index d = 1 + t % 4;
    const int m = 5 + t % 20;
    const auto gm = random_mixture(d, m, rng, 5.0);
    const auto out = runnalls_compress(gm, static_cast<std::size_t>(1 + t % 4));
    const auto a = mixture_moments(gm), b = mixture_moments(out);
    worst = std::max({worst, std::abs(out.weight_sum() - gm.weight_sum()), (a.mean - b.mean).cwiseAbs().maxCoeff(), (a.cov - b.cov).cwiseAbs().maxCoeff()});
    const auto same = runnalls_compress(gm, static_cast<std::size_t>(m + t % 3));
    identity = identity && same.size() == gm.size();
    for (std::size_t k = 0; identity && k < gm.size(); ++k)
      identity = same[k].weight() == gm[k].weight() && same[k].mean() == gm[k].mean() && same[k].cov() == gm[k].cov();
  }
  return {worst < 1e-10 && identity, "100 compressions: max moment drift " + num(worst, 3) + " (limit 1e-10), identity below the cap " +
                                         (identity ? "holds" : "broken")};
}

// ---- 10: channel filters ----

Mat row(double a, double b) { return (Mat(1, 2) << a, b).finished(); }

GaussianMixture prior2() {
  const Mat c = (Mat(2, 2) << 2.0, 0.4, 0.4, 1.5).finished();
  return GaussianMixture({GaussianComponent(0.6, Vec::Constant(2, -1.0), c), GaussianComponent(0.4, Vec::Constant(2, 1.5), c * 0.8)});
}

GaussianMixture observe(const GaussianMixture& gm, const Mat& h, double z, double r) {
  return gm_linear_update(gm, h, Vec::Constant(1, z), Mat::Constant(1, 1, r));
}

Outcome channel_filter() {
  FusionMethod m;
  m.kind = MethodKind::Dls;
  m.proposal.n_samples = 2000;
  Rng rng(derive_seed(1010, 0));
  const auto prior = prior2();
  const auto truth_of = [&](const GaussianMixture& c) {
    const auto [lo, hi] = grid_bounds({&prior});
    return grid_truth([&](const Vec& x) { return c.log_pdf(x); }, lo, hi, 300);
  };
  const auto a = observe(prior, row(1.0, 0.0), 0.4, 0.5);
  const auto b_belief = observe(prior, row(0.3, 1.0), -0.2, 0.7);
  auto b = NodeState::with_prior(1, prior, {0});
  b.belief = b_belief;
  const double tree = kld_grid(truth_of(observe(a, row(0.3, 1.0), -0.2, 0.7)), channel_update(b, 0, a, m, rng).belief);

  const auto la = observe(prior, row(1.0, 0.0), 0.6, 0.6);
  const auto lb = observe(prior, row(0.0, 1.0), -0.5, 0.6);
  const auto t2 = truth_of(observe(la, row(0.0, 1.0), -0.5, 0.6));
  const auto hub = NodeState::with_prior(0, prior, {1, 2});
  const double ab = kld_grid(t2, channel_update(channel_update(hub, 1, la, m, rng), 2, lb, m, rng).belief);
  const double ba = kld_grid(t2, channel_update(channel_update(hub, 2, lb, m, rng), 1, la, m, rng).belief);
  const bool pass = tree < 0.05 && std::abs(ab - ba) < 0.05;
  return {pass, "two-node tree KLD " + num(tree, 3) + " (limit 0.05), hub order difference " + num(std::abs(ab - ba), 3) + " (limit 0.05)"};
}

// ---- 11: desk-scale tracking ----

Outcome tracking() {
  const auto cfg = scenario_from_json(load_config((kConfigs / "track_desk.toml").string()));
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run_scenario(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto s = summarize_tracking(res, cfg);
  const double cen = s.median_rmse.at("centralized");
  const double igs = s.median_rmse.at("ddf-igs"), foci = s.median_rmse.at("ddf-foci");
  const bool pass = s.failures == 0 && s.median_igs_minus_independent <= 0.0 && s.igs_trace_drop_fraction >= 0.8 && cen <= igs && cen <= foci &&
                    secs < 300.0;
  return {pass, "median RMSE IGS - independent " + num(s.median_igs_minus_independent) + " m (limit <= 0), IGS trace drops at " +
                    num(100 * s.igs_trace_drop_fraction, 3) + "% of events (limit 80%), median RMSE centralized " + num(cen) + " <= IGS " + num(igs) +
                    " and FOCI " + num(foci) + ", " + num(secs, 3) + " s (limit 300)"};
}

// ---- 12: analytic derivatives against finite differences ----

Outcome derivatives() {
  Rng rng(derive_seed(1212, 0));
  double gm_err = 0.0, jac_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto gm = random_mixture(1 + t % 4, 1 + t % 5, rng);
    const Vec x = random_vec(gm.dim(), rng, -3, 3);
    const auto d = gm_log_derivatives(gm, x);
    const Vec g = fd_gradient([&](const Vec& y) { return gm.log_pdf(y); }, x);
    const Mat h = fd_jacobian([&](const Vec& y) { return gm_log_derivatives(gm, y).gradient; }, x);
    gm_err = std::max({gm_err, (d.gradient - g).cwiseAbs().maxCoeff(), (d.hessian - h).cwiseAbs().maxCoeff()});
  }
  for (int t = 0; t < 100; ++t) {
    const Platform p{random_vec(1, rng, -20000, 20000)(0), random_vec(1, rng, -20000, 20000)(0)};
    Vec s(4);
    s << random_vec(1, rng, -30000, 30000)(0), random_vec(1, rng, -300, 300)(0), random_vec(1, rng, -30000, 30000)(0), random_vec(1, rng, -300, 300)(0);
    if (std::hypot(s(0) - p.x, s(2) - p.y) < 1000.0) s(0) += 5000.0;
    const Mat fd = fd_jacobian([&](const Vec& y) { return measure_exact(p, y); }, s, 1e-3);
    jac_err = std::max(jac_err, (measurement_jacobian(p, s) - fd).cwiseAbs().maxCoeff());
  }
  const double worst = std::max(gm_err, jac_err);
  return {worst <= 1e-4, "max error log-GM gradient/Hessian " + num(gm_err, 3) + ", measurement Jacobian " + num(jac_err, 3) + " over 100 cases each (limit 1e-4)"};
}

// ---- 13: CLI determinism across thread counts ----

int shell(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("gmddf_acceptance_" + std::to_string(getpid()));
  fs::create_directories(dir);
  const auto gm = [](const char* n) { return (kConfigs / "gm" / n).string(); };
  const std::string fuse = "fuse --pi " + gm("pi.json") + " --pj " + gm("pj.json") + " --pc " + gm("pc.json") + " --method dls --seed 11 --no-timing -o ";
  const std::string bench = "bench --config " + (kConfigs / "smoke_bench.toml").string() + " --seed 11 --no-timing -o ";
  const int codes = shell("--threads 1 " + fuse + (dir / "f1.json").string()) | shell("--threads 3 " + fuse + (dir / "f3.json").string()) |
                    shell("--threads 1 " + bench + (dir / "b1").string()) | shell("--threads 3 " + bench + (dir / "b3").string());
  const bool fuse_same = slurp(dir / "f1.json") == slurp(dir / "f3.json") && !slurp(dir / "f1.json").empty();
  const bool bench_same = slurp(dir / "b1/bench.csv") == slurp(dir / "b3/bench.csv") && slurp(dir / "b1/bench.json") == slurp(dir / "b3/bench.json") &&
                          !slurp(dir / "b1/bench.csv").empty();
  fs::remove_all(dir);
  return {codes == 0 && fuse_same && bench_same, std::string("fuse output ") + (fuse_same ? "identical" : "differs") + ", bench output " +
                                                     (bench_same ? "identical" : "differs") + " between 1 and 3 threads"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int a = 1; a < argc; ++a) {
    if (std::string(argv[a]) == "--only" && a + 1 < argc) {
      std::stringstream ss(argv[++a]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    }
  }
  const std::vector<Criterion> all{
      {1, "quotient identity", quotient_identity},
      {2, "mixand moments vs quadrature", mixand_moments},
      {3, "exact-mode ranking", exact_ranking},
      {4, "WEP-mode ranking", wep_ranking},
      {5, "budget monotonicity", budget_monotonicity},
      {6, "Chernoff weight vs scan", chernoff_omega},
      {7, "per-mixand ESS ordering", ess_ordering},
      {8, "constrained EM recovery", sswem_recovery},
      {9, "Runnalls moment preservation", runnalls},
      {10, "channel filter", channel_filter},
      {11, "desk tracking", tracking},
      {12, "finite-difference derivatives", derivatives},
      {13, "CLI determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.id << ": " << c.name << ": " << o.detail << " (" << num(secs, 3) << " s)" << std::endl;
  }
  std::cout << failed << " criteria failed" << std::endl;
  return failed == 0 ? 0 : 1;
}
