#pragma once

#include "gmddf/gm_json.hpp"
#include "gmddf/laplace.hpp"
#include "gmddf/mixture_learning.hpp"
#include "gmddf/wep.hpp"

#include <chrono>
#include <map>

namespace gmddf {

enum class ProposalKind { Ingis, Lagis, HeavyTail };

inline const char* to_string(ProposalKind k) {
  switch (k) {
    case ProposalKind::Ingis: return "ingis";
    case ProposalKind::Lagis: return "lagis";
    case ProposalKind::HeavyTail: return "heavy-tail";
  }
  return "?";
}

inline ProposalKind parse_proposal_kind(const std::string& s) {
  if (s == "ingis") return ProposalKind::Ingis;
  if (s == "lagis") return ProposalKind::Lagis;
  if (s == "heavy-tail" || s == "heavytail") return ProposalKind::HeavyTail;
  throw Error("unknown proposal '" + s + "' (expected ingis, lagis or heavy-tail)");
}

struct ProposalConfig {
  ProposalKind kind = ProposalKind::Lagis;
  double alpha = 5.0;              ///< INGIS default covariance scale
  std::vector<double> scales;      ///< heavy tail ξ_c; empty selects geometric scales
  std::vector<double> weights;     ///< heavy tail β_c
  std::size_t heavy_tail_count = 5;
  double default_max_scale = 4.0;  ///< used when no bound covariance exists
  std::size_t n_samples = 500;     ///< per mixand

  void validate() const {
    if (!(alpha > 0.0)) throw Error("proposal: alpha must be positive");
    if (n_samples < 2) throw Error("proposal: need at least two samples per mixand");
    if (scales.size() != weights.size()) throw Error("proposal: scales and weights differ in length");
    double total = 0.0;
    for (std::size_t c = 0; c < scales.size(); ++c) {
      if (!(scales[c] >= 1.0)) throw Error("proposal: heavy-tail scales must be >= 1");
      total += weights[c];
    }
    if (!scales.empty() && std::abs(total - 1.0) > 1e-9) throw Error("proposal: heavy-tail weights must sum to one");
    if (kind == ProposalKind::HeavyTail && scales.empty() && heavy_tail_count == 0) throw Error("proposal: heavy_tail_count must be >= 1");
  }
};

struct DlsResult {
  GaussianMixture gm;
  std::vector<double> ess;  ///< per surviving posterior mixand
  std::size_t flagged = 0;
};

namespace detail {

/// Largest generalized eigenvalue of the bound covariance relative to the Laplace covariance.
inline double heavy_tail_max_scale(const QuotientMixand& m, const Mat& laplace_cov, double fallback) {
  if (!m.common->is_exact()) return fallback;
  const auto b = best_bound_ratio(m);
  if (!b) return fallback;
  const Mat sigma_t = symmetrized(b->ratio.precision.inverse());
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(sigma_t, laplace_cov, Eigen::EigenvaluesOnly);
  return std::max(1.0, es.eigenvalues().maxCoeff());
}

inline GaussianMixture dls_proposal(const QuotientMixand& m, const ProposalConfig& cfg) {
  if (cfg.kind == ProposalKind::Ingis) return ingis_proposal(m, cfg.alpha);
  const auto lap = laplace_mixand(m);
  if (cfg.kind == ProposalKind::Lagis) return single_gaussian(lap.mode, lap.cov);
  if (!cfg.scales.empty()) return heavy_tail_proposal(lap.mode, lap.cov, cfg.scales, cfg.weights);
  const auto [xi, beta] = geometric_scales(heavy_tail_max_scale(m, lap.cov, cfg.default_max_scale), cfg.heavy_tail_count);
  return heavy_tail_proposal(lap.mode, lap.cov, xi, beta);
}

}  // namespace detail

/**
 * Direct local sampling: each mixand gets its own proposal and N_s samples from
 * stream derive_stream(seed, k). Weight w̃·E_q[m/q], mean and covariance self-normalized.
 */
inline DlsResult dls(const QuotientPosterior& q, const ProposalConfig& cfg, std::uint64_t seed, Flags* flags = nullptr) {
  cfg.validate();
  if (q.size() == 0) throw Error("dls: posterior has no mixands");
  struct Slot {
    double log_w = -std::numeric_limits<double>::infinity();
    Vec mean;
    Mat cov;
    double ess = 0.0;
    bool flagged = false;
  };
  std::vector<Slot> slots(q.size());
  parallel_for(q.size(), [&](std::size_t k) {
    const auto& m = q[k];
    Slot& s = slots[k];
    if (m.log_pre_weight == -std::numeric_limits<double>::infinity()) return;
    Rng rng = derive_stream(seed, k);
    const auto proposal = detail::dls_proposal(m, cfg);
    try {
      const auto est = estimate_moments([&](const Vec& x) { return m.log_eval(x); }, proposal, cfg.n_samples, rng);
      s.ess = est.ess;
      s.log_w = m.log_pre_weight + est.log_w0;
      if (est.ess < 2.0) {
        s.flagged = true;
        s.mean = m.numerator.mean();
        s.cov = m.numerator.cov();
      } else {
        s.mean = est.mean;
        s.cov = est.cov;
      }
    } catch (const Error&) {
      // the target vanished at every sample: no usable weight either
      s.flagged = true;
    }
  });
  const auto pre = q.normalized_pre_weights();
  DlsResult res;
  double flagged_mass = 0.0;
  std::vector<double> lw;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const auto& s = slots[k];
    if (s.flagged) {
      ++res.flagged;
      flagged_mass += pre[k];
    }
    if (!std::isfinite(s.log_w)) continue;
    lw.push_back(s.log_w);
    means.push_back(s.mean);
    covs.push_back(s.cov);
    res.ess.push_back(s.ess);
  }
  if (flagged_mass > 0.5)
    throw EstimateUnreliable("dls: mixands with ESS below 2 hold " + std::to_string(flagged_mass) + " of the pre-weight mass", 0.0);
  if (lw.empty()) throw Error("dls: every mixand weight vanished");
  if (res.flagged > 0) add_flag(flags, "dls_low_ess_mixands=" + std::to_string(res.flagged));
  res.gm = detail::mixture_from_log_weights(lw, std::move(means), std::move(covs));
  return res;
}

struct IgsResult {
  GaussianMixture gm;
  double omega = std::numeric_limits<double>::quiet_NaN();
  double ess = 0.0;
};

/// The ω-search samples reused for a single-shot constrained EM fit of the WEP posterior.
inline IgsResult igs_wep(const GaussianMixture& p_i, const GaussianMixture& p_j, WepRule rule, std::size_t n, Rng& rng, double tol = 1e-3,
                         Flags* flags = nullptr) {
  auto opt = optimize_omega(p_i, p_j, rule, n, rng, tol);
  const auto q = expand_quotient(p_i, p_j, make_wep_common(p_i, p_j, opt.omega));
  cache_numerators(opt.samples, q);
  return {sswem_fit(opt.samples, q, {}, flags), opt.omega, opt.ess};
}

/// Exact fusion: Laplace GM proposal, one global sample set, single-shot constrained EM.
inline IgsResult igs_exact(const QuotientPosterior& q, std::size_t n, Rng& rng, Flags* flags = nullptr) {
  if (!q.common()->is_exact()) throw Error("igs_exact requires exact common information");
  if (n < 2) throw Error("igs_exact: need at least two samples");
  const auto proposal = laplace_gm_proposal(q);
  WeightedSampleSet set;
  set.points = gm_sample(proposal, n, rng);
  const auto ns = static_cast<Index>(n);
  set.log_q.resize(ns);
  set.log_theta.resize(ns);
  std::vector<char> clamped(n, 0);
  parallel_for(n, [&](std::size_t s) {
    const Vec x = set.points.col(static_cast<Index>(s));
    double lu = q.common()->log_eval(x);
    if (!std::isfinite(lu)) {
      lu = kLogUnderflow;
      clamped[s] = 1;
    }
    set.log_q(static_cast<Index>(s)) = proposal.log_pdf(x);
    set.log_theta(static_cast<Index>(s)) = q.log_numerator(x) - lu - set.log_q(static_cast<Index>(s));
  });
  if (const auto c = std::count(clamped.begin(), clamped.end(), 1); c > 0) add_flag(flags, "igs_clamped_common_density=" + std::to_string(c));
  if (!std::isfinite(set.log_theta.maxCoeff())) throw Error("igs_exact: target vanishes at every sample");
  cache_numerators(set, q);
  const double e = ess_from_log(set.log_theta);
  return {sswem_fit(set, q, {}, flags), std::numeric_limits<double>::quiet_NaN(), e};
}

inline IgsResult igs_exact(const GaussianMixture& p_i, const GaussianMixture& p_j, const GaussianMixture& p_c, std::size_t n, Rng& rng,
                           Flags* flags = nullptr) {
  return igs_exact(expand_quotient(p_i, p_j, make_exact_common(p_c)), n, rng, flags);
}

/// The ω-search samples fitted with unconstrained weighted EM to M_i + M_j components.
inline IgsResult is_wem(const GaussianMixture& p_i, const GaussianMixture& p_j, WepRule rule, std::size_t n, Rng& rng, double tol = 1e-3,
                        Flags* flags = nullptr) {
  const auto opt = optimize_omega(p_i, p_j, rule, n, rng, tol);
  auto fit = wem_fit_restarts(opt.samples, p_i.size() + p_j.size(), 3, rng, {}, flags);
  return {std::move(fit.gm), opt.omega, opt.ess};
}

// ---- dispatch ----

enum class MethodKind { Dls, Igs, IsWem, Mmgd, Foci, NaiveBayes, LaplaceMixture };

inline const char* to_string(MethodKind k) {
  switch (k) {
    case MethodKind::Dls: return "dls";
    case MethodKind::Igs: return "igs";
    case MethodKind::IsWem: return "is-wem";
    case MethodKind::Mmgd: return "mmgd";
    case MethodKind::Foci: return "foci";
    case MethodKind::NaiveBayes: return "naive-bayes";
    case MethodKind::LaplaceMixture: return "laplace";
  }
  return "?";
}

inline MethodKind parse_method_kind(const std::string& s) {
  for (auto k : {MethodKind::Dls, MethodKind::Igs, MethodKind::IsWem, MethodKind::Mmgd, MethodKind::Foci, MethodKind::NaiveBayes,
                 MethodKind::LaplaceMixture})
    if (s == to_string(k)) return k;
  throw Error("unknown method '" + s + "' (expected dls, igs, is-wem, mmgd, foci, naive-bayes or laplace)");
}

struct FusionMethod {
  MethodKind kind = MethodKind::Dls;
  ProposalConfig proposal;              ///< DLS
  std::size_t n_samples = 1000;         ///< IGS and IS-WEM global sample count
  std::size_t omega_samples = 5000;     ///< ω-search sample count when DLS/FOCI/Laplace need ω
  double omega_tol = 1e-3;
  double prune_threshold = 1e-10;       ///< exact fusion only; 0 disables
  std::size_t max_components = 0;       ///< post-fusion Runnalls target; 0 disables
};

/// Either an exact common-information mixture or a WEP rule (optionally with ω already fixed).
struct FusionCommon {
  std::optional<GaussianMixture> exact;
  WepRule rule = WepRule::Minimax;
  std::optional<double> omega;

  static FusionCommon exact_gm(GaussianMixture gm) { return {std::move(gm), WepRule::Minimax, std::nullopt}; }
  static FusionCommon wep(WepRule r, std::optional<double> w = std::nullopt) { return {std::nullopt, r, w}; }
};

struct FusionReport {
  std::string method;
  std::optional<double> omega;
  std::optional<double> kld_vs_truth;
  std::vector<double> ess_per_mixand;
  double wall_ms = 0.0;
  Flags flags;
  GaussianMixture gm;
};

inline Json report_to_json(const FusionReport& r) {
  Json j;
  j["method"] = r.method;
  j["omega"] = r.omega ? Json(*r.omega) : Json(nullptr);
  if (r.kld_vs_truth) j["kld_vs_truth"] = *r.kld_vs_truth;
  j["ess_per_mixand"] = r.ess_per_mixand;
  j["wall_ms"] = r.wall_ms;
  j["flags"] = r.flags;
  j["gm"] = gm_to_json(r.gm);
  return j;
}

/// Fuses p_i and p_j. Draws one root seed from rng; mixand streams derive from it.
inline FusionReport fuse(const GaussianMixture& p_i, const GaussianMixture& p_j, const FusionCommon& common, const FusionMethod& method,
                         Rng& rng) {
  if (p_i.dim() != p_j.dim()) throw DimensionMismatch("fuse: p_i and p_j dimensions differ");
  if (common.exact && common.exact->dim() != p_i.dim()) throw DimensionMismatch("fuse: common information dimension differs");
  if (common.omega && !(*common.omega >= 0.0 && *common.omega <= 1.0)) throw Error("fuse: omega must lie in [0, 1]");
  const auto t0 = std::chrono::steady_clock::now();
  FusionReport rep;
  rep.method = to_string(method.kind);
  const std::uint64_t root = rng();
  Rng local(root);
  const bool exact = common.exact.has_value();

  // ω for methods that need one and do not search it themselves
  const auto resolve_omega = [&]() -> double {
    if (common.omega) return *common.omega;
    return optimize_omega(p_i, p_j, common.rule, method.omega_samples, local, method.omega_tol).omega;
  };
  const auto posterior = [&](double omega) {
    if (exact) {
      auto q = expand_quotient(p_i, p_j, make_exact_common(*common.exact));
      return prune_by_bound(q, method.prune_threshold);
    }
    return expand_quotient(p_i, p_j, make_wep_common(p_i, p_j, omega));
  };

  switch (method.kind) {
    case MethodKind::NaiveBayes:
      rep.gm = naive_bayes_fuse(p_i, p_j);
      break;
    case MethodKind::Mmgd:
      if (!exact) throw Error("fuse: mmgd requires exact common information");
      rep.gm = mmgd_fuse(p_i, p_j, *common.exact, &rep.flags);
      break;
    case MethodKind::Foci:
      if (exact) throw Error("fuse: foci requires a WEP rule or omega, not exact common information");
      rep.omega = resolve_omega();
      rep.gm = foci_fuse(p_i, p_j, *rep.omega);
      break;
    case MethodKind::Dls: {
      if (!exact) rep.omega = resolve_omega();
      auto r = dls(posterior(rep.omega.value_or(0.0)), method.proposal, local(), &rep.flags);
      rep.gm = std::move(r.gm);
      rep.ess_per_mixand = std::move(r.ess);
      break;
    }
    case MethodKind::LaplaceMixture:
      if (!exact) rep.omega = resolve_omega();
      rep.gm = laplace_mixture(posterior(rep.omega.value_or(0.0)), {}, &rep.flags);
      break;
    case MethodKind::Igs: {
      IgsResult r;
      if (exact) {
        r = igs_exact(posterior(0.0), method.n_samples, local, &rep.flags);
      } else {
        if (common.omega) add_flag(&rep.flags, "igs_ignores_fixed_omega");
        r = igs_wep(p_i, p_j, common.rule, method.n_samples, local, method.omega_tol, &rep.flags);
        rep.omega = r.omega;
      }
      rep.gm = std::move(r.gm);
      rep.ess_per_mixand = {r.ess};
      break;
    }
    case MethodKind::IsWem: {
      if (exact) throw Error("fuse: is-wem requires a WEP rule");
      auto r = is_wem(p_i, p_j, common.rule, method.n_samples, local, method.omega_tol, &rep.flags);
      rep.gm = std::move(r.gm);
      rep.omega = r.omega;
      rep.ess_per_mixand = {r.ess};
      break;
    }
  }
  if (method.max_components > 0 && rep.gm.size() > method.max_components) {
    add_flag(&rep.flags, "runnalls_compressed_from=" + std::to_string(rep.gm.size()));
    rep.gm = runnalls_compress(rep.gm, method.max_components);
  }
  rep.gm = rep.gm.normalized();
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---- channel filters ----

/// A node's belief plus, per neighbor, the common information shared over that link.
struct NodeState {
  int id = 0;
  GaussianMixture belief;
  std::map<int, GaussianMixture> channels;

  static NodeState with_prior(int id, const GaussianMixture& prior, const std::vector<int>& neighbors) {
    NodeState n{id, prior.normalized(), {}};
    for (int k : neighbors) n.channels.emplace(k, n.belief);
    return n;
  }
};

/// Exact fusion of the belief with a received mixture over the neighbor's channel; the
/// fused result becomes both the new belief and the new channel content.
inline NodeState channel_update(const NodeState& node, int neighbor, const GaussianMixture& received, const FusionMethod& method, Rng& rng,
                                Flags* flags = nullptr) {
  const auto it = node.channels.find(neighbor);
  if (it == node.channels.end()) throw Error("channel_update: node " + std::to_string(node.id) + " has no channel to " + std::to_string(neighbor));
  auto rep = fuse(node.belief, received, FusionCommon::exact_gm(it->second), method, rng);
  if (flags != nullptr) flags->insert(flags->end(), rep.flags.begin(), rep.flags.end());
  NodeState out = node;
  out.belief = rep.gm;
  out.channels[neighbor] = std::move(rep.gm);
  return out;
}

}  // namespace gmddf
