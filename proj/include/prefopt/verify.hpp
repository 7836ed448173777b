#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prefopt/domain.hpp"
#include "prefopt/environment.hpp"
#include "prefopt/objectives.hpp"
#include "prefopt/policy.hpp"
#include "prefopt/reward_augment.hpp"
#include "prefopt/rng.hpp"
#include "prefopt/simplex_search.hpp"

namespace prefopt {

struct CheckResult {
  explicit CheckResult(std::string check_name) : name(std::move(check_name)) {}

  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  double worst = 0.0;  // largest observed error where the check is numeric
  std::string first_failure;

  void record(bool ok, double err, const std::string& what) {
    worst = std::max(worst, err);
    if (ok) {
      ++passed;
    } else {
      if (failed == 0) first_failure = what;
      ++failed;
    }
  }
};

struct SuiteReport {
  std::vector<CheckResult> checks;

  bool ok() const {
    for (const auto& c : checks)
      if (c.failed) return false;
    return true;
  }
  std::size_t passed() const {
    std::size_t n = 0;
    for (const auto& c : checks) n += c.passed;
    return n;
  }
  std::size_t failed() const {
    std::size_t n = 0;
    for (const auto& c : checks) n += c.failed;
    return n;
  }
  void append(const SuiteReport& other) { checks.insert(checks.end(), other.checks.begin(), other.checks.end()); }

  ordered_json to_json() const {
    ordered_json j;
    j["passed"] = passed();
    j["failed"] = failed();
    ordered_json arr = ordered_json::array();
    for (const auto& c : checks) {
      ordered_json e{{"name", c.name}, {"passed", c.passed}, {"failed", c.failed}, {"worst", c.worst}};
      if (c.failed) e["first_failure"] = c.first_failure;
      arr.push_back(std::move(e));
    }
    j["checks"] = std::move(arr);
    return j;
  }
};

// Random instance for gradient checks: Gaussian features with variance 1/d,
// theta of order beta so logits stay O(1), a random tabular reference and
// uniformly drawn comparisons and reference samples.
struct RandomInstance {
  std::shared_ptr<const FeatureMap> features;
  LogLinearPolicy policy;
  TabularPolicy ref;
  std::vector<Comparison> comps;
  std::vector<ResponseSample> ref_samples;
  Eigen::VectorXd prompt_weights;
  double beta;
  double alpha;
};

inline TabularPolicy random_tabular(std::size_t nx, std::size_t ny, Rng& rng, double spread = 1.0) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
  for (Eigen::Index x = 0; x < p.rows(); ++x) {
    Eigen::VectorXd lw(p.cols());
    for (Eigen::Index y = 0; y < p.cols(); ++y) lw[y] = rng.normal(0.0, spread);
    const double lse = log_sum_exp(lw);
    p.row(x) = (lw.array() - lse).exp().matrix().transpose();
    p.row(x) /= p.row(x).sum();
  }
  return TabularPolicy(std::move(p));
}

inline Eigen::VectorXd random_simplex(std::size_t n, Rng& rng) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = -std::log(1.0 - rng.uniform());
  return w / w.sum();
}

inline RandomInstance random_instance(Rng& rng, std::size_t max_prompts = 6, std::size_t max_responses = 6,
                                      std::size_t max_dim = 16) {
  const std::size_t nx = 2 + rng.index(max_prompts - 1);
  const std::size_t ny = 2 + rng.index(max_responses - 1);
  const std::size_t d = 1 + rng.index(max_dim);
  const double betas[] = {0.1, 1.0};
  const double alphas[] = {0.0, 0.01, 1.0};
  const double beta = betas[rng.index(2)];
  const double alpha = alphas[rng.index(3)];
  auto features = std::make_shared<const FeatureMap>(
      FeatureMap::random_gaussian(nx, ny, d, rng.engine()(), 1.0 / std::sqrt(static_cast<double>(d))));
  Eigen::VectorXd theta(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = rng.normal(0.0, beta);
  LogLinearPolicy policy(features, theta, beta);
  TabularPolicy ref = random_tabular(nx, ny, rng);
  std::vector<Comparison> comps(3 + rng.index(10));
  for (auto& c : comps) {
    c.prompt = rng.index(nx);
    c.chosen = rng.index(ny);
    c.rejected = rng.index(ny - 1);
    if (c.rejected >= c.chosen) ++c.rejected;
  }
  std::vector<ResponseSample> samples(2 + rng.index(10));
  for (auto& s : samples) {
    s.prompt = rng.index(nx);
    s.response = sample_response(ref, s.prompt, rng);
  }
  return {std::move(features), std::move(policy), std::move(ref), std::move(comps), std::move(samples),
          random_simplex(nx, rng), beta, alpha};
}

struct GradcheckResult {
  std::size_t instances = 0;
  std::size_t failures = 0;
  double max_rel_err = 0.0;
  double tol = 0.0;
  double h = 0.0;
  std::vector<ordered_json> details;

  bool ok() const { return failures == 0; }

  ordered_json to_json() const {
    ordered_json j{{"instances", instances}, {"failures", failures}, {"max_rel_err", max_rel_err},
                   {"tol", tol},             {"h", h}};
    j["details"] = details;
    return j;
  }
};

// Analytic DPO and SELM gradients (both expectation modes) against central
// differences of the corresponding losses.
inline GradcheckResult run_gradcheck(std::size_t instances, double tol, std::uint64_t seed, double h = 1e-5) {
  GradcheckResult out;
  out.tol = tol;
  out.h = h;
  const Rng root(seed, 0x67c);
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = root.split(i);
    const auto inst = random_instance(rng);
    const auto expectation = ReferenceExpectation{inst.prompt_weights, inst.ref_samples};
    auto policy_at = [&](const Eigen::VectorXd& th) { return inst.policy.with_theta(th); };
    const std::span<const Comparison> comps(inst.comps);
    ordered_json detail{{"instance", i},
                        {"prompts", inst.policy.num_prompts()},
                        {"responses", inst.policy.num_responses()},
                        {"dim", inst.policy.dim()},
                        {"beta", inst.beta},
                        {"alpha", inst.alpha}};
    double worst = 0.0;
    {
      const ObjectiveConfig cfg{inst.beta, inst.alpha, ExpectationMode::exact_tabular, AlphaConvention::times_beta};
      const auto numeric = finite_diff_gradient(
          [&](const Eigen::VectorXd& th) { return dpo_loss(policy_at(th), inst.ref, cfg, comps); }, inst.policy.theta(),
          h);
      const auto rep = make_gradient_report(dpo_gradient(inst.policy, inst.ref, cfg, comps), numeric, h);
      detail["dpo"] = rep.max_rel_err;
      worst = std::max(worst, rep.max_rel_err);
    }
    for (const auto mode : {ExpectationMode::exact_tabular, ExpectationMode::recorded_samples}) {
      const ObjectiveConfig cfg{inst.beta, inst.alpha, mode, AlphaConvention::times_beta};
      const auto numeric = finite_diff_gradient(
          [&](const Eigen::VectorXd& th) { return selm_loss(policy_at(th), inst.ref, cfg, comps, expectation); },
          inst.policy.theta(), h);
      const auto rep = make_gradient_report(selm_gradient(inst.policy, inst.ref, cfg, comps, expectation), numeric, h);
      detail[mode == ExpectationMode::exact_tabular ? "selm_exact" : "selm_recorded"] = rep.max_rel_err;
      worst = std::max(worst, rep.max_rel_err);
    }
    detail["max_rel_err"] = worst;
    detail["pass"] = worst <= tol;
    out.max_rel_err = std::max(out.max_rel_err, worst);
    if (worst > tol) ++out.failures;
    out.details.push_back(std::move(detail));
    ++out.instances;
  }
  return out;
}

inline double sup_norm_diff(const TabularPolicy& a, const TabularPolicy& b) {
  return (a.probs() - b.probs()).cwiseAbs().maxCoeff();
}

// Closed-form identities of the objectives on random instances.
inline SuiteReport verify_identities(std::uint64_t seed, std::size_t instances = 20) {
  SuiteReport rep;
  CheckResult tilt_opt{"tilt_beats_simplex_search"};
  CheckResult closed{"inner_value_closed_form"};
  CheckResult min_ref{"min_reward_policy_is_reference"};
  CheckResult norm{"min_reward_normalizer_is_one"};
  CheckResult reparam{"log_partition_of_implicit_reward_is_zero"};
  CheckResult kl_id{"expected_implicit_reward_is_negative_kl"};
  CheckResult anchor{"dpo_loss_at_reference_is_ln2"};
  CheckResult opt_grad{"optimism_gradient_vanishes_at_reference"};
  CheckResult reduce{"alpha_zero_selm_equals_dpo"};
  const Rng root(seed, 0x1de);
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = root.split(i);
    const std::string tag = "instance " + std::to_string(i);
    const std::size_t nx = 1 + rng.index(3);
    const std::size_t ny = 2 + rng.index(3);
    const double beta = rng.uniform() < 0.5 ? 0.1 : 1.0;
    const TabularPolicy ref = random_tabular(nx, ny, rng);
    Eigen::MatrixXd r(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
    for (Eigen::Index k = 0; k < r.size(); ++k) r.data()[k] = rng.normal();
    const RewardFunction reward(r);
    const Eigen::VectorXd w = random_simplex(nx, rng);

    const TabularPolicy tilt = exponential_tilt(ref, reward, beta);
    const double at_tilt = inner_value(tilt, ref, beta, reward, w);
    if (i < 5) {
      const auto [pi, brute] = brute_force_inner_max(ref, beta, reward, w, 100);
      tilt_opt.record(at_tilt >= brute - 1e-6, std::max(0.0, brute - at_tilt), tag);
    }
    const double cf = inner_value_closed_form(ref, beta, reward, w);
    closed.record(std::abs(cf - at_tilt) <= 1e-10, std::abs(cf - at_tilt), tag);

    const TabularPolicy rho = random_tabular(nx, ny, rng, 2.0);
    const auto mr = min_reward_policy(rho, ref, beta);
    const double sup = sup_norm_diff(mr.policy, ref);
    min_ref.record(sup <= 1e-10, sup, tag);
    const double zdev = (mr.log_normalizer.array().exp() - 1.0).abs().maxCoeff();
    norm.record(zdev <= 1e-12, zdev, tag);

    auto features = std::make_shared<const FeatureMap>(FeatureMap::random_gaussian(nx, ny, 4, rng.engine()(), 1.0));
    Eigen::VectorXd theta(4);
    for (Eigen::Index k = 0; k < 4; ++k) theta[k] = rng.normal(0.0, beta);
    const LogLinearPolicy pol(features, theta, beta);
    const LogLinearPolicy pol_ref(features, Eigen::VectorXd::Zero(4), beta);
    const TabularPolicy ref_ll = to_tabular(pol_ref);
    const RewardFunction r_hat = implicit_reward_table(pol, ref_ll, beta);
    for (std::size_t x = 0; x < nx; ++x) {
      Eigen::VectorXd lw = ref_ll.log_probs(x);
      lw += r_hat.values.row(static_cast<Eigen::Index>(x)).transpose() / beta;
      const double v = beta * log_sum_exp(lw);
      reparam.record(std::abs(v) <= 1e-10, std::abs(v), tag);
      Eigen::VectorXd one = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx));
      one[static_cast<Eigen::Index>(x)] = 1.0;
      const double lhs = r_hat.values.row(static_cast<Eigen::Index>(x)).dot(ref_ll.distribution(x));
      const double rhs = -beta * kl_divergence(ref_ll, pol, one);
      kl_id.record(std::abs(lhs - rhs) <= 1e-10, std::abs(lhs - rhs), tag);
    }

    std::vector<Comparison> comps;
    for (std::size_t k = 0; k < 5; ++k) {
      const std::size_t yw = rng.index(ny);
      std::size_t yl = rng.index(ny - 1);
      if (yl >= yw) ++yl;
      comps.push_back({rng.index(nx), yw, yl});
    }
    const ObjectiveConfig cfg{beta, 1.0, ExpectationMode::exact_tabular, AlphaConvention::times_beta};
    const double l0 = dpo_loss(pol_ref, ref_ll, cfg, comps);
    anchor.record(std::abs(l0 - std::log(2.0)) <= 1e-12, std::abs(l0 - std::log(2.0)), tag);
    const double g0 =
        reference_logprob_gradient(pol_ref, ref_ll, ReferenceExpectation::exact(w), ExpectationMode::exact_tabular)
            .cwiseAbs()
            .maxCoeff();
    opt_grad.record(g0 <= 1e-10, g0, tag);
    const ObjectiveConfig zero{beta, 0.0, ExpectationMode::exact_tabular, AlphaConvention::times_beta};
    const bool same = selm_loss(pol, ref_ll, zero, comps, ReferenceExpectation::exact(w)) ==
                          dpo_loss(pol, ref_ll, zero, comps) &&
                      selm_gradient(pol, ref_ll, zero, comps, ReferenceExpectation::exact(w)) ==
                          dpo_gradient(pol, ref_ll, zero, comps);
    reduce.record(same, same ? 0.0 : 1.0, tag);
  }
  rep.checks = {tilt_opt, closed, min_ref, norm, reparam, kl_id, anchor, opt_grad, reduce};
  return rep;
}

// Feedback simulator calibration: Bradley-Terry win rates inside a z-sigma
// binomial band, saturated labels, noiseless ranking and judge range.
inline SuiteReport verify_oracle(std::uint64_t seed, std::size_t pairs = 5, std::size_t n = 20000, double z = 4.0) {
  SuiteReport rep;
  CheckResult bt{"bradley_terry_win_rate"};
  CheckResult sat{"saturated_labels"};
  CheckResult rank{"noiseless_ranking"};
  CheckResult judge{"judge_scale"};
  const Rng root(seed, 0x0c1);
  for (std::size_t i = 0; i < pairs; ++i) {
    Rng rng = root.split(i);
    const Environment env = Environment::random_gaussian(2, 4, rng.engine()(), 1.5);
    const std::size_t x = rng.index(2);
    const std::size_t y1 = rng.index(4);
    const std::size_t y2 = (y1 + 1 + rng.index(3)) % 4;
    const double p = sigmoid(env.r_star(x, y1) - env.r_star(x, y2));
    std::size_t wins = 0;
    for (std::size_t k = 0; k < n; ++k) wins += index_of(sample_preference(env, x, y1, y2, rng).chosen, 4, "chosen") == y1;
    const double rate = static_cast<double>(wins) / static_cast<double>(n);
    const double band = z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    bt.record(std::abs(rate - p) <= band, std::abs(rate - p), "pair " + std::to_string(i));
  }
  {
    Rng rng = root.split(1000);
    Eigen::MatrixXd r(1, 2);
    r << 50.0, -50.0;
    const Environment env = Environment::from_table(r);
    std::size_t correct = 0;
    for (std::size_t k = 0; k < 1000; ++k)
      correct += index_of(sample_preference(env, 0, k % 2, 1 - k % 2, rng).chosen, 2, "chosen") == 0;
    sat.record(correct == 1000, static_cast<double>(1000 - correct), "saturated gap");
  }
  for (std::size_t i = 0; i < 20; ++i) {
    Rng rng = root.split(2000 + i);
    const Environment env = Environment::random_gaussian(1, 6, rng.engine()());
    const std::vector<std::size_t> cands{rng.index(6), rng.index(6), rng.index(6)};
    const auto rr = rank_candidates(env, 0, cands, rng);
    bool ok = true;
    for (auto c : cands) ok = ok && env.r_star(0, cands[rr.best]) >= env.r_star(0, c) && env.r_star(0, cands[rr.worst]) <= env.r_star(0, c);
    rank.record(ok, ok ? 0.0 : 1.0, "ranking " + std::to_string(i));
    int lo = env.g_max + 1;
    int hi = 0;
    for (std::size_t y = 0; y < 6; ++y) {
      lo = std::min(lo, judge_score(env, 0, y));
      hi = std::max(hi, judge_score(env, 0, y));
    }
    judge.record(lo == 1 && hi == env.g_max, 0.0, "judge " + std::to_string(i));
  }
  rep.checks = {bt, sat, rank, judge};
  return rep;
}

// Laws of the reward augmentation over the full 10 x 10 score grid, plus the
// restricted equivalence between goal matching and goal distance.
inline SuiteReport verify_augment(std::uint64_t seed) {
  SuiteReport rep;
  CheckResult swap{"swap_law"};
  CheckResult consistency{"goal_consistency"};
  CheckResult doubling{"doubling_law"};
  CheckResult roundtrip{"jsonl_round_trip"};
  CheckResult equivalence{"restricted_goal_equivalence"};
  const int g_max = 10;
  PreferenceDataset grid;
  std::size_t ties = 0;
  for (int a = 1; a <= g_max; ++a) {
    for (int b = 1; b <= g_max; ++b) {
      auto t = make_triple("p" + std::to_string(a) + "_" + std::to_string(b), 0, 0, 1);
      t.chosen_score = a;
      t.rejected_score = b;
      ties += a == b;
      const auto out = augment_pair(t);
      const std::string tag = "scores " + std::to_string(a) + "/" + std::to_string(b);
      if (a == b) {
        swap.record(out.empty(), 0.0, tag);
        grid.triples.push_back(std::move(t));
        continue;
      }
      const bool s = out.size() == 2 && out[0].goal == a && out[1].goal == b &&
                     out[0].triple.chosen == t.chosen && out[0].triple.rejected == t.rejected &&
                     out[1].triple.chosen == t.rejected && out[1].triple.rejected == t.chosen;
      swap.record(s, s ? 0.0 : 1.0, tag);
      bool c = true;
      for (const auto& p : out) {
        const int sc = p.triple.chosen == t.chosen ? a : b;
        const int sr = p.triple.rejected == t.chosen ? a : b;
        c = c && goal_match_reward(p.goal, sc) == 1 && goal_match_reward(p.goal, sr) == 0;
      }
      consistency.record(c, c ? 0.0 : 1.0, tag);
      grid.triples.push_back(std::move(t));
    }
  }
  const auto aug = augment_dataset(grid);
  doubling.record(aug.size() == 2 * (grid.size() - ties), 0.0, "grid");
  std::ostringstream first;
  write_augmented(first, aug);
  std::istringstream in(first.str());
  std::ostringstream second;
  write_augmented(second, parse_augmented(in, g_max));
  roundtrip.record(first.str() == second.str(), 0.0, "grid");

  const Rng root(seed, 0xa96);
  for (std::size_t i = 0; i < 200; ++i) {
    Rng rng = root.split(i);
    const std::size_t ny = 1 + rng.index(6);
    std::vector<int> scores(ny);
    for (auto& s : scores) s = 1 + static_cast<int>(rng.index(g_max));
    for (int g = 1; g <= g_max; ++g) {
      if (std::find(scores.begin(), scores.end(), g) == scores.end()) continue;
      const bool eq = goal_reward_maximizers(scores, g) == goal_distance_minimizers(scores, g);
      equivalence.record(eq, eq ? 0.0 : 1.0, "instance " + std::to_string(i) + " goal " + std::to_string(g));
    }
  }
  rep.checks = {swap, consistency, doubling, roundtrip, equivalence};
  return rep;
}

inline SuiteReport verify_suite(const std::string& suite, std::uint64_t seed) {
  if (suite == "identities") return verify_identities(seed);
  if (suite == "oracle") return verify_oracle(seed);
  if (suite == "augment") return verify_augment(seed);
  if (suite == "all") {
    SuiteReport rep = verify_identities(seed);
    rep.append(verify_oracle(seed));
    rep.append(verify_augment(seed));
    const auto g = run_gradcheck(20, 1e-6, seed);
    CheckResult gc{"gradient_fidelity"};
    for (const auto& d : g.details) gc.record(d["pass"].get<bool>(), d["max_rel_err"].get<double>(), d.dump());
    rep.checks.push_back(gc);
    return rep;
  }
  throw ValidationError("--suite must be identities, oracle, augment or all");
}

}  // namespace prefopt
