#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prefopt/domain.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/numeric.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

enum class ExpectationMode { exact_tabular, recorded_samples };

// How the optimism coefficient enters the loss: alpha * beta (default, matches
// the reward-free objective) or plain alpha (as written in the practical loop).
enum class AlphaConvention { times_beta, plain };

struct ObjectiveConfig {
  double beta = 1.0;
  double alpha = 0.0;
  ExpectationMode expectation_mode = ExpectationMode::exact_tabular;
  AlphaConvention alpha_convention = AlphaConvention::times_beta;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be positive");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be nonnegative");
  }

  double optimism_weight() const { return alpha_convention == AlphaConvention::times_beta ? alpha * beta : alpha; }
};

struct ResponseSample {
  std::size_t prompt;
  std::size_t response;
  friend bool operator==(const ResponseSample&, const ResponseSample&) = default;
};

// Data for E_{x, y~ref}[.]: prompt weights for exact enumeration, recorded
// (x, y~ref) draws for the sample average. The mode in ObjectiveConfig picks one.
struct ReferenceExpectation {
  Eigen::VectorXd prompt_weights;
  std::vector<ResponseSample> samples;

  static ReferenceExpectation exact(Eigen::VectorXd weights) { return {std::move(weights), {}}; }

  // Prompt weights equal to each prompt's frequency in the comparisons.
  static ReferenceExpectation over_prompts(std::span<const Comparison> comps, std::size_t num_prompts) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_prompts));
    for (const auto& c : comps) w[static_cast<Eigen::Index>(c.prompt)] += 1.0;
    if (!comps.empty()) w /= static_cast<double>(comps.size());
    return {std::move(w), {}};
  }

  static ReferenceExpectation recorded(std::vector<ResponseSample> samples) { return {{}, std::move(samples)}; }
};

struct GradientReport {
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
  double max_rel_err = 0.0;
  double h = 0.0;

  ordered_json to_json() const {
    ordered_json j;
    j["analytic"] = std::vector<double>(analytic.data(), analytic.data() + analytic.size());
    j["numeric"] = std::vector<double>(numeric.data(), numeric.data() + numeric.size());
    j["max_rel_err"] = max_rel_err;
    j["h"] = h;
    return j;
  }
};

namespace detail {

template <ConditionalPolicy P>
Eigen::MatrixXd log_prob_table(const P& p) {
  Eigen::MatrixXd t(p.num_prompts(), p.num_responses());
  for (std::size_t x = 0; x < p.num_prompts(); ++x) t.row(static_cast<Eigen::Index>(x)) = p.log_probs(x).transpose();
  return t;
}

inline void require_nonempty(std::span<const Comparison> comps) {
  if (comps.empty()) throw ValidationError("preference dataset is empty");
}

inline void check_comparisons(std::span<const Comparison> comps, std::size_t nx, std::size_t ny) {
  for (const auto& c : comps) {
    if (c.prompt >= nx || c.chosen >= ny || c.rejected >= ny) throw ValidationError("comparison index out of range");
  }
}

// Implicit-reward margin r_hat(x, y_w) - r_hat(x, y_l) for each comparison.
inline Eigen::VectorXd implicit_margins(const Eigen::MatrixXd& lp, const Eigen::MatrixXd& lr, double beta,
                                        std::span<const Comparison> comps) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(comps.size()));
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto x = static_cast<Eigen::Index>(comps[i].prompt);
    const auto w = static_cast<Eigen::Index>(comps[i].chosen);
    const auto l = static_cast<Eigen::Index>(comps[i].rejected);
    if (lp(x, w) == kNegInf || lp(x, l) == kNegInf || lr(x, w) == kNegInf || lr(x, l) == kNegInf) {
      throw SupportError("support violation in comparison " + std::to_string(i) + " (prompt " +
                         std::to_string(comps[i].prompt) + ")");
    }
    m[static_cast<Eigen::Index>(i)] = beta * ((lp(x, w) - lr(x, w)) - (lp(x, l) - lr(x, l)));
  }
  return m;
}

}  // namespace detail

inline double bt_preference_prob(double r_w, double r_l) {
  if (!std::isfinite(r_w) || !std::isfinite(r_l)) throw ValidationError("Bradley-Terry inputs must be finite");
  return sigmoid(r_w - r_l);
}

// Mean of -log sigma(r(x, y_w) - r(x, y_l)).
inline double reward_nll(const RewardFunction& reward, std::span<const Comparison> comps) {
  detail::require_nonempty(comps);
  detail::check_comparisons(comps, reward.num_prompts(), reward.num_responses());
  double total = 0.0;
  for (const auto& c : comps) total += softplus(reward(c.prompt, c.rejected) - reward(c.prompt, c.chosen));
  return total / static_cast<double>(comps.size());
}

template <ConditionalPolicy P, ConditionalPolicy Q>
double implicit_reward(const P& policy, const Q& ref, double beta, std::size_t x, std::size_t y) {
  return beta * (log_prob(policy, x, y) - log_prob(ref, x, y));
}

template <ConditionalPolicy P, ConditionalPolicy Q>
double dpo_loss(const P& policy, const Q& ref, const ObjectiveConfig& config, std::span<const Comparison> comps) {
  config.validate();
  detail::require_nonempty(comps);
  check_same_shape(policy, ref);
  detail::check_comparisons(comps, policy.num_prompts(), policy.num_responses());
  const Eigen::VectorXd m =
      detail::implicit_margins(detail::log_prob_table(policy), detail::log_prob_table(ref), config.beta, comps);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) total += softplus(-m[i]);
  return total / static_cast<double>(comps.size());
}

// E_{x, y~ref}[log pi(y|x)], by enumeration or by averaging recorded draws.
template <ConditionalPolicy P, ConditionalPolicy Q>
double reference_expected_logprob(const P& policy, const Q& ref, const ReferenceExpectation& expectation,
                                  ExpectationMode mode) {
  check_same_shape(policy, ref);
  if (mode == ExpectationMode::recorded_samples) {
    if (expectation.samples.empty()) throw ValidationError("no recorded reference samples");
    double total = 0.0;
    for (const auto& s : expectation.samples) total += log_prob(policy, s.prompt, s.response);
    return total / static_cast<double>(expectation.samples.size());
  }
  const auto& w = expectation.prompt_weights;
  if (w.size() == 0) throw ValidationError("no prompts for the reference expectation");
  if (static_cast<std::size_t>(w.size()) != policy.num_prompts()) throw ValidationError("prompt weights have the wrong length");
  double total = 0.0;
  for (std::size_t x = 0; x < policy.num_prompts(); ++x) {
    const double wx = w[static_cast<Eigen::Index>(x)];
    if (wx == 0.0) continue;
    const Eigen::VectorXd pr = ref.distribution(x);
    const Eigen::VectorXd lp = policy.log_probs(x);
    double inner = 0.0;
    for (Eigen::Index y = 0; y < pr.size(); ++y) {
      if (pr[y] == 0.0) continue;
      if (lp[y] == kNegInf) {
        throw SupportError("policy has no support at prompt " + std::to_string(x) + ", response " + std::to_string(y));
      }
      inner += pr[y] * lp[y];
    }
    total += wx * inner;
  }
  return total;
}

// dpo_loss + weight * E_{x, y~ref}[log pi(y|x)], weight = alpha*beta by default.
template <ConditionalPolicy P, ConditionalPolicy Q>
double selm_loss(const P& policy, const Q& ref, const ObjectiveConfig& config, std::span<const Comparison> comps,
                 const ReferenceExpectation& expectation) {
  const double dpo = dpo_loss(policy, ref, config, comps);
  const double weight = config.optimism_weight();
  if (weight == 0.0) return dpo;
  return dpo + weight * reference_expected_logprob(policy, ref, expectation, config.expectation_mode);
}

template <ConditionalPolicy Q>
Eigen::VectorXd dpo_gradient(const LogLinearPolicy& policy, const Q& ref, const ObjectiveConfig& config,
                             std::span<const Comparison> comps) {
  config.validate();
  detail::require_nonempty(comps);
  check_same_shape(policy, ref);
  detail::check_comparisons(comps, policy.num_prompts(), policy.num_responses());
  const Eigen::VectorXd m =
      detail::implicit_margins(detail::log_prob_table(policy), detail::log_prob_table(ref), config.beta, comps);
  std::vector<Eigen::MatrixXd> score_cache(policy.num_prompts());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.dim()));
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto& c = comps[i];
    auto& s = score_cache[c.prompt];
    if (s.size() == 0) s = policy.scores(c.prompt);
    // sigma(r_hat(y_l) - r_hat(y_w)) weights the score difference.
    const double weight = sigmoid(-m[static_cast<Eigen::Index>(i)]);
    grad -= config.beta * weight *
            (s.col(static_cast<Eigen::Index>(c.chosen)) - s.col(static_cast<Eigen::Index>(c.rejected)));
  }
  return grad / static_cast<double>(comps.size());
}

// Gradient of E_{x, y~ref}[log pi_theta(y|x)] with respect to theta.
template <ConditionalPolicy Q>
Eigen::VectorXd reference_logprob_gradient(const LogLinearPolicy& policy, const Q& ref,
                                           const ReferenceExpectation& expectation, ExpectationMode mode) {
  check_same_shape(policy, ref);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.dim()));
  if (mode == ExpectationMode::recorded_samples) {
    if (expectation.samples.empty()) throw ValidationError("no recorded reference samples");
    std::vector<Eigen::MatrixXd> score_cache(policy.num_prompts());
    for (const auto& smp : expectation.samples) {
      auto& s = score_cache.at(smp.prompt);
      if (s.size() == 0) s = policy.scores(smp.prompt);
      grad += s.col(static_cast<Eigen::Index>(smp.response));
    }
    return grad / static_cast<double>(expectation.samples.size());
  }
  const auto& w = expectation.prompt_weights;
  if (static_cast<std::size_t>(w.size()) != policy.num_prompts()) throw ValidationError("prompt weights have the wrong length");
  for (std::size_t x = 0; x < policy.num_prompts(); ++x) {
    const double wx = w[static_cast<Eigen::Index>(x)];
    if (wx == 0.0) continue;
    grad += wx * (policy.scores(x) * ref.distribution(x));
  }
  return grad;
}

// Importance-weighted form of the same gradient from draws y ~ pi_theta:
// mean of exp(-r_hat(x, y)/beta) * grad log pi_theta(y|x).
template <ConditionalPolicy Q>
Eigen::VectorXd reference_logprob_gradient_importance(const LogLinearPolicy& policy, const Q& ref, double beta,
                                                      std::span<const ResponseSample> policy_samples) {
  if (policy_samples.empty()) throw ValidationError("no policy samples");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.dim()));
  for (const auto& s : policy_samples) {
    const double r_hat = implicit_reward(policy, ref, beta, s.prompt, s.response);
    grad += std::exp(-r_hat / beta) * policy.score(s.prompt, s.response);
  }
  return grad / static_cast<double>(policy_samples.size());
}

template <ConditionalPolicy Q>
Eigen::VectorXd selm_gradient(const LogLinearPolicy& policy, const Q& ref, const ObjectiveConfig& config,
                              std::span<const Comparison> comps, const ReferenceExpectation& expectation) {
  Eigen::VectorXd grad = dpo_gradient(policy, ref, config, comps);
  const double weight = config.optimism_weight();
  if (weight == 0.0) return grad;
  grad += weight * reference_logprob_gradient(policy, ref, expectation, config.expectation_mode);
  return grad;
}

namespace detail {
inline void check_weights(const Eigen::VectorXd& w, std::size_t nx) {
  if (static_cast<std::size_t>(w.size()) != nx) throw ValidationError("prompt weights have the wrong length");
  if ((w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-9) {
    throw ValidationError("prompt weights must be a probability vector");
  }
}

template <ConditionalPolicy P>
double expected_reward(const P& policy, const RewardFunction& reward, const Eigen::VectorXd& w) {
  double total = 0.0;
  for (std::size_t x = 0; x < policy.num_prompts(); ++x) {
    const double wx = w[static_cast<Eigen::Index>(x)];
    if (wx == 0.0) continue;
    total += wx * reward.values.row(static_cast<Eigen::Index>(x)).dot(policy.distribution(x));
  }
  return total;
}
}  // namespace detail

// J(pi) = E_{x~w, y~pi}[r] - beta * KL(pi || ref).
template <ConditionalPolicy P, ConditionalPolicy Q>
double rlhf_objective(const P& policy, const Q& ref, double beta, const RewardFunction& reward,
                      const Eigen::VectorXd& prompt_weights) {
  detail::check_weights(prompt_weights, policy.num_prompts());
  return detail::expected_reward(policy, reward, prompt_weights) - beta * kl_divergence(policy, ref, prompt_weights);
}

// F(pi; r) = E[r(x, y) - r(x, y')] - beta * KL(pi || ref), y ~ pi, y' ~ ref.
template <ConditionalPolicy P, ConditionalPolicy Q>
double inner_value(const P& policy, const Q& ref, double beta, const RewardFunction& reward,
                   const Eigen::VectorXd& prompt_weights) {
  return rlhf_objective(policy, ref, beta, reward, prompt_weights) -
         detail::expected_reward(ref, reward, prompt_weights);
}

// max_pi F(pi; r) = E_x[beta log E_{y~ref} exp(r/beta)] - E_{x, y'~ref}[r].
template <ConditionalPolicy Q>
double inner_value_closed_form(const Q& ref, double beta, const RewardFunction& reward,
                               const Eigen::VectorXd& prompt_weights) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  detail::check_weights(prompt_weights, ref.num_prompts());
  double total = 0.0;
  for (std::size_t x = 0; x < ref.num_prompts(); ++x) {
    const double wx = prompt_weights[static_cast<Eigen::Index>(x)];
    if (wx == 0.0) continue;
    Eigen::VectorXd lw = ref.log_probs(x);
    for (Eigen::Index y = 0; y < lw.size(); ++y)
      if (lw[y] != kNegInf) lw[y] += reward.values(static_cast<Eigen::Index>(x), y) / beta;
    const double lse = log_sum_exp(lw);
    if (!std::isfinite(lse)) throw NumericError("log-partition overflow at prompt " + std::to_string(x));
    total += wx * (beta * lse - reward.values.row(static_cast<Eigen::Index>(x)).dot(ref.distribution(x)));
  }
  return total;
}

// Minimizer of E_{y~pi}[r_hat_rho] + beta KL(pi || rho): the tilt of rho by
// -r_hat_rho. Its normalizer is identically one and it coincides with ref.
template <ConditionalPolicy R, ConditionalPolicy Q>
TiltResult min_reward_policy(const R& rho, const Q& ref, double beta) {
  const RewardFunction r_hat = implicit_reward_table(rho, ref, beta);
  return exponential_tilt_with_normalizer(rho, RewardFunction(-r_hat.values), beta);
}

// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h.
inline Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                                            const Eigen::VectorXd& theta, double h) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double up = loss(probe);
    probe[i] = theta[i] - h;
    const double down = loss(probe);
    probe[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite loss while differencing coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline GradientReport make_gradient_report(Eigen::VectorXd analytic, Eigen::VectorXd numeric, double h) {
  GradientReport r;
  r.max_rel_err = max_relative_error(analytic, numeric);
  r.analytic = std::move(analytic);
  r.numeric = std::move(numeric);
  r.h = h;
  return r;
}

// Convenience overloads taking a dataset of index-labelled triples.
template <ConditionalPolicy P, ConditionalPolicy Q>
double dpo_loss(const P& policy, const Q& ref, const ObjectiveConfig& config, const PreferenceDataset& ds) {
  const auto comps = ds.comparisons(policy.num_prompts(), policy.num_responses());
  return dpo_loss(policy, ref, config, std::span<const Comparison>(comps));
}

template <ConditionalPolicy Q>
Eigen::VectorXd dpo_gradient(const LogLinearPolicy& policy, const Q& ref, const ObjectiveConfig& config,
                             const PreferenceDataset& ds) {
  const auto comps = ds.comparisons(policy.num_prompts(), policy.num_responses());
  return dpo_gradient(policy, ref, config, std::span<const Comparison>(comps));
}

inline double reward_nll(const RewardFunction& reward, const PreferenceDataset& ds) {
  const auto comps = ds.comparisons(reward.num_prompts(), reward.num_responses());
  return reward_nll(reward, std::span<const Comparison>(comps));
}

}  // namespace prefopt
