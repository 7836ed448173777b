#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "prefopt/domain.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/numeric.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

// Anything that yields a log-probability vector over responses for each prompt.
// Entries may be -inf where the policy has no support.
template <class P>
concept ConditionalPolicy = requires(const P& p, std::size_t x) {
  { p.num_prompts() } -> std::convertible_to<std::size_t>;
  { p.num_responses() } -> std::convertible_to<std::size_t>;
  { p.log_probs(x) } -> std::convertible_to<Eigen::VectorXd>;
  { p.distribution(x) } -> std::convertible_to<Eigen::VectorXd>;
};

// r(x, y) as an |X| x |Y| table.
struct RewardFunction {
  Eigen::MatrixXd values;

  explicit RewardFunction(Eigen::MatrixXd v) : values(std::move(v)) {
    if (!values.allFinite()) throw ValidationError("reward table contains non-finite values");
  }

  double operator()(std::size_t x, std::size_t y) const {
    return values(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }
  std::size_t num_prompts() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t num_responses() const { return static_cast<std::size_t>(values.cols()); }
};

class TabularPolicy {
 public:
  static constexpr double kRowTolerance = 1e-12;

  explicit TabularPolicy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw ValidationError("policy table must be nonempty");
    for (Eigen::Index x = 0; x < probs_.rows(); ++x) {
      if (!probs_.row(x).allFinite() || (probs_.row(x).array() < 0.0).any()) {
        throw ValidationError("policy row " + std::to_string(x) + " has negative or non-finite entries");
      }
      const double s = probs_.row(x).sum();
      if (std::abs(s - 1.0) > kRowTolerance) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "policy row " << x << " sums to " << s;
        throw ValidationError(msg.str());
      }
    }
  }

  static TabularPolicy uniform(std::size_t prompts, std::size_t responses) {
    return TabularPolicy(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(prompts),
                                                   static_cast<Eigen::Index>(responses),
                                                   1.0 / static_cast<double>(responses)));
  }

  std::size_t num_prompts() const { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t num_responses() const { return static_cast<std::size_t>(probs_.cols()); }

  double prob(std::size_t x, std::size_t y) const {
    return probs_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }

  Eigen::VectorXd distribution(std::size_t x) const {
    return probs_.row(static_cast<Eigen::Index>(x)).transpose();
  }

  Eigen::VectorXd log_probs(std::size_t x) const {
    Eigen::VectorXd out(probs_.cols());
    for (Eigen::Index y = 0; y < probs_.cols(); ++y) {
      const double p = probs_(static_cast<Eigen::Index>(x), y);
      out[y] = p > 0.0 ? std::log(p) : kNegInf;
    }
    return out;
  }

  const Eigen::MatrixXd& probs() const { return probs_; }

  friend bool operator==(const TabularPolicy& a, const TabularPolicy& b) { return a.probs_ == b.probs_; }

 private:
  Eigen::MatrixXd probs_;
};

// pi_theta(y|x) proportional to exp(<phi(x,y), theta> / beta).
class LogLinearPolicy {
 public:
  LogLinearPolicy(std::shared_ptr<const FeatureMap> features, Eigen::VectorXd theta, double beta)
      : features_(std::move(features)), theta_(std::move(theta)), beta_(beta) {
    if (!features_) throw ValidationError("log-linear policy needs a feature map");
    if (!(beta_ > 0.0) || !std::isfinite(beta_)) throw ValidationError("beta must be a positive finite real");
    if (static_cast<std::size_t>(theta_.size()) != features_->dim()) {
      throw ValidationError("theta has length " + std::to_string(theta_.size()) + " but features have dim " +
                            std::to_string(features_->dim()));
    }
    if (!theta_.allFinite()) throw ValidationError("theta contains non-finite values");
  }

  static LogLinearPolicy zeros(std::shared_ptr<const FeatureMap> features, double beta) {
    const auto d = static_cast<Eigen::Index>(features->dim());
    return LogLinearPolicy(std::move(features), Eigen::VectorXd::Zero(d), beta);
  }

  std::size_t num_prompts() const { return features_->num_prompts(); }
  std::size_t num_responses() const { return features_->num_responses(); }
  std::size_t dim() const { return features_->dim(); }
  double beta() const { return beta_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  const FeatureMap& features() const { return *features_; }
  const std::shared_ptr<const FeatureMap>& feature_ptr() const { return features_; }

  LogLinearPolicy with_theta(Eigen::VectorXd theta) const { return {features_, std::move(theta), beta_}; }

  Eigen::VectorXd logits(std::size_t x) const { return features_->block(x) * theta_ / beta_; }

  Eigen::VectorXd log_probs(std::size_t x) const {
    Eigen::VectorXd z = logits(x);
    const double lse = log_sum_exp(z);
    z.array() -= lse;
    return z;
  }

  Eigen::VectorXd distribution(std::size_t x) const { return log_probs(x).array().exp(); }

  // grad_theta log pi(y|x) = (phi(x,y) - E_{y'~pi}[phi(x,y')]) / beta
  Eigen::VectorXd score(std::size_t x, std::size_t y) const {
    const auto block = features_->block(x);
    const Eigen::VectorXd mean_phi = block.transpose() * distribution(x);
    return (block.row(static_cast<Eigen::Index>(y)).transpose() - mean_phi) / beta_;
  }

  // All score vectors for one prompt, one column per response.
  Eigen::MatrixXd scores(std::size_t x) const {
    const auto block = features_->block(x);
    const Eigen::VectorXd mean_phi = block.transpose() * distribution(x);
    return (block.transpose().colwise() - mean_phi) / beta_;
  }

 private:
  std::shared_ptr<const FeatureMap> features_;
  Eigen::VectorXd theta_;
  double beta_;
};

namespace detail {
inline void check_prompt(std::size_t x, std::size_t n) {
  if (x >= n) throw ValidationError("prompt index " + std::to_string(x) + " out of range [0, " + std::to_string(n) + ")");
}
inline void check_response(std::size_t y, std::size_t n) {
  if (y >= n) throw ValidationError("response index " + std::to_string(y) + " out of range [0, " + std::to_string(n) + ")");
}
}  // namespace detail

template <ConditionalPolicy P>
Eigen::VectorXd action_distribution(const P& policy, std::size_t x) {
  detail::check_prompt(x, policy.num_prompts());
  return policy.distribution(x);
}

template <ConditionalPolicy P>
double log_prob(const P& policy, std::size_t x, std::size_t y) {
  detail::check_prompt(x, policy.num_prompts());
  detail::check_response(y, policy.num_responses());
  const double lp = policy.log_probs(x)[static_cast<Eigen::Index>(y)];
  if (lp == kNegInf) {
    throw SupportError("unsupported response " + std::to_string(y) + " for prompt " + std::to_string(x));
  }
  return lp;
}

template <ConditionalPolicy P>
std::size_t sample_response(const P& policy, std::size_t x, Rng& rng) {
  const Eigen::VectorXd p = action_distribution(policy, x);
  return rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

template <ConditionalPolicy P>
TabularPolicy to_tabular(const P& policy) {
  Eigen::MatrixXd probs(policy.num_prompts(), policy.num_responses());
  for (std::size_t x = 0; x < policy.num_prompts(); ++x) {
    Eigen::VectorXd row = policy.distribution(x);
    row /= row.sum();
    probs.row(static_cast<Eigen::Index>(x)) = row.transpose();
  }
  return TabularPolicy(std::move(probs));
}

// Highest-probability response; ties go to the lowest index.
template <ConditionalPolicy P>
std::size_t greedy_response(const P& policy, std::size_t x) {
  const Eigen::VectorXd lp = policy.log_probs(x);
  Eigen::Index best = 0;
  for (Eigen::Index y = 1; y < lp.size(); ++y)
    if (lp[y] > lp[best]) best = y;
  return static_cast<std::size_t>(best);
}

template <ConditionalPolicy P, ConditionalPolicy Q>
void check_same_shape(const P& p, const Q& q) {
  if (p.num_prompts() != q.num_prompts() || p.num_responses() != q.num_responses()) {
    throw ValidationError("policies are defined over different spaces");
  }
}

// sum_x w(x) KL(p(.|x) || q(.|x)).
template <ConditionalPolicy P, ConditionalPolicy Q>
double kl_divergence(const P& p, const Q& q, const Eigen::VectorXd& prompt_weights) {
  check_same_shape(p, q);
  if (static_cast<std::size_t>(prompt_weights.size()) != p.num_prompts()) {
    throw ValidationError("prompt weights have the wrong length");
  }
  double total = 0.0;
  for (std::size_t x = 0; x < p.num_prompts(); ++x) {
    const double w = prompt_weights[static_cast<Eigen::Index>(x)];
    if (w == 0.0) continue;
    const Eigen::VectorXd lp = p.log_probs(x);
    const Eigen::VectorXd lq = q.log_probs(x);
    double kl = 0.0;
    for (Eigen::Index y = 0; y < lp.size(); ++y) {
      if (lp[y] == kNegInf) continue;
      if (lq[y] == kNegInf) {
        throw SupportError("KL support violation at prompt " + std::to_string(x) + ", response " + std::to_string(y));
      }
      kl += std::exp(lp[y]) * (lp[y] - lq[y]);
    }
    total += w * kl;
  }
  return std::max(total, 0.0);
}

struct TiltResult {
  TabularPolicy policy;
  Eigen::VectorXd log_normalizer;  // log Z(x)
};

// pi(y|x) = ref(y|x) exp(r(x,y)/beta) / Z(x), evaluated in log space.
template <ConditionalPolicy P>
TiltResult exponential_tilt_with_normalizer(const P& ref, const RewardFunction& reward, double beta) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  if (reward.num_prompts() != ref.num_prompts() || reward.num_responses() != ref.num_responses()) {
    throw ValidationError("reward table shape does not match the reference policy");
  }
  const auto nx = static_cast<Eigen::Index>(ref.num_prompts());
  const auto ny = static_cast<Eigen::Index>(ref.num_responses());
  Eigen::MatrixXd probs(nx, ny);
  Eigen::VectorXd log_z(nx);
  for (Eigen::Index x = 0; x < nx; ++x) {
    Eigen::VectorXd lw = ref.log_probs(static_cast<std::size_t>(x));
    for (Eigen::Index y = 0; y < ny; ++y)
      if (lw[y] != kNegInf) lw[y] += reward.values(x, y) / beta;
    const double lz = log_sum_exp(lw);
    if (!std::isfinite(lz)) {
      std::ostringstream msg;
      msg << "exponential tilt overflow at prompt " << x << " with beta " << beta;
      throw NumericError(msg.str());
    }
    log_z[x] = lz;
    probs.row(x) = (lw.array() - lz).exp().matrix().transpose();
    probs.row(x) /= probs.row(x).sum();
  }
  return {TabularPolicy(std::move(probs)), std::move(log_z)};
}

template <ConditionalPolicy P>
TabularPolicy exponential_tilt(const P& ref, const RewardFunction& reward, double beta) {
  return exponential_tilt_with_normalizer(ref, reward, beta).policy;
}

// max over (x, y) of |log pi(y|x) - log ref(y|x)|.
template <ConditionalPolicy P, ConditionalPolicy Q>
double log_ratio_bound(const P& policy, const Q& ref) {
  check_same_shape(policy, ref);
  double worst = 0.0;
  for (std::size_t x = 0; x < policy.num_prompts(); ++x) {
    const Eigen::VectorXd a = policy.log_probs(x);
    const Eigen::VectorXd b = ref.log_probs(x);
    for (Eigen::Index y = 0; y < a.size(); ++y) {
      const bool sa = a[y] != kNegInf;
      const bool sb = b[y] != kNegInf;
      if (sa != sb) {
        throw SupportError("support mismatch at prompt " + std::to_string(x) + ", response " + std::to_string(y));
      }
      if (sa) worst = std::max(worst, std::abs(a[y] - b[y]));
    }
  }
  return worst;
}

// beta * (log pi(y|x) - log ref(y|x)) as a full table.
template <ConditionalPolicy P, ConditionalPolicy Q>
RewardFunction implicit_reward_table(const P& policy, const Q& ref, double beta) {
  check_same_shape(policy, ref);
  Eigen::MatrixXd r(policy.num_prompts(), policy.num_responses());
  for (std::size_t x = 0; x < policy.num_prompts(); ++x) {
    const Eigen::VectorXd a = policy.log_probs(x);
    const Eigen::VectorXd b = ref.log_probs(x);
    for (Eigen::Index y = 0; y < a.size(); ++y) {
      if (a[y] == kNegInf || b[y] == kNegInf) {
        throw SupportError("implicit reward undefined at prompt " + std::to_string(x) + ", response " +
                           std::to_string(y));
      }
      r(static_cast<Eigen::Index>(x), y) = beta * (a[y] - b[y]);
    }
  }
  return RewardFunction(std::move(r));
}

}  // namespace prefopt
