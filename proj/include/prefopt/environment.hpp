#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "prefopt/domain.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/numeric.hpp"
#include "prefopt/policy.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

// Range the judge maps onto [1, g_max]: each prompt's own reward range, or
// the range over the whole table.
enum class JudgeRange { per_prompt, global };

// Simulated feedback source: ground-truth rewards, a Bradley-Terry rater, a
// noisy ranker and a discretizing judge.
struct Environment {
  Eigen::VectorXd nu;
  RewardFunction r_star;
  double ranker_noise = 0.0;
  int g_max = 10;
  JudgeRange judge_range = JudgeRange::per_prompt;

  Environment(Eigen::VectorXd prompt_weights, RewardFunction reward, double noise = 0.0, int goal_max = 10,
              JudgeRange range = JudgeRange::per_prompt)
      : nu(std::move(prompt_weights)), r_star(std::move(reward)), ranker_noise(noise), g_max(goal_max),
        judge_range(range) {
    validate();
  }

  void validate() const {
    if (static_cast<std::size_t>(nu.size()) != r_star.num_prompts()) {
      throw ValidationError("nu has length " + std::to_string(nu.size()) + " but the reward table has " +
                            std::to_string(r_star.num_prompts()) + " prompts");
    }
    if ((nu.array() < 0.0).any() || std::abs(nu.sum() - 1.0) > 1e-9) {
      throw ValidationError("nu must be a probability vector");
    }
    if (!(ranker_noise >= 0.0) || !std::isfinite(ranker_noise)) throw ValidationError("ranker_noise must be nonnegative");
    if (g_max < 1) throw ValidationError("g_max must be at least 1");
  }

  std::size_t num_prompts() const { return r_star.num_prompts(); }
  std::size_t num_responses() const { return r_star.num_responses(); }

  // One prompt, two responses, r* = (ln 3, 0).
  static Environment e1() {
    Eigen::MatrixXd r(1, 2);
    r << std::log(3.0), 0.0;
    return Environment(Eigen::VectorXd::Ones(1), RewardFunction(std::move(r)));
  }

  static Environment from_table(Eigen::MatrixXd r_star, double noise = 0.0, int goal_max = 10) {
    const auto nx = r_star.rows();
    return Environment(Eigen::VectorXd::Constant(nx, 1.0 / static_cast<double>(nx)), RewardFunction(std::move(r_star)),
                       noise, goal_max);
  }

  // r*(x, y) i.i.d. Normal(0, scale^2), uniform nu.
  static Environment random_gaussian(std::size_t prompts, std::size_t responses, std::uint64_t seed,
                                     double scale = 1.0, double noise = 0.0, int goal_max = 10) {
    Rng rng(seed, 0xe4f);
    Eigen::MatrixXd r(prompts, responses);
    for (Eigen::Index x = 0; x < r.rows(); ++x)
      for (Eigen::Index y = 0; y < r.cols(); ++y) r(x, y) = rng.normal(0.0, scale);
    return from_table(std::move(r), noise, goal_max);
  }

  // r*(x, y) = <phi(x, y), theta*> with theta* i.i.d. Normal(0, scale^2), so the
  // KL-optimal policy lies in the log-linear class over the same features.
  static Environment linear(const FeatureMap& features, std::uint64_t seed, double scale = 1.0, double noise = 0.0,
                            int goal_max = 10) {
    Rng rng(seed, 0x11e);
    Eigen::VectorXd theta_star(static_cast<Eigen::Index>(features.dim()));
    for (Eigen::Index i = 0; i < theta_star.size(); ++i) theta_star[i] = rng.normal(0.0, scale);
    Eigen::MatrixXd r(features.num_prompts(), features.num_responses());
    for (std::size_t x = 0; x < features.num_prompts(); ++x) {
      r.row(static_cast<Eigen::Index>(x)) = (features.block(x) * theta_star).transpose();
    }
    return from_table(std::move(r), noise, goal_max);
  }

  ordered_json to_json() const {
    ordered_json j;
    j["nu"] = std::vector<double>(nu.data(), nu.data() + nu.size());
    ordered_json rows = ordered_json::array();
    for (Eigen::Index x = 0; x < r_star.values.rows(); ++x) {
      ordered_json row = ordered_json::array();
      for (Eigen::Index y = 0; y < r_star.values.cols(); ++y) row.push_back(r_star.values(x, y));
      rows.push_back(std::move(row));
    }
    j["r_star"] = std::move(rows);
    j["ranker_noise"] = ranker_noise;
    j["g_max"] = g_max;
    j["judge_range"] = judge_range == JudgeRange::per_prompt ? "per_prompt" : "global";
    return j;
  }

  static Environment from_json(const ordered_json& j) {
    const auto nu_vec = j.at("nu").get<std::vector<double>>();
    const auto& rows = j.at("r_star");
    if (!rows.is_array() || rows.empty()) throw ValidationError("'r_star' must be a nonempty array");
    const auto ny = static_cast<Eigen::Index>(rows.at(0).size());
    Eigen::MatrixXd r(static_cast<Eigen::Index>(rows.size()), ny);
    for (Eigen::Index x = 0; x < r.rows(); ++x) {
      const auto& row = rows.at(static_cast<std::size_t>(x));
      if (static_cast<Eigen::Index>(row.size()) != ny) throw ValidationError("ragged 'r_star' rows");
      for (Eigen::Index y = 0; y < ny; ++y) r(x, y) = row.at(static_cast<std::size_t>(y)).get<double>();
    }
    const auto range = j.value("judge_range", std::string("per_prompt"));
    if (range != "per_prompt" && range != "global") throw ValidationError("unknown judge_range '" + range + "'");
    return Environment(Eigen::Map<const Eigen::VectorXd>(nu_vec.data(), static_cast<Eigen::Index>(nu_vec.size())),
                       RewardFunction(std::move(r)), j.value("ranker_noise", 0.0), j.value("g_max", 10),
                       range == "global" ? JudgeRange::global : JudgeRange::per_prompt);
  }
};

// (x, winner, loser) with P(winner = y1) = sigma(r*(x, y1) - r*(x, y2)).
inline PreferenceTriple sample_preference(const Environment& env, std::size_t x, std::size_t y1, std::size_t y2,
                                          Rng& rng, std::string id = {}) {
  if (x >= env.num_prompts() || y1 >= env.num_responses() || y2 >= env.num_responses()) {
    throw ValidationError("preference query out of range");
  }
  if (y1 == y2) throw ValidationError("preference query needs two distinct responses");
  const double p = sigmoid(env.r_star(x, y1) - env.r_star(x, y2));
  const bool first_wins = rng.uniform() < p;
  return make_triple(std::move(id), x, first_wins ? y1 : y2, first_wins ? y2 : y1);
}

struct RankResult {
  std::size_t best;   // index into the candidate list
  std::size_t worst;  // index into the candidate list
};

// Scores s_i = r*(x, y_i) + Normal(0, ranker_noise); argmax and argmin with
// ties going to the lowest candidate index.
inline RankResult rank_candidates(const Environment& env, std::size_t x, std::span<const std::size_t> candidates,
                                  Rng& rng) {
  if (candidates.size() < 2) throw ValidationError("ranking needs at least two candidates");
  if (x >= env.num_prompts()) throw ValidationError("prompt index out of range");
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] >= env.num_responses()) throw ValidationError("candidate response out of range");
    scores[i] = env.r_star(x, candidates[i]);
    if (env.ranker_noise > 0.0) scores[i] += rng.normal(0.0, env.ranker_noise);
  }
  RankResult out{0, 0};
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[out.best]) out.best = i;
    if (scores[i] < scores[out.worst]) out.worst = i;
  }
  return out;
}

// Affine map of r* onto [1, g_max], rounded half up and clamped. A flat reward
// range maps to g_max.
inline int judge_score(const Environment& env, std::size_t x, std::size_t y) {
  if (x >= env.num_prompts() || y >= env.num_responses()) throw ValidationError("judge query out of range");
  double lo = 0.0;
  double hi = 0.0;
  if (env.judge_range == JudgeRange::per_prompt) {
    lo = env.r_star.values.row(static_cast<Eigen::Index>(x)).minCoeff();
    hi = env.r_star.values.row(static_cast<Eigen::Index>(x)).maxCoeff();
  } else {
    lo = env.r_star.values.minCoeff();
    hi = env.r_star.values.maxCoeff();
  }
  if (hi == lo) return env.g_max;
  const double s = 1.0 + (env.r_star(x, y) - lo) / (hi - lo) * static_cast<double>(env.g_max - 1);
  return std::clamp(static_cast<int>(std::floor(s + 0.5)), 1, env.g_max);
}

}  // namespace prefopt
