#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "prefopt/domain.hpp"
#include "prefopt/environment.hpp"
#include "prefopt/objectives.hpp"
#include "prefopt/policy.hpp"
#include "prefopt/reward_augment.hpp"
#include "prefopt/rng.hpp"
#include "prefopt/run_config.hpp"

namespace prefopt {

enum class ObjectiveKind { dpo, selm };

struct TrainResult {
  LogLinearPolicy policy;
  std::vector<double> losses;  // loss before each step
};

// Gradient descent on the DPO or SELM loss. Full batch unless
// optimizer.minibatch > 0, in which case batches come from a per-epoch
// shuffle drawn from `rng`.
template <ConditionalPolicy Q>
TrainResult train(const LogLinearPolicy& start, const Q& ref, std::span<const Comparison> comps, ObjectiveKind kind,
                  const ObjectiveConfig& objective, const ReferenceExpectation& expectation,
                  const OptimizerConfig& optimizer, double learning_rate, Rng* rng = nullptr) {
  if (optimizer.steps_per_iteration < 1) throw ValidationError("training needs at least one step");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  const bool minibatch = optimizer.minibatch > 0 && optimizer.minibatch < comps.size();
  if (minibatch && !rng) throw ValidationError("minibatch training needs a random stream");

  std::vector<std::size_t> order(comps.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = comps.size();
  std::vector<Comparison> batch;

  Eigen::VectorXd theta = start.theta();
  TrainResult out{start, {}};
  out.losses.reserve(optimizer.steps_per_iteration);
  for (std::size_t step = 0; step < optimizer.steps_per_iteration; ++step) {
    const LogLinearPolicy current = start.with_theta(theta);
    std::span<const Comparison> active = comps;
    if (minibatch) {
      if (cursor + optimizer.minibatch > comps.size()) {
        std::shuffle(order.begin(), order.end(), rng->engine());
        cursor = 0;
      }
      batch.clear();
      for (std::size_t i = 0; i < optimizer.minibatch; ++i) batch.push_back(comps[order[cursor + i]]);
      cursor += optimizer.minibatch;
      active = batch;
    }
    const double loss = kind == ObjectiveKind::dpo ? dpo_loss(current, ref, objective, active)
                                                   : selm_loss(current, ref, objective, active, expectation);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " with theta = [" << theta.transpose() << "]";
      throw NumericError(msg.str());
    }
    out.losses.push_back(loss);
    const Eigen::VectorXd grad = kind == ObjectiveKind::dpo ? dpo_gradient(current, ref, objective, active)
                                                            : selm_gradient(current, ref, objective, active, expectation);
    theta -= learning_rate * grad;
  }
  out.policy = start.with_theta(std::move(theta));
  return out;
}

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  Eigen::VectorXd theta;
  TabularPolicy reference;  // reference used while training this iteration
  PreferenceDataset dataset;
  std::vector<ResponseSample> generated;
  std::size_t skipped_pairs = 0;
  std::vector<double> losses;
  double J = 0.0;
  double r_max = 0.0;
  double mean_implicit_chosen = 0.0;
  double mean_implicit_rejected = 0.0;
  double mean_true_reward_greedy = 0.0;
  std::vector<double> greedy_histogram;
};

struct RunResult {
  RunConfig config;
  std::uint64_t seed = 0;
  Environment env;
  std::shared_ptr<const FeatureMap> features;
  TabularPolicy initial_reference;
  std::vector<IterationRecord> iterations;
  std::vector<double> regret;
  double wall_clock_seconds = 0.0;
  std::string config_hash;

  LogLinearPolicy policy_at(std::size_t index) const {
    return LogLinearPolicy(features, iterations.at(index).theta, config.beta);
  }
  LogLinearPolicy final_policy() const { return policy_at(iterations.size() - 1); }
};

// sum_x nu(x) r*(x, argmax_y pi(y|x)).
template <ConditionalPolicy P>
double mean_true_reward_greedy(const P& policy, const Environment& env) {
  double total = 0.0;
  for (std::size_t x = 0; x < env.num_prompts(); ++x) {
    total += env.nu[static_cast<Eigen::Index>(x)] * env.r_star(x, greedy_response(policy, x));
  }
  return total;
}

// nu-weighted fraction of prompts whose greedy response falls in each of
// `bins` equal-width bins spanning [min r*, max r*].
template <ConditionalPolicy P>
std::vector<double> greedy_reward_histogram(const P& policy, const Environment& env, std::size_t bins) {
  std::vector<double> hist(bins, 0.0);
  const double lo = env.r_star.values.minCoeff();
  const double hi = env.r_star.values.maxCoeff();
  for (std::size_t x = 0; x < env.num_prompts(); ++x) {
    const double r = env.r_star(x, greedy_response(policy, x));
    std::size_t b = 0;
    if (hi > lo) {
      b = static_cast<std::size_t>(std::floor((r - lo) / (hi - lo) * static_cast<double>(bins)));
      b = std::min(b, bins - 1);
    }
    hist[b] += env.nu[static_cast<Eigen::Index>(x)];
  }
  return hist;
}

// Offline pairs: x ~ nu, two distinct uniform responses, labelled by the
// Bradley-Terry rater or by the ranker.
inline PreferenceDataset synthesize_dataset(const Environment& env, std::size_t n, LabelMode label, Rng& rng) {
  if (env.num_responses() < 2) throw ValidationError("need at least two responses to form pairs");
  PreferenceDataset ds;
  ds.provenance["synthetic"] = true;
  const std::span<const double> nu(env.nu.data(), static_cast<std::size_t>(env.nu.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t x = rng.categorical(nu);
    const std::size_t y1 = rng.index(env.num_responses());
    std::size_t y2 = rng.index(env.num_responses() - 1);
    if (y2 >= y1) ++y2;
    const std::string id = "d" + std::to_string(i);
    if (label == LabelMode::bradley_terry) {
      ds.triples.push_back(sample_preference(env, x, y1, y2, rng, id));
    } else {
      const std::size_t cands[2] = {y1, y2};
      const auto rr = rank_candidates(env, x, cands, rng);
      ds.triples.push_back(make_triple(id, x, cands[rr.best], cands[rr.best == 0 ? 1 : 0]));
    }
  }
  return ds;
}

namespace detail {

inline IterationRecord summarize_iteration(const RunConfig& config, const Environment& env,
                                           const TabularPolicy& initial_reference, const LogLinearPolicy& policy,
                                           std::size_t iteration, TabularPolicy reference, PreferenceDataset dataset,
                                           std::vector<ResponseSample> generated, std::size_t skipped,
                                           std::vector<double> losses) {
  IterationRecord rec{iteration, policy.theta(), std::move(reference), std::move(dataset), std::move(generated),
                      skipped,   std::move(losses), 0.0, 0.0, 0.0, 0.0, 0.0, {}};
  rec.J = rlhf_objective(policy, initial_reference, config.beta, env.r_star, env.nu);
  rec.r_max = log_ratio_bound(policy, initial_reference);
  if (!rec.dataset.empty()) {
    double chosen = 0.0;
    double rejected = 0.0;
    for (const auto& c : rec.dataset.comparisons(env.num_prompts(), env.num_responses())) {
      chosen += implicit_reward(policy, rec.reference, config.beta, c.prompt, c.chosen);
      rejected += implicit_reward(policy, rec.reference, config.beta, c.prompt, c.rejected);
    }
    rec.mean_implicit_chosen = chosen / static_cast<double>(rec.dataset.size());
    rec.mean_implicit_rejected = rejected / static_cast<double>(rec.dataset.size());
  }
  rec.mean_true_reward_greedy = mean_true_reward_greedy(policy, env);
  rec.greedy_histogram = greedy_reward_histogram(policy, env, config.histogram_bins);
  return rec;
}

// Named sub-streams of a run seed.
enum Stream : std::uint64_t { kData = 1, kGenerate = 2, kRank = 3, kTrain = 4, kPrompt = 5, kLabel = 6 };

struct RunSetup {
  std::shared_ptr<const FeatureMap> features;
  Environment env;
  LogLinearPolicy initial_policy;
  TabularPolicy initial_reference;
};

inline RunSetup setup_run(const RunConfig& config, std::uint64_t seed) {
  config.validate();
  auto features = build_features(config, seed);
  Environment env = build_environment(config, *features, seed);
  LogLinearPolicy policy = LogLinearPolicy::zeros(features, config.beta);
  TabularPolicy ref = to_tabular(policy);
  return {std::move(features), std::move(env), std::move(policy), std::move(ref)};
}

inline double learning_rate_at(const OptimizerConfig& opt, std::size_t t) {
  return opt.learning_rate * std::pow(opt.lr_decay, static_cast<double>(t));
}

inline RunResult finish_run(const RunConfig& config, std::uint64_t seed, RunSetup setup,
                            std::vector<IterationRecord> iterations,
                            std::chrono::steady_clock::time_point started);

}  // namespace detail

// Partial sums of J(pi*) - J(pi_t), with pi* the tilt of the run's initial
// reference by r*. Increments within 1e-12 below zero are rounding and clamp to 0.
inline std::vector<double> cumulative_regret(const RunResult& run, const Environment& env) {
  const double beta = run.config.beta;
  const TabularPolicy optimal = exponential_tilt(run.initial_reference, env.r_star, beta);
  const double j_star = rlhf_objective(optimal, run.initial_reference, beta, env.r_star, env.nu);
  std::vector<double> series;
  series.reserve(run.iterations.size());
  double total = 0.0;
  for (std::size_t t = 0; t < run.iterations.size(); ++t) {
    const double j = rlhf_objective(run.policy_at(t), run.initial_reference, beta, env.r_star, env.nu);
    const double inc = j_star - j;
    if (inc < -1e-12) {
      throw NumericError("iteration " + std::to_string(t + 1) + " has J above the optimum by " + std::to_string(-inc));
    }
    total += std::max(inc, 0.0);
    series.push_back(total);
  }
  return series;
}

inline RunResult detail::finish_run(const RunConfig& config, std::uint64_t seed, RunSetup setup,
                                    std::vector<IterationRecord> iterations,
                                    std::chrono::steady_clock::time_point started) {
  RunResult run{config,
                seed,
                std::move(setup.env),
                std::move(setup.features),
                std::move(setup.initial_reference),
                std::move(iterations),
                {},
                0.0,
                config.hash()};
  run.regret = cumulative_regret(run, run.env);
  run.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

namespace detail {

// Algorithm 1 loop shared by iterative DPO (no optimism) and SELM: take the
// t-th portion, draw y ~ ref per prompt, keep the ranker's best and worst of
// {y, y_w, y_l}, retrain, then make the trained policy the new reference.
inline RunResult run_online(const RunConfig& config, std::uint64_t seed, ObjectiveKind kind) {
  const auto started = std::chrono::steady_clock::now();
  RunSetup setup = setup_run(config, seed);
  const Rng root(seed);
  Rng data_rng = root.split(kData);
  Rng gen_rng = root.split(kGenerate);
  Rng rank_rng = root.split(kRank);
  Rng train_rng = root.split(kTrain);

  const auto full = synthesize_dataset(setup.env, config.T * config.data.pairs_per_iteration, config.data.label, data_rng);
  const auto parts = partition_dataset(full, config.T);
  ObjectiveConfig objective = config.objective();
  if (kind == ObjectiveKind::dpo) objective.alpha = 0.0;

  LogLinearPolicy policy = setup.initial_policy;
  TabularPolicy ref = setup.initial_reference;
  std::vector<IterationRecord> records;
  for (std::size_t t = 0; t < config.T; ++t) {
    PreferenceDataset updated;
    updated.provenance = parts[t].provenance;
    std::vector<ResponseSample> generated;
    std::size_t skipped = 0;
    for (std::size_t k = 0; k < parts[t].size(); ++k) {
      const auto& src = parts[t].triples[k];
      const std::size_t x = index_of(src.prompt, setup.env.num_prompts(), "prompt");
      const std::size_t yw = index_of(src.chosen, setup.env.num_responses(), "chosen");
      const std::size_t yl = index_of(src.rejected, setup.env.num_responses(), "rejected");
      std::vector<std::size_t> candidates;
      if (config.data.generate) {
        const std::size_t y = sample_response(ref, x, gen_rng);
        generated.push_back({x, y});
        candidates = {y, yw, yl};
      } else {
        candidates = {yw, yl};
      }
      const auto rr = rank_candidates(setup.env, x, candidates, rank_rng);
      const std::size_t best = candidates[rr.best];
      const std::size_t worst = candidates[rr.worst];
      if (best == worst) {
        ++skipped;
        continue;
      }
      auto triple = make_triple("t" + std::to_string(t + 1) + "_" + std::to_string(k), x, best, worst);
      triple.extra["source_id"] = src.id;
      triple.extra["candidates"] = candidates;
      updated.triples.push_back(std::move(triple));
    }

    std::vector<double> losses;
    if (!updated.empty()) {
      const auto comps = updated.comparisons(setup.env.num_prompts(), setup.env.num_responses());
      ReferenceExpectation expectation =
          (objective.expectation_mode == ExpectationMode::recorded_samples && !generated.empty())
              ? ReferenceExpectation::recorded(generated)
              : ReferenceExpectation::over_prompts(comps, setup.env.num_prompts());
      ObjectiveConfig obj = objective;
      if (generated.empty()) obj.expectation_mode = ExpectationMode::exact_tabular;
      const LogLinearPolicy start = config.optimizer.restart_from_initial ? setup.initial_policy : policy;
      auto trained = train(start, ref, comps, kind, obj, expectation, config.optimizer,
                           learning_rate_at(config.optimizer, t), &train_rng);
      policy = std::move(trained.policy);
      losses = std::move(trained.losses);
    }
    records.push_back(summarize_iteration(config, setup.env, setup.initial_reference, policy, t + 1, ref,
                                          std::move(updated), std::move(generated), skipped, std::move(losses)));
    spdlog::debug("seed {} iteration {}: J = {}", seed, t + 1, records.back().J);
    ref = to_tabular(policy);
  }
  return finish_run(config, seed, std::move(setup), std::move(records), started);
}

}  // namespace detail

inline RunResult run_iterative_dpo(const RunConfig& config, std::uint64_t seed) {
  return detail::run_online(config, seed, ObjectiveKind::dpo);
}

inline RunResult run_selm(const RunConfig& config, std::uint64_t seed) {
  return detail::run_online(config, seed, ObjectiveKind::selm);
}

// DPO on the whole offline dataset against the fixed initial reference; each of
// the T iterations continues training and is recorded.
inline RunResult run_offline_dpo(const RunConfig& config, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  detail::RunSetup setup = detail::setup_run(config, seed);
  const Rng root(seed);
  Rng data_rng = root.split(detail::kData);
  Rng train_rng = root.split(detail::kTrain);
  const auto dataset =
      synthesize_dataset(setup.env, config.T * config.data.pairs_per_iteration, config.data.label, data_rng);
  const auto comps = dataset.comparisons(setup.env.num_prompts(), setup.env.num_responses());
  ObjectiveConfig objective = config.objective();
  objective.alpha = 0.0;
  LogLinearPolicy policy = setup.initial_policy;
  std::vector<IterationRecord> records;
  for (std::size_t t = 0; t < config.T; ++t) {
    auto trained = train(policy, setup.initial_reference, comps, ObjectiveKind::dpo, objective, {}, config.optimizer,
                         detail::learning_rate_at(config.optimizer, t), &train_rng);
    policy = std::move(trained.policy);
    records.push_back(detail::summarize_iteration(config, setup.env, setup.initial_reference, policy, t + 1,
                                                  setup.initial_reference, dataset, {}, 0, std::move(trained.losses)));
  }
  return detail::finish_run(config, seed, std::move(setup), std::move(records), started);
}

// Theoretical loop: one new pair per iteration, x ~ nu, y1 from the latest
// policy, y2 from the reference (redrawn from ref conditioned on y2 != y1),
// labelled by the Bradley-Terry rater and appended to a cumulative dataset. The
// optimism expectation is exact over nu. The main variant resets the reference
// to the trained policy each iteration; the alternate keeps it fixed.
inline RunResult run_selm_theoretical(const RunConfig& config, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  detail::RunSetup setup = detail::setup_run(config, seed);
  const Rng root(seed);
  Rng prompt_rng = root.split(detail::kPrompt);
  Rng gen_rng = root.split(detail::kGenerate);
  Rng label_rng = root.split(detail::kLabel);
  Rng train_rng = root.split(detail::kTrain);
  const std::span<const double> nu(setup.env.nu.data(), static_cast<std::size_t>(setup.env.nu.size()));

  const ObjectiveConfig objective{config.beta, config.alpha, ExpectationMode::exact_tabular, config.alpha_convention};
  const auto expectation = ReferenceExpectation::exact(setup.env.nu);
  LogLinearPolicy policy = setup.initial_policy;
  TabularPolicy ref = setup.initial_reference;
  PreferenceDataset cumulative;
  std::vector<IterationRecord> records;
  for (std::size_t t = 0; t < config.T; ++t) {
    const std::size_t x = prompt_rng.categorical(nu);
    const std::size_t y1 = sample_response(policy, x, gen_rng);
    Eigen::VectorXd q = ref.distribution(x);
    q[static_cast<Eigen::Index>(y1)] = 0.0;
    if (q.sum() <= 0.0) q = Eigen::VectorXd::Ones(q.size()), q[static_cast<Eigen::Index>(y1)] = 0.0;
    q /= q.sum();
    const std::size_t y2 = gen_rng.categorical(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
    cumulative.triples.push_back(sample_preference(setup.env, x, y1, y2, label_rng, "t" + std::to_string(t + 1)));

    const auto comps = cumulative.comparisons(setup.env.num_prompts(), setup.env.num_responses());
    const LogLinearPolicy start = config.optimizer.restart_from_initial ? setup.initial_policy : policy;
    auto trained = train(start, ref, comps, ObjectiveKind::selm, objective, expectation, config.optimizer,
                         detail::learning_rate_at(config.optimizer, t), &train_rng);
    policy = std::move(trained.policy);
    records.push_back(detail::summarize_iteration(config, setup.env, setup.initial_reference, policy, t + 1, ref,
                                                  cumulative, {{x, y1}, {x, y2}}, 0, std::move(trained.losses)));
    if (config.theory_variant == TheoryVariant::main) ref = to_tabular(policy);
  }
  return detail::finish_run(config, seed, std::move(setup), std::move(records), started);
}

inline RunResult run(const RunConfig& config, std::uint64_t seed) {
  switch (config.algorithm) {
    case Algorithm::dpo_offline: return run_offline_dpo(config, seed);
    case Algorithm::dpo_iterative: return run_iterative_dpo(config, seed);
    case Algorithm::selm: return run_selm(config, seed);
    case Algorithm::selm_theoretical: return run_selm_theoretical(config, seed);
  }
  throw ValidationError("unknown algorithm");
}

// Independent runs execute concurrently; results come back in seed order.
inline std::vector<RunResult> run_seeds(const RunConfig& config, const std::vector<std::uint64_t>& seeds) {
  std::vector<std::future<RunResult>> futures;
  futures.reserve(seeds.size());
  for (auto s : seeds) futures.push_back(std::async(std::launch::async, [&config, s] { return run(config, s); }));
  std::vector<RunResult> out;
  out.reserve(seeds.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

// Least-squares slope of log R(T) against log T over T in [t_lo, t_hi].
inline double loglog_slope(const std::vector<double>& series, std::size_t t_lo, std::size_t t_hi) {
  if (t_lo < 1 || t_hi > series.size() || t_hi <= t_lo) throw ValidationError("slope window out of range");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = 0;
  for (std::size_t t = t_lo; t <= t_hi; ++t) {
    const double v = series[t - 1];
    if (!(v > 0.0)) throw NumericError("regret must be positive to take logs");
    const double lx = std::log(static_cast<double>(t));
    const double ly = std::log(v);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, n += 1;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct ImplicitRewardDiff {
  std::size_t prompt;
  std::size_t response;
  double diff;  // r_hat_a - r_hat_b
};

struct AnalysisReport {
  std::vector<ImplicitRewardDiff> chosen;
  std::vector<ImplicitRewardDiff> rejected;
  std::vector<ImplicitRewardDiff> sampled;
  std::vector<std::vector<double>> histograms_a;  // per iteration
  std::vector<std::vector<double>> histograms_b;
  std::vector<double> mean_true_reward_a;
  std::vector<double> mean_true_reward_b;
};

// Compares two runs over one environment. Implicit rewards are taken for each
// run's final policy against the shared initial reference, on run_a's final
// dataset (chosen and rejected responses) and on one fresh y ~ ref per prompt.
inline AnalysisReport analyze_runs(const RunResult& a, const RunResult& b, const Environment& env,
                                   std::uint64_t sample_seed = 0) {
  auto same_env = [](const Environment& p, const Environment& q) {
    return p.nu == q.nu && p.r_star.values == q.r_star.values;
  };
  if (!same_env(a.env, env) || !same_env(b.env, env)) throw ValidationError("runs use different environments");
  if (!(a.initial_reference == b.initial_reference)) throw ValidationError("runs start from different references");
  if (a.iterations.empty() || b.iterations.empty()) throw ValidationError("runs have no iterations");
  const double beta = a.config.beta;
  const auto pa = a.final_policy();
  const auto pb = b.final_policy();
  const auto& ref = a.initial_reference;
  auto diff = [&](std::size_t x, std::size_t y) {
    return ImplicitRewardDiff{x, y, implicit_reward(pa, ref, beta, x, y) - implicit_reward(pb, ref, beta, x, y)};
  };
  AnalysisReport rep;
  for (const auto& c : a.iterations.back().dataset.comparisons(env.num_prompts(), env.num_responses())) {
    rep.chosen.push_back(diff(c.prompt, c.chosen));
    rep.rejected.push_back(diff(c.prompt, c.rejected));
  }
  Rng rng(sample_seed, 0xa11);
  for (std::size_t x = 0; x < env.num_prompts(); ++x) rep.sampled.push_back(diff(x, sample_response(ref, x, rng)));
  auto by_diff = [](const ImplicitRewardDiff& l, const ImplicitRewardDiff& r) { return l.diff > r.diff; };
  std::stable_sort(rep.chosen.begin(), rep.chosen.end(), by_diff);
  std::stable_sort(rep.rejected.begin(), rep.rejected.end(), by_diff);
  std::stable_sort(rep.sampled.begin(), rep.sampled.end(), by_diff);
  for (const auto& it : a.iterations) {
    rep.histograms_a.push_back(it.greedy_histogram);
    rep.mean_true_reward_a.push_back(it.mean_true_reward_greedy);
  }
  for (const auto& it : b.iterations) {
    rep.histograms_b.push_back(it.greedy_histogram);
    rep.mean_true_reward_b.push_back(it.mean_true_reward_greedy);
  }
  return rep;
}

// Goal-conditioned DPO on reward-augmented tabular data: scored pairs from the
// judge, augmentation over the extended prompt space, one-hot features.
struct GoalConditionedConfig {
  std::size_t prompts = 5;
  std::size_t responses = 8;
  int g_max = 10;
  std::size_t pairs = 400;
  double beta = 0.1;
  double reward_scale = 1.0;
  double learning_rate = 0.5;
  std::size_t steps = 300;
};

struct GoalConditionedOutcome {
  double reward_top_goal = 0.0;     // nu-weighted E_{y ~ pi(.|x; g_max)}[r*]
  double reward_bottom_goal = 0.0;  // same for g = 1
  std::size_t augmented_pairs = 0;
  std::size_t source_pairs = 0;
};

inline GoalConditionedOutcome run_goal_conditioned(const GoalConditionedConfig& config, std::uint64_t seed) {
  const Rng root(seed);
  Rng data_rng = root.split(detail::kData);
  const Environment env = Environment::random_gaussian(config.prompts, config.responses, seed,
                                                       config.reward_scale, 0.0, config.g_max);
  PreferenceDataset scored = synthesize_dataset(env, config.pairs, LabelMode::bradley_terry, data_rng);
  for (auto& t : scored.triples) {
    const auto x = index_of(t.prompt, env.num_prompts(), "prompt");
    t.chosen_score = judge_score(env, x, index_of(t.chosen, env.num_responses(), "chosen"));
    t.rejected_score = judge_score(env, x, index_of(t.rejected, env.num_responses(), "rejected"));
  }
  AugmentOptions opts;
  opts.g_max = config.g_max;
  const auto augmented = augment_dataset(scored, opts).as_preference_dataset();
  const std::size_t extended = config.prompts * static_cast<std::size_t>(config.g_max);
  auto features = std::make_shared<const FeatureMap>(FeatureMap::one_hot(extended, config.responses));
  LogLinearPolicy policy = LogLinearPolicy::zeros(features, config.beta);
  const TabularPolicy ref = to_tabular(policy);
  const auto comps = augmented.comparisons(extended, config.responses);
  OptimizerConfig opt;
  opt.steps_per_iteration = config.steps;
  const ObjectiveConfig objective{config.beta, 0.0, ExpectationMode::exact_tabular, AlphaConvention::times_beta};
  if (!comps.empty()) {
    policy = train(policy, ref, comps, ObjectiveKind::dpo, objective, {}, opt, config.learning_rate).policy;
  }

  auto conditioned_reward = [&](int goal) {
    double total = 0.0;
    for (std::size_t x = 0; x < config.prompts; ++x) {
      const auto cx = condition_prompt(label_of(x), goal, config.g_max).rendered;
      const auto pi = policy.distribution(index_of(cx, extended, "conditioned prompt"));
      total += env.nu[static_cast<Eigen::Index>(x)] * env.r_star.values.row(static_cast<Eigen::Index>(x)).dot(pi);
    }
    return total;
  };
  return {conditioned_reward(config.g_max), conditioned_reward(1), augmented.size(), scored.size()};
}

}  // namespace prefopt
