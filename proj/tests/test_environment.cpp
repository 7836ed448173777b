#include <gtest/gtest.h>

#include <cmath>

#include "prefopt/environment.hpp"

using namespace prefopt;

namespace {

Environment two_responses(double gap) {
  Eigen::MatrixXd r(1, 2);
  r << gap, 0.0;
  return Environment::from_table(r);
}

double win_rate(const Environment& env, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < n; ++i) wins += sample_preference(env, 0, 0, 1, rng).chosen == label_of(0);
  return static_cast<double>(wins) / static_cast<double>(n);
}

}  // namespace

TEST(Preference, SaturatedGapAlwaysWins) {
  EXPECT_EQ(win_rate(two_responses(50.0), 10000, 1), 1.0);
  EXPECT_EQ(win_rate(two_responses(-50.0), 10000, 1), 0.0);
}

TEST(Preference, E1RateNearThreeQuarters) {
  const std::size_t n = 100000;
  const double sigma = std::sqrt(0.75 * 0.25 / static_cast<double>(n));
  EXPECT_LT(std::abs(win_rate(Environment::e1(), n, 2) - 0.75), 3 * sigma);
}

TEST(Preference, EqualRewardsNearHalf) {
  const std::size_t n = 100000;
  EXPECT_LT(std::abs(win_rate(two_responses(0.0), n, 3) - 0.5), 3 * std::sqrt(0.25 / static_cast<double>(n)));
}

TEST(Preference, RejectsIdenticalResponses) {
  Rng rng(0);
  EXPECT_THROW(sample_preference(Environment::e1(), 0, 1, 1, rng), ValidationError);
  EXPECT_THROW(sample_preference(Environment::e1(), 1, 0, 1, rng), ValidationError);
}

TEST(Ranker, ExactArgmaxArgmin) {
  Eigen::MatrixXd r(1, 6);
  r << 2, 5, 1, 5, 0, 9;
  const auto env = Environment::from_table(r);
  Rng rng(0);
  const std::vector<std::size_t> c{0, 1, 2};
  const auto rr = rank_candidates(env, 0, c, rng);
  EXPECT_EQ(rr.best, 1u);
  EXPECT_EQ(rr.worst, 2u);
  const std::vector<std::size_t> dup{2, 1, 3};
  EXPECT_EQ(rank_candidates(env, 0, dup, rng).best, 1u);
  const std::vector<std::size_t> same{4, 4};
  const auto tie = rank_candidates(env, 0, same, rng);
  EXPECT_EQ(tie.best, 0u);
  EXPECT_EQ(tie.worst, 0u);
  const std::vector<std::size_t> one{1};
  EXPECT_THROW(rank_candidates(env, 0, one, rng), ValidationError);
}

TEST(Ranker, NoiseChangesOrderSometimes) {
  Eigen::MatrixXd r(1, 2);
  r << 0.1, 0.0;
  const auto env = Environment(Eigen::VectorXd::Ones(1), RewardFunction(r), 1.0);
  Rng rng(4);
  const std::vector<std::size_t> c{0, 1};
  int flips = 0;
  for (int i = 0; i < 1000; ++i) flips += rank_candidates(env, 0, c, rng).best == 1;
  EXPECT_GT(flips, 300);
  EXPECT_LT(flips, 500);
}

TEST(Judge, EndpointsAndRounding) {
  const auto e1 = Environment::e1();
  EXPECT_EQ(judge_score(e1, 0, 0), 10);
  EXPECT_EQ(judge_score(e1, 0, 1), 1);
  Eigen::MatrixXd r(1, 3);
  r << 0.0, 0.5, 1.0;
  const auto env = Environment::from_table(r);
  EXPECT_EQ(judge_score(env, 0, 1), 6);  // 1 + 4.5 rounds half up
  EXPECT_EQ(judge_score(Environment::from_table(Eigen::MatrixXd::Constant(1, 3, 2.0)), 0, 2), 10);
}

TEST(Judge, GlobalRangeUsesWholeTable) {
  Eigen::MatrixXd r(2, 2);
  r << 0.0, 1.0, 2.0, 3.0;
  Environment env(Eigen::VectorXd::Constant(2, 0.5), RewardFunction(r), 0.0, 10, JudgeRange::global);
  EXPECT_EQ(judge_score(env, 0, 0), 1);
  EXPECT_EQ(judge_score(env, 1, 1), 10);
  EXPECT_EQ(judge_score(env, 0, 1), 4);
  env.judge_range = JudgeRange::per_prompt;
  EXPECT_EQ(judge_score(env, 0, 1), 10);
}

TEST(Environment, ValidatesAndRoundTrips) {
  EXPECT_THROW(Environment(Eigen::VectorXd::Constant(2, 0.4), RewardFunction(Eigen::MatrixXd::Zero(2, 2))),
               ValidationError);
  EXPECT_THROW(Environment(Eigen::VectorXd::Ones(2), RewardFunction(Eigen::MatrixXd::Zero(1, 2))), ValidationError);
  const auto env = Environment::random_gaussian(3, 4, 11, 2.0, 0.5);
  const auto back = Environment::from_json(env.to_json());
  EXPECT_EQ(back.r_star.values, env.r_star.values);
  EXPECT_EQ(back.nu, env.nu);
  EXPECT_EQ(back.ranker_noise, 0.5);
}

TEST(Environment, LinearRewardIsInFeatureSpan) {
  const auto fm = FeatureMap::random_gaussian(4, 5, 3, 1);
  const auto env = Environment::linear(fm, 9);
  // Least squares over all (x, y) rows recovers r* exactly.
  Eigen::VectorXd target(20);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 5; ++y) target[static_cast<Eigen::Index>(x * 5 + y)] = env.r_star(x, y);
  const Eigen::VectorXd theta = fm.matrix().colPivHouseholderQr().solve(target);
  EXPECT_LT((fm.matrix() * theta - target).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Judge, MonotoneInReward) {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto env = Environment::random_gaussian(3, 8, rng.engine()(), 1.0);
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t a = 0; a < 8; ++a)
        for (std::size_t b = 0; b < 8; ++b)
          if (env.r_star(x, a) <= env.r_star(x, b)) {
            EXPECT_LE(judge_score(env, x, a), judge_score(env, x, b));
          }
  }
}

TEST(Ranker, NoiselessIsPureFunctionOfReward) {
  const auto env = Environment::random_gaussian(2, 6, 8);
  Rng a(1);
  Rng b(999);
  const std::vector<std::size_t> c{5, 0, 3, 2};
  for (int i = 0; i < 10; ++i) {
    const auto ra = rank_candidates(env, 1, c, a);
    const auto rb = rank_candidates(env, 1, c, b);
    EXPECT_EQ(ra.best, rb.best);
    EXPECT_EQ(ra.worst, rb.worst);
  }
}
