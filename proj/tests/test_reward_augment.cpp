#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "prefopt/reward_augment.hpp"

using namespace prefopt;

namespace {

ScoredPair scored(std::string id, Label prompt, Label chosen, Label rejected, int rw, int rl) {
  PreferenceTriple t{std::move(id), std::move(prompt), std::move(chosen), std::move(rejected), rw, rl, {}};
  return t;
}

}  // namespace

TEST(GoalReward, Indicator) {
  EXPECT_EQ(goal_match_reward(7, 7), 1);
  EXPECT_EQ(goal_match_reward(7, 3), 0);
}

TEST(ConditionPrompt, TextTemplate) {
  const auto c = condition_prompt(Label{std::string("Write a poem")}, 10, 10);
  EXPECT_EQ(std::get<std::string>(c.rendered), "Generate responses of score 10.\nWrite a poem");
  EXPECT_EQ(unwrap_prompt(c.rendered, 10), c);
}

TEST(ConditionPrompt, TabularIndex) {
  EXPECT_EQ(condition_prompt(label_of(2), 3, 10).rendered, label_of(22));
  EXPECT_EQ(unwrap_prompt(label_of(22), 10).goal, 3);
  EXPECT_EQ(unwrap_prompt(label_of(22), 10).base_prompt, label_of(2));
}

TEST(ConditionPrompt, InjectiveOverGrid) {
  std::set<std::string> text;
  std::set<std::int64_t> index;
  for (int x = 0; x < 6; ++x)
    for (int g = 1; g <= 10; ++g) {
      text.insert(std::get<std::string>(condition_prompt(Label{"p" + std::to_string(x)}, g, 10).rendered));
      index.insert(std::get<std::int64_t>(condition_prompt(label_of(static_cast<std::size_t>(x)), g, 10).rendered));
    }
  EXPECT_EQ(text.size(), 60u);
  EXPECT_EQ(index.size(), 60u);
}

TEST(ConditionPrompt, RejectsBadGoalsAndTemplates) {
  EXPECT_THROW(condition_prompt(label_of(0), 0, 10), ValidationError);
  EXPECT_THROW(condition_prompt(label_of(0), 11, 10), ValidationError);
  EXPECT_THROW(condition_prompt(Label{std::string("a")}, 3, 10, "no placeholder"), ValidationError);
  EXPECT_THROW(condition_prompt(Label{std::string("a")}, 3, 10, "score {g}"), ValidationError);
  EXPECT_THROW(condition_prompt(Label{std::string("a")}, 3, 10, "{g}{g}: "), ValidationError);
  EXPECT_THROW(unwrap_prompt(Label{std::string("plain prompt")}, 10), ValidationError);
  const auto custom = condition_prompt(Label{std::string("a")}, 7, 10, "[goal {g}] ");
  EXPECT_EQ(std::get<std::string>(custom.rendered), "[goal 7] a");
  EXPECT_EQ(unwrap_prompt(custom.rendered, 10, "[goal {g}] ").base_prompt, Label{std::string("a")});
}

TEST(AugmentPair, RelabelsBothGoals) {
  const auto out = augment_pair(scored("s", Label{std::string("x")}, Label{std::string("yw")},
                                       Label{std::string("yl")}, 8, 3));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].goal, 8);
  EXPECT_EQ(out[0].triple.chosen, Label{std::string("yw")});
  EXPECT_EQ(out[0].triple.rejected, Label{std::string("yl")});
  EXPECT_EQ(out[1].goal, 3);
  EXPECT_EQ(out[1].triple.chosen, Label{std::string("yl")});
  EXPECT_EQ(out[1].triple.rejected, Label{std::string("yw")});
  EXPECT_EQ(unwrap_prompt(out[1].triple.prompt, 10).goal, 3);
  EXPECT_EQ(out[0].source_id, "s");
  EXPECT_NE(out[0].triple.id, out[1].triple.id);
}

TEST(AugmentPair, TiePolicies) {
  const auto tie = scored("t", label_of(0), label_of(1), label_of(2), 5, 5);
  EXPECT_TRUE(augment_pair(tie).empty());
  EXPECT_EQ(augment_pair(tie, {TiePolicy::keep_original, 10, kDefaultGoalTemplate}).size(), 1u);
  EXPECT_EQ(augment_pair(tie, {TiePolicy::emit_both, 10, kDefaultGoalTemplate}).size(), 2u);
  EXPECT_THROW(augment_pair(make_triple("u", 0, 1, 2)), ValidationError);
  EXPECT_THROW(parse_tie_policy("sometimes"), ValidationError);
}

TEST(AugmentDataset, DoublesAndCountsTies) {
  PreferenceDataset ds;
  for (int i = 0; i < 5; ++i) ds.triples.push_back(scored("p" + std::to_string(i), label_of(i), label_of(0), label_of(1), 9 - i, 1 + i % 3));
  const auto aug = augment_dataset(ds);
  EXPECT_EQ(aug.size(), 10u);
  EXPECT_EQ(augment_dataset(PreferenceDataset{}).size(), 0u);
  ds.triples.push_back(scored("tie", label_of(0), label_of(0), label_of(1), 4, 4));
  const auto with_tie = augment_dataset(ds);
  EXPECT_EQ(with_tie.size(), 10u);
  EXPECT_EQ(with_tie.provenance["ties"], 1);
  EXPECT_EQ(with_tie.as_preference_dataset().size(), 10u);
}

TEST(AugmentDataset, JsonlRoundTripIsByteStable) {
  PreferenceDataset ds;
  ds.triples.push_back(scored("a", Label{std::string("Why?")}, Label{std::string("Because.")},
                              Label{std::string("No.")}, 9, 2));
  ds.triples.push_back(scored("b", label_of(3), label_of(4), label_of(1), 1, 6));
  std::ostringstream first;
  write_augmented(first, augment_dataset(ds));
  std::istringstream in(first.str());
  std::ostringstream second;
  write_augmented(second, parse_augmented(in));
  EXPECT_EQ(first.str(), second.str());

  std::istringstream bad(R"({"id":"a","source_id":"a","goal":11,"prompt":1,"chosen":1,"rejected":2})");
  EXPECT_THROW(parse_augmented(bad), ValidationError);
}

TEST(InferenceGoal, WrapsWithTopGoal) {
  const auto wrap = inference_goal(10);
  for (int x = 0; x < 4; ++x) EXPECT_EQ(wrap(label_of(static_cast<std::size_t>(x))).goal, 10);
  EXPECT_EQ(std::get<std::string>(wrap(Label{std::string("q")}).rendered), "Generate responses of score 10.\nq");
}

TEST(GoalEquivalence, MaximizersMatchDistanceMinimizers) {
  Rng rng(3);
  std::size_t checked = 0;
  for (int i = 0; i < 500; ++i) {
    std::vector<int> s(1 + rng.index(6));
    for (auto& v : s) v = 1 + static_cast<int>(rng.index(10));
    for (int g = 1; g <= 10; ++g) {
      if (std::find(s.begin(), s.end(), g) == s.end()) continue;
      ++checked;
      EXPECT_EQ(goal_reward_maximizers(s, g), goal_distance_minimizers(s, g));
    }
  }
  EXPECT_GT(checked, 500u);
  // Without an attainable goal the equivalence breaks: every response ties on r_g.
  const std::vector<int> s{2, 9};
  EXPECT_EQ(goal_reward_maximizers(s, 3).size(), 2u);
  EXPECT_EQ(goal_distance_minimizers(s, 3).size(), 1u);
}
