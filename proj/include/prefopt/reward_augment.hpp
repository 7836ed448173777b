#pragma once

#include <algorithm>
#include <cctype>
#include <limits>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "prefopt/dataset_io.hpp"
#include "prefopt/domain.hpp"
#include "prefopt/errors.hpp"

namespace prefopt {

inline const std::string kDefaultGoalTemplate = "Generate responses of score {g}.\n";

// r_g(x, y) = 1 iff the response's score equals the goal.
constexpr int goal_match_reward(int goal, int score) { return goal == score ? 1 : 0; }

struct GoalConditionedPrompt {
  Label base_prompt;
  int goal = 0;
  Label rendered;  // text with the goal prefix, or the extended prompt index

  friend bool operator==(const GoalConditionedPrompt&, const GoalConditionedPrompt&) = default;
};

namespace detail {

inline void check_goal(int goal, int g_max) {
  if (g_max < 1) throw ValidationError("g_max must be at least 1");
  if (goal < 1 || goal > g_max) {
    throw ValidationError("goal " + std::to_string(goal) + " outside [1, " + std::to_string(g_max) + "]");
  }
}

// The placeholder must appear once and be followed by a non-digit so the
// rendered goal can be read back unambiguously.
inline std::size_t check_template(const std::string& tmpl) {
  const auto pos = tmpl.find("{g}");
  if (pos == std::string::npos) throw ValidationError("goal template is missing the {g} placeholder");
  if (tmpl.find("{g}", pos + 3) != std::string::npos) throw ValidationError("goal template repeats {g}");
  if (pos + 3 >= tmpl.size() || std::isdigit(static_cast<unsigned char>(tmpl[pos + 3]))) {
    throw ValidationError("goal template needs a non-digit character after {g}");
  }
  return pos;
}

}  // namespace detail

// Text prompts get the rendered template prepended; index prompts map to the
// extended index base * g_max + (g - 1).
inline GoalConditionedPrompt condition_prompt(const Label& base, int goal, int g_max,
                                              const std::string& tmpl = kDefaultGoalTemplate) {
  detail::check_goal(goal, g_max);
  if (const auto* idx = std::get_if<std::int64_t>(&base)) {
    if (*idx < 0) throw ValidationError("prompt index must be nonnegative");
    return {base, goal, Label{*idx * g_max + (goal - 1)}};
  }
  const auto pos = detail::check_template(tmpl);
  std::string rendered = tmpl;
  rendered.replace(pos, 3, std::to_string(goal));
  return {base, goal, Label{rendered + std::get<std::string>(base)}};
}

// Inverse of condition_prompt.
inline GoalConditionedPrompt unwrap_prompt(const Label& rendered, int g_max,
                                           const std::string& tmpl = kDefaultGoalTemplate) {
  if (g_max < 1) throw ValidationError("g_max must be at least 1");
  if (const auto* idx = std::get_if<std::int64_t>(&rendered)) {
    if (*idx < 0) throw ValidationError("prompt index must be nonnegative");
    return {Label{*idx / g_max}, static_cast<int>(*idx % g_max) + 1, rendered};
  }
  const auto& text = std::get<std::string>(rendered);
  const auto pos = detail::check_template(tmpl);
  const std::string head = tmpl.substr(0, pos);
  const std::string tail = tmpl.substr(pos + 3);
  if (text.compare(0, head.size(), head) != 0) throw ValidationError("prompt does not carry the goal prefix");
  std::size_t end = head.size();
  while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
  if (end == head.size()) throw ValidationError("prompt prefix has no goal value");
  const int goal = std::atoi(text.substr(head.size(), end - head.size()).c_str());
  if (text.compare(end, tail.size(), tail) != 0) throw ValidationError("prompt does not carry the goal prefix");
  detail::check_goal(goal, g_max);
  return {Label{text.substr(end + tail.size())}, goal, rendered};
}

// Wraps every prompt with the top goal g = g_max for inference.
struct InferenceGoal {
  int g_max = 10;
  std::string tmpl = kDefaultGoalTemplate;

  GoalConditionedPrompt operator()(const Label& base) const { return condition_prompt(base, g_max, g_max, tmpl); }
};

inline InferenceGoal inference_goal(int g_max, std::string tmpl = kDefaultGoalTemplate) {
  detail::check_goal(g_max, g_max);
  if (tmpl != kDefaultGoalTemplate) detail::check_template(tmpl);
  return {g_max, std::move(tmpl)};
}

struct AugmentedPair {
  PreferenceTriple triple;  // prompt is the rendered goal-conditioned prompt
  std::string source_id;
  int goal = 0;

  friend bool operator==(const AugmentedPair&, const AugmentedPair&) = default;
};

enum class TiePolicy { drop, keep_original, emit_both };

inline TiePolicy parse_tie_policy(const std::string& name) {
  if (name == "drop") return TiePolicy::drop;
  if (name == "keep_original") return TiePolicy::keep_original;
  if (name == "emit_both") return TiePolicy::emit_both;
  throw ValidationError("unknown tie policy '" + name + "'");
}

struct AugmentOptions {
  TiePolicy tie_policy = TiePolicy::drop;
  int g_max = 10;
  std::string tmpl = kDefaultGoalTemplate;
};

// Two goal-conditioned pairs per scored pair: under g = r_w the original
// order, under g = r_l the swapped order (y_l now matches the goal).
inline std::vector<AugmentedPair> augment_pair(const ScoredPair& pair, const AugmentOptions& opts = {}) {
  if (!pair.scored()) throw ValidationError("record '" + pair.id + "' is not scored");
  const int r_w = *pair.chosen_score;
  const int r_l = *pair.rejected_score;
  auto make = [&](int goal, const Label& chosen, const Label& rejected, const char* suffix) {
    AugmentedPair out;
    out.triple.id = pair.id + suffix;
    out.triple.prompt = condition_prompt(pair.prompt, goal, opts.g_max, opts.tmpl).rendered;
    out.triple.chosen = chosen;
    out.triple.rejected = rejected;
    out.source_id = pair.id;
    out.goal = goal;
    return out;
  };
  if (r_w != r_l) {
    return {make(r_w, pair.chosen, pair.rejected, "#w"), make(r_l, pair.rejected, pair.chosen, "#l")};
  }
  switch (opts.tie_policy) {
    case TiePolicy::drop:
      return {};
    case TiePolicy::keep_original:
      return {make(r_w, pair.chosen, pair.rejected, "#w")};
    case TiePolicy::emit_both:
      return {make(r_w, pair.chosen, pair.rejected, "#w"), make(r_l, pair.rejected, pair.chosen, "#l")};
  }
  return {};
}

struct AugmentedDataset {
  std::vector<AugmentedPair> pairs;
  ordered_json provenance = ordered_json::object();

  std::size_t size() const { return pairs.size(); }

  // Plain triples over the conditioned prompts, ready for training.
  PreferenceDataset as_preference_dataset() const {
    PreferenceDataset ds;
    ds.provenance = provenance;
    ds.triples.reserve(pairs.size());
    for (const auto& p : pairs) ds.triples.push_back(p.triple);
    return ds;
  }
};

inline AugmentedDataset augment_dataset(const PreferenceDataset& dataset, const AugmentOptions& opts = {}) {
  AugmentedDataset out;
  std::size_t ties = 0;
  for (const auto& pair : dataset.triples) {
    if (!pair.scored()) throw ValidationError("record '" + pair.id + "' is not scored");
    if (*pair.chosen_score == *pair.rejected_score) ++ties;
    for (auto& a : augment_pair(pair, opts)) out.pairs.push_back(std::move(a));
  }
  out.provenance["source_records"] = dataset.size();
  out.provenance["ties"] = ties;
  out.provenance["ties_dropped"] = opts.tie_policy == TiePolicy::drop ? ties : 0;
  out.provenance["g_max"] = opts.g_max;
  return out;
}

inline ordered_json augmented_to_json(const AugmentedPair& p) {
  ordered_json j;
  j["id"] = p.triple.id;
  j["source_id"] = p.source_id;
  j["goal"] = p.goal;
  detail::put_label(j, "prompt", p.triple.prompt);
  detail::put_label(j, "chosen", p.triple.chosen);
  detail::put_label(j, "rejected", p.triple.rejected);
  return j;
}

inline void write_augmented(std::ostream& out, const AugmentedDataset& ds) {
  for (const auto& p : ds.pairs) out << augmented_to_json(p).dump() << '\n';
}

inline AugmentedDataset parse_augmented(std::istream& in, int g_max = 10) {
  AugmentedDataset ds;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    AugmentedPair p;
    if (!j.contains("id") || !j["id"].is_string()) detail::bad_line(line, "id", "must be a string");
    if (!j.contains("source_id") || !j["source_id"].is_string()) detail::bad_line(line, "source_id", "must be a string");
    if (!j.contains("goal") || !j["goal"].is_number_integer()) detail::bad_line(line, "goal", "must be an integer");
    p.triple.id = j["id"].get<std::string>();
    p.source_id = j["source_id"].get<std::string>();
    p.goal = j["goal"].get<int>();
    if (p.goal < 1 || p.goal > g_max) detail::bad_line(line, "goal", "outside the score scale");
    p.triple.prompt = detail::label_field(j, "prompt", line);
    p.triple.chosen = detail::label_field(j, "chosen", line);
    p.triple.rejected = detail::label_field(j, "rejected", line);
    if (p.triple.chosen == p.triple.rejected) detail::bad_line(line, "rejected", "equals chosen");
    if (!ids.insert(p.triple.id).second) detail::bad_line(line, "id", "duplicates an earlier id");
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

// Deterministic policies (single responses) maximizing E[r_g], and those
// minimizing E[|r - g|], given each response's score.
inline std::vector<std::size_t> goal_reward_maximizers(std::span<const int> scores, int goal) {
  int best = 0;
  for (int s : scores) best = std::max(best, goal_match_reward(goal, s));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (goal_match_reward(goal, scores[i]) == best) out.push_back(i);
  return out;
}

inline std::vector<std::size_t> goal_distance_minimizers(std::span<const int> scores, int goal) {
  int best = std::numeric_limits<int>::max();
  for (int s : scores) best = std::min(best, std::abs(s - goal));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::abs(scores[i] - goal) == best) out.push_back(i);
  return out;
}

}  // namespace prefopt
