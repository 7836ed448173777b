#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "prefopt/errors.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

using ordered_json = nlohmann::ordered_json;

// A prompt or response: an index into a finite space, or display text.
using Label = std::variant<std::int64_t, std::string>;

inline std::string to_string(const Label& label) {
  if (const auto* i = std::get_if<std::int64_t>(&label)) return std::to_string(*i);
  return std::get<std::string>(label);
}

// Index of a label inside a space of the given size. Text labels have no index.
inline std::size_t index_of(const Label& label, std::size_t space_size, const char* what) {
  const auto* i = std::get_if<std::int64_t>(&label);
  if (!i) throw ValidationError(std::string(what) + " is text; an index is required here");
  if (*i < 0 || static_cast<std::size_t>(*i) >= space_size) {
    throw ValidationError(std::string(what) + " index " + std::to_string(*i) + " out of range [0, " +
                          std::to_string(space_size) + ")");
  }
  return static_cast<std::size_t>(*i);
}

inline Label label_of(std::size_t index) { return Label{static_cast<std::int64_t>(index)}; }

struct Space {
  std::size_t size = 1;
  std::vector<std::string> labels;

  static Space make(std::size_t size, std::vector<std::string> labels = {}) {
    if (size == 0) throw ValidationError("space size must be at least 1");
    if (!labels.empty() && labels.size() != size) {
      throw ValidationError("space has " + std::to_string(size) + " entries but " +
                            std::to_string(labels.size()) + " labels");
    }
    return Space{size, std::move(labels)};
  }

  std::string display(std::size_t i) const {
    return labels.empty() ? std::to_string(i) : labels.at(i);
  }
};

enum class FeatureMode { one_hot, random_gaussian };

// phi(x, y) for every (prompt, response) pair, stored as rows of a
// (|X|*|Y|) x d matrix in prompt-major order.
class FeatureMap {
 public:
  static FeatureMap one_hot(std::size_t prompts, std::size_t responses) {
    FeatureMap fm(FeatureMode::one_hot, prompts, responses, prompts * responses, 0, 1.0);
    fm.values_ = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(prompts * responses),
                                           static_cast<Eigen::Index>(prompts * responses));
    return fm;
  }

  // Entries i.i.d. Normal(0, scale^2); fully determined by the seed.
  static FeatureMap random_gaussian(std::size_t prompts, std::size_t responses, std::size_t dim,
                                    std::uint64_t seed, double scale = 1.0) {
    if (dim == 0) throw ValidationError("feature dimension must be positive");
    FeatureMap fm(FeatureMode::random_gaussian, prompts, responses, dim, seed, scale);
    fm.values_.resize(static_cast<Eigen::Index>(prompts * responses), static_cast<Eigen::Index>(dim));
    Rng rng(seed, 0xfea7);
    for (Eigen::Index r = 0; r < fm.values_.rows(); ++r)
      for (Eigen::Index c = 0; c < fm.values_.cols(); ++c) fm.values_(r, c) = rng.normal(0.0, scale);
    return fm;
  }

  FeatureMode mode() const { return mode_; }
  std::size_t num_prompts() const { return prompts_; }
  std::size_t num_responses() const { return responses_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  double scale() const { return scale_; }

  // |Y| x d block of features for one prompt.
  auto block(std::size_t prompt) const {
    return values_.middleRows(static_cast<Eigen::Index>(prompt * responses_),
                              static_cast<Eigen::Index>(responses_));
  }

  Eigen::VectorXd phi(std::size_t prompt, std::size_t response) const {
    return values_.row(static_cast<Eigen::Index>(prompt * responses_ + response)).transpose();
  }

  const Eigen::MatrixXd& matrix() const { return values_; }

  ordered_json to_json() const {
    ordered_json j;
    j["mode"] = mode_ == FeatureMode::one_hot ? "one_hot" : "random_gaussian";
    j["prompts"] = prompts_;
    j["responses"] = responses_;
    if (mode_ == FeatureMode::random_gaussian) {
      j["dim"] = dim_;
      j["seed"] = seed_;
      j["scale"] = scale_;
    }
    return j;
  }

  static FeatureMap from_json(const ordered_json& j) {
    const auto mode = j.at("mode").get<std::string>();
    const auto prompts = j.at("prompts").get<std::size_t>();
    const auto responses = j.at("responses").get<std::size_t>();
    if (prompts == 0 || responses == 0) throw ValidationError("feature map spaces must be nonempty");
    if (mode == "one_hot") return one_hot(prompts, responses);
    if (mode == "random_gaussian") {
      return random_gaussian(prompts, responses, j.at("dim").get<std::size_t>(),
                             j.at("seed").get<std::uint64_t>(), j.value("scale", 1.0));
    }
    throw ValidationError("unknown feature map mode '" + mode + "'");
  }

 private:
  FeatureMap(FeatureMode mode, std::size_t prompts, std::size_t responses, std::size_t dim,
             std::uint64_t seed, double scale)
      : mode_(mode), prompts_(prompts), responses_(responses), dim_(dim), seed_(seed), scale_(scale) {
    if (prompts == 0 || responses == 0) throw ValidationError("feature map spaces must be nonempty");
  }

  FeatureMode mode_;
  std::size_t prompts_;
  std::size_t responses_;
  std::size_t dim_;
  std::uint64_t seed_;
  double scale_;
  Eigen::MatrixXd values_;
};

// (prompt, chosen, rejected), optionally carrying judge scores. A record with
// both scores is a scored pair. Keys not in the schema survive in `extra`.
struct PreferenceTriple {
  std::string id;
  Label prompt;
  Label chosen;
  Label rejected;
  std::optional<int> chosen_score;
  std::optional<int> rejected_score;
  ordered_json extra = ordered_json::object();

  bool scored() const { return chosen_score.has_value() && rejected_score.has_value(); }

  friend bool operator==(const PreferenceTriple&, const PreferenceTriple&) = default;
};

using ScoredPair = PreferenceTriple;

inline PreferenceTriple make_triple(std::string id, std::size_t prompt, std::size_t chosen,
                                    std::size_t rejected) {
  return PreferenceTriple{std::move(id), label_of(prompt), label_of(chosen), label_of(rejected), {}, {}, {}};
}

// Index-only view of a triple, used by the numerical code.
struct Comparison {
  std::size_t prompt;
  std::size_t chosen;
  std::size_t rejected;
};

struct PreferenceDataset {
  std::vector<PreferenceTriple> triples;
  ordered_json provenance = ordered_json::object();

  std::size_t size() const { return triples.size(); }
  bool empty() const { return triples.empty(); }

  // Ids unique, chosen != rejected, scores (when present) inside [1, score_max].
  void validate(int score_max = 10) const {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const auto& t = triples[i];
      if (!seen.insert(t.id).second) throw ValidationError("duplicate id '" + t.id + "'");
      if (t.chosen == t.rejected) {
        throw ValidationError("record '" + t.id + "': chosen equals rejected");
      }
      for (const auto& s : {t.chosen_score, t.rejected_score}) {
        if (s && (*s < 1 || *s > score_max)) {
          throw ValidationError("record '" + t.id + "': score " + std::to_string(*s) +
                                " outside [1, " + std::to_string(score_max) + "]");
        }
      }
    }
  }

  std::vector<Comparison> comparisons(std::size_t prompts, std::size_t responses) const {
    std::vector<Comparison> out;
    out.reserve(triples.size());
    for (const auto& t : triples) {
      out.push_back({index_of(t.prompt, prompts, "prompt"), index_of(t.chosen, responses, "chosen"),
                     index_of(t.rejected, responses, "rejected")});
    }
    return out;
  }

  friend bool operator==(const PreferenceDataset&, const PreferenceDataset&) = default;
};

// Splits into `parts` contiguous, order-preserving portions whose sizes differ
// by at most one; the earliest portions take the remainder.
inline std::vector<PreferenceDataset> partition_dataset(const PreferenceDataset& dataset, std::size_t parts) {
  if (parts == 0) throw ValidationError("partition count must be at least 1");
  const std::size_t n = dataset.size();
  const std::size_t base = n / parts;
  const std::size_t extra = n % parts;
  std::vector<PreferenceDataset> out(parts);
  std::size_t begin = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out[p].triples.assign(dataset.triples.begin() + static_cast<std::ptrdiff_t>(begin),
                          dataset.triples.begin() + static_cast<std::ptrdiff_t>(begin + len));
    out[p].provenance = dataset.provenance;
    out[p].provenance["part"] = p;
    out[p].provenance["parts"] = parts;
    out[p].provenance["offset"] = begin;
    begin += len;
  }
  return out;
}

}  // namespace prefopt
