#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prefopt/domain.hpp"
#include "prefopt/environment.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/hashing.hpp"
#include "prefopt/objectives.hpp"
#include "prefopt/rng.hpp"

namespace prefopt {

enum class Algorithm { dpo_offline, dpo_iterative, selm, selm_theoretical };
enum class TheoryVariant { main, alternate };
enum class LabelMode { bradley_terry, ranker };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::dpo_offline: return "dpo_offline";
    case Algorithm::dpo_iterative: return "dpo_iterative";
    case Algorithm::selm: return "selm";
    case Algorithm::selm_theoretical: return "selm_theoretical";
  }
  return "?";
}

// Accepts both the config spelling and the CLI spelling (dpo, iter-dpo, selm, selm-theory).
inline Algorithm parse_algorithm(const std::string& name) {
  if (name == "dpo_offline" || name == "dpo") return Algorithm::dpo_offline;
  if (name == "dpo_iterative" || name == "iter-dpo") return Algorithm::dpo_iterative;
  if (name == "selm") return Algorithm::selm;
  if (name == "selm_theoretical" || name == "selm-theory") return Algorithm::selm_theoretical;
  throw ValidationError("unknown algorithm '" + name + "'");
}

struct OptimizerConfig {
  double learning_rate = 0.5;
  std::size_t steps_per_iteration = 50;
  double lr_decay = 1.0;          // learning rate at iteration t is lr * lr_decay^(t-1)
  std::size_t minibatch = 0;      // 0 = full batch
  bool restart_from_initial = false;
};

struct EnvironmentSpec {
  std::size_t prompts = 4;
  std::size_t responses = 4;
  std::string reward = "linear";  // linear | gaussian | table
  double reward_scale = 1.0;
  std::optional<std::uint64_t> seed = 1;  // unset: derived from the run seed
  double ranker_noise = 0.0;
  int g_max = 10;
  std::optional<Eigen::MatrixXd> table;
};

struct FeatureSpec {
  FeatureMode mode = FeatureMode::random_gaussian;
  std::size_t dim = 8;
  std::optional<std::uint64_t> seed = 2;  // unset: derived from the run seed
  double scale = 1.0;
};

struct DataSpec {
  std::size_t pairs_per_iteration = 20;
  LabelMode label = LabelMode::bradley_terry;
  bool generate = true;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::selm;
  std::size_t T = 3;
  double alpha = 0.0;
  double beta = 0.1;
  AlphaConvention alpha_convention = AlphaConvention::times_beta;
  ExpectationMode expectation_mode = ExpectationMode::recorded_samples;
  OptimizerConfig optimizer;
  std::vector<std::uint64_t> seeds{0};
  EnvironmentSpec environment;
  FeatureSpec features;
  DataSpec data;
  TheoryVariant theory_variant = TheoryVariant::main;
  std::size_t histogram_bins = 10;

  void validate() const {
    if (T < 1) throw ValidationError("T must be at least 1");
    if (!(optimizer.learning_rate > 0.0)) throw ValidationError("optimizer.learning_rate must be positive");
    if (optimizer.steps_per_iteration < 1) throw ValidationError("optimizer.steps_per_iteration must be at least 1");
    if (!(optimizer.lr_decay > 0.0)) throw ValidationError("optimizer.lr_decay must be positive");
    if (seeds.empty()) throw ValidationError("seeds must be nonempty");
    if (environment.prompts < 1 || environment.responses < 2) {
      throw ValidationError("environment needs at least one prompt and two responses");
    }
    if (data.pairs_per_iteration < 1) throw ValidationError("data.pairs_per_iteration must be at least 1");
    if (histogram_bins < 1) throw ValidationError("histogram_bins must be at least 1");
    objective().validate();
  }

  ObjectiveConfig objective() const { return {beta, alpha, expectation_mode, alpha_convention}; }

  ordered_json to_json() const {
    ordered_json j;
    j["algorithm"] = to_string(algorithm);
    j["T"] = T;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["alpha_convention"] = alpha_convention == AlphaConvention::times_beta ? "times_beta" : "plain";
    j["expectation_mode"] = expectation_mode == ExpectationMode::exact_tabular ? "exact_tabular" : "recorded_samples";
    j["optimizer"] = {{"learning_rate", optimizer.learning_rate},
                      {"steps_per_iteration", optimizer.steps_per_iteration},
                      {"lr_decay", optimizer.lr_decay},
                      {"minibatch", optimizer.minibatch},
                      {"restart_from_initial", optimizer.restart_from_initial}};
    j["seeds"] = seeds;
    ordered_json env{{"prompts", environment.prompts},
                     {"responses", environment.responses},
                     {"reward", environment.reward},
                     {"reward_scale", environment.reward_scale},
                     {"seed", environment.seed ? ordered_json(*environment.seed) : ordered_json(nullptr)},
                     {"ranker_noise", environment.ranker_noise},
                     {"g_max", environment.g_max}};
    if (environment.table) {
      ordered_json rows = ordered_json::array();
      for (Eigen::Index x = 0; x < environment.table->rows(); ++x) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index y = 0; y < environment.table->cols(); ++y) row.push_back((*environment.table)(x, y));
        rows.push_back(std::move(row));
      }
      env["table"] = std::move(rows);
    }
    j["environment"] = std::move(env);
    j["features"] = {{"mode", features.mode == FeatureMode::one_hot ? "one_hot" : "random_gaussian"},
                     {"dim", features.dim},
                     {"seed", features.seed ? ordered_json(*features.seed) : ordered_json(nullptr)},
                     {"scale", features.scale}};
    j["data"] = {{"pairs_per_iteration", data.pairs_per_iteration},
                 {"label", data.label == LabelMode::bradley_terry ? "bradley_terry" : "ranker"},
                 {"generate", data.generate}};
    j["theory_variant"] = theory_variant == TheoryVariant::main ? "main" : "alternate";
    j["histogram_bins"] = histogram_bins;
    return j;
  }

  std::string hash() const { return sha256_hex(to_json().dump()); }

  // Missing keys keep their defaults; unknown keys are rejected by name.
  static RunConfig from_json(const ordered_json& j) {
    RunConfig c;
    auto reject_unknown = [](const ordered_json& obj, const std::set<std::string>& allowed, const std::string& where) {
      if (!obj.is_object()) throw ValidationError("config field '" + where + "' must be an object");
      for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
          throw ValidationError("unknown config field '" + (where.empty() ? "" : where + ".") + it.key() + "'");
        }
      }
    };
    auto field = [](const ordered_json& obj, const char* key, auto& out, const std::string& where) {
      if (!obj.contains(key)) return;
      try {
        out = obj.at(key).get<std::decay_t<decltype(out)>>();
      } catch (const nlohmann::json::exception&) {
        throw ValidationError("config field '" + (where.empty() ? "" : where + ".") + key + "' has the wrong type");
      }
    };
    reject_unknown(j,
                   {"algorithm", "T", "alpha", "beta", "alpha_convention", "expectation_mode", "optimizer", "seeds",
                    "environment", "features", "data", "theory_variant", "histogram_bins"},
                   "");
    std::string s;
    if (j.contains("algorithm")) {
      field(j, "algorithm", s, "");
      c.algorithm = parse_algorithm(s);
    }
    field(j, "T", c.T, "");
    field(j, "alpha", c.alpha, "");
    field(j, "beta", c.beta, "");
    if (j.contains("alpha_convention")) {
      field(j, "alpha_convention", s, "");
      if (s == "times_beta") c.alpha_convention = AlphaConvention::times_beta;
      else if (s == "plain") c.alpha_convention = AlphaConvention::plain;
      else throw ValidationError("config field 'alpha_convention' must be times_beta or plain");
    }
    if (j.contains("expectation_mode")) {
      field(j, "expectation_mode", s, "");
      if (s == "exact_tabular") c.expectation_mode = ExpectationMode::exact_tabular;
      else if (s == "recorded_samples") c.expectation_mode = ExpectationMode::recorded_samples;
      else throw ValidationError("config field 'expectation_mode' must be exact_tabular or recorded_samples");
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      reject_unknown(o, {"learning_rate", "steps_per_iteration", "lr_decay", "minibatch", "restart_from_initial"},
                     "optimizer");
      field(o, "learning_rate", c.optimizer.learning_rate, "optimizer");
      field(o, "steps_per_iteration", c.optimizer.steps_per_iteration, "optimizer");
      field(o, "lr_decay", c.optimizer.lr_decay, "optimizer");
      field(o, "minibatch", c.optimizer.minibatch, "optimizer");
      field(o, "restart_from_initial", c.optimizer.restart_from_initial, "optimizer");
    }
    auto optional_seed = [&](const ordered_json& obj, std::optional<std::uint64_t>& out, const std::string& where) {
      if (!obj.contains("seed")) return;
      if (obj["seed"].is_null()) {
        out.reset();
        return;
      }
      std::uint64_t v = 0;
      field(obj, "seed", v, where);
      out = v;
    };
    field(j, "seeds", c.seeds, "");
    if (j.contains("environment")) {
      const auto& e = j["environment"];
      reject_unknown(e, {"prompts", "responses", "reward", "reward_scale", "seed", "ranker_noise", "g_max", "table"},
                     "environment");
      field(e, "prompts", c.environment.prompts, "environment");
      field(e, "responses", c.environment.responses, "environment");
      field(e, "reward", c.environment.reward, "environment");
      field(e, "reward_scale", c.environment.reward_scale, "environment");
      optional_seed(e, c.environment.seed, "environment");
      field(e, "ranker_noise", c.environment.ranker_noise, "environment");
      field(e, "g_max", c.environment.g_max, "environment");
      if (e.contains("table")) {
        std::vector<std::vector<double>> rows;
        field(e, "table", rows, "environment");
        if (rows.empty() || rows[0].empty()) throw ValidationError("config field 'environment.table' is empty");
        Eigen::MatrixXd t(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t x = 0; x < rows.size(); ++x) {
          if (rows[x].size() != rows[0].size()) throw ValidationError("config field 'environment.table' is ragged");
          for (std::size_t y = 0; y < rows[x].size(); ++y) t(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = rows[x][y];
        }
        c.environment.prompts = rows.size();
        c.environment.responses = rows[0].size();
        c.environment.table = std::move(t);
      }
      if (c.environment.reward != "linear" && c.environment.reward != "gaussian" && c.environment.reward != "table") {
        throw ValidationError("config field 'environment.reward' must be linear, gaussian or table");
      }
      if (c.environment.reward == "table" && !c.environment.table) {
        throw ValidationError("config field 'environment.table' is required when reward = table");
      }
    }
    if (j.contains("features")) {
      const auto& f = j["features"];
      reject_unknown(f, {"mode", "dim", "seed", "scale"}, "features");
      if (f.contains("mode")) {
        field(f, "mode", s, "features");
        if (s == "one_hot") c.features.mode = FeatureMode::one_hot;
        else if (s == "random_gaussian") c.features.mode = FeatureMode::random_gaussian;
        else throw ValidationError("config field 'features.mode' must be one_hot or random_gaussian");
      }
      field(f, "dim", c.features.dim, "features");
      optional_seed(f, c.features.seed, "features");
      field(f, "scale", c.features.scale, "features");
    }
    if (j.contains("data")) {
      const auto& d = j["data"];
      reject_unknown(d, {"pairs_per_iteration", "label", "generate"}, "data");
      field(d, "pairs_per_iteration", c.data.pairs_per_iteration, "data");
      if (d.contains("label")) {
        field(d, "label", s, "data");
        if (s == "bradley_terry") c.data.label = LabelMode::bradley_terry;
        else if (s == "ranker") c.data.label = LabelMode::ranker;
        else throw ValidationError("config field 'data.label' must be bradley_terry or ranker");
      }
      field(d, "generate", c.data.generate, "data");
    }
    if (j.contains("theory_variant")) {
      field(j, "theory_variant", s, "");
      if (s == "main") c.theory_variant = TheoryVariant::main;
      else if (s == "alternate") c.theory_variant = TheoryVariant::alternate;
      else throw ValidationError("config field 'theory_variant' must be main or alternate");
    }
    field(j, "histogram_bins", c.histogram_bins, "");
    c.validate();
    return c;
  }
};

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& fixed, std::uint64_t run_seed,
                                  std::uint64_t stream) {
  return fixed ? *fixed : Rng(run_seed, stream).engine()();
}

inline std::shared_ptr<const FeatureMap> build_features(const RunConfig& c, std::uint64_t run_seed) {
  if (c.features.mode == FeatureMode::one_hot) {
    return std::make_shared<const FeatureMap>(FeatureMap::one_hot(c.environment.prompts, c.environment.responses));
  }
  return std::make_shared<const FeatureMap>(FeatureMap::random_gaussian(
      c.environment.prompts, c.environment.responses, c.features.dim,
      resolve_seed(c.features.seed, run_seed, 0xfea), c.features.scale));
}

inline Environment build_environment(const RunConfig& c, const FeatureMap& features, std::uint64_t run_seed) {
  const auto& e = c.environment;
  const std::uint64_t seed = resolve_seed(e.seed, run_seed, 0xe41);
  if (e.reward == "table") return Environment::from_table(*e.table, e.ranker_noise, e.g_max);
  if (e.reward == "gaussian") {
    return Environment::random_gaussian(e.prompts, e.responses, seed, e.reward_scale, e.ranker_noise, e.g_max);
  }
  return Environment::linear(features, seed, e.reward_scale, e.ranker_noise, e.g_max);
}

}  // namespace prefopt
