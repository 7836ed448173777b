#pragma once

#include <memory>
#include <variant>

#include "prefopt/domain.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

using AnyPolicy = std::variant<TabularPolicy, LogLinearPolicy>;

inline ordered_json policy_to_json(const TabularPolicy& p) {
  ordered_json j;
  j["kind"] = "tabular";
  ordered_json rows = ordered_json::array();
  for (Eigen::Index x = 0; x < p.probs().rows(); ++x) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index y = 0; y < p.probs().cols(); ++y) row.push_back(p.probs()(x, y));
    rows.push_back(std::move(row));
  }
  j["probs"] = std::move(rows);
  return j;
}

inline ordered_json policy_to_json(const LogLinearPolicy& p) {
  ordered_json j;
  j["kind"] = "loglinear";
  j["beta"] = p.beta();
  j["theta"] = std::vector<double>(p.theta().data(), p.theta().data() + p.theta().size());
  j["feature_map"] = p.features().to_json();
  return j;
}

inline ordered_json policy_to_json(const AnyPolicy& p) {
  return std::visit([](const auto& q) { return policy_to_json(q); }, p);
}

// Rebuilds a policy and re-runs its constructor checks.
inline AnyPolicy policy_from_json(const ordered_json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "tabular") {
    const auto& rows = j.at("probs");
    if (!rows.is_array() || rows.empty()) throw ValidationError("tabular policy needs a nonempty 'probs' array");
    const auto nx = static_cast<Eigen::Index>(rows.size());
    const auto ny = static_cast<Eigen::Index>(rows.at(0).size());
    Eigen::MatrixXd probs(nx, ny);
    for (Eigen::Index x = 0; x < nx; ++x) {
      const auto& row = rows.at(static_cast<std::size_t>(x));
      if (static_cast<Eigen::Index>(row.size()) != ny) throw ValidationError("ragged 'probs' rows");
      for (Eigen::Index y = 0; y < ny; ++y) probs(x, y) = row.at(static_cast<std::size_t>(y)).get<double>();
    }
    return TabularPolicy(std::move(probs));
  }
  if (kind == "loglinear") {
    auto features = std::make_shared<const FeatureMap>(FeatureMap::from_json(j.at("feature_map")));
    const auto theta = j.at("theta").get<std::vector<double>>();
    Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    return LogLinearPolicy(std::move(features), std::move(t), j.at("beta").get<double>());
  }
  throw ValidationError("unknown policy kind '" + kind + "'");
}

}  // namespace prefopt
