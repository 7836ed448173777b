#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>

#include <Eigen/Dense>

#include "prefopt/errors.hpp"
#include "prefopt/numeric.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

inline constexpr std::size_t kMaxSimplexSearchDim = 5;

// Derivative-free maximization over the probability simplex: exhaustive search
// over the grid {k / resolution}, then pairwise mass transfers with a halving
// step. Intended as an independent check of closed forms, not for speed.
inline std::pair<Eigen::VectorXd, double> maximize_on_simplex(const std::function<double(const Eigen::VectorXd&)>& f,
                                                              std::size_t dim, std::size_t resolution) {
  if (dim == 0 || dim > kMaxSimplexSearchDim) {
    throw ValidationError("simplex search supports 1 to " + std::to_string(kMaxSimplexSearchDim) + " coordinates");
  }
  if (resolution < 1) throw ValidationError("grid resolution must be positive");
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::VectorXd best = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(dim));
  double best_val = f(best);
  Eigen::VectorXd p(n);
  std::function<void(Eigen::Index, std::size_t)> enumerate = [&](Eigen::Index i, std::size_t left) {
    if (i == n - 1) {
      p[i] = static_cast<double>(left) / static_cast<double>(resolution);
      const double v = f(p);
      if (v > best_val) {
        best_val = v;
        best = p;
      }
      return;
    }
    for (std::size_t k = 0; k <= left; ++k) {
      p[i] = static_cast<double>(k) / static_cast<double>(resolution);
      enumerate(i + 1, left - k);
    }
  };
  enumerate(0, resolution);

  double step = 1.0 / static_cast<double>(resolution);
  while (step > 1e-14) {
    bool improved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j || best[j] <= 0.0) continue;
        Eigen::VectorXd trial = best;
        const double moved = std::min(step, best[j]);
        trial[i] += moved;
        trial[j] = std::max(trial[j] - moved, 0.0);
        trial /= trial.sum();
        const double v = f(trial);
        // Gains at rounding level would let the search drift along the
        // simplex indefinitely.
        if (v > best_val + 1e-15 * (1.0 + std::abs(best_val))) {
          best_val = v;
          best = std::move(trial);
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {best, best_val};
}

// Per-prompt search for argmax_pi F(pi; r); the total value is weighted by the
// prompt weights. Independent of the closed-form tilt.
template <ConditionalPolicy Q>
std::pair<TabularPolicy, double> brute_force_inner_max(const Q& ref, double beta, const RewardFunction& reward,
                                                       const Eigen::VectorXd& prompt_weights,
                                                       std::size_t grid_resolution = 100) {
  if (ref.num_responses() > kMaxSimplexSearchDim) throw ValidationError("brute-force search needs |Y| <= 5");
  if (grid_resolution < 100) throw ValidationError("grid resolution must be at least 100");
  const auto nx = static_cast<Eigen::Index>(ref.num_prompts());
  const auto ny = static_cast<Eigen::Index>(ref.num_responses());
  Eigen::MatrixXd probs(nx, ny);
  double total = 0.0;
  for (Eigen::Index x = 0; x < nx; ++x) {
    const Eigen::VectorXd q = ref.distribution(static_cast<std::size_t>(x));
    const Eigen::VectorXd r = reward.values.row(x).transpose();
    const double baseline = r.dot(q);
    auto value = [&](const Eigen::VectorXd& pi) {
      double v = pi.dot(r) - baseline;
      for (Eigen::Index y = 0; y < ny; ++y) {
        if (pi[y] <= 0.0) continue;
        if (q[y] <= 0.0) return kNegInf;
        v -= beta * pi[y] * std::log(pi[y] / q[y]);
      }
      return v;
    };
    auto [pi, v] = maximize_on_simplex(value, static_cast<std::size_t>(ny), grid_resolution);
    pi /= pi.sum();
    probs.row(x) = pi.transpose();
    total += prompt_weights[x] * v;
  }
  return {TabularPolicy(std::move(probs)), total};
}

}  // namespace prefopt
