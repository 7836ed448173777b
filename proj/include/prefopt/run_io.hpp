#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prefopt/dataset_io.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/hashing.hpp"
#include "prefopt/loops.hpp"
#include "prefopt/policy_io.hpp"

namespace prefopt {

namespace fs = std::filesystem;

// Shortest text that round-trips the double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

inline void write_json(const fs::path& path, const ordered_json& j) { write_file(path, j.dump(2) + "\n"); }

inline ordered_json read_json(const fs::path& path) {
  try {
    return ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory, '/' separated
  std::string sha256;
};

// Hashes every regular file under `dir` except the manifest itself, sorted by
// path, and writes manifest.json.
inline std::vector<ManifestEntry> write_manifest(const fs::path& dir) {
  std::vector<ManifestEntry> entries;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    entries.push_back({rel, sha256_hex(read_file(e.path()))});
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  ordered_json files = ordered_json::array();
  for (const auto& m : entries) files.push_back({{"path", m.path}, {"sha256", m.sha256}});
  write_json(dir / "manifest.json", ordered_json{{"files", files}});
  return entries;
}

inline ordered_json run_summary(const RunResult& run) {
  const auto& last = run.iterations.back();
  const double beta = run.config.beta;
  const TabularPolicy optimal = exponential_tilt(run.initial_reference, run.env.r_star, beta);
  const double j_star = rlhf_objective(optimal, run.initial_reference, beta, run.env.r_star, run.env.nu);
  ordered_json j;
  j["config_hash"] = run.config_hash;
  j["algorithm"] = to_string(run.config.algorithm);
  j["seed"] = run.seed;
  j["T"] = run.iterations.size();
  j["J_star"] = j_star;
  j["final_J"] = last.J;
  j["final_J_gap"] = j_star - last.J;
  j["final_regret"] = run.regret.back();
  j["final_r_max_diag"] = last.r_max;
  j["final_mean_true_reward_greedy"] = last.mean_true_reward_greedy;
  j["final_loss"] = last.losses.empty() ? ordered_json(nullptr) : ordered_json(last.losses.back());
  return j;
}

// Everything needed to rebuild the run lives in the directory; wall-clock time
// is left out so identical inputs give identical bytes.
inline std::vector<ManifestEntry> write_run_outputs(const RunResult& run, const fs::path& dir) {
  if (run.iterations.empty()) throw ValidationError("run has no iterations");
  std::ostringstream metrics;
  metrics << "iteration,step,loss,J,regret,r_max_diag,mean_true_reward_greedy\n";
  std::ostringstream iters;
  iters << "iteration,J,regret,r_max_diag,mean_implicit_chosen,mean_implicit_rejected,mean_true_reward_greedy,pairs,"
           "skipped\n";
  std::ostringstream hist;
  hist << "iteration,bin,lower,upper,fraction\n";
  std::ostringstream snaps;
  const double lo = run.env.r_star.values.minCoeff();
  const double hi = run.env.r_star.values.maxCoeff();
  for (std::size_t t = 0; t < run.iterations.size(); ++t) {
    const auto& it = run.iterations[t];
    const std::string tail = fmt_double(it.J) + "," + fmt_double(run.regret[t]) + "," + fmt_double(it.r_max) + "," +
                             fmt_double(it.mean_true_reward_greedy);
    for (std::size_t s = 0; s < it.losses.size(); ++s) {
      metrics << it.iteration << "," << s << "," << fmt_double(it.losses[s]) << ",";
      metrics << (s + 1 == it.losses.size() ? tail : ",,,") << "\n";
    }
    if (it.losses.empty()) metrics << it.iteration << ",,," << tail << "\n";
    iters << it.iteration << "," << fmt_double(it.J) << "," << fmt_double(run.regret[t]) << "," << fmt_double(it.r_max)
          << "," << fmt_double(it.mean_implicit_chosen) << "," << fmt_double(it.mean_implicit_rejected) << ","
          << fmt_double(it.mean_true_reward_greedy) << "," << it.dataset.size() << "," << it.skipped_pairs << "\n";
    const double width = (hi - lo) / static_cast<double>(it.greedy_histogram.size());
    for (std::size_t b = 0; b < it.greedy_histogram.size(); ++b) {
      hist << it.iteration << "," << b << "," << fmt_double(lo + width * static_cast<double>(b)) << ","
           << fmt_double(b + 1 == it.greedy_histogram.size() ? hi : lo + width * static_cast<double>(b + 1)) << ","
           << fmt_double(it.greedy_histogram[b]) << "\n";
    }
    ordered_json snap;
    snap["iteration"] = it.iteration;
    snap["theta"] = std::vector<double>(it.theta.data(), it.theta.data() + it.theta.size());
    ordered_json gen = ordered_json::array();
    for (const auto& g : it.generated) gen.push_back({g.prompt, g.response});
    snap["generated"] = std::move(gen);
    snaps << snap.dump() << "\n";
    std::ostringstream ds;
    write_dataset(ds, it.dataset, Schema::plain);
    write_file(dir / "datasets" / ("dataset_t" + std::to_string(it.iteration) + ".jsonl"), ds.str());
  }
  write_file(dir / "metrics.csv", metrics.str());
  write_file(dir / "iterations.csv", iters.str());
  write_file(dir / "greedy_histogram.csv", hist.str());
  write_file(dir / "snapshots.jsonl", snaps.str());
  write_json(dir / "config.json", run.config.to_json());
  write_json(dir / "environment.json", run.env.to_json());
  write_json(dir / "features.json", run.features->to_json());
  write_json(dir / "reference_initial.json", policy_to_json(run.initial_reference));
  write_json(dir / "summary.json", run_summary(run));
  return write_manifest(dir);
}

// Rebuilds a run from write_run_outputs' files. Per-iteration diagnostics are
// recomputed from the stored parameters and datasets.
inline RunResult load_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("run directory " + dir.string() + " does not exist");
  const RunConfig config = RunConfig::from_json(read_json(dir / "config.json"));
  const Environment env = Environment::from_json(read_json(dir / "environment.json"));
  auto features = std::make_shared<const FeatureMap>(FeatureMap::from_json(read_json(dir / "features.json")));
  const auto ref_any = policy_from_json(read_json(dir / "reference_initial.json"));
  if (!std::holds_alternative<TabularPolicy>(ref_any)) throw ValidationError("initial reference must be tabular");
  const TabularPolicy ref0 = std::get<TabularPolicy>(ref_any);
  const auto summary = read_json(dir / "summary.json");

  std::vector<IterationRecord> iterations;
  std::istringstream snaps(read_file(dir / "snapshots.jsonl"));
  std::string line;
  while (std::getline(snaps, line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line);
    const auto theta_vec = j.at("theta").get<std::vector<double>>();
    const Eigen::VectorXd theta =
        Eigen::Map<const Eigen::VectorXd>(theta_vec.data(), static_cast<Eigen::Index>(theta_vec.size()));
    const std::size_t t = j.at("iteration").get<std::size_t>();
    std::ifstream ds_in(dir / "datasets" / ("dataset_t" + std::to_string(t) + ".jsonl"));
    if (!ds_in) throw ValidationError("missing dataset for iteration " + std::to_string(t));
    PreferenceDataset ds = parse_dataset(ds_in, Schema::plain);
    std::vector<ResponseSample> generated;
    for (const auto& g : j.at("generated")) generated.push_back({g.at(0).get<std::size_t>(), g.at(1).get<std::size_t>()});
    const LogLinearPolicy policy(features, theta, config.beta);
    iterations.push_back(detail::summarize_iteration(config, env, ref0, policy, t, ref0, std::move(ds),
                                                     std::move(generated), 0, {}));
  }
  if (iterations.empty()) throw ValidationError(dir.string() + " holds no iterations");
  RunResult run{config, summary.at("seed").get<std::uint64_t>(), env, std::move(features), ref0, std::move(iterations),
                {}, 0.0, summary.at("config_hash").get<std::string>()};
  run.regret = cumulative_regret(run, run.env);
  return run;
}

inline void write_diff_csv(const fs::path& path, const std::vector<ImplicitRewardDiff>& diffs) {
  std::ostringstream out;
  out << "rank,prompt,response,diff\n";
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    out << i << "," << diffs[i].prompt << "," << diffs[i].response << "," << fmt_double(diffs[i].diff) << "\n";
  }
  write_file(path, out.str());
}

inline std::vector<ManifestEntry> write_analysis(const AnalysisReport& rep, const fs::path& dir) {
  write_diff_csv(dir / "implicit_reward_diff_chosen.csv", rep.chosen);
  write_diff_csv(dir / "implicit_reward_diff_rejected.csv", rep.rejected);
  write_diff_csv(dir / "implicit_reward_diff_sampled.csv", rep.sampled);
  std::ostringstream hist;
  hist << "run,iteration,bin,fraction\n";
  auto emit = [&](const char* name, const std::vector<std::vector<double>>& hs) {
    for (std::size_t t = 0; t < hs.size(); ++t)
      for (std::size_t b = 0; b < hs[t].size(); ++b)
        hist << name << "," << t + 1 << "," << b << "," << fmt_double(hs[t][b]) << "\n";
  };
  emit("a", rep.histograms_a);
  emit("b", rep.histograms_b);
  write_file(dir / "greedy_histograms.csv", hist.str());
  std::ostringstream mean;
  mean << "iteration,a,b\n";
  const std::size_t n = std::max(rep.mean_true_reward_a.size(), rep.mean_true_reward_b.size());
  for (std::size_t t = 0; t < n; ++t) {
    mean << t + 1 << ",";
    if (t < rep.mean_true_reward_a.size()) mean << fmt_double(rep.mean_true_reward_a[t]);
    mean << ",";
    if (t < rep.mean_true_reward_b.size()) mean << fmt_double(rep.mean_true_reward_b[t]);
    mean << "\n";
  }
  write_file(dir / "mean_true_reward.csv", mean.str());
  auto mean_of = [](const std::vector<ImplicitRewardDiff>& d) {
    double s = 0.0;
    for (const auto& v : d) s += v.diff;
    return d.empty() ? 0.0 : s / static_cast<double>(d.size());
  };
  write_json(dir / "summary.json", ordered_json{{"mean_diff_chosen", mean_of(rep.chosen)},
                                                {"mean_diff_rejected", mean_of(rep.rejected)},
                                                {"mean_diff_sampled", mean_of(rep.sampled)},
                                                {"iterations_a", rep.mean_true_reward_a.size()},
                                                {"iterations_b", rep.mean_true_reward_b.size()}});
  return write_manifest(dir);
}

}  // namespace prefopt
