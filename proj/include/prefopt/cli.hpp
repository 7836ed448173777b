#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "prefopt/dataset_io.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/log.hpp"
#include "prefopt/loops.hpp"
#include "prefopt/reward_augment.hpp"
#include "prefopt/run_config.hpp"
#include "prefopt/run_io.hpp"
#include "prefopt/verify.hpp"

namespace prefopt {

enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitNumeric = 2 };

inline RunConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ValidationError("--config: file " + path.string() + " does not exist");
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("--config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  return RunConfig::from_json(j);
}

// Shell-friendly templates: a literal backslash-n becomes a newline.
inline std::string unescape_template(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 'n') {
      out += '\n';
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

// Seed-mean regret series across runs of equal length.
inline std::vector<double> mean_regret(const std::vector<RunResult>& runs) {
  std::vector<double> mean(runs.front().regret.size(), 0.0);
  for (const auto& r : runs)
    for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += r.regret[t] / static_cast<double>(runs.size());
  return mean;
}

// Slope window [10, T] when T >= 11, otherwise [1, T].
inline std::optional<double> regret_slope(const std::vector<double>& series) {
  const std::size_t T = series.size();
  if (T < 2 || series.front() <= 0.0) return std::nullopt;
  return loglog_slope(series, T >= 11 ? 10 : 1, T);
}

inline std::vector<ManifestEntry> write_regret_outputs(const std::vector<RunResult>& runs, const fs::path& dir) {
  for (const auto& r : runs) write_run_outputs(r, dir / ("seed_" + std::to_string(r.seed)));
  const auto mean = mean_regret(runs);
  std::ostringstream csv;
  csv << "iteration";
  for (const auto& r : runs) csv << ",seed_" << r.seed;
  csv << ",mean\n";
  for (std::size_t t = 0; t < mean.size(); ++t) {
    csv << t + 1;
    for (const auto& r : runs) csv << "," << fmt_double(r.regret[t]);
    csv << "," << fmt_double(mean[t]) << "\n";
  }
  write_file(dir / "regret.csv", csv.str());
  double gap = 0.0;
  double greedy = 0.0;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : runs) {
    const auto s = run_summary(r);
    gap += s["final_J_gap"].get<double>() / static_cast<double>(runs.size());
    greedy += s["final_mean_true_reward_greedy"].get<double>() / static_cast<double>(runs.size());
    seeds.push_back(r.seed);
  }
  const auto slope = regret_slope(mean);
  ordered_json summary;
  summary["config_hash"] = runs.front().config_hash;
  summary["algorithm"] = to_string(runs.front().config.algorithm);
  summary["seeds"] = seeds;
  summary["T"] = mean.size();
  summary["mean_final_regret"] = mean.back();
  summary["mean_final_J_gap"] = gap;
  summary["mean_final_true_reward_greedy"] = greedy;
  summary["loglog_slope"] = slope ? ordered_json(*slope) : ordered_json(nullptr);
  write_json(dir / "summary.json", summary);
  return write_manifest(dir);
}

// Parses and dispatches one command line (program name excluded). Messages go
// to `out`, diagnostics to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  configure_logging();
  CLI::App app{"Preference optimization toolkit: DPO, SELM and reward-augmented data"};
  app.name("prefopt");
  app.require_subcommand(1);

  std::size_t instances = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  std::string out_path;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  gradcheck->add_option("--instances", instances, "Number of random instances")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tol", tol, "Maximum relative error")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", seed, "Random seed");
  gradcheck->add_option("--out", out_path, "Write the per-instance report to this JSON file");

  std::string suite;
  auto* verify = app.add_subcommand("verify", "Run invariant suites");
  verify->add_option("--suite", suite, "identities|oracle|augment|all")
      ->required()
      ->check(CLI::IsMember({"identities", "oracle", "augment", "all"}));
  verify->add_option("--seed", seed, "Random seed");
  verify->add_option("--out", out_path, "Write the report to this JSON file");

  std::string in_path;
  std::string tie_policy = "drop";
  std::string tmpl = kDefaultGoalTemplate;
  int g_max = 10;
  auto* augment = app.add_subcommand("augment", "Build goal-conditioned pairs from a scored JSONL dataset");
  augment->add_option("--in", in_path, "Scored JSONL input")->required();
  augment->add_option("--out", out_path, "Augmented JSONL output")->required();
  augment->add_option("--tie-policy", tie_policy, "drop|keep_original|emit_both")
      ->check(CLI::IsMember({"drop", "keep_original", "emit_both"}));
  augment->add_option("--template", tmpl, "Goal prefix containing {g}; \\n is a newline");
  augment->add_option("--g-max", g_max, "Top of the score scale")->check(CLI::PositiveNumber);

  std::string config_path;
  std::string algo;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed_override;
  auto* train_cmd = app.add_subcommand("train", "Run one training configuration");
  train_cmd->add_option("--config", config_path, "JSON run configuration")->required();
  train_cmd->add_option("--algo", algo, "dpo|iter-dpo|selm|selm-theory")
      ->check(CLI::IsMember({"dpo", "iter-dpo", "selm", "selm-theory"}));
  train_cmd->add_option("--alpha", alpha, "Optimism coefficient")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", seed_override, "Run seed (default: first seed in the config)");
  train_cmd->add_option("--out", out_path, "Output directory")->required();

  std::vector<std::uint64_t> seeds;
  auto* regret = app.add_subcommand("regret", "Run a seed sweep and report cumulative regret");
  regret->add_option("--config", config_path, "JSON run configuration")->required();
  regret->add_option("--seeds", seeds, "Comma-separated seeds (default: the config's seeds)")->delimiter(',');
  regret->add_option("--algo", algo, "dpo|iter-dpo|selm|selm-theory")
      ->check(CLI::IsMember({"dpo", "iter-dpo", "selm", "selm-theory"}));
  regret->add_option("--alpha", alpha, "Optimism coefficient")->check(CLI::NonNegativeNumber);
  regret->add_option("--out", out_path, "Output directory")->required();

  std::string dir_a;
  std::string dir_b;
  auto* report = app.add_subcommand("report", "Compare two training runs");
  report->add_option("--a", dir_a, "First run directory")->required();
  report->add_option("--b", dir_b, "Second run directory")->required();
  report->add_option("--out", out_path, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }

  auto config_with_overrides = [&] {
    RunConfig c = load_config(config_path);
    if (!algo.empty()) c.algorithm = parse_algorithm(algo);
    if (alpha) c.alpha = *alpha;
    c.validate();
    return c;
  };

  try {
    if (*gradcheck) {
      const auto res = run_gradcheck(instances, tol, seed);
      if (!out_path.empty()) write_json(out_path, res.to_json());
      out << "gradcheck: " << res.instances - res.failures << "/" << res.instances
          << " instances passed, max relative error " << fmt_double(res.max_rel_err) << " (tol " << fmt_double(tol)
          << ")\n";
      return res.ok() ? kExitOk : kExitNumeric;
    }
    if (*verify) {
      const auto rep = verify_suite(suite, seed);
      if (!out_path.empty()) write_json(out_path, rep.to_json());
      for (const auto& c : rep.checks) {
        out << (c.failed ? "FAIL " : "ok   ") << c.name << ": " << c.passed << " passed, " << c.failed << " failed";
        if (c.failed) out << " (first: " << c.first_failure << ")";
        out << "\n";
      }
      out << "verify " << suite << ": " << rep.passed() << " passed, " << rep.failed() << " failed\n";
      return rep.ok() ? kExitOk : kExitNumeric;
    }
    if (*augment) {
      AugmentOptions opts;
      opts.tie_policy = parse_tie_policy(tie_policy);
      opts.g_max = g_max;
      opts.tmpl = unescape_template(tmpl);
      detail::check_template(opts.tmpl);
      const auto ds = load_dataset(in_path, Schema::scored, g_max);
      const auto aug = augment_dataset(ds, opts);
      std::ostringstream text;
      write_augmented(text, aug);
      write_file(out_path, text.str());
      out << "augment: " << ds.size() << " scored pairs -> " << aug.size() << " goal-conditioned pairs ("
          << aug.provenance["ties"].get<std::size_t>() << " ties, "
          << aug.provenance["ties_dropped"].get<std::size_t>() << " dropped)\n";
      return kExitOk;
    }
    if (*train_cmd) {
      const RunConfig c = config_with_overrides();
      const std::uint64_t s = seed_override ? *seed_override : c.seeds.front();
      const RunResult res = run(c, s);
      spdlog::info("run finished in {:.3f} s", res.wall_clock_seconds);
      const auto manifest = write_run_outputs(res, out_path);
      const auto summary = run_summary(res);
      out << "train " << to_string(c.algorithm) << " seed " << s << ": J = " << fmt_double(summary["final_J"].get<double>())
          << ", regret = " << fmt_double(res.regret.back()) << ", " << manifest.size() << " files in " << out_path
          << "\n";
      return kExitOk;
    }
    if (*regret) {
      RunConfig c = config_with_overrides();
      if (!seeds.empty()) c.seeds = seeds;
      const auto runs = run_seeds(c, c.seeds);
      write_regret_outputs(runs, out_path);
      const auto mean = mean_regret(runs);
      const auto slope = regret_slope(mean);
      out << "regret " << to_string(c.algorithm) << " over " << runs.size() << " seeds: mean R(T) = "
          << fmt_double(mean.back());
      if (slope) out << ", log-log slope " << fmt_double(*slope);
      out << "\n";
      return kExitOk;
    }
    if (*report) {
      const RunResult a = load_run(dir_a);
      const RunResult b = load_run(dir_b);
      const auto rep = analyze_runs(a, b, a.env);
      write_analysis(rep, out_path);
      out << "report: " << rep.chosen.size() << " chosen, " << rep.rejected.size() << " rejected, "
          << rep.sampled.size() << " sampled differences written to " << out_path << "\n";
      return kExitOk;
    }
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed input (" << e.what() << ")\n";
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace prefopt
