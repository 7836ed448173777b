#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "prefopt/cli.hpp"

using namespace prefopt;

namespace {

const fs::path kConfigs = PREFOPT_CONFIG_DIR;

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "prefopt_cli_XXXXXX").string();
    path_ = mkdtemp(tmpl.data());
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

int shell(const std::string& args) {
  const std::string cmd = std::string(PREFOPT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, VerifyIdentitiesPasses) {
  const auto r = cli({"verify", "--suite", "identities", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("0 failed"), std::string::npos) << r.out;
}

TEST(Cli, VerifyOtherSuites) {
  TempDir tmp;
  for (const char* suite : {"oracle", "augment"}) {
    const auto r = cli({"verify", "--suite", suite, "--seed", "3", "--out", (tmp.path() / "v.json").string()});
    EXPECT_EQ(r.code, 0) << suite << r.out;
    EXPECT_EQ(read_json(tmp.path() / "v.json")["failed"], 0);
  }
  EXPECT_EQ(cli({"verify", "--suite", "everything"}).code, 1);
}

TEST(Cli, GradcheckExitCodes) {
  TempDir tmp;
  const auto report = tmp.path() / "gc.json";
  EXPECT_EQ(cli({"gradcheck", "--instances", "10", "--tol", "1e-6", "--seed", "1", "--out", report.string()}).code, 0);
  EXPECT_EQ(read_json(report)["instances"], 10);
  // An unattainable tolerance is a numerical-check failure, and the report is still written.
  fs::remove(report);
  EXPECT_EQ(cli({"gradcheck", "--instances", "5", "--tol", "1e-300", "--out", report.string()}).code, 2);
  EXPECT_TRUE(fs::exists(report));
}

TEST(Cli, AugmentDoublesFivePairs) {
  TempDir tmp;
  const auto out = tmp.path() / "a.jsonl";
  const auto r = cli({"augment", "--in", (kConfigs / "scored_pairs.jsonl").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(out), 10u);
  std::ifstream in(out);
  const auto aug = parse_augmented(in);
  EXPECT_EQ(std::get<std::string>(aug.pairs[0].triple.prompt).rfind("Generate responses of score 8.\n", 0), 0u);
}

TEST(Cli, AugmentTemplateAndTies) {
  TempDir tmp;
  const auto in = tmp.path() / "d.jsonl";
  write_file(in,
             R"({"id":"a","prompt":"p","chosen":"x","rejected":"y","chosen_score":4,"rejected_score":4}
{"id":"b","prompt":"p","chosen":"x","rejected":"y","chosen_score":5,"rejected_score":2}
)");
  const auto out = tmp.path() / "a.jsonl";
  ASSERT_EQ(cli({"augment", "--in", in.string(), "--out", out.string(), "--template", "<{g}>\\n"}).code, 0);
  EXPECT_EQ(count_lines(out), 2u);
  std::ifstream f(out);
  std::string first;
  std::getline(f, first);
  EXPECT_NE(first.find(R"("prompt":"<5>\np")"), std::string::npos) << first;
  ASSERT_EQ(cli({"augment", "--in", in.string(), "--out", out.string(), "--tie-policy", "emit_both"}).code, 0);
  EXPECT_EQ(count_lines(out), 4u);
  EXPECT_EQ(cli({"augment", "--in", in.string(), "--out", out.string(), "--template", "none"}).code, 1);
}

TEST(Cli, AugmentRejectsBadInputNamingLine) {
  TempDir tmp;
  const auto in = tmp.path() / "d.jsonl";
  write_file(in, R"({"id":"a","prompt":"p","chosen":"x","rejected":"y","chosen_score":4,"rejected_score":2}
{"id":"b","prompt":"p","chosen":"x","rejected":"y","chosen_score":40,"rejected_score":2}
)");
  const auto r = cli({"augment", "--in", in.string(), "--out", (tmp.path() / "a.jsonl").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"augment", "--in", (tmp.path() / "missing.jsonl").string(), "--out", "x"}).code, 1);
}

TEST(Cli, TrainWritesSummaryAndDeterministicManifest) {
  TempDir tmp;
  const auto cfg = (kConfigs / "small_selm.json").string();
  const auto a = tmp.path() / "a";
  const auto b = tmp.path() / "b";
  ASSERT_EQ(cli({"train", "--config", cfg, "--seed", "3", "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"train", "--config", cfg, "--seed", "3", "--out", b.string()}).code, 0);
  for (const char* f : {"summary.json", "metrics.csv", "manifest.json", "iterations.csv", "greedy_histogram.csv"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  EXPECT_EQ(read_file(a / "manifest.json"), read_file(b / "manifest.json"));

  const auto manifest = read_json(a / "manifest.json");
  for (const auto& entry : manifest["files"]) {
    const auto rel = entry["path"].get<std::string>();
    EXPECT_EQ(entry["sha256"], sha256_hex(read_file(a / rel))) << rel;
  }

  const auto c = tmp.path() / "c";
  ASSERT_EQ(cli({"train", "--config", cfg, "--seed", "3", "--alpha", "0.5", "--out", c.string()}).code, 0);
  EXPECT_NE(read_file(a / "manifest.json"), read_file(c / "manifest.json"));
  EXPECT_NE(read_json(a / "summary.json")["config_hash"], read_json(c / "summary.json")["config_hash"]);

  const auto header = read_file(a / "metrics.csv").substr(0, read_file(a / "metrics.csv").find('\n'));
  EXPECT_EQ(header, "iteration,step,loss,J,regret,r_max_diag,mean_true_reward_greedy");
}

TEST(Cli, TrainAlgorithmsAndReport) {
  TempDir tmp;
  const auto cfg = (kConfigs / "small_selm.json").string();
  for (const char* algo : {"dpo", "iter-dpo", "selm", "selm-theory"}) {
    const auto r = cli({"train", "--config", cfg, "--algo", algo, "--out", (tmp.path() / algo).string()});
    EXPECT_EQ(r.code, 0) << algo << r.err;
    EXPECT_EQ(read_json(tmp.path() / algo / "summary.json")["T"], 4);
  }
  const auto rep = tmp.path() / "report";
  const auto r = cli({"report", "--a", (tmp.path() / "selm").string(), "--b", (tmp.path() / "iter-dpo").string(),
                      "--out", rep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"implicit_reward_diff_chosen.csv", "implicit_reward_diff_rejected.csv",
                        "implicit_reward_diff_sampled.csv", "greedy_histograms.csv", "mean_true_reward.csv",
                        "summary.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(rep / f)) << f;
  EXPECT_EQ(cli({"report", "--a", (tmp.path() / "selm").string(), "--b", (tmp.path() / "nowhere").string(), "--out",
                 rep.string()})
                .code,
            1);
}

TEST(Cli, ReportOfRunWithItselfIsZero) {
  TempDir tmp;
  const auto run_dir = tmp.path() / "run";
  ASSERT_EQ(cli({"train", "--config", (kConfigs / "small_selm.json").string(), "--out", run_dir.string()}).code, 0);
  ASSERT_EQ(cli({"report", "--a", run_dir.string(), "--b", run_dir.string(), "--out", (tmp.path() / "r").string()}).code,
            0);
  std::istringstream csv(read_file(tmp.path() / "r" / "implicit_reward_diff_chosen.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(std::stod(line.substr(line.rfind(',') + 1)), 0.0) << line;
    ++rows;
  }
  EXPECT_GT(rows, 0u);
}

TEST(Cli, RegretSweep) {
  TempDir tmp;
  const auto r = cli({"regret", "--config", (kConfigs / "small_selm.json").string(), "--seeds", "4,5,6", "--out",
                      tmp.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = read_json(tmp.path() / "summary.json");
  EXPECT_EQ(summary["seeds"].size(), 3u);
  EXPECT_TRUE(fs::exists(tmp.path() / "seed_5" / "summary.json"));
  EXPECT_EQ(read_file(tmp.path() / "regret.csv").rfind("iteration,seed_4,seed_5,seed_6,mean\n1,", 0), 0u);
}

TEST(Cli, RejectsMalformedInvocations) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"fly"}).code, 1);
  EXPECT_EQ(cli({"verify", "--suite", "identities", "--colour", "red"}).code, 1);
  EXPECT_EQ(cli({"gradcheck", "--instances", "zero"}).code, 1);
  EXPECT_EQ(cli({"train", "--config", (kConfigs / "small_selm.json").string()}).code, 1);
  EXPECT_EQ(cli({"train", "--config", (kConfigs / "small_selm.json").string(), "--alpha", "-1", "--out", "x"}).code,
            1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, RejectsBadConfigNamingField) {
  TempDir tmp;
  const auto cfg = tmp.path() / "c.json";
  write_file(cfg, R"({"T": 2, "optimizer": {"learning_rate": 0.1, "momentum": 0.9}})");
  auto r = cli({"train", "--config", cfg.string(), "--out", (tmp.path() / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("optimizer.momentum"), std::string::npos) << r.err;
  write_file(cfg, R"({"T": 0})");
  EXPECT_EQ(cli({"train", "--config", cfg.string(), "--out", (tmp.path() / "o").string()}).code, 1);
  write_file(cfg, "{ not json");
  EXPECT_EQ(cli({"train", "--config", cfg.string(), "--out", (tmp.path() / "o").string()}).code, 1);
}

TEST(CliBinary, ExitCodes) {
  EXPECT_EQ(shell("verify --suite augment --seed 1"), 0);
  EXPECT_EQ(shell("verify --suite augment --bogus"), 1);
  EXPECT_EQ(shell("gradcheck --instances 3 --tol 1e-300"), 2);
}
