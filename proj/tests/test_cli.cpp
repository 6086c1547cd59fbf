#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "charforge/cli.hpp"
#include "test_support.hpp"

namespace cf = charforge;
using cf::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cf::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string metrics_csv(std::size_t rows, double last_acc, double last_loss) {
  std::string s = std::string(cf::kMetricsHeader) + "\n";
  for (std::size_t e = 1; e <= rows; ++e) {
    const double acc = e == rows ? last_acc : 0.5;
    const double loss = e == rows ? last_loss : 1.0;
    s += cf::format_metrics_row({e, 1.0, 0.5, loss, acc, 0.0}) + "\n";
  }
  return s;
}

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run({}).code, 2); }

TEST(Cli, UnknownSubcommandIsUsageError) { EXPECT_EQ(run({"fly"}).code, 2); }

TEST(Cli, UnknownFlagIsUsageError) {
  const auto r = run({"generate", "--checkpoint", "x", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos) << r.err;
}

TEST(Cli, MissingRequiredOptionShowsSubcommandHelp) {
  const auto r = run({"generate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--checkpoint"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--temperature"), std::string::npos) << r.err;
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("prepare"), std::string::npos);
}

TEST(Cli, MissingFileIsRuntimeError) {
  const auto r = run({"generate", "--checkpoint", "/nonexistent/model.cfrg"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, ConfigLineIsEchoed) {
  TempDir dir;
  const auto r = run({"generate", "--checkpoint", (dir / "none").string(), "--temperature", "0.3"});
  EXPECT_NE(r.err.find("# config: "), std::string::npos);
  EXPECT_NE(r.err.find("temperature=0.3"), std::string::npos) << r.err;
}

TEST(Cli, ReportRowFromMetrics) {
  TempDir dir;
  cf::testing::write_bytes(dir / "run.csv", metrics_csv(100, 0.9125, 0.3876));
  const auto r = run({"report", (dir / "run.csv").string(), "--label", "nietzsche"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| Dataset | Model | Accuracy | Loss | Iterations |"), std::string::npos);
  EXPECT_NE(r.out.find("| nietzsche | this run | 0.9125 | 0.3876 | 100 |"), std::string::npos) << r.out;
}

TEST(Cli, ReportIsByteStableAndSupportsLiterature) {
  TempDir dir;
  cf::testing::write_bytes(dir / "a.csv", metrics_csv(3, 0.5, 1.25));
  cf::testing::write_bytes(
      dir / "lit.json",
      R"([{"dataset": "a", "model": "reference", "accuracy": 0.758, "loss": null, "iterations": 160}])");
  const std::vector<std::string> args{"report", (dir / "a.csv").string(), "--literature",
                                      (dir / "lit.json").string(), "--format", "csv"};
  const auto first = run(args);
  const auto second = run(args);
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_EQ(first.out, second.out);
  EXPECT_EQ(first.out,
            "dataset,model,accuracy,loss,iterations\n"
            "a,reference,0.7580,-,160\n"
            "a,this run,0.5000,1.2500,3\n");
}

TEST(Cli, ReportLabelCountMismatch) {
  TempDir dir;
  cf::testing::write_bytes(dir / "a.csv", metrics_csv(1, 0.5, 1.0));
  EXPECT_EQ(run({"report", (dir / "a.csv").string(), "--label", "x", "--label", "y"}).code, 1);
}

TEST(Cli, PrepareTrainEvalGeneratePipeline) {
  TempDir dir;
  const std::string corpus = (dir / "c.cfrg").string();
  const std::string model = (dir / "m.cfrg").string();
  const std::string metrics = (dir / "m.csv").string();
  const std::string report = (dir / "r.json").string();

  auto r = run({"prepare", "--input", (cf::testing::data_dir() / "tiny_200.txt").string(),
                "--output", corpus});
  ASSERT_EQ(r.code, 0) << r.err;

  r = run({"train", "--corpus", corpus, "--checkpoint", model, "--metrics", metrics, "--report",
           report, "--seq-len", "10", "--stride", "2", "--hidden", "8", "--lstm-layers", "1",
           "--epochs", "2", "--batch", "16", "--no-timing", "--sample-length", "50", "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cf::read_metrics_csv(metrics).size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(model + ".best"));
  const auto rep = nlohmann::json::parse(cf::testing::read_bytes(report));
  EXPECT_EQ(cf::utf8::length(rep.at("sample").at("text").get<std::string>()), 50u);
  EXPECT_EQ(rep.at("sample").at("temperature"), 0.8);

  r = run({"eval", "--checkpoint", model, "--corpus", corpus, "--stride", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out.substr(r.out.find('{')));
  EXPECT_EQ(j.at("split"), "test");
  EXPECT_GT(j.at("samples").get<int>(), 0);

  r = run({"generate", "--checkpoint", model, "--length", "37", "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cf::utf8::length(r.out), 37u);
  EXPECT_EQ(run({"generate", "--checkpoint", model, "--length", "37", "--seed", "3"}).out, r.out);
}

TEST(Cli, SeedFromEnvironment) {
  TempDir dir;
  const std::string corpus = (dir / "c.cfrg").string();
  const std::string model = (dir / "m.cfrg").string();
  ASSERT_EQ(run({"prepare", "--input", (cf::testing::data_dir() / "tiny_200.txt").string(),
                 "--output", corpus})
                .code,
            0);
  ASSERT_EQ(run({"train", "--corpus", corpus, "--checkpoint", model, "--metrics",
                 (dir / "m.csv").string(), "--report", "", "--seq-len", "10", "--hidden", "4",
                 "--lstm-layers", "1", "--epochs", "1", "--sample-length", "0", "--quiet"})
                .code,
            0);
  const auto explicit_seed = run({"generate", "--checkpoint", model, "--seed", "1234"});
  ::setenv("CHARFORGE_SEED", "1234", 1);
  const auto env_seed = run({"generate", "--checkpoint", model});
  ::unsetenv("CHARFORGE_SEED");
  EXPECT_EQ(env_seed.out, explicit_seed.out);
  EXPECT_NE(env_seed.err.find("seed=1234"), std::string::npos) << env_seed.err;
}

TEST(Cli, PreparePlayCsv) {
  TempDir dir;
  const auto r = run({"prepare", "--input", (cf::testing::data_dir() / "play_sample.csv").string(),
                      "--output", (dir / "p.cfrg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pc = cf::load_corpus_cache(dir / "p.cfrg");
  EXPECT_EQ(pc.origin, cf::Origin::play_csv);
  EXPECT_NE(pc.text.find("So shaken as we are"), std::string::npos);
}

TEST(Cli, PrepareBadColumnIsRuntimeError) {
  TempDir dir;
  const auto r = run({"prepare", "--input", (cf::testing::data_dir() / "play_minimal.csv").string(),
                      "--column", "Nope", "--output", (dir / "p.cfrg").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("PlayerLine"), std::string::npos) << r.err;
}
