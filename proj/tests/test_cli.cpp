#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <nlohmann/json.hpp>

#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args, const fs::path& cwd, const std::string& env = "") {
  const std::string cmd = "cd '" + cwd.string() + "' && " + env + " '" EAK_CLI_PATH "' " + args + " 2>>stderr.txt >/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const std::string kSmallTask = "synth-task --out task --dims 6 6 4 --regions 12 --subjects 3 --planted 2 --amplitude 2";

}  // namespace

TEST(Cli, HelpAndUnknownFlags) {
  const auto dir = eak::testkit::temp_dir("cli_help");
  EXPECT_EQ(run("--help", dir), 0);
  EXPECT_EQ(run("synth-task --no-such-flag 1", dir), 2);
  EXPECT_EQ(run("no-such-command", dir), 2);
}

TEST(Cli, RandomizedStagesRequireSeed) {
  const auto dir = eak::testkit::temp_dir("cli_seed");
  EXPECT_EQ(run(kSmallTask, dir), 2);
  EXPECT_FALSE(fs::exists(dir / "task"));
  EXPECT_EQ(run(kSmallTask + " --seed 1", dir), 0);
  EXPECT_TRUE(fs::exists(dir / "task" / "manifest.json"));
  // split is deterministic and takes no seed
  EXPECT_EQ(run("split --subjects task/subjects.json --out blocks.json", dir), 0);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto dir = eak::testkit::temp_dir("cli_config");
  spit(dir / "broken.json", "{ not json");
  spit(dir / "array.json", "[1, 2]");
  spit(dir / "wrongtype.json", R"({"seed": "abc"})");
  EXPECT_EQ(run(kSmallTask + " --config broken.json --seed 1", dir), 2);
  EXPECT_EQ(run(kSmallTask + " --config array.json --seed 1", dir), 2);
  EXPECT_EQ(run(kSmallTask + " --config wrongtype.json", dir), 2);
  EXPECT_EQ(run(kSmallTask + " --config missing.json --seed 1", dir), 2);
  EXPECT_EQ(run("synth-task --out t --seed 1 --regions 0", dir), 2);
}

TEST(Cli, CorruptDataExitsThree) {
  const auto dir = eak::testkit::temp_dir("cli_corrupt");
  ASSERT_EQ(run(kSmallTask + " --seed 3", dir), 0);
  // truncate one subject's payload
  const auto subjects = json::parse(slurp(dir / "task" / "subjects.json"));
  const auto header = dir / "task" / subjects["subjects"][0]["path"].get<std::string>();
  const auto hj = json::parse(slurp(header));
  const auto payload = header.parent_path() / hj["data_file"].get<std::string>();
  ASSERT_TRUE(fs::exists(payload));
  fs::resize_file(payload, fs::file_size(payload) / 2);
  EXPECT_EQ(run("split --subjects task/subjects.json --out blocks.json", dir), 3);
  spit(dir / "task" / "design.json", R"({"blocks": 3})");
  EXPECT_EQ(run("split --subjects task/subjects.json --out blocks.json", dir), 2);
}

TEST(Cli, ConfigSectionAndFlagPrecedence) {
  const auto dir = eak::testkit::temp_dir("cli_precedence");
  spit(dir / "cfg.json", R"({"seed": 5, "regions": 10, "synth-task": {"regions": 12, "subjects": 2}, "out": "a"})");
  ASSERT_EQ(run("synth-task --config cfg.json --dims 6 6 4", dir), 0);
  auto m = json::parse(slurp(dir / "a" / "subjects.json"));
  EXPECT_EQ(m["subjects"].size(), 2u);
  EXPECT_EQ(json::parse(slurp(dir / "a" / "manifest.json")).value("seed", 0), 5);

  ASSERT_EQ(run("synth-task --config cfg.json --dims 6 6 4 --subjects 3 --out b --seed 6", dir), 0);
  m = json::parse(slurp(dir / "b" / "subjects.json"));
  EXPECT_EQ(m["subjects"].size(), 3u);
  EXPECT_EQ(json::parse(slurp(dir / "b" / "manifest.json")).value("seed", 0), 6);
  // the subcommand section wins over the top level: 12 regions, not 10
  const auto labels = slurp(dir / "b" / "parcellation.labels.csv");
  EXPECT_NE(labels.find("\n12,"), std::string::npos);
}

TEST(Cli, ThreadCountDoesNotChangeOutputs) {
  const auto dir = eak::testkit::temp_dir("cli_threads");
  for (const std::string t : {"1", "8"}) {
    fs::create_directories(dir / t);
    ASSERT_EQ(run(kSmallTask + " --seed 9 --threads " + t, dir / t), 0);
    ASSERT_EQ(run("split --subjects task/subjects.json --out blocks.json", dir / t), 0);
    ASSERT_EQ(run("rfe --subjects task/subjects.json --blocks blocks.json --condition positive --folds 3 --seed 4 --out rfe",
                  dir / t, "EAK_THREADS=" + t),
              0);
  }
  for (const auto* f : {"task/manifest.json", "blocks.json", "rfe/rfe.json", "rfe/roi_accuracy.csv"})
    EXPECT_EQ(slurp(dir / "1" / f), slurp(dir / "8" / f)) << f;
}
