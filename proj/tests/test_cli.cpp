#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("varinf_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  std::string read(const std::string& name) const {
    std::ifstream in(path(name));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  int run(const std::string& args) const {
    const std::string cmd = std::string(VARINF_CLI) + " " + args + " > " + path("stdout") + " 2> " + path("stderr");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenExactInferRoundTrip) {
  ASSERT_EQ(run("gen --family grid --rows 2 --cols 3 --seed 4 --output " + path("m.txt")), 0);
  EXPECT_EQ(read("m.txt").rfind("ising 6 7", 0), 0u);
  ASSERT_EQ(run("exact --model " + path("m.txt")), 0);
  EXPECT_NE(read("stdout").find("\"log_z\""), std::string::npos);
  ASSERT_EQ(run("infer --model " + path("m.txt") + " --algo bethe --c 1.5 --restarts 2"), 0);
  EXPECT_NE(read("stdout").find("\"f_c\""), std::string::npos);
  ASSERT_EQ(run("infer --model " + path("m.txt") + " --algo adapt_zeta"), 0);
}

TEST_F(Cli, SweepWritesCsv) {
  write("c.json", R"({"family":{"kind":"complete","n":5},"sweep":{"kind":"over_zeta","values":[0.5,1.0]},
    "algorithms":["bethe"],"output":")" + path("o.csv") + "\"}");
  ASSERT_EQ(run("sweep --config " + path("c.json") + " --dump-marginals " + path("d.csv")), 0) << read("stderr");
  EXPECT_EQ(read("o.csv").rfind("schema_version,family", 0), 0u);
  EXPECT_FALSE(read("o.summary.csv").empty());
  EXPECT_NE(read("d.csv").find(",exact,"), std::string::npos);
}

TEST_F(Cli, ConfigErrorExitsTwo) {
  write("bad.json", R"({"repetitions":0})");
  EXPECT_EQ(run("sweep --config " + path("bad.json")), 2);
  write("junk.json", "{not json");
  EXPECT_EQ(run("sweep --config " + path("junk.json")), 2);
  EXPECT_EQ(run("sweep --config " + path("missing.json")), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  write("m.txt", "ising 1 0\nnode 0 0.1\n");
  EXPECT_EQ(run("infer --model " + path("m.txt") + " --algo magic"), 2);
}

TEST_F(Cli, ModelParseErrorExitsThree) {
  write("m.txt", "ising 2 1\nnode 0 0.1\nnode 1 zero\nedge 0 1 1.0\n");
  EXPECT_EQ(run("exact --model " + path("m.txt")), 3);
  EXPECT_NE(read("stderr").find("line 3"), std::string::npos);
  EXPECT_EQ(run("infer --model " + path("m.txt") + " --algo bethe"), 3);
}

TEST_F(Cli, EnumerationCapExitsFour) {
  ASSERT_EQ(run("gen --family complete --n 30 --output " + path("big.txt")), 0);
  EXPECT_EQ(run("exact --model " + path("big.txt")), 4);
  write("c.json", R"({"family":{"kind":"complete","n":30}})");
  EXPECT_EQ(run("sweep --config " + path("c.json")), 4);
}
