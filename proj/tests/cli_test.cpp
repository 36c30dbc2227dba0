#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ernet/cli.hpp"

namespace fs = std::filesystem;
using ernet::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path work_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "ernet_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const fs::path& dataset() {
  static const fs::path d = [] {
    const auto root = work_dir() / "data";
    const auto r = call({"synth", "--classes", "3", "--per-class", "8", "--size", "24", "--out", root.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return root;
  }();
  return d;
}

std::vector<std::string> train_args(const fs::path& out) {
  return {"--seed", "5",      "train",   "--data",  dataset().string(), "--input", "64x64x3", "--epochs",
          "2",      "--iters", "2",      "--batch", "6",                "--out",   out.string()};
}

}  // namespace

TEST(Cli, HelpDocumentsEveryFlag) {
  const auto top = call({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"synth", "train", "eval", "bench", "cam"}) EXPECT_NE(top.out.find(sub), std::string::npos);
  EXPECT_NE(top.out.find("--seed"), std::string::npos);

  const auto tr = call({"train", "--help"});
  EXPECT_EQ(tr.code, 0);
  for (const char* flag : {"--data", "--variant", "--epochs", "--iters", "--batch", "--lr0", "--decay",
                           "--decay-every", "--l2", "--out", "--input"})
    EXPECT_NE(tr.out.find(flag), std::string::npos) << flag;
  EXPECT_NE(call({"bench", "--help"}).out.find("--models"), std::string::npos);
  EXPECT_NE(call({"cam", "--help"}).out.find("--alpha"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  auto r = call({"train", "--data", "x", "--bogus", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(call({}).code, 1);
  EXPECT_EQ(call({"frobnicate"}).code, 1);
  EXPECT_EQ(call({"train"}).code, 1);
  EXPECT_EQ(call({"train", "--data", dataset().string(), "--variant", "resnet"}).code, 1);
  EXPECT_EQ(call({"train", "--data", dataset().string(), "--input", "64x64"}).code, 1);
}

TEST(Cli, DataErrors) {
  EXPECT_EQ(call({"train", "--data", (work_dir() / "nowhere").string(), "--out", (work_dir() / "o").string()}).code, 2);
  EXPECT_EQ(call({"eval", "--model", (work_dir() / "missing.bin").string(), "--data", dataset().string()}).code, 2);
}

TEST(Cli, TrainEvalBenchCamPipeline) {
  const auto a = work_dir() / "run_a", b = work_dir() / "run_b";
  const auto ra = call(train_args(a));
  ASSERT_EQ(ra.code, 0) << ra.err;
  for (const char* f : {"model.bin", "history.txt", "history.kv", "manifest.tsv", "test_report.txt"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  ASSERT_EQ(call(train_args(b)).code, 0);
  EXPECT_EQ(slurp(a / "model.bin"), slurp(b / "model.bin"));
  EXPECT_EQ(slurp(a / "history.kv"), slurp(b / "history.kv"));

  const auto ev = call({"--seed", "5", "eval", "--model", (a / "model.bin").string(), "--data", dataset().string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("avg_acc="), std::string::npos);

  const auto be = call({"bench", "--models", (a / "model.bin").string() + ",basenet", "--input", "64x64x3", "--runs", "10"});
  ASSERT_EQ(be.code, 0) << be.err;
  std::istringstream rows(be.out);
  std::string line;
  int data_rows = 0;
  bool header_seen = false;
  while (std::getline(rows, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header_seen)
      ++data_rows;
    else
      header_seen = line.find("mean_ms") != std::string::npos;
  }
  EXPECT_TRUE(header_seen);
  EXPECT_EQ(data_rows, 2);

  const auto img = dataset() / "class_00" / "img_0000.ppm";
  const auto cam = call({"cam", "--model", (a / "model.bin").string(), "--images", img.string(), "--out",
                         (work_dir() / "cam").string(), "--alpha", "0.4"});
  ASSERT_EQ(cam.code, 0) << cam.err;
  EXPECT_TRUE(fs::exists(work_dir() / "cam" / "img_0000_cam.ppm"));
}
