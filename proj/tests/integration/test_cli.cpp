#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cmi/cli.hpp"
#include "cmi/data_io.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cmi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  RunResult r;
  r.code = cmi::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

#define EXPECT_CLI_OK(r) EXPECT_EQ((r).code, 0) << (r).err

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::path(testing::TempDir()) / ("cmi_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path -> contents for every regular file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

std::string drop_lines_containing(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.find(needle) == std::string::npos) out += line + "\n";
  return out;
}

double csv_value(const std::string& csv, const std::string& key) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ",", 0) == 0) return std::stod(line.substr(key.size() + 1));
  ADD_FAILURE() << "no row " << key;
  return 0.0;
}

// mean_s column of the named benchmark row.
double bench_mean(const fs::path& csv, const std::string& method) {
  std::istringstream in(slurp(csv));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(method + ",", 0) != 0) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    return std::stod(cols.at(3));
  }
  ADD_FAILURE() << "no benchmark row " << method;
  return 0.0;
}

// Small H and tiny networks: every subcommand, written below dir.
void small_pipeline(const fs::path& dir) {
  const auto d = dir.string();
  EXPECT_CLI_OK(cli({"synth-matrix", "--seed", "11", "--freqs", "8", "--out-dir", d + "/h"}));
  const auto h = d + "/h/H.cmih";
  EXPECT_CLI_OK(cli({"build-dataset", "--matrix", h, "--samples", "60", "--snr-db", "25", "--seed", "12",
                     "--out-dir", d + "/train"}));
  EXPECT_CLI_OK(cli({"build-dataset", "--matrix", h, "--samples", "20", "--snr-db", "25", "--seed", "13",
                     "--out-dir", d + "/test"}));
  const auto test = d + "/test/dataset.cmid";
  EXPECT_CLI_OK(cli({"recon-classical", "--matrix", h, "--dataset", test, "--solver", "ls", "--ls-iters", "20",
                     "--out-dir", d + "/ls"}));
  EXPECT_CLI_OK(cli({"recon-classical", "--matrix", h, "--dataset", test, "--out-dir", d + "/mf"}));
  EXPECT_CLI_OK(cli({"train", "--dataset", d + "/train/dataset.cmid", "--arch", "tiny", "--epochs", "2",
                     "--batch-size", "16", "--seed", "14", "--out-dir", d + "/model"}));
  const auto ckpt = d + "/model/checkpoint.attg";
  EXPECT_CLI_OK(cli({"evaluate", "--checkpoint", ckpt, "--dataset", test, "--matrix", h, "--out-dir", d + "/eval"}));
  EXPECT_CLI_OK(cli({"benchmark", "--matrix", h, "--dataset", test, "--checkpoint", ckpt, "--samples", "10",
                     "--ls-iters", "5", "--out-dir", d + "/bench"}));
}

}  // namespace

TEST(Cli, SameFlagsAndSeedGiveIdenticalFiles) {
  const auto a = fresh_dir("repro_a");
  const auto b = fresh_dir("repro_b");
  small_pipeline(a);
  small_pipeline(b);
  const auto ta = tree(a);
  const auto tb = tree(b);
  ASSERT_EQ(ta.size(), tb.size());
  std::size_t compared = 0;
  for (const auto& [name, bytes] : ta) {
    ASSERT_TRUE(tb.count(name)) << name;
    const auto file = fs::path(name).filename().string();
    // Wall-clock measurements and the manifest (which names the out dir) differ by nature.
    if (file == "run_manifest.json" || file == "timing.csv" || file.rfind("benchmark", 0) == 0) continue;
    if (file == "metrics.csv" || file == "metrics.txt") {
      EXPECT_EQ(drop_lines_containing(bytes, "inference"), drop_lines_containing(tb.at(name), "inference")) << name;
    } else {
      EXPECT_TRUE(bytes == tb.at(name)) << name << " differs between runs";
    }
    ++compared;
  }
  EXPECT_GT(compared, 40u);
}

TEST(Cli, EveryRunWritesOneManifest) {
  const auto dir = fresh_dir("manifest");
  small_pipeline(dir);
  std::size_t runs = 0;
  for (const auto* sub : {"h", "train", "test", "ls", "mf", "model", "eval", "bench"}) {
    const auto m = slurp(dir / sub / "run_manifest.json");
    ASSERT_FALSE(m.empty()) << sub;
    EXPECT_NE(m.find("\"subcommand\""), std::string::npos);
    EXPECT_NE(m.find("\"tool_version\""), std::string::npos);
    EXPECT_NE(m.find("\"wall_time_s\""), std::string::npos);
    ++runs;
  }
  EXPECT_EQ(runs, 8u);
}

TEST(Cli, SubcommandsLeaveInputsUntouched) {
  const auto dir = fresh_dir("inputs");
  small_pipeline(dir);
  const auto h = dir / "h/H.cmih";
  const auto test = dir / "test/dataset.cmid";
  const auto ckpt = dir / "model/checkpoint.attg";
  const auto before = std::vector{slurp(h), slurp(test), slurp(ckpt)};
  EXPECT_CLI_OK(cli({"evaluate", "--checkpoint", ckpt.string(), "--dataset", test.string(), "--matrix", h.string(),
                     "--out-dir", (dir / "eval2").string()}));
  EXPECT_CLI_OK(cli({"train", "--dataset", test.string(), "--checkpoint", ckpt.string(), "--epochs", "3",
                     "--batch-size", "16", "--out-dir", (dir / "resumed").string()}));
  EXPECT_CLI_OK(cli({"recon-classical", "--matrix", h.string(), "--dataset", test.string(), "--solver", "ls",
                     "--out-dir", (dir / "ls2").string()}));
  EXPECT_EQ(before, (std::vector{slurp(h), slurp(test), slurp(ckpt)}));
}

TEST(Cli, UsageErrorsExitWithTwo) {
  const auto dir = fresh_dir("usage").string();
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"no-such-command"}).code, 2);
  EXPECT_EQ(cli({"synth-matrix", "--bogus", "--out-dir", dir}).code, 2);
  EXPECT_EQ(cli({"synth-matrix", "--mode", "spherical", "--out-dir", dir}).code, 2);
  EXPECT_EQ(cli({"synth-matrix", "--threads", "0", "--out-dir", dir}).code, 2);
  EXPECT_EQ(cli({"train", "--dataset", "missing.cmid", "--lr", "-1", "--out-dir", dir}).code, 2);
  EXPECT_EQ(cli({"benchmark", "--matrix", "m", "--dataset", "d", "--samples", "3", "--out-dir", dir}).code, 2);
  EXPECT_EQ(cli({"recon-classical", "--matrix", "m", "--dataset", "d", "--ls-tol", "0", "--out-dir", dir}).code, 2);
  EXPECT_EQ(cli({"build-dataset", "--matrix", "m", "--source", "mnist", "--out-dir", dir}).code, 2);
  // Rejected before any work: nothing was written.
  EXPECT_TRUE(fs::is_empty(dir));
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, RuntimeErrorsExitWithOneAndNameThePath) {
  const auto dir = fresh_dir("runtime");
  auto r = cli({"train", "--dataset", (dir / "absent.cmid").string(), "--out-dir", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.cmid"), std::string::npos) << r.err;

  ASSERT_EQ(cli({"synth-matrix", "--freqs", "4", "--out-dir", (dir / "h").string()}).code, 0);
  ASSERT_EQ(cli({"build-dataset", "--matrix", (dir / "h/H.cmih").string(), "--samples", "5", "--out-dir",
                 (dir / "d").string()})
                .code,
            0);
  const auto bytes = slurp(dir / "d/dataset.cmid");
  {
    std::ofstream cut(dir / "cut.cmid", std::ios::binary);
    cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  r = cli({"recon-classical", "--matrix", (dir / "h/H.cmih").string(), "--dataset", (dir / "cut.cmid").string(),
           "--out-dir", (dir / "o2").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("byte offset"), std::string::npos) << r.err;

  // A dataset built against another H is refused.
  ASSERT_EQ(cli({"synth-matrix", "--freqs", "4", "--seed", "99", "--out-dir", (dir / "h2").string()}).code, 0);
  r = cli({"recon-classical", "--matrix", (dir / "h2/H.cmih").string(), "--dataset",
           (dir / "d/dataset.cmid").string(), "--out-dir", (dir / "o3").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, UntrainedCheckpointScoresNearChance) {
  const auto dir = fresh_dir("chance");
  const auto d = dir.string();
  ASSERT_EQ(cli({"synth-matrix", "--seed", "21", "--out-dir", d + "/h"}).code, 0);
  ASSERT_EQ(cli({"build-dataset", "--matrix", d + "/h/H.cmih", "--samples", "300", "--snr-db", "30", "--seed", "22",
                 "--out-dir", d + "/data"})
                .code,
            0);
  const auto data = d + "/data/dataset.cmid";
  EXPECT_CLI_OK(cli({"train", "--dataset", data, "--epochs", "0", "--seed", "23", "--out-dir", d + "/model"}));
  EXPECT_CLI_OK(cli({"evaluate", "--checkpoint", d + "/model/checkpoint.attg", "--dataset", data, "--out-dir",
                     d + "/eval"}));
  const double acc = csv_value(slurp(dir / "eval/metrics.csv"), "accuracy");
  EXPECT_GE(acc, 0.05);
  EXPECT_LE(acc, 0.2);
}

TEST(Cli, BenchmarkTimeGrowsWithSolverIterations) {
  const auto dir = fresh_dir("bench");
  const auto d = dir.string();
  ASSERT_EQ(cli({"synth-matrix", "--seed", "31", "--out-dir", d + "/h"}).code, 0);
  ASSERT_EQ(cli({"build-dataset", "--matrix", d + "/h/H.cmih", "--samples", "10", "--snr-db", "30", "--out-dir",
                 d + "/data"})
                .code,
            0);
  for (const auto* iters : {"1", "100"})
    EXPECT_CLI_OK(cli({"benchmark", "--matrix", d + "/h/H.cmih", "--dataset", d + "/data/dataset.cmid", "--samples",
                       "10", "--ls-iters", iters, "--out-dir", d + "/it" + iters}));
  EXPECT_GT(bench_mean(dir / "it100/benchmark.csv", "ls"), bench_mean(dir / "it1/benchmark.csv", "ls"));
  EXPECT_GT(bench_mean(dir / "it1/benchmark.csv", "generator"), 0.0);
}

TEST(Cli, FullPipelineSmoke) {
  const auto dir = fresh_dir("smoke");
  const auto d = dir.string();
  EXPECT_CLI_OK(cli({"synth-matrix", "--seed", "41", "--out-dir", d + "/h"}));
  const auto h = d + "/h/H.cmih";
  EXPECT_CLI_OK(cli({"build-dataset", "--matrix", h, "--samples", "500", "--snr-db", "30", "--seed", "42",
                     "--out-dir", d + "/train"}));
  EXPECT_CLI_OK(cli({"build-dataset", "--matrix", h, "--samples", "50", "--snr-db", "30", "--seed", "43",
                     "--out-dir", d + "/test"}));
  EXPECT_CLI_OK(cli({"train", "--dataset", d + "/train/dataset.cmid", "--epochs", "3", "--seed", "44", "--out-dir",
                     d + "/model"}));
  EXPECT_CLI_OK(cli({"evaluate", "--checkpoint", d + "/model/checkpoint.attg", "--dataset",
                     d + "/test/dataset.cmid", "--matrix", h, "--out-dir", d + "/eval"}));
  const auto log = slurp(dir / "model/train_log.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1 + 3 * 8);  // ceil(500 / 64) steps per epoch
  EXPECT_EQ(log.find("nan"), std::string::npos);
  for (const auto* f : {"metrics.csv", "metrics.txt", "predictions.csv", "confusion.pgm", "comparison.pgm",
                        "recon/00049.pgm"})
    EXPECT_TRUE(fs::exists(dir / "eval" / f)) << f;
  EXPECT_EQ(csv_value(slurp(dir / "eval/metrics.csv"), "samples"), 50.0);
}

TEST(Cli, MnistSourceTakesSeededSubsample) {
  const auto dir = fresh_dir("mnist");
  const auto d = dir.string();
  auto be32 = [](std::string& s, std::uint32_t v) {
    for (int sh = 24; sh >= 0; sh -= 8) s.push_back(static_cast<char>(v >> sh));
  };
  std::string images, labels;
  be32(images, 0x00000803);
  be32(images, 20);
  be32(images, 28);
  be32(images, 28);
  be32(labels, 0x00000801);
  be32(labels, 20);
  for (int i = 0; i < 20; ++i) {
    images += std::string(cmi::kImagePixels, static_cast<char>(10 + i));  // image i is constant (10 + i) / 255
    labels.push_back(static_cast<char>(i % 10));
  }
  std::ofstream(dir / "img.idx", std::ios::binary) << images;
  std::ofstream(dir / "lbl.idx", std::ios::binary) << labels;
  ASSERT_EQ(cli({"synth-matrix", "--freqs", "4", "--out-dir", d + "/h"}).code, 0);

  auto build = [&](const std::string& seed, const std::string& samples, const std::string& out) {
    EXPECT_CLI_OK(cli({"build-dataset", "--matrix", d + "/h/H.cmih", "--source", "mnist", "--images",
                       d + "/img.idx", "--labels", d + "/lbl.idx", "--samples", samples, "--seed", seed, "--out-dir",
                       d + "/" + out}));
    return cmi::load_dataset(dir / out / "dataset.cmid");
  };
  auto picked = [](const cmi::Dataset& ds) {
    std::vector<int> ids;
    for (const auto& s : ds.samples) {
      ids.push_back(static_cast<int>(std::lround(s.rho[0] * 255.0)) - 10);
      EXPECT_EQ(s.label, static_cast<std::size_t>(ids.back() % 10));
    }
    return ids;
  };
  const auto a = picked(build("5", "6", "a"));
  const auto b = picked(build("5", "6", "b"));
  const auto c = picked(build("6", "6", "c"));
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_EQ(picked(build("5", "0", "all")).size(), 20u);
}
