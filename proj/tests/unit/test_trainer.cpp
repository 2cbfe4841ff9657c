#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <sstream>

#include "cmi/errors.hpp"
#include "cmi/trainer.hpp"

using namespace cmi;

namespace {

AttGanConfig toy_arch(std::size_t m) {
  AttGanConfig a;
  a.measurements = m;
  a.encoder_filters = 8;
  a.decoder_filters = 6;
  a.classifier_filters = 8;
  a.gate_channels = 4;
  return a;
}

TrainingData toy_data(std::size_t count, std::size_t m = 16, std::uint64_t seed = 1) {
  ApertureConfig ap;
  ap.n_freqs = m;
  ap.n_positions = 1;
  const auto h = synthesize_H(SceneConfig{}, ap, seed);
  return prepare_data(build_dataset(synth_targets(count, seed), h, 30.0, seed));
}

TrainConfig toy_config(std::size_t epochs, std::uint64_t seed = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 16;
  c.seed = seed;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cmi_trainer_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.adam.lr, 5e-4);
  EXPECT_EQ(c.lambda, 100.0);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ContractError);
  c = {};
  c.adam.lr = -1;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(EpochOrder, PermutationVaryingByEpoch) {
  const auto a = epoch_order(50, 1, 0), b = epoch_order(50, 1, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, epoch_order(50, 1, 0));
}

TEST(TrainStep, DiscriminatorStepLeavesGeneratorUntouched) {
  const auto data = toy_data(16);
  Model model(toy_arch(16), 1);
  const auto cfg = toy_config(1);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const auto batch = make_batch(data, idx);
  const auto g_before = model.g_params.snapshot();
  const auto d_before = model.disc.params().snapshot();
  Graph g;
  const auto out = model.gen.forward(g, batch.inputs);
  discriminator_step(model, out.image, batch.targets, cfg);
  EXPECT_EQ(model.g_params.snapshot(), g_before);
  EXPECT_NE(model.disc.params().snapshot(), d_before);
}

TEST(TrainStep, GeneratorStepLeavesDiscriminatorUntouched) {
  const auto data = toy_data(16);
  Model model(toy_arch(16), 1);
  const auto cfg = toy_config(1);
  const std::vector<std::size_t> idx{4, 5, 6};
  const auto batch = make_batch(data, idx);
  const auto g_before = model.g_params.snapshot();
  const auto d_before = model.disc.params().snapshot();
  Graph g;
  const auto out = model.gen.forward(g, batch.inputs);
  const auto losses = generator_step(model, g, out, batch, cfg);
  EXPECT_EQ(model.disc.params().snapshot(), d_before);
  EXPECT_NE(model.g_params.snapshot(), g_before);
  EXPECT_GT(losses.l_cat, 0.0);
  EXPECT_NE(model.unc.log_sigma1.grad()[0], 0.0);
  EXPECT_NE(model.unc.log_sigma2.grad()[0], 0.0);
  for (const auto& [name, t] : model.disc.params().entries()) EXPECT_TRUE(t.requires_grad()) << name;
}

TEST(TrainStep, ReportsEveryLossTerm) {
  const auto data = toy_data(8);
  Model model(toy_arch(16), 2);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const auto l = train_step(model, make_batch(data, idx), toy_config(1));
  EXPECT_GT(l.l_d, 0.0);
  EXPECT_NEAR(l.l_cat, std::log(10.0), 0.5);
  EXPECT_GE(l.l_l1, 0.0);
  EXPECT_NEAR(l.l_img, 100.0 * l.l_l1 + l.l_adv, 1e-9);
  EXPECT_NEAR(l.l_g_total, l.l_cat + 0.5 * l.l_img, 1e-9);
  EXPECT_EQ(l.sigma1, 1.0);
  EXPECT_EQ(model.step, 1u);
  EXPECT_EQ(model.adam_d.step, 1);
  EXPECT_EQ(model.adam_g.step, 1);
}

TEST(TrainStep, NonFiniteParameterIsDiagnosed) {
  const auto data = toy_data(4);
  Model model(toy_arch(16), 2);
  model.gen.params().at("enc/conv2/w")[0] = std::nan("");
  const std::vector<std::size_t> idx{0, 1};
  try {
    train_step(model, make_batch(data, idx), toy_config(1));
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter gen/enc/conv2/w"), std::string::npos) << e.what();
  }
}

TEST(Fit, CategoricalLossHalvesOnToySet) {
  const auto data = toy_data(64);
  Model model(toy_arch(16), 7);
  const auto history = fit(model, data, toy_config(50));
  ASSERT_EQ(history.size(), 200u);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += history[i].l_cat / 10;
    tail += history[history.size() - 10 + i].l_cat / 10;
  }
  EXPECT_LE(tail, 0.5 * head) << "head " << head << " tail " << tail;
  for (const auto& l : history) {
    EXPECT_TRUE(std::isfinite(l.l_g_total));
    EXPECT_GT(l.sigma1, 0.0);
    EXPECT_GT(l.sigma2, 0.0);
  }
}

TEST(Fit, SameSeedSameCheckpoint) {
  const auto data = toy_data(40);
  Model a(toy_arch(16), 5), b(toy_arch(16), 5);
  fit(a, data, toy_config(2));
  fit(b, data, toy_config(2));
  EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
}

TEST(Fit, ZeroEpochsLeavesParametersUnchanged) {
  const auto data = toy_data(8);
  Model model(toy_arch(16), 5);
  const auto g0 = model.g_params.snapshot(), d0 = model.disc.params().snapshot();
  EXPECT_TRUE(fit(model, data, toy_config(0)).empty());
  EXPECT_EQ(model.g_params.snapshot(), g0);
  EXPECT_EQ(model.disc.params().snapshot(), d0);
  EXPECT_EQ(model.epoch, 0u);
}

TEST(Fit, LogAndHooks) {
  const auto data = toy_data(20);
  Model model(toy_arch(16), 5);
  auto cfg = toy_config(2);
  cfg.snapshot_every = 1;
  std::ostringstream log;
  int snapshots = 0, epochs = 0;
  FitHooks hooks;
  hooks.log = &log;
  hooks.on_snapshot = [&](const Model&) { ++snapshots; };
  hooks.on_epoch_end = [&](const Model&, std::span<const LossBreakdown> steps) {
    ++epochs;
    EXPECT_EQ(steps.size(), 2u);
  };
  fit(model, data, cfg, hooks);
  EXPECT_EQ(snapshots, 2);
  EXPECT_EQ(epochs, 2);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kTrainLogHeader);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
    EXPECT_EQ(line.find("nan"), std::string::npos);
  }
  EXPECT_EQ(rows, 4);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto data = toy_data(20);
  Model model(toy_arch(16), 9);
  fit(model, data, toy_config(1));
  const auto dir = temp_dir("roundtrip");
  save_checkpoint(dir / "a.attg", model);
  const auto loaded = load_checkpoint(dir / "a.attg");
  save_checkpoint(dir / "b.attg", loaded);
  EXPECT_EQ(read_file(dir / "a.attg"), read_file(dir / "b.attg"));
  EXPECT_EQ(loaded.epoch, 1u);
  EXPECT_EQ(loaded.seed, 9u);
  EXPECT_EQ(loaded.norm.std, model.norm.std);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, LargeSeedSurvives) {
  Model model(toy_arch(16), 0xfedcba9876543210ULL);
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(model)).seed, 0xfedcba9876543210ULL);
}

TEST(Checkpoint, TruncationFailsWithoutMutation) {
  const auto data = toy_data(20);
  Model trained(toy_arch(16), 9);
  fit(trained, data, toy_config(1));
  const auto bytes = encode_checkpoint(trained);
  const auto dir = temp_dir("truncate");
  Model target(toy_arch(16), 1);
  const auto before = encode_checkpoint(target);
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{7}, bytes.size() / 3, bytes.size() - 1}) {
    write_file(dir / "cut.attg", std::span<const std::uint8_t>(bytes.data(), len));
    try {
      restore_checkpoint(dir / "cut.attg", target);
      FAIL() << "truncation to " << len << " accepted";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), len);
    }
    EXPECT_EQ(encode_checkpoint(target), before);
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsOtherVersionAndMagic) {
  Model model(toy_arch(16), 1);
  auto bytes = encode_checkpoint(model);
  auto wrong_version = bytes;
  wrong_version[4] = 2;
  try {
    decode_checkpoint(wrong_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(wrong_magic), FormatError);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const auto data = toy_data(24);
  Model straight(toy_arch(16), 4);
  fit(straight, data, toy_config(3));

  Model first(toy_arch(16), 4);
  fit(first, data, toy_config(1));
  auto resumed = decode_checkpoint(encode_checkpoint(first));
  fit(resumed, data, toy_config(3));
  EXPECT_EQ(resumed.epoch, 3u);
  EXPECT_EQ(encode_checkpoint(resumed), encode_checkpoint(straight));
}

TEST(Predict, ShapesAndBatchInvariance) {
  const auto data = toy_data(10);
  Model model(toy_arch(16), 3);
  const auto a = predict(model, data.inputs, 4);
  const auto b = predict(model, data.inputs, 10);
  ASSERT_EQ(a.images.size(), 10u);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < 10; ++i) {
    ASSERT_EQ(a.images[i].size(), 784u);
    for (std::size_t p = 0; p < 784; ++p) EXPECT_NEAR(a.images[i][p], b.images[i][p], 1e-12);
  }
}
