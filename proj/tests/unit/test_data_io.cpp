#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "cmi/data_io.hpp"
#include "cmi/errors.hpp"
#include "cmi/rng.hpp"

using namespace cmi;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                     std::uint8_t fill = 0) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x803);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  for (std::size_t i = 0; i < std::size_t{count} * rows * cols; ++i) out.push_back(static_cast<std::uint8_t>(fill + i));
  return out;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x801);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

ComplexMatrix small_h(std::size_t m, std::uint64_t seed) {
  ApertureConfig ap;
  ap.n_freqs = m;
  ap.n_positions = 1;
  return synthesize_H(SceneConfig{}, ap, seed);
}

std::size_t lit(const std::vector<double>& img) {
  std::size_t n = 0;
  for (double v : img) n += v > 0.5;
  return n;
}

}  // namespace

TEST(Idx, SingleZeroImage) {
  std::vector<std::uint8_t> bytes;
  put_be32(bytes, 0x803);
  put_be32(bytes, 1);
  put_be32(bytes, 28);
  put_be32(bytes, 28);
  bytes.resize(bytes.size() + 784, 0);
  const auto imgs = parse_idx_images(bytes);
  ASSERT_EQ(imgs.size(), 1u);
  ASSERT_EQ(imgs[0].size(), 784u);
  for (double v : imgs[0]) EXPECT_EQ(v, 0.0);
}

TEST(Idx, PixelScaling) {
  const auto imgs = parse_idx_images(idx_images(2, 28, 28));
  EXPECT_EQ(imgs[0][0], 0.0);
  EXPECT_EQ(imgs[0][255], 1.0);
  EXPECT_DOUBLE_EQ(imgs[1][0], (784 % 256) / 255.0);
}

TEST(Idx, LabelMagicRejectedByImageParser) {
  auto bytes = idx_labels({1, 2, 3});
  try {
    parse_idx_images(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  EXPECT_THROW(parse_idx_labels(idx_images(1, 28, 28)), FormatError);
}

TEST(Idx, NonStandardDimsRejected) {
  try {
    parse_idx_images(idx_images(1, 27, 28));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
}

TEST(Idx, Labels) {
  const auto labels = parse_idx_labels(idx_labels({7, 2, 1, 0, 9}));
  EXPECT_EQ(labels, (std::vector<std::size_t>{7, 2, 1, 0, 9}));
  EXPECT_THROW(parse_idx_labels(idx_labels({3, 10})), FormatError);
}

TEST(Idx, EveryTruncationIsACleanError) {
  const auto images = idx_images(3, 28, 28);
  for (std::size_t len = 0; len < images.size(); ++len) {
    std::span<const std::uint8_t> prefix(images.data(), len);
    try {
      parse_idx_images(prefix);
      FAIL() << "truncation to " << len << " bytes parsed";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), len);
    }
  }
  const auto labels = idx_labels({1, 2, 3, 4});
  for (std::size_t len = 0; len < labels.size(); ++len)
    EXPECT_THROW(parse_idx_labels(std::span<const std::uint8_t>(labels.data(), len)), FormatError);
}

TEST(Idx, HugeDeclaredCountDoesNotAllocate) {
  auto bytes = idx_images(1, 28, 28);
  bytes[4] = bytes[5] = bytes[6] = bytes[7] = 0xff;
  EXPECT_THROW(parse_idx_images(bytes), FormatError);
}

TEST(Idx, OfficialTestSetIfPresent) {
  const char* dir = std::getenv("CMI_MNIST_DIR");
  if (!dir) GTEST_SKIP() << "CMI_MNIST_DIR not set";
  const std::filesystem::path root(dir);
  const auto imgs = parse_idx_images(read_file(root / "t10k-images-idx3-ubyte"));
  const auto labels = parse_idx_labels(read_file(root / "t10k-labels-idx1-ubyte"));
  EXPECT_EQ(imgs.size(), 10000u);
  ASSERT_EQ(labels.size(), 10000u);
  EXPECT_EQ(labels[0], 7u);
}

TEST(SynthTargets, LitPixelBoundsAndBinaryValues) {
  const auto set = synth_targets(1000, 5);
  ASSERT_EQ(set.images.size(), 1000u);
  for (const auto& img : set.images) {
    ASSERT_EQ(img.size(), 784u);
    for (double v : img) EXPECT_TRUE(v == 0.0 || v == 1.0);
    EXPECT_GE(lit(img), 20u);
    EXPECT_LE(lit(img), 400u);
  }
}

TEST(SynthTargets, SameSeedSameSet) {
  const auto a = synth_targets(50, 9), b = synth_targets(50, 9), c = synth_targets(50, 10);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, c.images);
}

TEST(SynthTargets, ClassBalance) {
  const auto set = synth_targets(1000, 3);
  std::vector<std::size_t> counts(10, 0);
  for (auto l : set.labels) ++counts[l];
  for (auto c : counts) {
    EXPECT_GE(c, 90u);
    EXPECT_LE(c, 110u);
  }
}

TEST(SynthTargets, SameClassGlyphsVary) {
  const auto set = synth_targets(200, 4);
  std::vector<const std::vector<double>*> first(10, nullptr);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    auto& f = first[set.labels[i]];
    if (!f)
      f = &set.images[i];
    else
      differing += *f != set.images[i];
  }
  EXPECT_GT(differing, 150u);
}

TEST(SynthTargets, ZeroCountRejected) { EXPECT_THROW(synth_targets(0, 1), ContractError); }

TEST(Dataset, NoiselessZeroImageStoresZeros) {
  LabeledImages data{{std::vector<double>(784, 0.0)}, {4}};
  const auto ds = build_dataset(data, small_h(5, 1), std::nullopt, 3);
  ASSERT_EQ(ds.samples.size(), 1u);
  for (const auto& z : ds.samples[0].g) EXPECT_EQ(z, Complex(0.0, 0.0));
}

TEST(Dataset, SamplesMatchForwardMeasure) {
  const auto data = synth_targets(4, 2);
  const auto h = small_h(6, 2);
  const auto ds = build_dataset(data, h, 30.0, 11);
  EXPECT_EQ(ds.header.m, 6u);
  EXPECT_EQ(ds.header.n, 784u);
  EXPECT_EQ(ds.header.h_hash, matrix_hash(h));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ds.samples[i].g, forward_measure(h, data.images[i], 30.0, mix_seed(11, i)));
    EXPECT_EQ(ds.samples[i].label, data.labels[i]);
  }
}

TEST(Dataset, RoundTripIsBitwise) {
  const auto ds = build_dataset(synth_targets(5, 1), small_h(3, 4), 20.0, 8);
  const auto bytes = encode_dataset(ds);
  const auto back = decode_dataset(bytes);
  EXPECT_EQ(back.header.m, ds.header.m);
  EXPECT_EQ(back.header.count, 5u);
  EXPECT_EQ(back.header.snr_db, ds.header.snr_db);
  EXPECT_EQ(back.header.seed, 8u);
  EXPECT_EQ(back.header.h_hash, ds.header.h_hash);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back.samples[i].g, ds.samples[i].g);
    EXPECT_EQ(back.samples[i].rho, ds.samples[i].rho);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
  }
  EXPECT_EQ(encode_dataset(back), bytes);
}

TEST(Dataset, SameSeedSameBytes) {
  const auto h = small_h(4, 1);
  const auto data = synth_targets(6, 2);
  EXPECT_EQ(encode_dataset(build_dataset(data, h, 25.0, 5)), encode_dataset(build_dataset(data, h, 25.0, 5)));
  EXPECT_NE(encode_dataset(build_dataset(data, h, 25.0, 5)), encode_dataset(build_dataset(data, h, 25.0, 6)));
}

TEST(Dataset, TruncationsAndCountMismatchRejected) {
  const auto bytes = encode_dataset(build_dataset(synth_targets(2, 1), small_h(2, 1), std::nullopt, 1));
  for (std::size_t len = 0; len < bytes.size(); len += 7)
    EXPECT_THROW(decode_dataset(std::span<const std::uint8_t>(bytes.data(), len)), FormatError) << len;
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_dataset(extra), FormatError);
  auto wrong_count = bytes;
  wrong_count[24] = 3;  // count field
  EXPECT_THROW(decode_dataset(wrong_count), FormatError);
}

TEST(Dataset, DimensionMismatchRejected) {
  LabeledImages data{{std::vector<double>(783, 0.0)}, {1}};
  EXPECT_THROW(build_dataset(data, small_h(2, 1), std::nullopt, 0), DimensionError);
  LabeledImages ok{{std::vector<double>(784, 0.0)}, {1}};
  EXPECT_THROW(build_dataset(ok, ComplexMatrix(2, 100), std::nullopt, 0), DimensionError);
}

TEST(Dataset, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "cmi_data_io_test";
  const auto ds = build_dataset(synth_targets(3, 1), small_h(2, 1), 10.0, 2);
  save_dataset(dir / "set.cmid", ds);
  EXPECT_EQ(encode_dataset(load_dataset(dir / "set.cmid")), encode_dataset(ds));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_dataset(dir / "missing.cmid"), Error);
}

TEST(MatrixFile, RoundTripAndTruncation) {
  const auto h = small_h(3, 7);
  const auto bytes = encode_matrix(h);
  const auto back = decode_matrix(bytes);
  EXPECT_EQ(back.rows, h.rows);
  EXPECT_EQ(back.data, h.data);
  EXPECT_EQ(matrix_hash(back), matrix_hash(h));
  for (std::size_t len = 0; len < bytes.size(); len += 13)
    EXPECT_THROW(decode_matrix(std::span<const std::uint8_t>(bytes.data(), len)), FormatError);
}

TEST(Pgm, HeaderAndScaling) {
  const std::vector<double> v{0.0, 1.0, 0.5, -3.0, 7.0, 0.2};
  const auto bytes = encode_pgm(v, 3, 2);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())), header);
  const auto* px = bytes.data() + header.size();
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[1], 255);
  EXPECT_EQ(px[2], 128);
  EXPECT_EQ(px[3], 0);
  EXPECT_EQ(px[4], 255);
  EXPECT_EQ(px[5], 51);
}
