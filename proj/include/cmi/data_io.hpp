#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmi/forward_model.hpp"

namespace cmi {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kNumClasses = 10;

/// Row-major 28x28 images with values in [0, 1], paired with labels 0-9.
struct LabeledImages {
  std::vector<std::vector<double>> images;
  std::vector<std::size_t> labels;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// IDX image file (magic 0x00000803), 28x28 only; bytes scaled by 1/255.
std::vector<std::vector<double>> parse_idx_images(std::span<const std::uint8_t> bytes);
/// IDX label file (magic 0x00000801); labels must be 0-9.
std::vector<std::size_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Block-digit glyphs at random scale and position, values in {0, 1}.
/// Classes are balanced (count / 10 each, remainder spread) and shuffled.
LabeledImages synth_targets(std::size_t count, std::uint64_t seed);

struct Sample {
  ComplexVector g;
  std::vector<double> rho;
  std::size_t label = 0;
};

struct DatasetHeader {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  std::uint64_t m = 0;
  std::uint64_t n = 0;
  std::uint64_t count = 0;
  std::optional<double> snr_db;
  std::uint64_t h_hash = 0;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;
};

/// FNV-1a over the dimensions and little-endian values of H.
std::uint64_t matrix_hash(const ComplexMatrix& h);

/// g_i = forward_measure(H, image_i, snr_db, mix_seed(seed, i)).
Dataset build_dataset(const LabeledImages& data, const ComplexMatrix& h, std::optional<double> snr_db,
                      std::uint64_t seed);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_matrix(const ComplexMatrix& h);
ComplexMatrix decode_matrix(std::span<const std::uint8_t> bytes);
void save_matrix(const std::filesystem::path& path, const ComplexMatrix& h);
ComplexMatrix load_matrix(const std::filesystem::path& path);

/// Binary greyscale PGM (P5, maxval 255). Values are mapped from [lo, hi]
/// and clamped.
std::vector<std::uint8_t> encode_pgm(std::span<const double> values, std::size_t width, std::size_t height,
                                     double lo = 0.0, double hi = 1.0);

}  // namespace cmi
