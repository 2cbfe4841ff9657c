#include "cmi/data_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>

#include "cmi/errors.hpp"
#include "cmi/parallel.hpp"
#include "cmi/rng.hpp"
#include "core/byte_io.hpp"

namespace cmi {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

// 5x7 digit font, one row per string, '#' lit.
constexpr std::array<std::array<const char*, 7>, 10> kFont{{
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
}};

std::vector<double> render_glyph(std::size_t digit, Rng& rng) {
  const std::size_t sx = 2 + rng.below(2), sy = 2 + rng.below(2);
  const std::size_t w = 5 * sx, h = 7 * sy;
  const std::size_t ox = rng.below(kImageSide - w + 1), oy = rng.below(kImageSide - h + 1);
  std::vector<double> img(kImagePixels, 0.0);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      if (kFont[digit][r][c] != '#') continue;
      for (std::size_t dy = 0; dy < sy; ++dy)
        for (std::size_t dx = 0; dx < sx; ++dx) img[(oy + r * sy + dy) * kImageSide + ox + c * sx + dx] = 1.0;
    }
  return img;
}

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<std::vector<double>> parse_idx_images(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "idx images");
  if (const auto magic = in.u32_be("magic"); magic != kIdxImages)
    in.fail(fmt::format("magic mismatch: expected 0x00000803, got 0x{:08x}", magic), 0);
  const std::uint32_t count = in.u32_be("image count");
  const std::size_t rows_at = in.offset();
  const std::uint32_t rows = in.u32_be("row count");
  const std::uint32_t cols = in.u32_be("column count");
  if (rows != kImageSide || cols != kImageSide)
    in.fail("images must be 28x28, header says " + std::to_string(rows) + "x" + std::to_string(cols), rows_at);
  in.need(static_cast<std::size_t>(count) * kImagePixels, "pixel data");
  std::vector<std::vector<double>> images(count, std::vector<double>(kImagePixels));
  for (auto& img : images) {
    const auto raw = in.bytes(kImagePixels, "pixel data");
    for (std::size_t i = 0; i < kImagePixels; ++i) img[i] = static_cast<std::uint8_t>(raw[i]) / 255.0;
  }
  return images;
}

std::vector<std::size_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "idx labels");
  if (const auto magic = in.u32_be("magic"); magic != kIdxLabels)
    in.fail(fmt::format("magic mismatch: expected 0x00000801, got 0x{:08x}", magic), 0);
  const std::uint32_t count = in.u32_be("label count");
  in.need(count, "label data");
  std::vector<std::size_t> labels(count);
  for (auto& l : labels) {
    const std::size_t at = in.offset();
    l = in.u8("label");
    if (l >= kNumClasses) in.fail("label " + std::to_string(l) + " outside 0-9", at);
  }
  return labels;
}

LabeledImages synth_targets(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ContractError("synth_targets: count must be >= 1");
  LabeledImages out;
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) out.labels[i] = i % kNumClasses;
  Rng rng(seed);
  for (std::size_t i = count; i > 1; --i) std::swap(out.labels[i - 1], out.labels[rng.below(i)]);
  out.images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng local(mix_seed(seed, i));
    out.images.push_back(render_glyph(out.labels[i], local));
  }
  return out;
}

std::uint64_t matrix_hash(const ComplexMatrix& h) {
  std::uint64_t acc = 0xcbf29ce484222325ULL;
  fnv_mix(acc, h.rows);
  fnv_mix(acc, h.cols);
  for (const auto& z : h.data) {
    fnv_mix(acc, std::bit_cast<std::uint64_t>(z.real()));
    fnv_mix(acc, std::bit_cast<std::uint64_t>(z.imag()));
  }
  return acc;
}

Dataset build_dataset(const LabeledImages& data, const ComplexMatrix& h, std::optional<double> snr_db,
                      std::uint64_t seed) {
  if (data.images.size() != data.labels.size())
    throw DimensionError("build_dataset: " + std::to_string(data.images.size()) + " images vs " +
                         std::to_string(data.labels.size()) + " labels");
  if (h.cols != kImagePixels)
    throw DimensionError("build_dataset: H has " + std::to_string(h.cols) + " columns, need 784");
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    if (data.images[i].size() != kImagePixels)
      throw DimensionError("build_dataset: image " + std::to_string(i) + " is not 28x28");
    if (data.labels[i] >= kNumClasses) throw ContractError("build_dataset: label out of range");
  }
  Dataset ds;
  ds.header.m = h.rows;
  ds.header.n = h.cols;
  ds.header.count = data.images.size();
  ds.header.snr_db = snr_db;
  ds.header.h_hash = matrix_hash(h);
  ds.header.seed = seed;
  ds.samples.resize(data.images.size());
  parallel_for(ds.samples.size(), [&](std::size_t i) {
    auto& s = ds.samples[i];
    s.rho = data.images[i];
    s.label = data.labels[i];
    s.g = forward_measure(h, s.rho, snr_db, mix_seed(seed, i));
  });
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  const auto& hd = ds.header;
  if (hd.count != ds.samples.size()) throw ContractError("encode_dataset: header count does not match samples");
  ByteWriter out;
  out.bytes("CMID");
  out.u32(hd.version);
  out.u64(hd.m);
  out.u64(hd.n);
  out.u64(hd.count);
  out.u8(hd.snr_db ? 1 : 0);
  out.f64(hd.snr_db.value_or(0.0));
  out.u64(hd.h_hash);
  out.u64(hd.seed);
  for (const auto& s : ds.samples) {
    if (s.rho.size() != hd.n || s.g.size() != hd.m) throw DimensionError("encode_dataset: sample size mismatch");
    out.u8(static_cast<std::uint8_t>(s.label));
    for (double v : s.rho) out.f64(v);
    for (const auto& z : s.g) {
      out.f64(z.real());
      out.f64(z.imag());
    }
  }
  return out.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "dataset");
  if (in.bytes(4, "magic") != "CMID") in.fail("bad magic, expected CMID", 0);
  Dataset ds;
  auto& hd = ds.header;
  const std::size_t version_at = in.offset();
  hd.version = in.u32("version");
  if (hd.version != DatasetHeader::kVersion) in.fail("unsupported version " + std::to_string(hd.version), version_at);
  hd.m = in.u64("M");
  hd.n = in.u64("N");
  hd.count = in.u64("count");
  const std::size_t flag_at = in.offset();
  const auto has_snr = in.u8("snr flag");
  if (has_snr > 1) in.fail("invalid snr flag", flag_at);
  const double snr = in.f64("snr");
  if (has_snr) hd.snr_db = snr;
  hd.h_hash = in.u64("H hash");
  hd.seed = in.u64("seed");

  // Validate the declared payload length before allocating anything.
  const std::size_t payload_at = in.offset();
  const auto per_sample = static_cast<long double>(1 + 8 * hd.n + 16 * hd.m);
  if (hd.m == 0 || hd.n == 0 || per_sample * static_cast<long double>(hd.count) != in.remaining())
    in.fail("payload is " + std::to_string(in.remaining()) + " bytes, header declares " + std::to_string(hd.count) +
                " samples of M=" + std::to_string(hd.m) + ", N=" + std::to_string(hd.n),
            payload_at);

  ds.samples.resize(hd.count);
  for (auto& s : ds.samples) {
    const std::size_t at = in.offset();
    s.label = in.u8("label");
    if (s.label >= kNumClasses) in.fail("label out of range", at);
    s.rho.resize(hd.n);
    for (auto& v : s.rho) v = in.f64("rho");
    s.g.resize(hd.m);
    for (auto& z : s.g) {
      const double re = in.f64("g");
      z = {re, in.f64("g")};
    }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) { write_file(path, encode_dataset(ds)); }
Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::vector<std::uint8_t> encode_matrix(const ComplexMatrix& h) {
  ByteWriter out;
  out.bytes("CMIH");
  out.u32(1);
  out.u64(h.rows);
  out.u64(h.cols);
  for (const auto& z : h.data) {
    out.f64(z.real());
    out.f64(z.imag());
  }
  return out.take();
}

ComplexMatrix decode_matrix(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "matrix");
  if (in.bytes(4, "magic") != "CMIH") in.fail("bad magic, expected CMIH", 0);
  const std::size_t version_at = in.offset();
  if (const auto v = in.u32("version"); v != 1) in.fail("unsupported version " + std::to_string(v), version_at);
  const std::uint64_t rows = in.u64("rows");
  const std::uint64_t cols = in.u64("cols");
  if (rows == 0 || cols == 0 || static_cast<long double>(rows) * cols * 16 != in.remaining())
    in.fail("payload length does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  ComplexMatrix h(rows, cols);
  for (auto& z : h.data) {
    const double re = in.f64("entry");
    z = {re, in.f64("entry")};
  }
  return h;
}

void save_matrix(const std::filesystem::path& path, const ComplexMatrix& h) { write_file(path, encode_matrix(h)); }
ComplexMatrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

std::vector<std::uint8_t> encode_pgm(std::span<const double> values, std::size_t width, std::size_t height, double lo,
                                     double hi) {
  if (values.size() != width * height) throw DimensionError("encode_pgm: value count does not match width*height");
  if (!(hi > lo)) throw ContractError("encode_pgm: hi must exceed lo");
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + values.size());
  for (double v : values) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    out.push_back(static_cast<std::uint8_t>(std::lround(t * 255.0)));
  }
  return out;
}

}  // namespace cmi
