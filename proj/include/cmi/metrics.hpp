#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cmi {

/// ||pred - truth||^2 / ||truth||^2.
double nmse(std::span<const double> pred, std::span<const double> truth);

/// Side of the Gaussian SSIM window (sigma 1.5).
inline constexpr std::size_t kSsimWindow = 7;

/// Mean of the local SSIM map over valid window positions, dynamic range 1.
double ssim(std::span<const double> pred, std::span<const double> truth, std::size_t width, std::size_t height);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // true samples of this class
  std::size_t predicted = 0;  // samples predicted as this class
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  /// confusion[true][predicted].
  std::vector<std::vector<std::size_t>> confusion;
  /// Classes absent from both predictions and truth; left out of the macro means.
  std::vector<std::size_t> excluded;
};

/// Precision of a class that is never predicted (or F1 with p + r = 0) is 0.
ClassificationReport classification_report(std::span<const std::size_t> predicted,
                                           std::span<const std::size_t> truth, std::size_t num_classes = 10);

struct MetricsReport {
  std::size_t samples = 0;
  double mean_nmse = 0.0;
  double mean_ssim = 0.0;
  double mean_inference_time_s = 0.0;
  ClassificationReport classification;
};

/// key,value rows followed by per-class rows.
std::string report_csv(const MetricsReport& r);
std::string report_text(const MetricsReport& r);
/// Row-normalised confusion matrix as an 8-bit PGM, each cell drawn as a
/// cell_px square.
std::vector<std::uint8_t> confusion_pgm(const ClassificationReport& r, std::size_t cell_px = 16);

}  // namespace cmi
