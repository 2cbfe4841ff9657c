#include "cmi/metrics.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "cmi/data_io.hpp"
#include "cmi/errors.hpp"

namespace cmi {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kSsimWindow * kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow * kSsimWindow> w{};
  const double sigma = 1.5;
  const double c = (kSsimWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i)
    for (std::size_t j = 0; j < kSsimWindow; ++j) {
      const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
      total += w[i * kSsimWindow + j] = std::exp(-d2 / (2 * sigma * sigma));
    }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

double nmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw DimensionError(fmt::format("nmse: {} vs {} values", pred.size(), truth.size()));
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    err += d * d;
    energy += truth[i] * truth[i];
  }
  if (energy == 0.0) throw UndefinedMetricError("nmse: truth image has zero energy");
  return err / energy;
}

double ssim(std::span<const double> pred, std::span<const double> truth, std::size_t width, std::size_t height) {
  if (pred.size() != truth.size() || pred.size() != width * height)
    throw DimensionError(fmt::format("ssim: sizes {} and {} do not match {}x{}", pred.size(), truth.size(), width,
                                     height));
  if (width < kSsimWindow || height < kSsimWindow)
    throw DimensionError(fmt::format("ssim: image {}x{} smaller than the {}x{} window", width, height, kSsimWindow,
                                     kSsimWindow));
  static const auto w = gaussian_window();
  double acc = 0.0;
  std::size_t positions = 0;
  for (std::size_t y0 = 0; y0 + kSsimWindow <= height; ++y0)
    for (std::size_t x0 = 0; x0 + kSsimWindow <= width; ++x0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < kSsimWindow; ++i)
        for (std::size_t j = 0; j < kSsimWindow; ++j) {
          const double wt = w[i * kSsimWindow + j];
          const double a = pred[(y0 + i) * width + x0 + j];
          const double b = truth[(y0 + i) * width + x0 + j];
          mx += wt * a;
          my += wt * b;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      acc += ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++positions;
    }
  return acc / static_cast<double>(positions);
}

ClassificationReport classification_report(std::span<const std::size_t> predicted,
                                           std::span<const std::size_t> truth, std::size_t num_classes) {
  if (predicted.empty()) throw ContractError("classification_report: no samples");
  if (predicted.size() != truth.size())
    throw DimensionError(fmt::format("classification_report: {} predictions vs {} labels", predicted.size(),
                                     truth.size()));
  ClassificationReport r;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] >= num_classes || truth[i] >= num_classes)
      throw ContractError(fmt::format("classification_report: label out of range at sample {}", i));
    ++r.confusion[truth[i]][predicted[i]];
    correct += predicted[i] == truth[i];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  r.per_class.resize(num_classes);
  std::size_t included = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& m = r.per_class[c];
    for (std::size_t k = 0; k < num_classes; ++k) {
      m.support += r.confusion[c][k];
      m.predicted += r.confusion[k][c];
    }
    const double tp = static_cast<double>(r.confusion[c][c]);
    m.precision = m.predicted ? tp / static_cast<double>(m.predicted) : 0.0;
    m.recall = m.support ? tp / static_cast<double>(m.support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (m.support == 0 && m.predicted == 0) {
      r.excluded.push_back(c);
      continue;
    }
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    ++included;
  }
  r.macro_precision /= static_cast<double>(included);
  r.macro_recall /= static_cast<double>(included);
  r.macro_f1 /= static_cast<double>(included);
  return r;
}

std::string report_csv(const MetricsReport& r) {
  const auto& c = r.classification;
  std::string out = "metric,value\n";
  out += fmt::format("samples,{}\n", r.samples);
  out += fmt::format("mean_nmse,{:.10g}\n", r.mean_nmse);
  out += fmt::format("mean_ssim,{:.10g}\n", r.mean_ssim);
  out += fmt::format("accuracy,{:.10g}\n", c.accuracy);
  out += fmt::format("macro_precision,{:.10g}\n", c.macro_precision);
  out += fmt::format("macro_recall,{:.10g}\n", c.macro_recall);
  out += fmt::format("macro_f1,{:.10g}\n", c.macro_f1);
  out += fmt::format("mean_inference_time_s,{:.10g}\n", r.mean_inference_time_s);
  out += "\nclass,precision,recall,f1,support,predicted\n";
  for (std::size_t k = 0; k < c.per_class.size(); ++k) {
    const auto& m = c.per_class[k];
    out += fmt::format("{},{:.10g},{:.10g},{:.10g},{},{}\n", k, m.precision, m.recall, m.f1, m.support, m.predicted);
  }
  return out;
}

std::string report_text(const MetricsReport& r) {
  const auto& c = r.classification;
  std::string out;
  out += fmt::format("samples            {}\n", r.samples);
  out += fmt::format("mean NMSE          {:.6f}\n", r.mean_nmse);
  out += fmt::format("mean SSIM          {:.6f}\n", r.mean_ssim);
  out += fmt::format("accuracy           {:.4f}\n", c.accuracy);
  out += fmt::format("macro precision    {:.4f}\n", c.macro_precision);
  out += fmt::format("macro recall       {:.4f}\n", c.macro_recall);
  out += fmt::format("macro F1           {:.4f}\n", c.macro_f1);
  out += fmt::format("inference time     {:.3e} s/sample\n", r.mean_inference_time_s);
  if (!c.excluded.empty()) {
    out += "excluded classes  ";
    for (auto k : c.excluded) out += fmt::format(" {}", k);
    out += "\n";
  }
  out += "\nclass  precision  recall     f1  support\n";
  for (std::size_t k = 0; k < c.per_class.size(); ++k) {
    const auto& m = c.per_class[k];
    out += fmt::format("{:>5}  {:>9.4f}  {:>6.4f}  {:>5.4f}  {:>7}\n", k, m.precision, m.recall, m.f1, m.support);
  }
  out += "\nconfusion (rows true, columns predicted)\n";
  for (const auto& row : c.confusion) {
    for (auto v : row) out += fmt::format("{:>6}", v);
    out += "\n";
  }
  return out;
}

std::vector<std::uint8_t> confusion_pgm(const ClassificationReport& r, std::size_t cell_px) {
  const std::size_t n = r.confusion.size();
  const std::size_t side = n * cell_px;
  std::vector<double> img(side * side, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t row_total = 0;
    for (auto v : r.confusion[t]) row_total += v;
    for (std::size_t p = 0; p < n; ++p) {
      const double v = row_total ? static_cast<double>(r.confusion[t][p]) / static_cast<double>(row_total) : 0.0;
      for (std::size_t y = 0; y < cell_px; ++y)
        for (std::size_t x = 0; x < cell_px; ++x) img[(t * cell_px + y) * side + p * cell_px + x] = v;
    }
  }
  return encode_pgm(img, side, side);
}

}  // namespace cmi
