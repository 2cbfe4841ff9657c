#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cmi/graph.hpp"
#include "cmi/params.hpp"

namespace cmi {

/// Layer widths of the generator/discriminator pair. Defaults are the
/// full-size network; tiny() keeps the topology with 4 filters per stage.
struct AttGanConfig {
  std::size_t measurements = 1024;  // M; the generator input is [batch, M, 2]
  std::size_t image_size = 28;
  std::size_t num_classes = 10;
  std::size_t encoder_filters = 256;
  std::size_t decoder_filters = 64;
  std::size_t classifier_filters = 128;
  std::size_t gate_channels = 64;  // intermediate width inside each attention gate
  std::size_t kernel = 3;
  double leaky_slope = 0.2;

  static AttGanConfig tiny(std::size_t measurements);
  void validate() const;
  /// Spatial extent after each stride-2 encoder stage, e.g. {14, 7, 4}.
  std::array<std::size_t, 3> stage_sizes() const;
};

/// Additive attention gate: ratio = sigmoid(psi(relu(Wg*gate + Wx*input))),
/// output = ratio * input broadcast over channels. All convolutions are 1x1.
class AttentionGate {
 public:
  AttentionGate() = default;
  AttentionGate(ParamSet& params, const std::string& prefix, std::size_t gate_channels, std::size_t input_channels,
                std::size_t inter_channels, std::uint64_t seed);

  /// Pre-sigmoid psi map, [batch, h, w, 1].
  Tensor psi_logits(Graph& g, const Tensor& gate_signal, const Tensor& ag_input) const;
  Tensor ratio(Graph& g, const Tensor& gate_signal, const Tensor& ag_input) const;
  Tensor forward(Graph& g, const Tensor& gate_signal, const Tensor& ag_input, Tensor* ratio_out = nullptr) const;

  /// Applies sigmoid(logits) to ag_input.
  static Tensor gate_from_logits(Graph& g, const Tensor& logits, const Tensor& ag_input, Tensor* ratio_out = nullptr);

  Tensor w_gate, b_gate, w_input, w_psi, b_psi;
};

/// Three stride-2 conv stages with leaky ReLU. Shared layout between the
/// generator encoder and the discriminator.
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamSet& params, const std::string& prefix, std::size_t in_channels, const AttGanConfig& cfg,
          std::uint64_t seed);

  /// Stage outputs at the three decreasing resolutions.
  std::array<Tensor, 3> forward(Graph& g, const Tensor& x) const;

 private:
  std::array<Tensor, 3> w_, b_;
  ConvOptions opts_{2, Padding::Same};
  double slope_ = 0.2;
};

struct GeneratorOutput {
  Tensor image;        // [batch, size, size], values in [0, 1]
  Tensor class_probs;  // [batch, classes], rows sum to 1
  std::array<Tensor, 3> gate_ratios;
};

class Generator {
 public:
  Generator(const AttGanConfig& cfg, std::uint64_t seed);

  GeneratorOutput forward(Graph& g, const Tensor& g_split) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const AttGanConfig& config() const { return cfg_; }
  /// Parameters whose names start with "dec/" (upsampling, gates, fusion convs, image head).
  std::size_t decoder_parameter_count() const;

 private:
  struct DecoderStage {
    Tensor w_up, b_up;
    AttentionGate gate;
    Tensor w_fuse, b_fuse;
  };

  AttGanConfig cfg_;
  ParamSet params_;
  Tensor w_in_, b_in_;
  Encoder encoder_;
  std::array<DecoderStage, 3> decoder_;
  Tensor w_img_, b_img_;
  Tensor w_cls1_, b_cls1_, w_cls2_, b_cls2_, w_cls_out_, b_cls_out_;
};

class Discriminator {
 public:
  Discriminator(const AttGanConfig& cfg, std::uint64_t seed);

  /// image [batch, size, size] -> probability of being ground truth, [batch, 1].
  Tensor forward(Graph& g, const Tensor& image) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  AttGanConfig cfg_;
  ParamSet params_;
  Encoder encoder_;
  Tensor w_out_, b_out_;
};

}  // namespace cmi
