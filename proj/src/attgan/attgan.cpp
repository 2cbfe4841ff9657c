#include "cmi/attgan.hpp"

#include "cmi/errors.hpp"
#include "cmi/rng.hpp"

namespace cmi {

namespace {

// Hands out one derived seed per parameter, in registration order.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t next() { return mix_seed(seed_, counter_++); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

Tensor& add_weight(ParamSet& ps, const std::string& name, const Shape& shape, std::uint64_t seed) {
  return ps.add(name, xavier_init(shape, seed));
}

Tensor& add_bias(ParamSet& ps, const std::string& name, std::size_t n) { return ps.add(name, Tensor({n})); }

}  // namespace

AttGanConfig AttGanConfig::tiny(std::size_t measurements) {
  AttGanConfig c;
  c.measurements = measurements;
  c.encoder_filters = 4;
  c.decoder_filters = 4;
  c.classifier_filters = 4;
  c.gate_channels = 4;
  return c;
}

void AttGanConfig::validate() const {
  if (measurements == 0 || image_size < 2 || num_classes < 2)
    throw ContractError("AttGanConfig: measurements, image_size >= 2 and num_classes >= 2 required");
  if (encoder_filters == 0 || decoder_filters == 0 || classifier_filters == 0 || gate_channels == 0 || kernel == 0)
    throw ContractError("AttGanConfig: layer widths must be positive");
}

std::array<std::size_t, 3> AttGanConfig::stage_sizes() const {
  const std::size_t s1 = (image_size + 1) / 2;
  const std::size_t s2 = (s1 + 1) / 2;
  const std::size_t s3 = (s2 + 1) / 2;
  return {s1, s2, s3};
}

// ---------------------------------------------------------------------------

AttentionGate::AttentionGate(ParamSet& params, const std::string& prefix, std::size_t gate_channels,
                             std::size_t input_channels, std::size_t inter_channels, std::uint64_t seed) {
  SeedStream seeds(seed);
  w_gate = add_weight(params, prefix + "w_gate", {1, 1, gate_channels, inter_channels}, seeds.next());
  b_gate = add_bias(params, prefix + "b_gate", inter_channels);
  w_input = add_weight(params, prefix + "w_input", {1, 1, input_channels, inter_channels}, seeds.next());
  w_psi = add_weight(params, prefix + "w_psi", {1, 1, inter_channels, 1}, seeds.next());
  b_psi = add_bias(params, prefix + "b_psi", 1);
}

Tensor AttentionGate::psi_logits(Graph& g, const Tensor& gate_signal, const Tensor& ag_input) const {
  if (gate_signal.rank() != 4 || ag_input.rank() != 4 || gate_signal.dim(0) != ag_input.dim(0) ||
      gate_signal.dim(1) != ag_input.dim(1) || gate_signal.dim(2) != ag_input.dim(2))
    throw DimensionError("attention gate: gating signal " + shape_str(gate_signal.shape()) +
                         " and input " + shape_str(ag_input.shape()) + " must share batch and spatial dims");
  auto gate = g.bias_add(g.conv2d(gate_signal, w_gate), b_gate);
  auto skip = g.conv2d(ag_input, w_input);
  auto joint = g.relu(g.add(gate, skip));
  return g.bias_add(g.conv2d(joint, w_psi), b_psi);
}

Tensor AttentionGate::gate_from_logits(Graph& g, const Tensor& logits, const Tensor& ag_input, Tensor* ratio_out) {
  auto r = g.sigmoid(logits);
  if (ratio_out) *ratio_out = r;
  return g.channel_scale(ag_input, r);
}

Tensor AttentionGate::ratio(Graph& g, const Tensor& gate_signal, const Tensor& ag_input) const {
  return g.sigmoid(psi_logits(g, gate_signal, ag_input));
}

Tensor AttentionGate::forward(Graph& g, const Tensor& gate_signal, const Tensor& ag_input, Tensor* ratio_out) const {
  return gate_from_logits(g, psi_logits(g, gate_signal, ag_input), ag_input, ratio_out);
}

// ---------------------------------------------------------------------------

Encoder::Encoder(ParamSet& params, const std::string& prefix, std::size_t in_channels, const AttGanConfig& cfg,
                 std::uint64_t seed)
    : slope_(cfg.leaky_slope) {
  SeedStream seeds(seed);
  std::size_t cin = in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto tag = prefix + "conv" + std::to_string(i + 1);
    w_[i] = add_weight(params, tag + "/w", {cfg.kernel, cfg.kernel, cin, cfg.encoder_filters}, seeds.next());
    b_[i] = add_bias(params, tag + "/b", cfg.encoder_filters);
    cin = cfg.encoder_filters;
  }
}

std::array<Tensor, 3> Encoder::forward(Graph& g, const Tensor& x) const {
  std::array<Tensor, 3> out;
  Tensor h = x;
  for (std::size_t i = 0; i < 3; ++i) {
    h = g.leaky_relu(g.bias_add(g.conv2d(h, w_[i], opts_), b_[i]), slope_);
    out[i] = h;
  }
  return out;
}

// ---------------------------------------------------------------------------

Generator::Generator(const AttGanConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  SeedStream seeds(seed);
  const std::size_t pixels = cfg.image_size * cfg.image_size;
  const std::size_t k = cfg.kernel;
  const std::size_t enc = cfg.encoder_filters, dec = cfg.decoder_filters, cls = cfg.classifier_filters;

  w_in_ = add_weight(params_, "in/w", {2 * cfg.measurements, pixels}, seeds.next());
  b_in_ = add_bias(params_, "in/b", pixels);
  encoder_ = Encoder(params_, "enc/", 1, cfg, seeds.next());

  // Stage 0 upsamples the bottleneck and gates the 2nd encoder output,
  // stage 1 gates the 1st encoder output, stage 2 gates the projected input.
  const std::array<std::size_t, 3> coarse_ch{enc, dec, dec};
  const std::array<std::size_t, 3> skip_ch{enc, enc, 1};
  for (std::size_t s = 0; s < 3; ++s) {
    auto& st = decoder_[s];
    const auto tag = "dec/stage" + std::to_string(s + 1) + "/";
    st.w_up = add_weight(params_, tag + "up/w", {k, k, dec, coarse_ch[s]}, seeds.next());
    st.b_up = add_bias(params_, tag + "up/b", dec);
    st.gate = AttentionGate(params_, tag + "gate/", coarse_ch[s], skip_ch[s], cfg.gate_channels, seeds.next());
    st.w_fuse = add_weight(params_, tag + "fuse/w", {k, k, dec + skip_ch[s], dec}, seeds.next());
    st.b_fuse = add_bias(params_, tag + "fuse/b", dec);
  }
  w_img_ = add_weight(params_, "dec/image/w", {1, 1, dec, 1}, seeds.next());
  b_img_ = add_bias(params_, "dec/image/b", 1);

  const auto sizes = cfg.stage_sizes();
  w_cls1_ = add_weight(params_, "cls/conv1/w", {k, k, enc, cls}, seeds.next());
  b_cls1_ = add_bias(params_, "cls/conv1/b", cls);
  w_cls2_ = add_weight(params_, "cls/conv2/w", {k, k, cls, cls}, seeds.next());
  b_cls2_ = add_bias(params_, "cls/conv2/b", cls);
  w_cls_out_ = add_weight(params_, "cls/out/w", {sizes[2] * sizes[2] * cls, cfg.num_classes}, seeds.next());
  b_cls_out_ = add_bias(params_, "cls/out/b", cfg.num_classes);
}

GeneratorOutput Generator::forward(Graph& g, const Tensor& g_split) const {
  if (g_split.rank() != 3 || g_split.dim(1) != cfg_.measurements || g_split.dim(2) != 2)
    throw DimensionError("generator expects input [batch," + std::to_string(cfg_.measurements) + ",2], got " +
                         shape_str(g_split.shape()));
  const std::size_t batch = g_split.dim(0);
  const std::size_t size = cfg_.image_size;

  auto flat = g.reshape(g_split, {batch, 2 * cfg_.measurements});
  auto projected = g.reshape(g.dense(flat, w_in_, b_in_), {batch, size, size, 1});
  const auto feats = encoder_.forward(g, projected);

  const std::array<Tensor, 3> skips{feats[1], feats[0], projected};
  GeneratorOutput out;
  Tensor coarse = feats[2];
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& st = decoder_[s];
    const std::size_t h = skips[s].dim(1), w = skips[s].dim(2);
    auto up = g.relu(g.bias_add(g.conv2d_transpose(coarse, st.w_up, {2, Padding::Same, h, w}), st.b_up));
    auto gate_signal = g.upsample_nearest(coarse, h, w);
    auto gated = st.gate.forward(g, gate_signal, skips[s], &out.gate_ratios[s]);
    const std::array<Tensor, 2> parts{up, gated};
    coarse = g.relu(g.bias_add(g.conv2d(g.concat(parts), st.w_fuse), st.b_fuse));
  }
  auto img = g.sigmoid(g.bias_add(g.conv2d(coarse, w_img_), b_img_));
  out.image = g.reshape(img, {batch, size, size});

  auto c1 = g.relu(g.bias_add(g.conv2d(feats[2], w_cls1_), b_cls1_));
  auto c2 = g.relu(g.bias_add(g.conv2d(c1, w_cls2_), b_cls2_));
  auto logits = g.dense(g.reshape(c2, {batch, c2.numel() / batch}), w_cls_out_, b_cls_out_);
  out.class_probs = g.softmax(logits);
  return out;
}

std::size_t Generator::decoder_parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_.entries())
    if (name.rfind("dec/", 0) == 0) n += t.numel();
  return n;
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(const AttGanConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  SeedStream seeds(seed);
  encoder_ = Encoder(params_, "enc/", 1, cfg, seeds.next());
  const auto sizes = cfg.stage_sizes();
  w_out_ = add_weight(params_, "out/w", {sizes[2] * sizes[2] * cfg.encoder_filters, 1}, seeds.next());
  b_out_ = add_bias(params_, "out/b", 1);
}

Tensor Discriminator::forward(Graph& g, const Tensor& image) const {
  const std::size_t size = cfg_.image_size;
  if (image.rank() != 3 || image.dim(1) != size || image.dim(2) != size)
    throw DimensionError("discriminator expects [batch," + std::to_string(size) + "," + std::to_string(size) +
                         "], got " + shape_str(image.shape()));
  const std::size_t batch = image.dim(0);
  const auto feats = encoder_.forward(g, g.reshape(image, {batch, size, size, 1}));
  auto flat = g.reshape(feats[2], {batch, feats[2].numel() / batch});
  return g.sigmoid(g.dense(flat, w_out_, b_out_));
}

}  // namespace cmi
