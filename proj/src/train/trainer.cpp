#include "cmi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include <fmt/format.h>

#include "cmi/errors.hpp"
#include "cmi/rng.hpp"
#include "core/byte_io.hpp"

namespace cmi {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

// Detaches D parameters from the tape for the generator update and
// restores them afterwards, including on exceptions.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamSet& ps) : ps_(ps) { ps_.set_requires_grad(false); }
  ~FreezeGuard() { ps_.set_requires_grad(true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamSet& ps_;
};

// Scans the whole tape, so a NaN that an activation would hide from the
// loss is still reported.
void check_finite(const Model& model, const Graph& g, const Tensor* loss, const char* what) {
  const auto id = g.first_non_finite();
  if (!id && (!loss || std::isfinite(loss->item()))) return;
  std::string where = "no recorded tensor";
  if (id) {
    const auto& node = g.node(*id);
    where = fmt::format("node {} ({}) with shape {}", *id, op_name(node.kind), shape_str(node.output.shape()));
    for (const auto* ps : {&model.g_params, &model.disc.params()})
      for (const auto& [name, t] : ps->entries())
        if (t.same_storage(node.output)) where += ", parameter " + (ps == &model.g_params ? name : "disc/" + name);
  }
  throw NonFiniteError(fmt::format("{} is not finite; first non-finite tensor: {}", what, where));
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0 || d_steps_per_g_step == 0)
    throw ContractError("TrainConfig: batch_size and d_steps_per_g_step must be positive");
  if (!(adam.lr > 0) || !(lambda > 0) || !(adam.eps > 0))
    throw ContractError("TrainConfig: lr, lambda and eps must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1))
    throw ContractError("TrainConfig: Adam betas must lie in [0, 1)");
}

TrainingData prepare_data(const Dataset& ds, const NormStats* norm) {
  if (ds.samples.empty()) throw ContractError("prepare_data: dataset is empty");
  TrainingData out;
  std::vector<Tensor> raw;
  raw.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    raw.push_back(split_complex(s.g));
    out.targets.push_back(s.rho);
    out.labels.push_back(s.label);
  }
  out.norm = norm ? *norm : compute_norm_stats(raw);
  out.inputs.reserve(raw.size());
  for (const auto& t : raw) out.inputs.push_back(apply_normalization(out.norm, t));
  return out;
}

Model::Model(const AttGanConfig& arch_cfg, std::uint64_t seed_value)
    : arch(arch_cfg), seed(seed_value), gen(arch_cfg, mix_seed(seed_value, 1)), disc(arch_cfg, mix_seed(seed_value, 2)) {
  g_params.extend(gen.params(), "gen/");
  g_params.extend(unc.as_params(), "unc/");
}

Batch make_batch(const TrainingData& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("make_batch: empty batch");
  const std::size_t m = data.inputs.at(indices[0]).dim(0);
  Batch b;
  b.inputs = Tensor({indices.size(), m, 2});
  b.targets = Tensor({indices.size(), kImageSide, kImageSide});
  auto in = b.inputs.data();
  auto tg = b.targets.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    const auto src = data.inputs.at(i).data();
    if (src.size() != 2 * m) throw DimensionError("make_batch: inconsistent measurement length");
    std::copy(src.begin(), src.end(), in.begin() + static_cast<long>(k * 2 * m));
    const auto& t = data.targets.at(i);
    if (t.size() != kImagePixels) throw DimensionError("make_batch: target is not 28x28");
    std::copy(t.begin(), t.end(), tg.begin() + static_cast<long>(k * kImagePixels));
    b.labels.push_back(data.labels.at(i));
  }
  return b;
}

double discriminator_step(Model& model, const Tensor& fake_image, const Tensor& targets, const TrainConfig& cfg) {
  Graph gd;
  const Tensor fake = fake_image.clone();
  const auto d_fake = model.disc.forward(gd, fake);
  const auto d_real = model.disc.forward(gd, targets);
  const auto l_d = discriminator_loss(gd, d_fake, d_real);
  check_finite(model, gd, &l_d, "discriminator loss");
  model.disc.params().zero_grad();
  gd.backward(l_d);
  adam_step(model.disc.params(), cfg.adam, ++model.adam_d.step, model.adam_d);
  return l_d.item();
}

LossBreakdown generator_step(Model& model, Graph& g, const GeneratorOutput& gen_out, const Batch& batch,
                             const TrainConfig& cfg) {
  LossBreakdown out;
  out.sigma1 = model.unc.sigma1();
  out.sigma2 = model.unc.sigma2();
  {
    FreezeGuard freeze(model.disc.params());
    const auto d_fake = model.disc.forward(g, gen_out.image);
    const auto l_cat = categorical_loss(g, gen_out.class_probs, batch.labels);
    const auto img = image_loss(g, gen_out.image, batch.targets, d_fake, cfg.lambda);
    const auto total = generator_total(g, l_cat, img.total, model.unc);
    check_finite(model, g, &total, "generator loss");
    model.g_params.zero_grad();
    g.backward(total);
    out.l_cat = l_cat.item();
    out.l_l1 = img.l1.item();
    out.l_adv = img.adv.item();
    out.l_img = img.total.item();
    out.l_g_total = total.item();
  }
  adam_step(model.g_params, cfg.adam, ++model.adam_g.step, model.adam_g);
  return out;
}

LossBreakdown train_step(Model& model, const Batch& batch, const TrainConfig& cfg) {
  Graph g;
  const auto gen_out = model.gen.forward(g, batch.inputs);
  check_finite(model, g, nullptr, "generator forward pass");
  double l_d = 0.0;
  for (std::size_t k = 0; k < cfg.d_steps_per_g_step; ++k)
    l_d = discriminator_step(model, gen_out.image, batch.targets, cfg);
  auto out = generator_step(model, g, gen_out, batch, cfg);
  out.l_d = l_d;
  ++model.step;
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(mix_seed(seed, 0x5eed), epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::string log_row(std::uint64_t step, std::uint64_t epoch, const LossBreakdown& l) {
  return fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}", step, epoch, l.l_d,
                     l.l_cat, l.l_l1, l.l_adv, l.l_img, l.l_g_total, l.sigma1, l.sigma2);
}

std::vector<LossBreakdown> fit(Model& model, const TrainingData& data, const TrainConfig& cfg, const FitHooks& hooks) {
  cfg.validate();
  if (data.size() == 0) throw ContractError("fit: training set is empty");
  model.norm = data.norm;
  model.train = cfg;
  if (hooks.log) *hooks.log << kTrainLogHeader << '\n';
  std::vector<LossBreakdown> history;
  while (model.epoch < cfg.epochs) {
    const auto order = epoch_order(data.size(), model.seed, model.epoch);
    const std::size_t first = history.size();
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto batch = make_batch(data, std::span(order).subspan(start, end - start));
      const auto losses = train_step(model, batch, cfg);
      history.push_back(losses);
      if (hooks.log) *hooks.log << log_row(model.step, model.epoch + 1, losses) << '\n';
    }
    ++model.epoch;
    if (hooks.on_epoch_end)
      hooks.on_epoch_end(model, std::span<const LossBreakdown>(history).subspan(first));
    if (hooks.on_snapshot && cfg.snapshot_every > 0 && model.epoch % cfg.snapshot_every == 0) hooks.on_snapshot(model);
  }
  return history;
}

Prediction predict(const Model& model, std::span<const Tensor> inputs, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("predict: batch_size must be positive");
  Prediction out;
  const std::size_t classes = model.arch.num_classes;
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, inputs.size() - start);
    const std::size_t m = inputs[start].dim(0);
    Tensor x({n, m, 2});
    for (std::size_t k = 0; k < n; ++k) {
      const auto src = inputs[start + k].data();
      std::copy(src.begin(), src.end(), x.data().begin() + static_cast<long>(k * 2 * m));
    }
    Graph g;
    const auto res = model.gen.forward(g, x);
    for (std::size_t k = 0; k < n; ++k) {
      const auto img = res.image.data().subspan(k * kImagePixels, kImagePixels);
      const auto probs = res.class_probs.data().subspan(k * classes, classes);
      out.images.emplace_back(img.begin(), img.end());
      out.class_probs.emplace_back(probs.begin(), probs.end());
      out.labels.push_back(static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

struct Record {
  Shape shape;
  std::vector<double> data;
};

using RecordMap = std::map<std::string, Record>;

void put_record(ByteWriter& out, const std::string& name, const Shape& shape, std::span<const double> data) {
  out.u32(static_cast<std::uint32_t>(name.size()));
  out.bytes(name);
  out.u8(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) out.u32(static_cast<std::uint32_t>(d));
  for (double v : data) out.f64(v);
}

void put_values(ByteWriter& out, const std::string& name, const std::vector<double>& values) {
  put_record(out, name, {values.size()}, values);
}

void put_adam(ByteWriter& out, const std::string& prefix, const AdamState& st, const ParamSet& params) {
  put_values(out, prefix + "/step", {static_cast<double>(st.step)});
  for (const auto& [name, t] : params.entries()) {
    const auto it = st.moments.find(name);
    if (it == st.moments.end()) continue;
    put_record(out, prefix + "/m/" + name, t.shape(), it->second.m);
    put_record(out, prefix + "/v/" + name, t.shape(), it->second.v);
  }
}

std::vector<double> arch_values(const AttGanConfig& a) {
  return {static_cast<double>(a.measurements),      static_cast<double>(a.image_size),
          static_cast<double>(a.num_classes),       static_cast<double>(a.encoder_filters),
          static_cast<double>(a.decoder_filters),   static_cast<double>(a.classifier_filters),
          static_cast<double>(a.gate_channels),     static_cast<double>(a.kernel),
          a.leaky_slope};
}

std::vector<double> train_values(const TrainConfig& c) {
  return {static_cast<double>(c.epochs), static_cast<double>(c.batch_size), c.adam.lr, c.adam.beta1, c.adam.beta2,
          c.adam.eps, c.lambda, static_cast<double>(c.d_steps_per_g_step), static_cast<double>(c.snapshot_every)};
}

RecordMap parse_records(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "checkpoint");
  if (in.bytes(4, "magic") != "ATTG") in.fail("bad magic, expected ATTG", 0);
  const std::size_t version_at = in.offset();
  if (const auto v = in.u32("version"); v != kCheckpointVersion)
    in.fail(fmt::format("unsupported checkpoint version {} (expected {})", v, kCheckpointVersion), version_at);
  RecordMap records;
  while (!in.at_end()) {
    const std::size_t record_at = in.offset();
    const auto name_len = in.u32("name length");
    if (name_len == 0 || name_len > 4096) in.fail("implausible name length", record_at);
    std::string name(in.bytes(name_len, "name"));
    const auto rank = in.u8("rank");
    if (rank == 0 || rank > 8) in.fail("invalid rank for '" + name + "'", record_at);
    Record r;
    long double numel = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = in.u32("dimension");
      if (d == 0) in.fail("zero dimension in '" + name + "'", record_at);
      r.shape.push_back(d);
      numel *= d;
    }
    if (numel * 8 > in.remaining()) in.fail("truncated data for '" + name + "'");
    r.data.resize(static_cast<std::size_t>(numel));
    for (auto& v : r.data) v = in.f64("value");
    if (!records.emplace(std::move(name), std::move(r)).second) in.fail("duplicate record", record_at);
  }
  return records;
}

const Record& need(const RecordMap& rec, const std::string& name, std::size_t min_numel = 1) {
  const auto it = rec.find(name);
  if (it == rec.end()) throw FormatError("checkpoint: missing record '" + name + "'", 0);
  if (it->second.data.size() < min_numel) throw FormatError("checkpoint: record '" + name + "' too short", 0);
  return it->second;
}

std::uint64_t as_count(double v, const std::string& what) {
  if (!(v >= 0) || v != std::floor(v) || v > 9.007199254740992e15)
    throw FormatError("checkpoint: " + what + " is not a non-negative integer", 0);
  return static_cast<std::uint64_t>(v);
}

void load_params(const RecordMap& rec, const std::string& prefix, ParamSet& params) {
  for (auto& [name, t] : params.entries()) {
    const auto& r = need(rec, prefix + name);
    if (r.shape != t.shape())
      throw FormatError(fmt::format("checkpoint: '{}{}' has shape {}, model expects {}", prefix, name,
                                    shape_str(r.shape), shape_str(t.shape())),
                        0);
    std::copy(r.data.begin(), r.data.end(), t.data().begin());
  }
}

void load_adam(const RecordMap& rec, const std::string& prefix, const ParamSet& params, AdamState& st) {
  st.step = static_cast<std::int64_t>(as_count(need(rec, prefix + "/step").data[0], prefix + " step"));
  for (const auto& [name, t] : params.entries()) {
    const auto m = rec.find(prefix + "/m/" + name);
    const auto v = rec.find(prefix + "/v/" + name);
    if (m == rec.end() && v == rec.end()) continue;
    if (m == rec.end() || v == rec.end() || m->second.shape != t.shape() || v->second.shape != t.shape())
      throw FormatError("checkpoint: inconsistent Adam moments for '" + name + "'", 0);
    st.moments[name] = {m->second.data, v->second.data};
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  ByteWriter out;
  out.bytes("ATTG");
  out.u32(kCheckpointVersion);
  put_values(out, "config/arch", arch_values(model.arch));
  put_values(out, "config/train", train_values(model.train));
  // 64-bit seed as two exactly representable 32-bit halves.
  put_values(out, "state/seed",
             {static_cast<double>(model.seed >> 32), static_cast<double>(model.seed & 0xffffffffULL)});
  put_values(out, "state/epoch", {static_cast<double>(model.epoch)});
  put_values(out, "state/step", {static_cast<double>(model.step)});
  put_values(out, "norm/mean", {model.norm.mean[0], model.norm.mean[1]});
  put_values(out, "norm/std", {model.norm.std[0], model.norm.std[1]});
  for (const auto& [name, t] : model.g_params.entries()) put_record(out, name, t.shape(), t.data());
  for (const auto& [name, t] : model.disc.params().entries()) put_record(out, "disc/" + name, t.shape(), t.data());
  put_adam(out, "adam_g", model.adam_g, model.g_params);
  put_adam(out, "adam_d", model.adam_d, model.disc.params());
  return out.take();
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto rec = parse_records(bytes);
  const auto& a = need(rec, "config/arch", 9).data;
  AttGanConfig arch;
  arch.measurements = as_count(a[0], "measurements");
  arch.image_size = as_count(a[1], "image size");
  arch.num_classes = as_count(a[2], "class count");
  arch.encoder_filters = as_count(a[3], "encoder filters");
  arch.decoder_filters = as_count(a[4], "decoder filters");
  arch.classifier_filters = as_count(a[5], "classifier filters");
  arch.gate_channels = as_count(a[6], "gate channels");
  arch.kernel = as_count(a[7], "kernel");
  arch.leaky_slope = a[8];
  try {
    arch.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what(), 0);
  }
  const auto& s = need(rec, "state/seed", 2).data;
  const std::uint64_t seed = (as_count(s[0], "seed") << 32) | as_count(s[1], "seed");

  Model model(arch, seed);
  const auto& t = need(rec, "config/train", 9).data;
  model.train.epochs = as_count(t[0], "epochs");
  model.train.batch_size = as_count(t[1], "batch size");
  model.train.adam = {t[2], t[3], t[4], t[5]};
  model.train.lambda = t[6];
  model.train.d_steps_per_g_step = as_count(t[7], "d steps");
  model.train.snapshot_every = as_count(t[8], "snapshot interval");
  model.train.seed = seed;
  model.epoch = as_count(need(rec, "state/epoch").data[0], "epoch");
  model.step = as_count(need(rec, "state/step").data[0], "step");
  const auto& mean = need(rec, "norm/mean", 2).data;
  const auto& sd = need(rec, "norm/std", 2).data;
  model.norm.mean = {mean[0], mean[1]};
  model.norm.std = {sd[0], sd[1]};
  load_params(rec, "", model.g_params);
  load_params(rec, "disc/", model.disc.params());
  load_adam(rec, "adam_g", model.g_params, model.adam_g);
  load_adam(rec, "adam_d", model.disc.params(), model.adam_d);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  write_file(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void restore_checkpoint(const std::filesystem::path& path, Model& target) { target = load_checkpoint(path); }

}  // namespace cmi
