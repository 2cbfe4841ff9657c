#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cmi/attgan.hpp"
#include "cmi/data_io.hpp"
#include "cmi/forward_model.hpp"
#include "cmi/losses.hpp"
#include "cmi/params.hpp"

namespace cmi {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  AdamConfig adam;
  double lambda = 100.0;
  std::uint64_t seed = 0;
  std::size_t d_steps_per_g_step = 1;
  /// Snapshot hook fires every this many epochs; 0 disables it.
  std::size_t snapshot_every = 0;

  void validate() const;
};

/// Network inputs normalized with the training-set statistics, next to the
/// clean targets and labels.
struct TrainingData {
  std::vector<Tensor> inputs;  // each [M, 2]
  std::vector<std::vector<double>> targets;
  std::vector<std::size_t> labels;
  NormStats norm;

  std::size_t size() const { return inputs.size(); }
};

/// Computes statistics from ds unless norm is given (evaluation reuses the
/// training statistics).
TrainingData prepare_data(const Dataset& ds, const NormStats* norm = nullptr);

/// Everything a training run mutates. Parameter seeds derive from `seed`.
class Model {
 public:
  Model(const AttGanConfig& arch, std::uint64_t seed);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  AttGanConfig arch;
  std::uint64_t seed;
  Generator gen;
  Discriminator disc;
  UncertaintyParams unc;
  /// Generator parameters plus the two log-sigmas, updated together.
  ParamSet g_params;
  AdamState adam_g;
  AdamState adam_d;
  NormStats norm;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  /// Training settings of the run that produced this state; stored in checkpoints.
  TrainConfig train;
};

struct Batch {
  Tensor inputs;   // [B, M, 2]
  Tensor targets;  // [B, 28, 28]
  std::vector<std::size_t> labels;
};

Batch make_batch(const TrainingData& data, std::span<const std::size_t> indices);

/// Updates D only, on a detached copy of fake_image. Returns the D loss.
double discriminator_step(Model& model, const Tensor& fake_image, const Tensor& targets, const TrainConfig& cfg);

/// Updates G and the log-sigmas only; D is frozen while its output is
/// recorded on g. gen_out must come from model.gen.forward(g, batch.inputs).
LossBreakdown generator_step(Model& model, Graph& g, const GeneratorOutput& gen_out, const Batch& batch,
                             const TrainConfig& cfg);

/// One alternation: d_steps_per_g_step discriminator steps, then one
/// generator step. Throws NonFiniteError naming the first bad tensor.
LossBreakdown train_step(Model& model, const Batch& batch, const TrainConfig& cfg);

/// Visiting order of the samples in one epoch; depends only on seed and epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

struct FitHooks {
  /// Receives the CSV header once and one row per step.
  std::ostream* log = nullptr;
  std::function<void(const Model&)> on_snapshot;
  std::function<void(const Model&, std::span<const LossBreakdown>)> on_epoch_end;
};

/// Trains from model.epoch up to cfg.epochs. Returns the per-step losses of
/// this call.
std::vector<LossBreakdown> fit(Model& model, const TrainingData& data, const TrainConfig& cfg,
                               const FitHooks& hooks = {});

inline constexpr const char* kTrainLogHeader = "step,epoch,l_d,l_cat,l_l1,l_adv,l_img,l_g,sigma1,sigma2";
std::string log_row(std::uint64_t step, std::uint64_t epoch, const LossBreakdown& l);

struct Prediction {
  std::vector<std::vector<double>> images;
  std::vector<std::vector<double>> class_probs;
  std::vector<std::size_t> labels;
};

/// Generator inference over every input, batch_size samples per graph.
Prediction predict(const Model& model, std::span<const Tensor> inputs, std::size_t batch_size = 64);

// Checkpoint container: "ATTG", u32 version, then records
// {u32 name_len, name, u8 rank, u32 dims[rank], f64 data[numel]}.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
/// Parses and validates everything before building the returned model.
Model decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);
/// Replaces target only when the whole file is valid.
void restore_checkpoint(const std::filesystem::path& path, Model& target);

}  // namespace cmi
