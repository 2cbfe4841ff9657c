#include "cmi/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "cmi/attgan.hpp"
#include "cmi/classical_recon.hpp"
#include "cmi/data_io.hpp"
#include "cmi/errors.hpp"
#include "cmi/forward_model.hpp"
#include "cmi/metrics.hpp"
#include "cmi/parallel.hpp"
#include "cmi/rng.hpp"
#include "cmi/trainer.hpp"

namespace cmi {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Flag combinations that are wrong regardless of the input files.
class UsageError : public Error {
 public:
  using Error::Error;
};

template <typename F>
void usage_check(F&& f) {
  try {
    f();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
}

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = ".";
};

struct SynthOptions {
  std::string mode = "gaussian";
  std::size_t freqs = 64;
  std::size_t positions = 16;
};

struct BuildOptions {
  std::string matrix;
  std::string source = "synthetic";
  std::string images;
  std::string labels;
  std::size_t samples = 1000;
  std::optional<double> snr_db;
};

struct ReconOptions {
  std::string matrix;
  std::string dataset;
  std::string solver = "mf";
  std::size_t samples = 0;
  std::size_t ls_iters = 100;
  double ls_tol = 1e-6;
};

struct TrainOptions {
  std::string dataset;
  std::string checkpoint;
  std::string arch = "full";
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = AdamConfig{}.lr;
  double lambda = 100.0;
};

struct EvalOptions {
  std::string dataset;
  std::string checkpoint;
  std::string matrix;
  std::size_t batch_size = 64;
};

struct BenchOptions {
  std::string matrix;
  std::string dataset;
  std::string checkpoint;
  std::size_t samples = 20;
  std::size_t ls_iters = 100;
  // Effectively off, so every solve runs the requested iteration count.
  double ls_tol = 1e-300;
};

// Everything the manifest records about one invocation.
struct RunRecord {
  std::string subcommand;
  fs::path out_dir;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::array();

  fs::path output(const std::string& name) {
    const auto p = out_dir / name;
    outputs.push_back(p.string());
    return p;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sample_name(std::size_t i) { return fmt::format("{:05}.pgm", i); }

ComplexMatrix load_matching_matrix(const std::string& path, const Dataset& ds) {
  auto h = load_matrix(path);
  if (matrix_hash(h) != ds.header.h_hash)
    throw ContractError(fmt::format("{}: matrix does not match the one the dataset was built with", path));
  return h;
}

void check_measurements(const Model& model, const Dataset& ds, const std::string& ckpt) {
  if (model.arch.measurements != ds.header.m)
    throw DimensionError(fmt::format("{}: model expects {} measurements but the dataset has {}", ckpt,
                                     model.arch.measurements, ds.header.m));
}

// -- subcommands ------------------------------------------------------------

void cmd_synth_matrix(const Common& c, const SynthOptions& o, RunRecord& run, std::ostream& out) {
  SceneConfig scene;
  ApertureConfig ap;
  ap.mode = o.mode == "greens" ? SynthesisMode::Greens : SynthesisMode::Gaussian;
  ap.n_freqs = o.freqs;
  ap.n_positions = o.positions;
  usage_check([&] {
    scene.validate();
    ap.validate();
  });
  run.config = {{"mode", o.mode}, {"freqs", o.freqs}, {"positions", o.positions}};
  run.seeds["matrix"] = c.seed;

  const auto h = synthesize_H(scene, ap, c.seed);
  const auto path = run.output("H.cmih");
  save_matrix(path, h);
  out << fmt::format("H {}x{} ({}) -> {}\n", h.rows, h.cols, o.mode, path.string());
}

void cmd_build_dataset(const Common& c, const BuildOptions& o, RunRecord& run, std::ostream& out) {
  if (o.source == "mnist" && (o.images.empty() || o.labels.empty()))
    throw UsageError("--source mnist needs --images and --labels");
  if (o.source == "synthetic" && o.samples == 0) throw UsageError("--samples must be positive for synthetic data");
  if (o.snr_db && !std::isfinite(*o.snr_db)) throw UsageError("--snr-db must be finite");
  const std::uint64_t target_seed = mix_seed(c.seed, 1);
  run.config = {{"source", o.source}, {"samples", o.samples}, {"snr_db", o.snr_db ? json(*o.snr_db) : json()}};
  run.seeds = {{"seed", c.seed}, {"noise", c.seed}};
  run.inputs["matrix"] = o.matrix;

  const auto h = load_matrix(o.matrix);
  LabeledImages data;
  if (o.source == "synthetic") {
    run.seeds["targets"] = target_seed;
    data = synth_targets(o.samples, target_seed);
  } else {
    run.inputs["images"] = o.images;
    run.inputs["labels"] = o.labels;
    data.images = parse_idx_images(read_file(o.images));
    data.labels = parse_idx_labels(read_file(o.labels));
    if (data.images.size() != data.labels.size())
      throw ContractError(fmt::format("{} holds {} images but {} holds {} labels", o.images, data.images.size(),
                                      o.labels, data.labels.size()));
    if (o.samples > 0 && o.samples < data.images.size()) {
      // Seeded uniform subsample, kept in file order.
      const std::uint64_t subset_seed = mix_seed(c.seed, 3);
      run.seeds["subset"] = subset_seed;
      std::vector<std::size_t> idx(data.images.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      Rng rng(subset_seed);
      for (std::size_t i = 0; i < o.samples; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      idx.resize(o.samples);
      std::sort(idx.begin(), idx.end());
      LabeledImages subset;
      for (std::size_t i : idx) {
        subset.images.push_back(std::move(data.images[i]));
        subset.labels.push_back(data.labels[i]);
      }
      data = std::move(subset);
    }
  }
  const auto ds = build_dataset(data, h, o.snr_db, c.seed);
  const auto path = run.output("dataset.cmid");
  save_dataset(path, ds);
  out << fmt::format("{} samples, M={} N={} -> {}\n", ds.samples.size(), ds.header.m, ds.header.n, path.string());
}

void cmd_recon_classical(const Common&, const ReconOptions& o, RunRecord& run, std::ostream& out) {
  SolverConfig cfg;
  cfg.max_iters = o.ls_iters;
  cfg.rel_tol = o.ls_tol;
  usage_check([&] { cfg.validate(); });
  run.config = {{"solver", o.solver}, {"samples", o.samples}, {"ls_iters", o.ls_iters}, {"ls_tol", o.ls_tol}};
  run.inputs = {{"matrix", o.matrix}, {"dataset", o.dataset}};

  const auto ds = load_dataset(o.dataset);
  const auto h = load_matching_matrix(o.matrix, ds);
  const std::size_t n = o.samples == 0 ? ds.samples.size() : std::min(o.samples, ds.samples.size());
  const bool mf = o.solver == "mf";

  const auto img_dir = run.output("recon");
  std::string csv = "index,label,nmse,ssim,iterations,residual_norm\n";
  std::string timing = "index,seconds\n";
  double sum_nmse = 0.0, sum_ssim = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = ds.samples[i];
    const auto res = mf ? matched_filter(h, s.g) : solve_ls(h, s.g, cfg);
    const auto img = mf ? peak_normalized(res.rho_rec) : res.rho_rec;
    const double e = nmse(img, s.rho);
    const double q = ssim(img, s.rho, kImageSide, kImageSide);
    sum_nmse += e;
    sum_ssim += q;
    write_file(img_dir / sample_name(i), encode_pgm(img, kImageSide, kImageSide));
    csv += fmt::format("{},{},{:.10g},{:.10g},{},{:.10g}\n", i, s.label, e, q, res.iterations_used, res.residual_norm);
    timing += fmt::format("{},{:.6e}\n", i, res.wall_time_s);
  }
  const double denom = static_cast<double>(std::max<std::size_t>(n, 1));
  write_text(run.output("recon.csv"), csv);
  write_text(run.output("timing.csv"), timing);
  write_text(run.output("recon_summary.csv"),
             fmt::format("metric,value\nsamples,{}\nmean_nmse,{:.10g}\nmean_ssim,{:.10g}\n", n, sum_nmse / denom,
                         sum_ssim / denom));
  out << fmt::format("{} over {} samples: mean NMSE {:.4f}, mean SSIM {:.4f}\n", o.solver, n, sum_nmse / denom,
                     sum_ssim / denom);
}

void cmd_train(const Common& c, const TrainOptions& o, RunRecord& run, std::ostream& out) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.adam.lr = o.lr;
  cfg.lambda = o.lambda;
  cfg.seed = c.seed;
  usage_check([&] { cfg.validate(); });
  run.config = {{"arch", o.arch},         {"epochs", o.epochs}, {"batch_size", o.batch_size},
                {"lr", o.lr},             {"lambda", o.lambda}, {"beta1", cfg.adam.beta1},
                {"beta2", cfg.adam.beta2}, {"resume", !o.checkpoint.empty()}};
  run.inputs["dataset"] = o.dataset;

  const auto ds = load_dataset(o.dataset);
  std::optional<Model> model;
  if (o.checkpoint.empty()) {
    AttGanConfig arch = o.arch == "tiny" ? AttGanConfig::tiny(ds.header.m) : AttGanConfig{};
    arch.measurements = ds.header.m;
    model.emplace(arch, c.seed);
  } else {
    run.inputs["checkpoint"] = o.checkpoint;
    model.emplace(load_checkpoint(o.checkpoint));
    check_measurements(*model, ds, o.checkpoint);
  }
  run.seeds = {{"model", model->seed}, {"generator", mix_seed(model->seed, 1)}, {"discriminator", mix_seed(model->seed, 2)}};
  const auto data = prepare_data(ds, o.checkpoint.empty() ? nullptr : &model->norm);

  fs::create_directories(run.out_dir);
  std::ofstream log(run.output("train_log.csv"), std::ios::binary);
  if (!log) throw Error("cannot open " + (run.out_dir / "train_log.csv").string());
  FitHooks hooks;
  hooks.log = &log;
  hooks.on_epoch_end = [&](const Model& m, std::span<const LossBreakdown> steps) {
    LossBreakdown mean;
    for (const auto& l : steps) {
      mean.l_d += l.l_d;
      mean.l_cat += l.l_cat;
      mean.l_img += l.l_img;
    }
    const double k = static_cast<double>(std::max<std::size_t>(steps.size(), 1));
    out << fmt::format("epoch {:>3}  L_D {:.4f}  L_CAT {:.4f}  L_IMG {:.4f}\n", m.epoch, mean.l_d / k,
                       mean.l_cat / k, mean.l_img / k)
        << std::flush;
  };
  const auto t0 = Clock::now();
  const auto history = fit(*model, data, cfg, hooks);
  log.close();
  const auto path = run.output("checkpoint.attg");
  save_checkpoint(path, *model);
  out << fmt::format("{} steps in {:.1f} s -> {}\n", history.size(), seconds_since(t0), path.string());
}

// Fixed layout: ground truth, matched filter (when H is given), generator,
// one column per sample, first occurrence of each class in order.
std::vector<std::uint8_t> comparison_sheet(const Dataset& ds, const Prediction& pred, const ComplexMatrix* h) {
  std::vector<std::size_t> picks;
  for (std::size_t cls = 0; cls < kNumClasses; ++cls)
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (ds.samples[i].label == cls) {
        picks.push_back(i);
        break;
      }
  for (std::size_t i = 0; picks.size() < std::min<std::size_t>(kNumClasses, ds.samples.size()); ++i)
    if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);

  std::vector<std::vector<const std::vector<double>*>> rows(h ? 3 : 2);
  std::vector<std::vector<double>> mf;
  if (h)
    for (std::size_t i : picks) mf.push_back(peak_normalized(matched_filter(*h, ds.samples[i].g).rho_rec));
  for (std::size_t k = 0; k < picks.size(); ++k) {
    rows[0].push_back(&ds.samples[picks[k]].rho);
    if (h) rows[1].push_back(&mf[k]);
    rows.back().push_back(&pred.images[picks[k]]);
  }

  constexpr std::size_t gap = 2;
  const std::size_t cell = kImageSide + gap;
  const std::size_t width = gap + picks.size() * cell;
  const std::size_t height = gap + rows.size() * cell;
  std::vector<double> sheet(width * height, 0.5);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      for (std::size_t y = 0; y < kImageSide; ++y)
        for (std::size_t x = 0; x < kImageSide; ++x)
          sheet[(gap + r * cell + y) * width + gap + c * cell + x] = (*rows[r][c])[y * kImageSide + x];
  return encode_pgm(sheet, width, height);
}

void cmd_evaluate(const Common&, const EvalOptions& o, RunRecord& run, std::ostream& out) {
  if (o.batch_size == 0) throw UsageError("--batch-size must be positive");
  run.config = {{"batch_size", o.batch_size}};
  run.inputs = {{"checkpoint", o.checkpoint}, {"dataset", o.dataset}};
  if (!o.matrix.empty()) run.inputs["matrix"] = o.matrix;

  const auto model = load_checkpoint(o.checkpoint);
  const auto ds = load_dataset(o.dataset);
  check_measurements(model, ds, o.checkpoint);
  std::optional<ComplexMatrix> h;
  if (!o.matrix.empty()) h = load_matching_matrix(o.matrix, ds);
  if (ds.samples.empty()) throw ContractError(o.dataset + ": dataset is empty");
  run.seeds["model"] = model.seed;

  const auto data = prepare_data(ds, &model.norm);
  const auto t0 = Clock::now();
  const auto pred = predict(model, data.inputs, o.batch_size);
  const double elapsed = seconds_since(t0);

  MetricsReport report;
  report.samples = ds.samples.size();
  const auto img_dir = run.output("recon");
  std::string csv = "index,label,predicted,confidence,nmse,ssim\n";
  for (std::size_t i = 0; i < report.samples; ++i) {
    const double e = nmse(pred.images[i], data.targets[i]);
    const double q = ssim(pred.images[i], data.targets[i], kImageSide, kImageSide);
    report.mean_nmse += e;
    report.mean_ssim += q;
    write_file(img_dir / sample_name(i), encode_pgm(pred.images[i], kImageSide, kImageSide));
    csv += fmt::format("{},{},{},{:.10g},{:.10g},{:.10g}\n", i, data.labels[i], pred.labels[i],
                       pred.class_probs[i][pred.labels[i]], e, q);
  }
  const double n = static_cast<double>(report.samples);
  report.mean_nmse /= n;
  report.mean_ssim /= n;
  report.mean_inference_time_s = elapsed / n;
  report.classification = classification_report(pred.labels, data.labels, model.arch.num_classes);

  write_text(run.output("predictions.csv"), csv);
  write_text(run.output("metrics.csv"), report_csv(report));
  write_text(run.output("metrics.txt"), report_text(report));
  write_file(run.output("confusion.pgm"), confusion_pgm(report.classification));
  write_file(run.output("comparison.pgm"), comparison_sheet(ds, pred, h ? &*h : nullptr));
  out << report_text(report);
}

void cmd_benchmark(const Common& c, const BenchOptions& o, RunRecord& run, std::ostream& out) {
  SolverConfig cfg;
  cfg.max_iters = o.ls_iters;
  cfg.rel_tol = o.ls_tol;
  usage_check([&] { cfg.validate(); });
  if (o.samples < 10) throw UsageError("--samples must be at least 10 for a stable mean");
  run.config = {{"samples", o.samples}, {"ls_iters", o.ls_iters}, {"ls_tol", o.ls_tol}};
  run.inputs = {{"matrix", o.matrix}, {"dataset", o.dataset}};

  const auto ds = load_dataset(o.dataset);
  const auto h = load_matching_matrix(o.matrix, ds);
  std::optional<Model> model;
  if (o.checkpoint.empty()) {
    AttGanConfig arch;
    arch.measurements = ds.header.m;
    model.emplace(arch, c.seed);
    run.seeds["model"] = c.seed;
  } else {
    run.inputs["checkpoint"] = o.checkpoint;
    model.emplace(load_checkpoint(o.checkpoint));
    check_measurements(*model, ds, o.checkpoint);
  }
  const std::size_t n = std::min(o.samples, ds.samples.size());
  if (n < 10) throw ContractError(fmt::format("{}: benchmark needs at least 10 samples, dataset has {}", o.dataset, n));
  const auto data = prepare_data(ds, o.checkpoint.empty() ? nullptr : &model->norm);

  auto time_gen = [&](std::size_t i) {
    const auto t0 = Clock::now();
    const auto p = predict(*model, std::span(data.inputs).subspan(i, 1), 1);
    return seconds_since(t0);
  };
  // One untimed warm-up per method.
  (void)solve_ls(h, ds.samples[0].g, cfg);
  (void)matched_filter(h, ds.samples[0].g);
  (void)time_gen(0);

  std::vector<double> ls_t, mf_t, gen_t;
  double iters = 0.0;
  std::string per_sample = "index,method,seconds\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto ls = solve_ls(h, ds.samples[i].g, cfg);
    iters += static_cast<double>(ls.iterations_used);
    ls_t.push_back(ls.wall_time_s);
    mf_t.push_back(matched_filter(h, ds.samples[i].g).wall_time_s);
    gen_t.push_back(time_gen(i));
    per_sample += fmt::format("{},ls,{:.6e}\n{},mf,{:.6e}\n{},generator,{:.6e}\n", i, ls_t.back(), i, mf_t.back(), i,
                              gen_t.back());
  }
  const auto ls_s = summarize_timings(ls_t);
  const auto mf_s = summarize_timings(mf_t);
  const auto gen_s = summarize_timings(gen_t);
  std::string csv = "method,iterations,samples,mean_s,std_s\n";
  csv += fmt::format("ls,{:.6g},{},{:.6e},{:.6e}\n", iters / static_cast<double>(n), n, ls_s.mean_s, ls_s.std_s);
  csv += fmt::format("mf,0,{},{:.6e},{:.6e}\n", n, mf_s.mean_s, mf_s.std_s);
  csv += fmt::format("generator,0,{},{:.6e},{:.6e}\n", n, gen_s.mean_s, gen_s.std_s);
  write_text(run.output("benchmark.csv"), csv);
  write_text(run.output("benchmark_samples.csv"), per_sample);
  const double speedup = ls_s.mean_s / gen_s.mean_s;
  run.config["speedup"] = speedup;
  out << fmt::format("ls ({} iters) {:.4e} s/sample, matched filter {:.4e} s/sample, generator {:.4e} s/sample\n",
                     o.ls_iters, ls_s.mean_s, mf_s.mean_s, gen_s.mean_s)
      << fmt::format("generator speedup over ls: {:.2f}x\n", speedup);
}

void write_manifest(const RunRecord& run, const Common& c, double wall_time) {
  json m;
  m["subcommand"] = run.subcommand;
  m["tool_version"] = kToolVersion;
  m["config"] = run.config;
  m["seed"] = c.seed;
  m["seeds"] = run.seeds;
  m["threads"] = c.threads;
  m["out_dir"] = run.out_dir.string();
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  m["wall_time_s"] = wall_time;
  write_text(run.out_dir / "run_manifest.json", m.dump(2) + "\n");
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (1 is the reference mode)")
      ->check(CLI::Range(1, 1024))
      ->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "Directory for outputs and run_manifest.json")->capture_default_str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Computational microwave imaging: datasets, classical reconstruction and Att-ClassiGAN training",
               "cmi"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  SynthOptions synth;
  BuildOptions build;
  ReconOptions recon;
  TrainOptions train;
  EvalOptions eval;
  BenchOptions bench;

  auto* s_synth = app.add_subcommand("synth-matrix", "Synthesize a sensing matrix H");
  add_common(s_synth, common);
  s_synth->add_option("--mode", synth.mode)->check(CLI::IsMember({"gaussian", "greens"}))->capture_default_str();
  s_synth->add_option("--freqs", synth.freqs, "Frequency points per aperture position")->capture_default_str();
  s_synth->add_option("--positions", synth.positions, "Aperture positions")->capture_default_str();

  auto* s_build = app.add_subcommand("build-dataset", "Simulate measurements g = H rho + n");
  add_common(s_build, common);
  s_build->add_option("--matrix", build.matrix)->required();
  s_build->add_option("--source", build.source)->check(CLI::IsMember({"synthetic", "mnist"}))->capture_default_str();
  s_build->add_option("--images", build.images, "IDX image file (mnist source)");
  s_build->add_option("--labels", build.labels, "IDX label file (mnist source)");
  s_build->add_option("--samples", build.samples, "Sample count (mnist: seeded subsample, 0 keeps all)")->capture_default_str();
  s_build->add_option("--snr-db", build.snr_db, "Measurement SNR; noiseless when omitted");

  auto* s_recon = app.add_subcommand("recon-classical", "Matched-filter or least-squares reconstruction");
  add_common(s_recon, common);
  s_recon->add_option("--matrix", recon.matrix)->required();
  s_recon->add_option("--dataset", recon.dataset)->required();
  s_recon->add_option("--solver", recon.solver)->check(CLI::IsMember({"mf", "ls"}))->capture_default_str();
  s_recon->add_option("--samples", recon.samples, "First N samples (0 = all)")->capture_default_str();
  s_recon->add_option("--ls-iters", recon.ls_iters)->capture_default_str();
  s_recon->add_option("--ls-tol", recon.ls_tol)->capture_default_str();

  auto* s_train = app.add_subcommand("train", "Train the generator/discriminator pair");
  add_common(s_train, common);
  s_train->add_option("--dataset", train.dataset)->required();
  s_train->add_option("--checkpoint", train.checkpoint, "Resume from this checkpoint");
  s_train->add_option("--arch", train.arch)->check(CLI::IsMember({"full", "tiny"}))->capture_default_str();
  s_train->add_option("--epochs", train.epochs)->capture_default_str();
  s_train->add_option("--batch-size", train.batch_size)->capture_default_str();
  s_train->add_option("--lr", train.lr)->capture_default_str();
  s_train->add_option("--lambda", train.lambda)->capture_default_str();

  auto* s_eval = app.add_subcommand("evaluate", "Run the generator over a dataset and report metrics");
  add_common(s_eval, common);
  s_eval->add_option("--checkpoint", eval.checkpoint)->required();
  s_eval->add_option("--dataset", eval.dataset)->required();
  s_eval->add_option("--matrix", eval.matrix, "Adds a matched-filter row to the comparison sheet");
  s_eval->add_option("--batch-size", eval.batch_size)->capture_default_str();

  auto* s_bench = app.add_subcommand("benchmark", "Per-sample time of least squares vs generator inference");
  add_common(s_bench, common);
  s_bench->add_option("--matrix", bench.matrix)->required();
  s_bench->add_option("--dataset", bench.dataset)->required();
  s_bench->add_option("--checkpoint", bench.checkpoint, "Untrained generator when omitted");
  s_bench->add_option("--samples", bench.samples)->capture_default_str();
  s_bench->add_option("--ls-iters", bench.ls_iters)->capture_default_str();
  s_bench->add_option("--ls-tol", bench.ls_tol, "Early-stop tolerance (default runs every iteration)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const auto t0 = Clock::now();
  RunRecord run;
  run.out_dir = common.out_dir;
  try {
    set_num_threads(common.threads);
    if (s_synth->parsed()) {
      run.subcommand = "synth-matrix";
      cmd_synth_matrix(common, synth, run, out);
    } else if (s_build->parsed()) {
      run.subcommand = "build-dataset";
      cmd_build_dataset(common, build, run, out);
    } else if (s_recon->parsed()) {
      run.subcommand = "recon-classical";
      cmd_recon_classical(common, recon, run, out);
    } else if (s_train->parsed()) {
      run.subcommand = "train";
      cmd_train(common, train, run, out);
    } else if (s_eval->parsed()) {
      run.subcommand = "evaluate";
      cmd_evaluate(common, eval, run, out);
    } else {
      run.subcommand = "benchmark";
      cmd_benchmark(common, bench, run, out);
    }
    write_manifest(run, common, seconds_since(t0));
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace cmi
