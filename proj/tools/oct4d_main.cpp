// Command-line surface for the synthetic 4D OCT motion-estimation testbed:
// data generation, training, evaluation, robustness sweeps, benchmarking
// and the five-way model comparison.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "oct4d/checkpoint.hpp"
#include "oct4d/config.hpp"
#include "oct4d/dataset_io.hpp"
#include "oct4d/parallel.hpp"
#include "oct4d/report_io.hpp"

using namespace oct4d;

namespace {

struct CommonOpts {
  std::string config_path;
  int threads = 0;
};

RunConfig load_config_or_default(const CommonOpts& common) {
  RunConfig cfg;
  if (!common.config_path.empty()) cfg = load_run_config(common.config_path);
  if (common.threads > 0) set_thread_count(common.threads);
  return cfg;
}

void print_report(const MetricsReport& rep) {
  std::printf("samples: %lld\n", static_cast<long long>(rep.sample_count));
  const char* axes = "xyz";
  for (int a = 0; a < 3; ++a)
    std::printf("MAE %c: %.4f +- %.4f mm\n", axes[a], rep.mae_mm[a].mean, rep.mae_mm[a].stddev);
  std::printf("rMAE:  %.4f +- %.4f\n", rep.rmae.mean, rep.rmae.stddev);
  std::printf("aCC:   %.2f %%\n", rep.acc * 100.0);
  if (!rep.group_mae.empty()) {
    std::printf("magnitude groups (equal population):\n");
    for (size_t g = 0; g < rep.group_mae.size(); ++g)
      std::printf("  group %zu: mean |shift| %.3f mm, MAE %.4f mm (%lld samples)\n", g + 1,
                  rep.group_mean_magnitude[g], rep.group_mae[g],
                  static_cast<long long>(rep.group_sizes[g]));
    if (rep.degenerate_groups)
      std::printf("  warning: all magnitudes equal, grouping degenerated to one group\n");
  }
}

std::vector<const MotionSample*> select_split(const Dataset& ds, const std::string& which,
                                              const TrainConfig& tc) {
  if (which == "all") return sample_ptrs(ds.samples);
  SplitSpec split = tc.split.empty() ? derive_split(dataset_roi_ids(ds), ds.header.master_seed)
                                     : tc.split;
  const std::vector<uint32_t>* rois = &split.test_rois;
  if (which == "train")
    rois = &split.train_rois;
  else if (which == "val")
    rois = &split.val_rois;
  else if (which != "test")
    throw ConfigError("unknown --split value (train|val|test|all)");
  return split_samples(ds, *rois);
}

void check_compat(const DatasetHeader& h, const ModelSpec& spec) {
  for (int a = 0; a < 3; ++a)
    if (h.volume_dims[a] != spec.volume_size[a])
      throw ConfigError(format_msg("checkpoint expects ", spec.volume_size[a],
                                   " voxels on axis ", a, ", dataset has ", h.volume_dims[a]));
  if (h.temporal_len != spec.temporal_len)
    throw ConfigError(format_msg("checkpoint expects sequences of ", spec.temporal_len,
                                 ", dataset has ", h.temporal_len));
}

int cmd_generate(const CommonOpts& common, std::string out, std::string manifest, bool paper,
                 int64_t rois, int64_t patterns, uint64_t seed, bool has_seed) {
  RunConfig cfg = load_config_or_default(common);
  if (paper) cfg.acquisition.paper_scale();
  if (rois > 0) cfg.acquisition.n_rois = rois;
  if (patterns > 0) cfg.acquisition.patterns_per_roi = patterns;
  if (has_seed) cfg.acquisition.master_seed = seed;
  if (manifest.empty()) manifest = out + ".manifest.json";

  auto summary = build_dataset(cfg.acquisition, out, manifest);
  std::printf("dataset: %s\n", out.c_str());
  std::printf("manifest: %s\n", manifest.c_str());
  std::printf("ROIs: %lld, samples: %lld\n", static_cast<long long>(summary.n_rois),
              static_cast<long long>(summary.samples));
  std::printf("magnitude histogram [%.2f, %.2f] mm:", summary.magnitude_min,
              summary.magnitude_max);
  for (int64_t c : summary.magnitude_histogram) std::printf(" %lld", static_cast<long long>(c));
  std::printf("\n");
  return 0;
}

struct TrainCli {
  std::string data, out, history, report_json, report_csv, topology;
  std::string model = "five-path-4d";
  std::string preset;
  double w1 = -1, w2 = -1;
  bool regularized = false;
  int epochs = -1, batch = -1;
  double lr = -1;
  uint64_t seed = 0;
  bool has_seed = false;
  double distort_p = -1;
  int distort_shift = -1;
};

int cmd_train(const CommonOpts& common, const TrainCli& cli) {
  RunConfig cfg = load_config_or_default(common);
  cfg.model.variant = variant_from_name(cli.model);
  if (cli.preset == "paper-best") {
    cfg.training.weights = LossWeights::paper_best();
    cfg.model.regularized_head = true;
  } else if (!cli.preset.empty()) {
    throw ConfigError(format_msg("unknown preset '", cli.preset, "' (paper-best)"));
  }
  if (cli.w1 >= 0) {
    cfg.training.weights.w1 = cli.w1;
    cfg.model.regularized_head = true;
  }
  if (cli.w2 >= 0) {
    cfg.training.weights.w2 = cli.w2;
    cfg.model.regularized_head = true;
  }
  if (cli.regularized) cfg.model.regularized_head = true;
  if (cli.epochs >= 0) cfg.training.epochs = cli.epochs;
  if (cli.batch > 0) cfg.training.batch_size = cli.batch;
  if (cli.lr > 0) cfg.training.adam.lr = cli.lr;
  if (cli.has_seed) cfg.training.seed = cli.seed;
  if (cli.distort_p >= 0) cfg.training.train_distort_p = cli.distort_p;
  if (cli.distort_shift > 0) cfg.training.train_distort_shift = cli.distort_shift;

  Dataset ds = load_dataset(cli.data);
  cfg.model.volume_size = {ds.header.volume_dims[0], ds.header.volume_dims[1],
                           ds.header.volume_dims[2]};
  cfg.training.verbose = true;
  uint64_t config_hash = cfg.hash();

  Model model(cfg.model, cfg.training.seed);
  std::printf("training %s (%lld parameters) for %d epochs, batch %d\n",
              variant_name(cfg.model.variant).c_str(),
              static_cast<long long>(model.count_params()), cfg.training.epochs,
              cfg.training.batch_size);

  TrainResult res = train(model, ds, cfg.training);
  std::printf("best epoch %d, validation rMAE %.4f\n", res.best_epoch, res.best_val_rmae);

  std::string out = cli.out.empty() ? variant_name(cfg.model.variant) + ".ckpt" : cli.out;
  save_checkpoint(out, model, config_hash, cfg.training.seed);
  std::printf("checkpoint: %s\n", out.c_str());

  std::string hist = cli.history.empty() ? out + ".history.csv" : cli.history;
  write_history_csv(hist, res.history);

  std::string topo = cli.topology.empty() ? out + ".topology.txt" : cli.topology;
  write_text_atomic(topo, model.describe());

  auto test = split_samples(ds, res.split.test_rois);
  MetricsReport rep = evaluate(model, test, cfg.training.batch_size);
  rep.config_hash = hex64(config_hash);
  print_report(rep);
  std::string repj = cli.report_json.empty() ? out + ".report.json" : cli.report_json;
  write_report_json(repj, rep);
  std::string repc = cli.report_csv.empty() ? out + ".report.csv" : cli.report_csv;
  write_reports_csv(repc, {{variant_name(cfg.model.variant), rep}}, {model.count_params()});
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt_path, const std::string& data,
             int groups, const std::string& out_json, const std::string& out_csv,
             const std::string& split) {
  RunConfig cfg = load_config_or_default(common);
  auto loaded = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data);
  check_compat(ds.header, loaded.model.spec());

  auto samples = select_split(ds, split, cfg.training);
  MetricsReport rep = evaluate(loaded.model, samples, cfg.training.batch_size,
                               groups > 0 ? groups : cfg.evaluation.magnitude_groups);
  rep.config_hash = hex64(loaded.config_hash);
  print_report(rep);
  if (!out_json.empty()) write_report_json(out_json, rep);
  if (!out_csv.empty())
    write_reports_csv(out_csv, {{rep.model_id, rep}}, {loaded.model.count_params()});
  return 0;
}

int cmd_robustness(const CommonOpts& common, const std::string& ckpt_path,
                   const std::string& data, std::vector<double> rotate,
                   std::vector<std::string> mode_names, std::vector<double> distort,
                   int shift_px, const std::string& out_prefix, const std::string& split) {
  RunConfig cfg = load_config_or_default(common);
  auto loaded = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data);
  check_compat(ds.header, loaded.model.spec());
  auto samples = select_split(ds, split, cfg.training);

  if (rotate.empty() && distort.empty()) {
    std::fprintf(stderr, "warning: empty sweep lists, nothing to do\n");
    return 0;
  }
  if (!rotate.empty()) {
    std::vector<RotationMode> modes;
    for (const auto& m : mode_names)
      modes.push_back(m == "motion" ? RotationMode::Motion : RotationMode::Noise);
    auto rows = eval_rotation_robustness(loaded.model, samples, rotate, modes,
                                         cfg.training.batch_size);
    std::string path = out_prefix + ".rotation.csv";
    write_rotation_csv(path, rows);
    std::printf("rotation sweep (%zu rows): %s\n", rows.size(), path.c_str());
    for (const auto& r : rows)
      std::printf("  %s %5.1f deg: rMAE %.4f, aCC %.2f%%\n", rotation_mode_name(r.mode),
                  r.alpha_max_deg, r.report.rmae.mean, r.report.acc * 100.0);
  }
  if (!distort.empty()) {
    std::vector<double> ps;
    for (double p : distort) ps.push_back(p / 100.0);
    auto rows = eval_distortion_robustness(loaded.model, samples, ps, shift_px,
                                           ds.header.master_seed, cfg.training.batch_size);
    std::string path = out_prefix + ".distortion.csv";
    write_distortion_csv(path, rows);
    std::printf("distortion sweep (%zu rows): %s\n", rows.size(), path.c_str());
    for (const auto& r : rows)
      std::printf("  p=%.0f%% shift=%d: rMAE %.4f, aCC %.2f%%\n", r.p_dist * 100.0, r.shift_px,
                  r.report.rmae.mean, r.report.acc * 100.0);
  }
  return 0;
}

int cmd_bench(const CommonOpts& common, const std::vector<std::string>& ckpts, int reps,
              int warmup, const std::string& out_csv) {
  load_config_or_default(common);
  std::vector<BenchResult> rows;
  std::printf("%-16s %10s %12s %8s\n", "model", "params", "ms/forward", "Hz");
  for (const auto& p : ckpts) {
    auto loaded = load_checkpoint(p);
    auto r = bench_inference(loaded.model, reps, warmup);
    std::printf("%-16s %10lld %6.2f+-%.2f %8.1f\n", r.model_id.c_str(),
                static_cast<long long>(r.params), r.mean_ms, r.std_ms, r.hz);
    rows.push_back(r);
  }
  if (!out_csv.empty()) write_bench_csv(out_csv, rows);
  return 0;
}

int cmd_compare(const CommonOpts& common, const std::string& data, int epochs,
                const std::string& out_csv, uint64_t seed, bool has_seed) {
  RunConfig cfg = load_config_or_default(common);
  if (epochs >= 0) cfg.training.epochs = epochs;
  if (has_seed) cfg.training.seed = seed;
  Dataset ds = load_dataset(data);
  cfg.model.volume_size = {ds.header.volume_dims[0], ds.header.volume_dims[1],
                           ds.header.volume_dims[2]};
  cfg.training.verbose = true;

  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::vector<int64_t> params;
  for (Variant v : all_variants()) {
    ModelSpec spec = cfg.model;
    spec.variant = v;
    Model model(spec, cfg.training.seed);
    std::printf("[compare] training %s (%lld params)\n", variant_name(v).c_str(),
                static_cast<long long>(model.count_params()));
    TrainResult res = train(model, ds, cfg.training);
    auto test = split_samples(ds, res.split.test_rois);
    MetricsReport rep = evaluate(model, test, cfg.training.batch_size);
    rep.config_hash = hex64(cfg.hash());
    std::printf("[compare] %s: rMAE %.4f, aCC %.2f%%\n", variant_name(v).c_str(), rep.rmae.mean,
                rep.acc * 100.0);
    rows.emplace_back(variant_name(v), rep);
    params.push_back(model.count_params());
  }
  write_reports_csv(out_csv, rows, params);
  std::printf("comparison table: %s\n", out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"synthetic 4D OCT motion estimation: data, training, evaluation"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--config", common.config_path, "JSON run configuration");
  app.add_option("--threads", common.threads, "worker threads (default: OCT4D_THREADS or cores)");

  // generate
  auto* gen = app.add_subcommand("generate", "build a synthetic dataset + manifest");
  std::string gen_out = "dataset.oct4d", gen_manifest;
  bool gen_paper = false;
  int64_t gen_rois = 0, gen_patterns = 0;
  uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output dataset path");
  gen->add_option("--manifest", gen_manifest, "manifest path (default <out>.manifest.json)");
  gen->add_flag("--paper-scale", gen_paper, "40 ROIs x 200 patterns");
  gen->add_option("--rois", gen_rois, "number of ROIs");
  gen->add_option("--patterns", gen_patterns, "patterns per ROI");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "master seed");

  // train
  auto* tr = app.add_subcommand("train", "train one model, write checkpoint + history + report");
  TrainCli tcli;
  tr->add_option("--data", tcli.data, "dataset path")->required();
  tr->add_option("--model", tcli.model, "two-path-3d|s-two-path-3d|five-path-3d|dense-4d|five-path-4d");
  tr->add_option("--out", tcli.out, "checkpoint path");
  tr->add_option("--history", tcli.history, "history CSV path");
  tr->add_option("--report", tcli.report_json, "metrics JSON path");
  tr->add_option("--report-csv", tcli.report_csv, "metrics CSV path");
  tr->add_option("--topology", tcli.topology, "topology dump path");
  tr->add_option("--w1", tcli.w1, "aux weight on t_{n-1} (enables the 9-output head)");
  tr->add_option("--w2", tcli.w2, "aux weight on t_{n-2} (enables the 9-output head)");
  tr->add_flag("--regularized", tcli.regularized, "use the 9-output head");
  tr->add_option("--preset", tcli.preset, "named weight preset: paper-best (w1=w2=0.75)");
  tr->add_option("--epochs", tcli.epochs, "training epochs");
  tr->add_option("--batch", tcli.batch, "batch size");
  tr->add_option("--lr", tcli.lr, "Adam learning rate");
  auto* tr_seed_opt = tr->add_option("--seed", tcli.seed, "training seed");
  tr->add_option("--train-distort-p", tcli.distort_p, "B-scan distortion probability during training");
  tr->add_option("--train-distort-shift", tcli.distort_shift, "distortion shift in voxels");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_json, ev_csv, ev_split = "test";
  int ev_groups = 0;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset path")->required();
  ev->add_option("--groups", ev_groups, "add a per-magnitude-group table with N groups");
  ev->add_option("--out", ev_json, "metrics JSON path");
  ev->add_option("--csv", ev_csv, "metrics CSV path");
  ev->add_option("--split", ev_split, "train|val|test|all (default test)");

  // robustness
  auto* rb = app.add_subcommand("robustness", "rotation / distortion sweeps");
  std::string rb_ckpt, rb_data, rb_out = "robustness", rb_split = "test";
  std::vector<double> rb_rotate, rb_distort;
  std::vector<std::string> rb_modes = {"noise", "motion"};
  int rb_shift = 1;
  rb->add_option("--ckpt", rb_ckpt, "checkpoint path")->required();
  rb->add_option("--data", rb_data, "dataset path")->required();
  rb->add_option("--rotate", rb_rotate, "max rotation angles in degrees")->delimiter(',');
  rb->add_option("--mode", rb_modes, "rotation label handling: noise,motion")->delimiter(',');
  rb->add_option("--distort", rb_distort, "B-scan shift probabilities in percent")->delimiter(',');
  rb->add_option("--shift", rb_shift, "distortion shift in voxels (1 or 2)");
  rb->add_option("--out", rb_out, "output prefix for CSV tables");
  rb->add_option("--split", rb_split, "train|val|test|all (default test)");

  // bench
  auto* bn = app.add_subcommand("bench", "single-sequence inference timing");
  std::vector<std::string> bn_ckpts;
  int bn_reps = 50, bn_warmup = 5;
  std::string bn_csv;
  bn->add_option("ckpts", bn_ckpts, "checkpoint paths")->required();
  bn->add_option("--reps", bn_reps, "timed repetitions");
  bn->add_option("--warmup", bn_warmup, "warmup repetitions");
  bn->add_option("--out", bn_csv, "timing CSV path");

  // compare
  auto* cp = app.add_subcommand("compare", "train + evaluate all five variants");
  std::string cp_data, cp_out = "compare.csv";
  int cp_epochs = -1;
  uint64_t cp_seed = 0;
  cp->add_option("--data", cp_data, "dataset path")->required();
  cp->add_option("--epochs", cp_epochs, "override training epochs");
  cp->add_option("--out", cp_out, "comparison CSV path");
  auto* cp_seed_opt = cp->add_option("--seed", cp_seed, "training seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return cmd_generate(common, gen_out, gen_manifest, gen_paper, gen_rois, gen_patterns,
                          gen_seed, gen_seed_opt->count() > 0);
    if (tr->parsed()) {
      tcli.has_seed = tr_seed_opt->count() > 0;
      return cmd_train(common, tcli);
    }
    if (ev->parsed())
      return cmd_eval(common, ev_ckpt, ev_data, ev_groups, ev_json, ev_csv, ev_split);
    if (rb->parsed())
      return cmd_robustness(common, rb_ckpt, rb_data, rb_rotate, rb_modes, rb_distort, rb_shift,
                            rb_out, rb_split);
    if (bn->parsed()) return cmd_bench(common, bn_ckpts, bn_reps, bn_warmup, bn_csv);
    if (cp->parsed())
      return cmd_compare(common, cp_data, cp_epochs, cp_out, cp_seed, cp_seed_opt->count() > 0);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
