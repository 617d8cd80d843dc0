#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oct4d/checkpoint.hpp"
#include "oct4d/config.hpp"
#include "oct4d/dataset_io.hpp"
#include "oct4d/report_io.hpp"
#include "oct4d/robustness.hpp"
#include "oct4d/train.hpp"

using namespace oct4d;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  auto dir = fs::temp_directory_path() / "oct4d_pipeline_test";
  fs::create_directories(dir);
  return dir;
}

AcquisitionConfig tiny_acq(uint64_t seed = 90) {
  AcquisitionConfig cfg;
  cfg.n_rois = 3;
  cfg.patterns_per_roi = 6;
  cfg.volume_size = {16, 16, 16};
  cfg.phantom_size = {64, 64, 64};
  cfg.shift_bounds_mm = {0.7, 0.7, 0.45};
  cfg.magnitude_range_mm = {0.1, 0.7};
  cfg.master_seed = seed;
  return cfg;
}

Dataset tiny_dataset(uint64_t seed = 90) {
  auto path = (test_dir() / ("tiny_" + std::to_string(seed) + ".oct4d")).string();
  if (!fs::exists(path)) build_dataset(tiny_acq(seed), path, "");
  return load_dataset(path);
}

TrainConfig tiny_train(int epochs = 2) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 8;
  tc.micro_batch = 4;
  tc.seed = 5;
  return tc;
}

ModelSpec tiny_model(Variant v = Variant::TwoPath3D) {
  ModelSpec spec;
  spec.variant = v;
  spec.volume_size = {16, 16, 16};
  return spec;
}

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const char* cli = std::getenv("OCT4D_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "OCT4D_CLI must point at the CLI binary (set by ctest)");
  auto log = test_dir() / "cli_out.txt";
  std::string cmd = std::string(cli) + " " + args + " >" + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  if (output) {
    std::ifstream is(log);
    std::ostringstream ss;
    ss << is.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("derive_split keeps the held-out proportions and stays disjoint") {
  std::vector<uint32_t> eight = {0, 1, 2, 3, 4, 5, 6, 7};
  auto s = derive_split(eight, 7);
  CHECK(s.train_rois.size() == 6);
  CHECK(s.val_rois.size() == 1);
  CHECK(s.test_rois.size() == 1);
  validate_split(s, eight);

  std::vector<uint32_t> forty;
  for (uint32_t i = 0; i < 40; ++i) forty.push_back(i);
  auto s40 = derive_split(forty, 7);
  CHECK(s40.train_rois.size() == 30);
  CHECK(s40.val_rois.size() == 5);
  CHECK(s40.test_rois.size() == 5);
  validate_split(s40, forty);

  SplitSpec bad;
  bad.train_rois = {0, 1};
  bad.val_rois = {1};
  bad.test_rois = {2};
  CHECK_THROWS_AS(validate_split(bad, {0, 1, 2}), ConfigError);
}

TEST_CASE("training runs, records history, and is bitwise reproducible") {
  Dataset ds = tiny_dataset();
  auto cfg = tiny_train(3);

  Model m1(tiny_model(), cfg.seed);
  auto r1 = train(m1, ds, cfg);
  CHECK(static_cast<int>(r1.history.size()) == cfg.epochs);
  for (int i = 0; i < cfg.epochs; ++i) CHECK(r1.history[i].epoch == i + 1);
  CHECK(r1.best_epoch >= 1);
  CHECK(r1.best_epoch <= cfg.epochs);

  Model m2(tiny_model(), cfg.seed);
  auto r2 = train(m2, ds, cfg);
  for (int i = 0; i < cfg.epochs; ++i) {
    CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    CHECK(r1.history[i].val_rmae == r2.history[i].val_rmae);
  }
  CHECK(m1.params().fingerprint() == m2.params().fingerprint());

  // the model ends at its best-validation epoch's parameters
  CHECK(r1.best_val_rmae ==
        evaluate(m1, split_samples(ds, r1.split.val_rois), cfg.batch_size).rmae.mean);
}

TEST_CASE("training aborts on non-finite loss with a diagnostic") {
  Dataset ds = tiny_dataset();
  for (auto& s : ds.samples) s.targets[3][0] = std::numeric_limits<float>::quiet_NaN();
  Model m(tiny_model(), 1);
  CHECK_THROWS_WITH_AS(train(m, ds, tiny_train(1)), doctest::Contains("non-finite"),
                       NumericsError);
}

TEST_CASE("checkpoints round-trip bitwise and reject corruption") {
  auto dir = test_dir();
  Model m(tiny_model(Variant::Dense4D), 42);
  auto ckpt = (dir / "model.ckpt").string();
  save_checkpoint(ckpt, m, 0xabcd, 42);

  auto loaded = load_checkpoint(ckpt);
  CHECK(loaded.config_hash == 0xabcd);
  CHECK(loaded.seed == 42);
  CHECK(loaded.model.spec().variant == Variant::Dense4D);
  CHECK(loaded.model.params().fingerprint() == m.params().fingerprint());

  // identical forward outputs, bitwise
  Rng rng(4);
  std::vector<Tensor<float>> vols;
  for (int t = 0; t < 5; ++t) {
    auto v = Tensor<float>::zeros({1, 1, 16, 16, 16});
    for (auto& x : v.data_vec()) x = static_cast<float>(rng.uniform());
    vols.push_back(v);
  }
  auto y0 = m.forward(vols);
  auto y1 = loaded.model.forward(vols);
  for (int64_t i = 0; i < y0.numel(); ++i) CHECK(y0.data()[i] == y1.data()[i]);

  // corrupted magic is told apart from a corrupted payload
  auto bytes = file_bytes(ckpt);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  auto p1 = (dir / "bad_magic.ckpt").string();
  std::ofstream(p1, std::ios::binary).write(bad_magic.data(), bad_magic.size());
  CHECK_THROWS_WITH_AS(load_checkpoint(p1), doctest::Contains("magic"), IoError);

  auto bad_payload = bytes;
  bad_payload[bytes.size() / 2] ^= 0x40;
  auto p2 = (dir / "bad_payload.ckpt").string();
  std::ofstream(p2, std::ios::binary).write(bad_payload.data(), bad_payload.size());
  CHECK_THROWS_WITH_AS(load_checkpoint(p2), doctest::Contains("checksum"), IoError);
}

TEST_CASE("dataset container rejects corruption and truncation") {
  auto dir = test_dir();
  auto path = (dir / "ds.oct4d").string();
  AcquisitionConfig cfg = tiny_acq(7);
  cfg.n_rois = 1;
  cfg.patterns_per_roi = 2;
  build_dataset(cfg, path, "");

  auto bytes = file_bytes(path);
  auto bad = bytes;
  bad[0] = 'Z';
  auto p1 = (dir / "bad.oct4d").string();
  std::ofstream(p1, std::ios::binary).write(bad.data(), bad.size());
  CHECK_THROWS_WITH_AS(load_dataset(p1), doctest::Contains("magic"), IoError);

  auto p2 = (dir / "trunc.oct4d").string();
  std::ofstream(p2, std::ios::binary).write(bytes.data(), bytes.size() - 100);
  CHECK_THROWS_WITH_AS(load_dataset(p2), doctest::Contains("count"), IoError);
}

TEST_CASE("quantized voxel storage round-trips within 1/255") {
  auto dir = test_dir();
  AcquisitionConfig cfg = tiny_acq(8);
  cfg.n_rois = 1;
  cfg.patterns_per_roi = 2;
  auto f32 = (dir / "f32.oct4d").string();
  build_dataset(cfg, f32, "");
  cfg.quantize_u8 = true;
  auto u8 = (dir / "u8.oct4d").string();
  build_dataset(cfg, u8, "");

  auto a = load_dataset(f32);
  auto b = load_dataset(u8);
  CHECK(fs::file_size(u8) < fs::file_size(f32) / 3);
  for (size_t s = 0; s < a.samples.size(); ++s)
    for (size_t i = 0; i < a.samples[s].volumes.size(); ++i)
      CHECK(std::abs(a.samples[s].volumes[i] - b.samples[s].volumes[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("run config: defaults, unknown keys, hash stability") {
  RunConfig def = parse_run_config("{}");
  CHECK(def.training.epochs == 150);
  CHECK(def.training.batch_size == 50);
  CHECK(def.acquisition.n_rois == 8);
  CHECK(def.acquisition.patterns_per_roi == 50);
  CHECK(def.model.growth_rate == 10);
  CHECK(def.training.adam.lr == 1e-3);

  CHECK_THROWS_AS(parse_run_config(R"({"trainin": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"training": {"epoch": 5}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"training": {"epochs": "many"}})"), ConfigError);

  RunConfig a = parse_run_config(R"({"training": {"epochs": 7}})");
  RunConfig b = parse_run_config(R"({"training": {"epochs": 7}})");
  CHECK(a.hash() == b.hash());
  RunConfig c = parse_run_config(R"({"training": {"epochs": 8}})");
  CHECK(a.hash() != c.hash());

  // round trip through the serialized form
  RunConfig rt = parse_run_config(a.to_json());
  CHECK(rt.hash() == a.hash());
}

TEST_CASE("robustness sweeps: zero-strength settings reproduce plain evaluation") {
  Dataset ds = tiny_dataset();
  Model m(tiny_model(Variant::FivePath3D), 9);
  auto samples = sample_ptrs(ds.samples);

  auto plain = evaluate(m, samples, 8);
  auto rot = eval_rotation_robustness(m, samples, {0.0}, {RotationMode::Noise}, 8);
  REQUIRE(rot.size() == 1);
  CHECK(rot[0].report.rmae.mean == plain.rmae.mean);
  CHECK(rot[0].report.acc == plain.acc);

  auto dist = eval_distortion_robustness(m, samples, {0.0}, 1, 3, 8);
  REQUIRE(dist.size() == 1);
  CHECK(dist[0].report.rmae.mean == plain.rmae.mean);

  // noise mode leaves targets untouched; motion mode transforms them
  auto rows = eval_rotation_robustness(m, samples, {20.0}, {RotationMode::Noise, RotationMode::Motion}, 8);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].report.acc != rows[1].report.acc);
}

TEST_CASE("bench_inference: rate is the reciprocal of the mean") {
  Model m(tiny_model(), 3);
  auto r = bench_inference(m, 5, 1);
  CHECK(r.params == m.count_params());
  CHECK(r.mean_ms > 0);
  CHECK(r.hz == doctest::Approx(1000.0 / r.mean_ms));
}

TEST_CASE("report writers produce the expected rows") {
  auto dir = test_dir();
  MetricsReport rep;
  rep.sample_count = 5;
  rep.model_id = "two-path-3d";
  rep.mae_mm = {AxisStat{0.1, 0.05}, AxisStat{0.2, 0.06}, AxisStat{0.3, 0.07}};
  rep.rmae = {0.15, 0.04};
  rep.acc = 0.97;

  auto jsonp = (dir / "rep.json").string();
  write_report_json(jsonp, rep);
  std::string text(file_bytes(jsonp).data(), file_bytes(jsonp).size());
  CHECK(text.find("\"acc\": 0.97") != std::string::npos);

  auto csvp = (dir / "rep.csv").string();
  write_reports_csv(csvp, {{"two-path-3d", rep}}, {142000});
  std::ifstream is(csvp);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header.find("rmae") != std::string::npos);
  CHECK(row.find("two-path-3d,142000,0.1,") == 0);

  std::vector<EpochStats> hist = {{1, 0.5, 0.9}, {2, 0.25, 0.7}};
  auto hp = (dir / "hist.csv").string();
  write_history_csv(hp, hist);
  std::ifstream ih(hp);
  int lines = 0;
  std::string l;
  while (std::getline(ih, l)) lines++;
  CHECK(lines == 3);  // header + 2 epochs
}

// ---------------------------------------------------------------------------
// CLI end-to-end
// ---------------------------------------------------------------------------

TEST_CASE("cli: generate -> train -> eval -> robustness -> bench round trip") {
  auto dir = test_dir() / "cli";
  fs::create_directories(dir);
  auto cfgp = (dir / "run.json").string();
  write_text_atomic(cfgp, R"({
    "acquisition": {"n_rois": 3, "patterns_per_roi": 6, "volume_size": [16,16,16],
                     "phantom_size": [64,64,64], "shift_bounds_mm": [0.7,0.7,0.45],
                     "magnitude_range_mm": [0.1,0.7], "master_seed": 21},
    "training": {"epochs": 2, "batch_size": 8, "micro_batch": 4, "seed": 3}
  })");

  auto data = (dir / "data.oct4d").string();
  std::string out;
  int rc = run_cli("--config " + cfgp + " generate --out " + data, &out);
  CHECK(rc == 0);
  CHECK(out.find("samples: 18") != std::string::npos);
  CHECK(fs::exists(data));
  CHECK(fs::exists(data + ".manifest.json"));

  // deterministic regeneration
  auto data2 = (dir / "data2.oct4d").string();
  run_cli("--config " + cfgp + " generate --out " + data2);
  CHECK(file_bytes(data) == file_bytes(data2));

  auto ckpt = (dir / "m.ckpt").string();
  rc = run_cli("--config " + cfgp + " train --data " + data + " --model two-path-3d --out " +
                   ckpt,
               &out);
  CHECK(rc == 0);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(ckpt + ".history.csv"));
  CHECK(fs::exists(ckpt + ".report.json"));
  CHECK(fs::exists(ckpt + ".topology.txt"));
  {
    std::ifstream is(ckpt + ".history.csv");
    int lines = 0;
    std::string l;
    while (std::getline(is, l)) lines++;
    CHECK(lines == 3);  // header + epochs rows
  }

  auto repj = (dir / "eval.json").string();
  rc = run_cli("--config " + cfgp + " eval --ckpt " + ckpt + " --data " + data + " --groups 2 --out " + repj,
               &out);
  CHECK(rc == 0);
  CHECK(out.find("aCC") != std::string::npos);
  CHECK(fs::exists(repj));

  // evaluating twice gives identical reports
  auto repj2 = (dir / "eval2.json").string();
  run_cli("--config " + cfgp + " eval --ckpt " + ckpt + " --data " + data + " --groups 2 --out " + repj2);
  CHECK(file_bytes(repj) == file_bytes(repj2));

  auto prefix = (dir / "rb").string();
  rc = run_cli("--config " + cfgp + " robustness --ckpt " + ckpt + " --data " + data +
                   " --rotate 0,10 --mode noise,motion --distort 25 --shift 1 --out " + prefix,
               &out);
  CHECK(rc == 0);
  CHECK(fs::exists(prefix + ".rotation.csv"));
  CHECK(fs::exists(prefix + ".distortion.csv"));
  {
    std::ifstream is(prefix + ".rotation.csv");
    int lines = 0;
    std::string l;
    while (std::getline(is, l)) lines++;
    CHECK(lines == 5);  // header + 2 angles x 2 modes
  }

  rc = run_cli("robustness --ckpt " + ckpt + " --data " + data + " --out " + prefix, &out);
  CHECK(rc == 0);
  CHECK(out.find("warning") != std::string::npos);

  rc = run_cli("bench " + ckpt + " --reps 3 --warmup 1", &out);
  CHECK(rc == 0);
  CHECK(out.find("two-path-3d") != std::string::npos);
}

TEST_CASE("cli: exit codes distinguish usage errors from runtime failures") {
  std::string out;
  CHECK(run_cli("train", &out) == 1);                         // missing required --data
  CHECK(run_cli("nonsense-subcommand", &out) == 1);           // usage
  CHECK(run_cli("eval --ckpt missing.ckpt --data missing.oct4d", &out) == 2);  // runtime
  CHECK(run_cli("--config /nonexistent.json generate", &out) == 1);           // config
  CHECK(run_cli("--help", &out) == 0);
}

TEST_CASE("cli: compare emits one row per variant") {
  auto dir = test_dir() / "cli";
  fs::create_directories(dir);
  auto cfgp = (dir / "cmp.json").string();
  write_text_atomic(cfgp, R"({
    "acquisition": {"n_rois": 3, "patterns_per_roi": 4, "volume_size": [16,16,16],
                     "phantom_size": [64,64,64], "shift_bounds_mm": [0.7,0.7,0.45],
                     "magnitude_range_mm": [0.1,0.7], "master_seed": 33},
    "training": {"epochs": 1, "batch_size": 6, "micro_batch": 6, "seed": 2}
  })");
  auto data = (dir / "cmp.oct4d").string();
  REQUIRE(run_cli("--config " + cfgp + " generate --out " + data) == 0);
  auto table = (dir / "cmp.csv").string();
  std::string out;
  int rc = run_cli("--config " + cfgp + " compare --data " + data + " --out " + table, &out);
  CHECK(rc == 0);
  std::ifstream is(table);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(is, line)) rows.push_back(line);
  REQUIRE(rows.size() == 6);  // header + five variants
  CHECK(rows[1].find("two-path-3d") == 0);
  CHECK(rows[5].find("five-path-4d") == 0);
}
