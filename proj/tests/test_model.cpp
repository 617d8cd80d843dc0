#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oct4d/loss.hpp"
#include "oct4d/metrics.hpp"
#include "oct4d/model.hpp"
#include "oct4d/ops.hpp"
#include "support/reference.hpp"

using namespace oct4d;

namespace {

std::vector<Tensor<float>> random_volumes(const ModelSpec& spec, int64_t batch, uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor<float>> vols;
  for (int t = 0; t < spec.temporal_len; ++t) {
    auto v = Tensor<float>::zeros(
        {batch, 1, spec.volume_size[0], spec.volume_size[1], spec.volume_size[2]});
    for (auto& x : v.data_vec()) x = static_cast<float>(rng.uniform());
    vols.push_back(v);
  }
  return vols;
}

ModelSpec small_spec(Variant v, bool regularized = false) {
  ModelSpec s;
  s.variant = v;
  s.volume_size = {16, 16, 16};
  s.regularized_head = regularized;
  return s;
}

// Memorization set: shifted crops of one textured volume with exactly known
// shifts, 16^3 for speed.
std::vector<MotionSample> memorization_samples(int n, uint64_t seed) {
  PhantomConfig pc;
  pc.size = {64, 64, 64};
  pc.seed = seed;
  auto ph = make_phantom(pc);
  AcquisitionConfig cfg;
  cfg.volume_size = {16, 16, 16};
  cfg.shift_bounds_mm = {0.7, 0.7, 0.45};
  cfg.magnitude_range_mm = {0.1, 0.7};
  cfg.sensor_noise_sigma = 0.0;
  cfg.master_seed = seed;
  std::vector<MotionSample> out;
  Rng rng(derive_seed(seed, 1));
  for (int i = 0; i < n; ++i) {
    Trajectory tr = sample_trajectory(rng, cfg);
    out.push_back(acquire_sequence(ph, {24, 24, 24}, tr, cfg, rng, 0));
  }
  return out;
}

}  // namespace

TEST_CASE("all variants emit [B,3], regularized heads [B,9]") {
  for (Variant v : all_variants()) {
    Model m(small_spec(v), 11);
    auto vols = random_volumes(m.spec(), 2, 5);
    auto y = m.forward(vols);
    CHECK(y.shape() == std::vector<int64_t>{2, 3});
    CHECK(y.all_finite());

    Model mr(small_spec(v, true), 11);
    auto yr = mr.forward(vols);
    CHECK(yr.shape() == std::vector<int64_t>{2, 9});
    CHECK(yr.all_finite());
  }
}

TEST_CASE("dense block channel arithmetic: C, C+10, output C+20") {
  Model m(small_spec(Variant::FivePath4D), 3);
  // trunk input is the stem's 20 channels; layer 1 consumes 20, layer 2 30
  CHECK(m.params().get("dense.b1.l1.weight").shape()[1] == 20);
  CHECK(m.params().get("dense.b1.l2.weight").shape()[1] == 30);
  CHECK(m.params().get("dense.b2.l1.weight").shape()[1] == 40);  // block 1 emitted 20+20
  CHECK(m.params().get("dense.b3.l1.weight").shape()[1] == 60);
  CHECK(m.params().get("dense.b1.l1.weight").shape()[0] == 10);
}

TEST_CASE("parameter counts: small examples and the full-model bracket") {
  ParameterStore<float> lin;
  lin.add("w", Tensor<float>::zeros({3, 20}));
  lin.add("b", Tensor<float>::zeros({3}));
  CHECK(lin.total_params() == 63);

  ParameterStore<float> conv;
  conv.add("w", Tensor<float>::zeros({10, 1, 3, 3, 3}));
  conv.add("b", Tensor<float>::zeros({10}));
  CHECK(conv.total_params() == 280);

  ModelSpec def;  // 32^3 defaults
  for (Variant v : all_variants()) {
    def.variant = v;
    Model m(def, 1);
    INFO(variant_name(v) << ": " << m.count_params());
    CHECK(m.count_params() >= 100000);
    CHECK(m.count_params() <= 400000);
  }
  // weight sharing keeps the pairwise variants the same size
  def.variant = Variant::TwoPath3D;
  int64_t two = Model(def, 1).count_params();
  def.variant = Variant::STwoPath3D;
  CHECK(Model(def, 1).count_params() == two);
}

TEST_CASE("pairwise-sum variant equals the sum of its four core outputs bitwise") {
  Model m(small_spec(Variant::STwoPath3D), 21);
  auto vols = random_volumes(m.spec(), 3, 8);
  auto y = m.forward(vols);
  auto p01 = m.pair_core_forward(vols[0], vols[1]);
  auto p12 = m.pair_core_forward(vols[1], vols[2]);
  auto p23 = m.pair_core_forward(vols[2], vols[3]);
  auto p34 = m.pair_core_forward(vols[3], vols[4]);
  auto manual = add(add(add(p01, p12), p23), p34);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == manual.data()[i]);
}

TEST_CASE("identical input volumes give identical temporal slices in the 4D stack") {
  Model m(small_spec(Variant::FivePath4D), 4);
  auto vols = random_volumes(m.spec(), 1, 9);
  std::vector<Tensor<float>> same(5, vols[0]);
  Model::Trace trace;
  (void)m.forward(same, &trace);
  REQUIRE(trace.temporal_stack.has_value());
  auto& st = *trace.temporal_stack;  // [1, C, 5, X, Y, Z]
  int64_t C = st.shape()[1];
  int64_t inner = st.shape()[3] * st.shape()[4] * st.shape()[5];
  for (int64_t c = 0; c < C; ++c)
    for (int t = 1; t < 5; ++t)
      for (int64_t i = 0; i < inner; ++i)
        CHECK(st.data()[(c * 5 + t) * inner + i] == st.data()[(c * 5 + 0) * inner + i]);
}

TEST_CASE("weight sharing: perturbing a stem weight changes every path's activations") {
  Model m(small_spec(Variant::FivePath4D), 14);
  auto vols = random_volumes(m.spec(), 1, 3);
  Model::Trace before, after;
  (void)m.forward(vols, &before);
  m.params().get("stem.conv1.weight").data()[0] += 0.5f;
  (void)m.forward(vols, &after);
  auto& a = *before.temporal_stack;
  auto& b = *after.temporal_stack;
  int64_t inner = a.shape()[3] * a.shape()[4] * a.shape()[5];
  int64_t C = a.shape()[1];
  for (int t = 0; t < 5; ++t) {
    bool changed = false;
    for (int64_t c = 0; c < C && !changed; ++c)
      for (int64_t i = 0; i < inner && !changed; ++i)
        if (a.data()[(c * 5 + t) * inner + i] != b.data()[(c * 5 + t) * inner + i])
          changed = true;
    CHECK(changed);
  }
}

TEST_CASE("temporal order matters for the 4D variants") {
  for (Variant v : {Variant::FivePath4D, Variant::Dense4D}) {
    Model m(small_spec(v), 31);
    auto vols = random_volumes(m.spec(), 1, 77);
    auto fwd = m.forward(vols);
    std::vector<Tensor<float>> rev(vols.rbegin(), vols.rend());
    auto bwd = m.forward(rev);
    double diff = 0;
    for (int64_t i = 0; i < fwd.numel(); ++i)
      diff = std::max(diff, std::abs(double(fwd.data()[i]) - double(bwd.data()[i])));
    CHECK(diff > 1e-6);
  }
}

TEST_CASE("gradient flow: one backward pass touches every parameter") {
  for (Variant v : all_variants()) {
    Model m(small_spec(v), 51);
    auto vols = random_volumes(m.spec(), 2, 13);
    auto tgt = Tensor<float>::zeros({2, 3});
    auto loss = loss_eq1(m.forward(vols), tgt);
    loss.backward();
    for (auto& [name, p] : m.params()) {
      INFO(variant_name(v) << " / " << name);
      REQUIRE(p.has_grad());
      bool nonzero = false;
      for (int64_t i = 0; i < p.numel() && !nonzero; ++i)
        if (p.grad()[i] != 0.0f) nonzero = true;
      CHECK(nonzero);
      p.zero_grad();
    }
  }
}

TEST_CASE("forward contract: wrong sequence length and bad geometry throw") {
  Model m(small_spec(Variant::TwoPath3D), 2);
  auto vols = random_volumes(m.spec(), 1, 1);
  vols.pop_back();
  CHECK_THROWS_AS(m.forward(vols), ContractViolation);

  ModelSpec tiny = small_spec(Variant::Dense4D);
  tiny.volume_size = {4, 4, 4};  // collapses below the pooling window
  CHECK_THROWS_AS(Model(tiny, 1), ConfigError);
}

TEST_CASE("every variant memorizes 10 samples: loss drops 100x in 200 steps") {
  auto samples = memorization_samples(10, 400);
  std::vector<const MotionSample*> batch = sample_ptrs(samples);
  for (Variant v : all_variants()) {
    ModelSpec spec = small_spec(v);
    Model m(spec, 7);
    AdamState<float> adam{AdamConfig{}};
    auto vols = batch_to_tensors(batch);
    auto tgt = batch_targets(batch, false);
    double initial = -1, final_loss = -1;
    for (int step = 0; step < 200; ++step) {
      auto loss = loss_eq1(m.forward(vols), tgt);
      double lv = loss.item();
      if (step == 0) initial = lv;
      final_loss = lv;
      loss.backward();
      adam_step(m.params(), adam);
    }
    INFO(variant_name(v) << ": " << initial << " -> " << final_loss);
    CHECK(final_loss <= initial / 100.0);
  }
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

TEST_CASE("loss_eq1: frozen examples") {
  auto pred = Tensor<float>::from_vector({1, 3}, {1, 2, 2});
  auto tgt = Tensor<float>::zeros({1, 3});
  CHECK(loss_eq1(pred, tgt).item() == doctest::Approx(9.0));
  CHECK(loss_eq1(tgt, tgt).item() == 0.0f);

  auto p2 = Tensor<float>::from_vector({2, 3}, {1, 2, 2, 1, 0, 0});
  auto t2 = Tensor<float>::zeros({2, 3});
  CHECK(loss_eq1(p2, t2).item() == doctest::Approx(5.0));  // mean of {9, 1}
}

TEST_CASE("loss_eq2: zero weights reduce to eq1 exactly") {
  Rng rng(6);
  std::vector<float> pv(4 * 9), tv(4 * 9);
  for (auto& v : pv) v = static_cast<float>(rng.uniform(-2, 2));
  for (auto& v : tv) v = static_cast<float>(rng.uniform(-2, 2));
  auto pred9 = Tensor<float>::from_vector({4, 9}, pv);
  auto tgt9 = Tensor<float>::from_vector({4, 9}, tv);
  auto l2 = loss_eq2(pred9, tgt9, LossWeights{0, 0});

  std::vector<float> p3, t3;
  for (int i = 0; i < 4; ++i)
    for (int a = 0; a < 3; ++a) {
      p3.push_back(pv[i * 9 + a]);
      t3.push_back(tv[i * 9 + a]);
    }
  auto l1 = loss_eq1(Tensor<float>::from_vector({4, 3}, p3),
                     Tensor<float>::from_vector({4, 3}, t3));
  CHECK(l2.item() == l1.item());  // bitwise
}

TEST_CASE("loss_eq2: hand example, named preset, weight contract") {
  // all three block residual norms are 1
  auto pred = Tensor<float>::zeros({1, 9});
  auto tgt = Tensor<float>::from_vector({1, 9}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(loss_eq2(pred, tgt, LossWeights{0.5, 0.25}).item() == doctest::Approx(1.75));
  auto best = LossWeights::paper_best();
  CHECK(best.w1 == 0.75);
  CHECK(best.w2 == 0.75);
  CHECK(loss_eq2(pred, tgt, best).item() == doctest::Approx(2.5));
  CHECK_THROWS_AS(loss_eq2(pred, tgt, LossWeights{1.5, 0}), ContractViolation);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(88);
  auto pred = Tensor<double>::zeros({3, 9}, true);
  for (auto& v : pred.data_vec()) v = rng.uniform(-1, 1);
  auto tgt = Tensor<double>::zeros({3, 9});
  for (auto& v : tgt.data_vec()) v = rng.uniform(-1, 1);
  auto fn = [&]() { return loss_eq2(pred, tgt, LossWeights{0.75, 0.25}); };
  auto res = testref::finite_diff_check({pred}, fn);
  CHECK(res.max_rel_err < 1e-6);
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

namespace {

EvalArrays arrays_from(const std::vector<std::array<double, 3>>& pred,
                       const std::vector<std::array<double, 3>>& tgt) {
  EvalArrays a;
  a.pred = pred;
  a.target = tgt;
  for (const auto& t : tgt)
    a.magnitude.push_back(std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]));
  return a;
}

}  // namespace

TEST_CASE("metrics: perfect, anti-correlated, and hand-computed cases") {
  std::vector<std::array<double, 3>> tgt = {{1, -1, 0.5}, {2, 0, -0.5}, {-3, 1, 0}};
  auto perfect = compute_metrics(arrays_from(tgt, tgt));
  for (int a = 0; a < 3; ++a) CHECK(perfect.mae_mm[a].mean == 0.0);
  CHECK(perfect.rmae.mean == 0.0);
  CHECK(perfect.acc == doctest::Approx(1.0));

  // zero-mean targets, negated predictions -> aCC = -1
  std::vector<std::array<double, 3>> zm = {{1, 2, -1}, {-1, -2, 1}};
  std::vector<std::array<double, 3>> neg = {{-1, -2, 1}, {1, 2, -1}};
  CHECK(compute_metrics(arrays_from(neg, zm)).acc == doctest::Approx(-1.0));

  // x-axis: preds 0.5/1.5/2.5 vs targets 1/2/3, y/z exact
  std::vector<std::array<double, 3>> p = {{0.5, 0, 1}, {1.5, 1, 2}, {2.5, 2, 3}};
  std::vector<std::array<double, 3>> t = {{1, 0, 1}, {2, 1, 2}, {3, 2, 3}};
  auto rep = compute_metrics(arrays_from(p, t));
  CHECK(rep.mae_mm[0].mean == doctest::Approx(0.5));
  CHECK(rep.acc == doctest::Approx(1.0));  // Pearson r is 1 on every axis
  double std_x = testref::stddev_of({1, 2, 3});
  // relative errors: three x entries at 0.5/std_x, six exact zeros
  CHECK(rep.rmae.mean == doctest::Approx(3 * (0.5 / std_x) / 9.0));
}

TEST_CASE("metrics: joint scaling invariance and degenerate axes") {
  Rng rng(5);
  std::vector<std::array<double, 3>> p(40), t(40);
  for (int i = 0; i < 40; ++i)
    for (int a = 0; a < 3; ++a) {
      t[i][a] = rng.uniform(-2, 2);
      p[i][a] = t[i][a] + rng.uniform(-0.3, 0.3);
    }
  auto base = compute_metrics(arrays_from(p, t));
  double c = 3.7;
  auto ps = p;
  auto ts = t;
  for (int i = 0; i < 40; ++i)
    for (int a = 0; a < 3; ++a) {
      ps[i][a] *= c;
      ts[i][a] *= c;
    }
  auto scaled = compute_metrics(arrays_from(ps, ts));
  for (int a = 0; a < 3; ++a)
    CHECK(scaled.mae_mm[a].mean == doctest::Approx(base.mae_mm[a].mean * c));
  CHECK(scaled.rmae.mean == doctest::Approx(base.rmae.mean));
  CHECK(scaled.acc == doctest::Approx(base.acc));
  CHECK(base.acc >= -1.0);
  CHECK(base.acc <= 1.0);

  // constant z-targets: axis undefined, reported as such
  for (int i = 0; i < 40; ++i) t[i][2] = 1.0;
  auto degen = compute_metrics(arrays_from(p, t));
  CHECK(!degen.axis_defined[2]);
  CHECK(degen.axis_defined[0]);
}

TEST_CASE("group_by_magnitude: sizes, oracle boundaries, degeneracy") {
  std::vector<double> mags;
  Rng rng(9);
  for (int i = 0; i < 103; ++i) mags.push_back(rng.uniform(0.1, 2.0));
  auto g = group_by_magnitude(mags, 4);
  int64_t lo = *std::min_element(g.sizes.begin(), g.sizes.end());
  int64_t hi = *std::max_element(g.sizes.begin(), g.sizes.end());
  CHECK(hi - lo <= 1);
  // independent sort-and-split oracle
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < mags.size(); ++i) {
    int64_t rank = std::lower_bound(sorted.begin(), sorted.end(), mags[i]) - sorted.begin();
    int expect = static_cast<int>(rank * 4 / static_cast<int64_t>(mags.size()));
    CHECK(g.label[i] == expect);
  }
  for (size_t i = 1; i < g.mean_magnitude.size(); ++i)
    CHECK(g.mean_magnitude[i] > g.mean_magnitude[i - 1]);

  auto degen = group_by_magnitude(std::vector<double>(10, 1.5), 4);
  CHECK(degen.degenerate);
  CHECK(degen.sizes.size() == 1);

  CHECK_THROWS_AS(group_by_magnitude({1.0, 2.0}, 4), ContractViolation);
}

TEST_CASE("evaluation never mutates parameters") {
  auto samples = memorization_samples(6, 31);
  Model m(small_spec(Variant::Dense4D), 77);
  uint64_t before = m.params().fingerprint();
  auto rep = evaluate(m, sample_ptrs(samples), 4, 3);
  CHECK(m.params().fingerprint() == before);
  CHECK(rep.sample_count == 6);
  CHECK(rep.group_mae.size() == 3);
}
