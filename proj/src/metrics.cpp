#include "oct4d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "oct4d/common.hpp"

namespace oct4d {
namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

AxisStat stat_of(const std::vector<double>& v) {
  AxisStat s;
  s.mean = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(acc / static_cast<double>(v.size()));
  return s;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = mean_of(a), mb = mean_of(b);
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  if (da == 0 || db == 0) return std::numeric_limits<double>::quiet_NaN();
  return num / std::sqrt(da * db);
}

}  // namespace

EvalArrays run_inference(const Model& model, const std::vector<const MotionSample*>& samples,
                         int batch_size) {
  if (samples.empty()) fail_contract("evaluate: empty sample set");
  NoGradGuard ng;
  EvalArrays out;
  out.pred.reserve(samples.size());
  out.target.reserve(samples.size());
  for (size_t begin = 0; begin < samples.size(); begin += batch_size) {
    size_t end = std::min(samples.size(), begin + batch_size);
    std::vector<const MotionSample*> batch(samples.begin() + begin, samples.begin() + end);
    auto volumes = batch_to_tensors(batch);
    auto y = model.forward(volumes);
    int cols = static_cast<int>(y.shape()[1]);
    for (size_t i = 0; i < batch.size(); ++i) {
      std::array<double, 3> p, t;
      for (int a = 0; a < 3; ++a) {
        p[a] = y.data()[i * cols + a];  // final-shift block
        t[a] = batch[i]->targets[3][a];
      }
      out.pred.push_back(p);
      out.target.push_back(t);
      out.magnitude.push_back(std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]));
    }
  }
  return out;
}

MagnitudeGroups group_by_magnitude(const std::vector<double>& magnitudes, int k) {
  if (k < 2) fail_contract("magnitude grouping needs k >= 2");
  int64_t n = static_cast<int64_t>(magnitudes.size());
  if (n < k) fail_contract("fewer samples (", n, ") than magnitude groups (", k, ")");

  MagnitudeGroups g;
  double lo = *std::min_element(magnitudes.begin(), magnitudes.end());
  double hi = *std::max_element(magnitudes.begin(), magnitudes.end());
  if (lo == hi) {
    g.degenerate = true;
    g.label.assign(n, 0);
    g.sizes = {n};
    g.mean_magnitude = {lo};
    return g;
  }

  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return magnitudes[a] < magnitudes[b]; });

  g.label.assign(n, 0);
  g.sizes.assign(k, 0);
  g.mean_magnitude.assign(k, 0.0);
  for (int64_t rank = 0; rank < n; ++rank) {
    int grp = static_cast<int>(rank * k / n);
    g.label[order[rank]] = grp;
    g.sizes[grp]++;
    g.mean_magnitude[grp] += magnitudes[order[rank]];
  }
  for (int i = 0; i < k; ++i) g.mean_magnitude[i] /= static_cast<double>(g.sizes[i]);
  return g;
}

MetricsReport compute_metrics(const EvalArrays& arrays, int magnitude_groups) {
  int64_t n = static_cast<int64_t>(arrays.pred.size());
  if (n < 2) fail_contract("metrics need >= 2 samples, got ", n);

  MetricsReport rep;
  rep.sample_count = n;

  std::vector<double> rel_errs;
  std::vector<double> acc_axes;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> errs(n), preds(n), tgts(n);
    for (int64_t i = 0; i < n; ++i) {
      preds[i] = arrays.pred[i][a];
      tgts[i] = arrays.target[i][a];
      errs[i] = std::abs(preds[i] - tgts[i]);
    }
    rep.mae_mm[a] = stat_of(errs);
    double tstd = stat_of(tgts).stddev;
    rep.axis_defined[a] = tstd > 0;
    if (rep.axis_defined[a]) {
      for (double e : errs) rel_errs.push_back(e / tstd);
      double r = pearson(preds, tgts);
      if (!std::isnan(r)) acc_axes.push_back(r);
    }
  }
  if (!rel_errs.empty()) rep.rmae = stat_of(rel_errs);
  rep.acc = acc_axes.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(acc_axes);

  if (magnitude_groups > 0) {
    auto groups = group_by_magnitude(arrays.magnitude, std::max(2, magnitude_groups));
    rep.degenerate_groups = groups.degenerate;
    rep.group_sizes = groups.sizes;
    rep.group_mean_magnitude = groups.mean_magnitude;
    rep.group_mae.assign(groups.sizes.size(), 0.0);
    std::vector<int64_t> counts(groups.sizes.size(), 0);
    for (int64_t i = 0; i < n; ++i) {
      double err = 0;
      for (int a = 0; a < 3; ++a) err += std::abs(arrays.pred[i][a] - arrays.target[i][a]);
      rep.group_mae[groups.label[i]] += err / 3.0;
      counts[groups.label[i]]++;
    }
    for (size_t gi = 0; gi < rep.group_mae.size(); ++gi)
      rep.group_mae[gi] /= static_cast<double>(counts[gi]);
  }
  return rep;
}

MetricsReport evaluate(const Model& model, const std::vector<const MotionSample*>& samples,
                       int batch_size, int magnitude_groups) {
  auto arrays = run_inference(model, samples, batch_size);
  auto rep = compute_metrics(arrays, magnitude_groups);
  rep.model_id = variant_name(model.spec().variant);
  return rep;
}

std::vector<const MotionSample*> sample_ptrs(const std::vector<MotionSample>& samples) {
  std::vector<const MotionSample*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

}  // namespace oct4d
