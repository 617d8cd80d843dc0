#include "oct4d/report_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "oct4d/common.hpp"

namespace oct4d {
namespace {

nlohmann::json axis_json(const AxisStat& s) {
  return {{"mean", s.mean}, {"std", s.stddev}};
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  std::ofstream os(tmp, std::ios::trunc);
  if (!os) throw IoError(format_msg("cannot open ", tmp, " for writing"));
  os << content;
  os.close();
  if (!os) throw IoError(format_msg("failed writing ", path));
  std::filesystem::rename(tmp, path);
}

std::string report_to_json(const MetricsReport& rep) {
  nlohmann::json j;
  j["sample_count"] = rep.sample_count;
  j["model_id"] = rep.model_id;
  j["config_hash"] = rep.config_hash;
  const char* axes[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    j["mae_mm"][axes[a]] = axis_json(rep.mae_mm[a]);
    j["axis_defined"][axes[a]] = rep.axis_defined[a];
  }
  j["rmae"] = axis_json(rep.rmae);
  if (std::isnan(rep.acc))
    j["acc"] = nullptr;  // undefined (zero target variance on all axes)
  else
    j["acc"] = rep.acc;
  if (!rep.group_mae.empty()) {
    j["magnitude_groups"] = {{"mae", rep.group_mae},
                             {"sizes", rep.group_sizes},
                             {"mean_magnitude", rep.group_mean_magnitude},
                             {"degenerate", rep.degenerate_groups}};
  }
  return j.dump(2) + "\n";
}

void write_report_json(const std::string& path, const MetricsReport& rep) {
  write_text_atomic(path, report_to_json(rep));
}

namespace {

void append_report_row(std::ostringstream& os, const std::string& label,
                       const MetricsReport& r, int64_t params) {
  os << label << ",";
  if (params >= 0) os << params;
  os << "," << fmt(r.mae_mm[0].mean) << "," << fmt(r.mae_mm[0].stddev) << ","
     << fmt(r.mae_mm[1].mean) << "," << fmt(r.mae_mm[1].stddev) << "," << fmt(r.mae_mm[2].mean)
     << "," << fmt(r.mae_mm[2].stddev) << "," << fmt(r.rmae.mean) << "," << fmt(r.rmae.stddev)
     << "," << fmt(r.acc * 100.0) << "\n";
}

constexpr const char* kReportHeader =
    "model,params,mae_x,mae_x_std,mae_y,mae_y_std,mae_z,mae_z_std,rmae,rmae_std,acc_pct\n";

}  // namespace

void write_reports_csv(const std::string& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& rows,
                       const std::vector<int64_t>& params) {
  std::ostringstream os;
  os << kReportHeader;
  for (size_t i = 0; i < rows.size(); ++i)
    append_report_row(os, rows[i].first, rows[i].second,
                      i < params.size() ? params[i] : -1);
  write_text_atomic(path, os.str());
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_rmae\n";
  for (const auto& e : history)
    os << e.epoch << "," << fmt(e.train_loss) << "," << fmt(e.val_rmae) << "\n";
  write_text_atomic(path, os.str());
}

void write_rotation_csv(const std::string& path, const std::vector<RotationSweepRow>& rows) {
  std::ostringstream os;
  os << "mode,alpha_max_deg,mae_x,mae_x_std,mae_y,mae_y_std,mae_z,mae_z_std,rmae,rmae_std,"
        "acc_pct\n";
  for (const auto& r : rows) {
    os << rotation_mode_name(r.mode) << "," << fmt(r.alpha_max_deg) << ","
       << fmt(r.report.mae_mm[0].mean) << "," << fmt(r.report.mae_mm[0].stddev) << ","
       << fmt(r.report.mae_mm[1].mean) << "," << fmt(r.report.mae_mm[1].stddev) << ","
       << fmt(r.report.mae_mm[2].mean) << "," << fmt(r.report.mae_mm[2].stddev) << ","
       << fmt(r.report.rmae.mean) << "," << fmt(r.report.rmae.stddev) << ","
       << fmt(r.report.acc * 100.0) << "\n";
  }
  write_text_atomic(path, os.str());
}

void write_distortion_csv(const std::string& path, const std::vector<DistortionSweepRow>& rows) {
  std::ostringstream os;
  os << "p_dist,shift_px,mae_x,mae_x_std,mae_y,mae_y_std,mae_z,mae_z_std,rmae,rmae_std,"
        "acc_pct\n";
  for (const auto& r : rows) {
    os << fmt(r.p_dist) << "," << r.shift_px << "," << fmt(r.report.mae_mm[0].mean) << ","
       << fmt(r.report.mae_mm[0].stddev) << "," << fmt(r.report.mae_mm[1].mean) << ","
       << fmt(r.report.mae_mm[1].stddev) << "," << fmt(r.report.mae_mm[2].mean) << ","
       << fmt(r.report.mae_mm[2].stddev) << "," << fmt(r.report.rmae.mean) << ","
       << fmt(r.report.rmae.stddev) << "," << fmt(r.report.acc * 100.0) << "\n";
  }
  write_text_atomic(path, os.str());
}

void write_bench_csv(const std::string& path, const std::vector<BenchResult>& rows) {
  std::ostringstream os;
  os << "model,params,mean_ms,std_ms,hz\n";
  for (const auto& r : rows)
    os << r.model_id << "," << r.params << "," << fmt(r.mean_ms) << "," << fmt(r.std_ms) << ","
       << fmt(r.hz) << "\n";
  write_text_atomic(path, os.str());
}

}  // namespace oct4d
