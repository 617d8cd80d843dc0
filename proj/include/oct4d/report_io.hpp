#ifndef OCT4D_REPORT_IO_HPP
#define OCT4D_REPORT_IO_HPP

#include <string>
#include <utility>
#include <vector>

#include "oct4d/metrics.hpp"
#include "oct4d/robustness.hpp"
#include "oct4d/train.hpp"

namespace oct4d {

// Machine layout (JSON) for tests and tooling, table layout (CSV) mirroring
// the usual comparison columns: per-axis MAE, rMAE, aCC%.
std::string report_to_json(const MetricsReport& rep);
void write_report_json(const std::string& path, const MetricsReport& rep);

// One row per labeled report. Columns:
// label,params,mae_x,mae_x_std,mae_y,mae_y_std,mae_z,mae_z_std,rmae,rmae_std,acc_pct
void write_reports_csv(const std::string& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& rows,
                       const std::vector<int64_t>& params = {});

// epoch,train_loss,val_rmae
void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

void write_rotation_csv(const std::string& path, const std::vector<RotationSweepRow>& rows);
void write_distortion_csv(const std::string& path, const std::vector<DistortionSweepRow>& rows);

// label,params,mean_ms,std_ms,hz
void write_bench_csv(const std::string& path, const std::vector<BenchResult>& rows);

// Atomic small-text write (temp + rename).
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace oct4d

#endif
