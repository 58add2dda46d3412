#pragma once

// Point, heading and speed errors, RMSE, threshold accuracy and the
// normalized L2 aggregate, plus CSV/JSON report emission.

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace numlm::eval {

using Point = std::array<double, 2>;

inline constexpr std::array<double, 4> kDefaultThresholds = {0.1, 0.5, 1.0, 5.0};

double point_error(const Point& pred, const Point& gt);
// Mean point error over aligned waypoint sequences.
double mean_point_error(std::span<const Point> pred, std::span<const Point> gt);

// Degrees, -deg(atan2(-y, x)); (0, 0) has no heading and throws.
double heading(const Point& p);
// Mean |pred - gt| without wrapping unless `wrap` is set (then each
// difference is folded into [0, 180]).
double heading_error(std::span<const double> pred_deg, std::span<const double> gt_deg, bool wrap = false);
double speed_error(std::span<const double> pred, std::span<const double> gt);
// ||e||_2 / N
double normalized_l2(std::span<const double> errors);
double rmse(std::span<const double> pred, std::span<const double> gt);
double mae(std::span<const double> pred, std::span<const double> gt);
// Percent of samples with |pred - gt| <= delta.
double threshold_accuracy(std::span<const double> pred, std::span<const double> gt, double delta);

struct FieldMetrics {
  std::string name;
  std::string unit;
  std::size_t count = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double normalized_l2 = 0.0;
  std::map<double, double> threshold_acc;
};

// Metrics of a field from per-sample signed errors (or non-negative
// distances for points).
FieldMetrics field_metrics(std::string name, std::string unit, std::span<const double> errors,
                           std::span<const double> thresholds = kDefaultThresholds);

struct MetricReport {
  std::vector<FieldMetrics> fields;
  std::size_t samples = 0;
  std::size_t invalid = 0;          // predictions with the wrong number count
  std::size_t undefined_heading = 0;

  const FieldMetrics* field(const std::string& name) const;
};

void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
void write_report_json(const std::filesystem::path& path, const MetricReport& report);
std::string report_table(const MetricReport& report);

}  // namespace numlm::eval
