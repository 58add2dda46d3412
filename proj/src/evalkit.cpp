#include "numlm/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "numlm/errors.hpp"

namespace numlm::eval {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* who) {
  if (a != b) throw DimensionError(std::string(who) + ": " + std::to_string(a) + " predictions vs " +
                                   std::to_string(b) + " ground truths");
  if (a == 0) throw DimensionError(std::string(who) + ": empty input");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

double point_error(const Point& pred, const Point& gt) { return std::hypot(pred[0] - gt[0], pred[1] - gt[1]); }

double mean_point_error(std::span<const Point> pred, std::span<const Point> gt) {
  require_aligned(pred.size(), gt.size(), "mean_point_error");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += point_error(pred[i], gt[i]);
  return s / static_cast<double>(pred.size());
}

double heading(const Point& p) {
  if (p[0] == 0.0 && p[1] == 0.0) throw InputError("heading undefined for the zero vector");
  return -(std::atan2(-p[1], p[0]) * 180.0 / std::numbers::pi);
}

double heading_error(std::span<const double> pred_deg, std::span<const double> gt_deg, bool wrap) {
  require_aligned(pred_deg.size(), gt_deg.size(), "heading_error");
  double s = 0.0;
  for (std::size_t i = 0; i < pred_deg.size(); ++i) {
    double diff = std::abs(pred_deg[i] - gt_deg[i]);
    if (wrap) {
      diff = std::fmod(diff, 360.0);
      if (diff > 180.0) diff = 360.0 - diff;
    }
    s += diff;
  }
  return s / static_cast<double>(pred_deg.size());
}

double speed_error(std::span<const double> pred, std::span<const double> gt) { return mae(pred, gt); }

double normalized_l2(std::span<const double> errors) {
  if (errors.empty()) throw DimensionError("normalized_l2: empty input");
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s) / static_cast<double>(errors.size());
}

double rmse(std::span<const double> pred, std::span<const double> gt) {
  require_aligned(pred.size(), gt.size(), "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> gt) {
  require_aligned(pred.size(), gt.size(), "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.size());
}

double threshold_accuracy(std::span<const double> pred, std::span<const double> gt, double delta) {
  require_aligned(pred.size(), gt.size(), "threshold_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (std::abs(pred[i] - gt[i]) <= delta) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

FieldMetrics field_metrics(std::string name, std::string unit, std::span<const double> errors,
                           std::span<const double> thresholds) {
  FieldMetrics f;
  f.name = std::move(name);
  f.unit = std::move(unit);
  f.count = errors.size();
  for (double t : thresholds) f.threshold_acc[t] = 0.0;
  if (errors.empty()) return f;
  const std::vector<double> zeros(errors.size(), 0.0);
  f.rmse = rmse(errors, zeros);
  f.mae = mae(errors, zeros);
  f.normalized_l2 = normalized_l2(errors);
  for (double t : thresholds) f.threshold_acc[t] = threshold_accuracy(errors, zeros, t);
  return f;
}

const FieldMetrics* MetricReport::field(const std::string& name) const {
  for (const auto& f : fields)
    if (f.name == name) return &f;
  return nullptr;
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "field,unit,count,RMSE,MAE,normalized_L2";
  const auto thresholds = report.fields.empty() ? std::map<double, double>{} : report.fields.front().threshold_acc;
  for (const auto& [t, _] : thresholds) out << ",A_" << fmt(t);
  out << '\n';
  char buf[64];
  for (const auto& f : report.fields) {
    out << f.name << ',' << f.unit << ',' << f.count;
    for (double v : {f.rmse, f.mae, f.normalized_l2}) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    for (const auto& [_, a] : f.threshold_acc) {
      std::snprintf(buf, sizeof(buf), ",%.17g", a);
      out << buf;
    }
    out << '\n';
  }
}

void write_report_json(const std::filesystem::path& path, const MetricReport& report) {
  nlohmann::json j;
  j["samples"] = report.samples;
  j["invalid"] = report.invalid;
  j["undefined_heading"] = report.undefined_heading;
  j["fields"] = nlohmann::json::array();
  for (const auto& f : report.fields) {
    nlohmann::json fj{{"field", f.name}, {"unit", f.unit},   {"count", f.count},
                      {"RMSE", f.rmse},  {"MAE", f.mae},     {"normalized_L2", f.normalized_l2}};
    for (const auto& [t, a] : f.threshold_acc) fj["A_" + fmt(t)] = a;
    j["fields"].push_back(fj);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::string report_table(const MetricReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-8s %-4s %6s %10s %10s %10s %8s %8s %8s %8s\n", "field", "unit", "n", "RMSE", "MAE",
                "nL2", "A_0.1", "A_0.5", "A_1", "A_5");
  os << buf;
  for (const auto& f : report.fields) {
    auto acc = [&](double t) {
      auto it = f.threshold_acc.find(t);
      return it == f.threshold_acc.end() ? 0.0 : it->second;
    };
    std::snprintf(buf, sizeof(buf), "%-8s %-4s %6zu %10.4f %10.4f %10.6f %8.2f %8.2f %8.2f %8.2f\n", f.name.c_str(),
                  f.unit.c_str(), f.count, f.rmse, f.mae, f.normalized_l2, acc(0.1), acc(0.5), acc(1.0), acc(5.0));
    os << buf;
  }
  os << "samples " << report.samples << ", invalid " << report.invalid << ", undefined heading "
     << report.undefined_heading << '\n';
  return os.str();
}

}  // namespace numlm::eval
