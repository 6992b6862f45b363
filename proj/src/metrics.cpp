#include "damgan/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace damgan::metrics {

const char* to_string(Compositing c) { return c == Compositing::raw ? "raw" : "composited"; }
const char* to_string(MaskTag m) { return m == MaskTag::center ? "center" : "free"; }

MetricsReport aggregate(std::vector<MetricsRow> rows, MaskTag mask, Compositing compositing) {
  if (rows.empty()) throw std::invalid_argument("aggregate: no rows");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MetricsRow& a, const MetricsRow& b) { return a.id < b.id; });
  MetricsReport report;
  report.mask = mask;
  report.compositing = compositing;
  // Summed in id order so permuted inputs give identical means.
  double p = 0, s = 0;
  for (const auto& r : rows) {
    p += r.psnr;
    s += r.ssim;
  }
  report.mean_psnr = p / double(rows.size());
  report.mean_ssim = s / double(rows.size());
  report.rows = std::move(rows);
  return report;
}

namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& out, const MetricsReport& report) {
  out << "id,psnr_db,ssim\n";
  for (const auto& r : report.rows) out << r.id << ',' << fmt6(r.psnr) << ',' << fmt6(r.ssim) << '\n';
  out << "mean," << fmt6(report.mean_psnr) << ',' << fmt6(report.mean_ssim) << '\n';
}

void write_report_csv(const std::filesystem::path& file, const MetricsReport& report) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report " + file.string());
  write_report_csv(out, report);
  if (!out) throw std::runtime_error("failed writing report " + file.string());
}

}  // namespace damgan::metrics
