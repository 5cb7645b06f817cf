#include "projnet/metrics.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace projnet {

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_row(const MetricRow& r) {
  return std::to_string(r.step) + "," + r.split + "," + format_double(r.loss) + "," + format_double(r.accuracy) +
         "," + format_double(r.residual) + "," + format_double(r.elapsed_ms);
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write metrics to '" + path + "'");
  out_ << kMetricsHeader << '\n';
  out_.flush();
}

void MetricsWriter::write(const MetricRow& r) {
  out_ << format_row(r) << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("failed writing metrics to '" + path_ + "'");
}

void write_metrics(const std::string& path, const std::vector<MetricRow>& rows) {
  MetricsWriter w(path);
  for (const auto& r : rows) w.write(r);
}

std::vector<MetricRow> read_metrics(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open metrics '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line != kMetricsHeader)
    throw std::runtime_error("'" + path + "' does not start with the metrics header");
  std::vector<MetricRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 6) throw std::runtime_error("metrics row has " + std::to_string(cells.size()) + " cells");
    MetricRow r;
    auto num = [&](const std::string& s, auto& out) {
      auto res = std::from_chars(s.data(), s.data() + s.size(), out);
      if (res.ec != std::errc{}) throw std::runtime_error("bad metrics value '" + s + "'");
    };
    num(cells[0], r.step);
    r.split = cells[1];
    num(cells[2], r.loss);
    num(cells[3], r.accuracy);
    num(cells[4], r.residual);
    num(cells[5], r.elapsed_ms);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace projnet
