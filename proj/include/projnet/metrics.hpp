#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

namespace projnet {

struct MetricRow {
  std::size_t step = 0;
  std::string split;  // "train" or "val"
  double loss = 0;
  double accuracy = 0;
  double residual = 0;
  double elapsed_ms = 0;
};

inline constexpr const char* kMetricsHeader = "step,split,loss,accuracy,residual,elapsed_ms";

// Shortest round-trip decimal form, independent of the C locale.
std::string format_double(double v);
std::string format_row(const MetricRow& r);

// Streams rows as they arrive; the header is written on open.
class MetricsWriter {
 public:
  // Throws std::runtime_error if the path cannot be opened for writing.
  explicit MetricsWriter(const std::string& path);
  void write(const MetricRow& r);

 private:
  std::string path_;
  std::ofstream out_;
};

void write_metrics(const std::string& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics(const std::string& path);

}  // namespace projnet
