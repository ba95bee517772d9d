#pragma once

#include <filesystem>
#include <string>

#include "caa/eval/metrics.hpp"

namespace caa::eval {

enum class ReportFormat { Csv, Json };

ReportFormat parse_report_format(std::string_view name);

// Six significant digits, '.' decimal separator, locale independent.
std::string format_number(double value);

// Columns: suite, order_mode, clean_acc, ra, asr, n, seed.
std::string report_csv(const MetricsReport& report);
std::string report_json(const MetricsReport& report);
MetricsReport parse_report_json(const std::string& text);

void write_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format);
MetricsReport read_report_json(const std::filesystem::path& path);

}  // namespace caa::eval
