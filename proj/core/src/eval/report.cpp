#include "caa/eval/report.hpp"

#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "caa/error.hpp"

namespace caa::eval {

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  throw InvalidArgument("unknown report format '" + std::string(name) + "' (expected csv or json)");
}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

std::string report_csv(const MetricsReport& report) {
  std::string out = "suite,order_mode,clean_acc,ra,asr,n,seed\n";
  for (const SuiteMetrics& m : report.suites) {
    out += m.suite + ',' + m.order_mode + ',' + format_number(m.clean_acc) + ',' + format_number(m.ra) + ',' +
           format_number(m.asr) + ',' + std::to_string(m.n) + ',' + std::to_string(m.seed) + '\n';
  }
  return out;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["clean_accuracy"] = report.clean_accuracy;
  j["n"] = report.n;
  j["seed"] = report.seed;
  j["suites"] = nlohmann::ordered_json::array();
  for (const SuiteMetrics& m : report.suites) {
    j["suites"].push_back({{"suite", m.suite},
                           {"order_mode", m.order_mode},
                           {"n", m.n},
                           {"clean_correct", m.clean_correct},
                           {"robust_correct", m.robust_correct},
                           {"flipped", m.flipped},
                           {"clean_acc", m.clean_acc},
                           {"ra", m.ra},
                           {"asr", m.asr},
                           {"seed", m.seed}});
  }
  j["config"] = nlohmann::ordered_json::parse(report.config_json);
  return j.dump(2) + "\n";
}

MetricsReport parse_report_json(const std::string& text) {
  try {
    const nlohmann::ordered_json j = nlohmann::ordered_json::parse(text);
    MetricsReport r;
    r.clean_accuracy = j.at("clean_accuracy").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("suites")) {
      SuiteMetrics m;
      m.suite = s.at("suite").get<std::string>();
      m.order_mode = s.at("order_mode").get<std::string>();
      m.n = s.at("n").get<std::size_t>();
      m.clean_correct = s.at("clean_correct").get<std::size_t>();
      m.robust_correct = s.at("robust_correct").get<std::size_t>();
      m.flipped = s.at("flipped").get<std::size_t>();
      m.clean_acc = s.at("clean_acc").get<double>();
      m.ra = s.at("ra").get<double>();
      m.asr = s.at("asr").get<double>();
      m.seed = s.at("seed").get<std::uint64_t>();
      r.suites.push_back(std::move(m));
    }
    r.config_json = j.at("config").dump();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report JSON: ") + e.what());
  }
}

void write_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format) {
  const std::string text = format == ReportFormat::Csv ? report_csv(report) : report_json(report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("short write to report " + path.string());
}

MetricsReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report_json(ss.str());
}

}  // namespace caa::eval
