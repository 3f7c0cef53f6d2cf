#include "grokkd/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace grokkd {

namespace {

std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::vector<std::string> MetricsLog::distributions() const {
  std::vector<std::string> out;
  for (const MetricsRow& r : rows) {
    if (std::find(out.begin(), out.end(), r.distribution) == out.end()) {
      out.push_back(r.distribution);
    }
  }
  return out;
}

std::string metrics_to_csv(const MetricsLog& log) {
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const MetricsRow& r : log.rows) {
    out += std::to_string(r.step);
    out += ',';
    out += r.distribution;
    out += ',';
    out += r.split;
    out += ',';
    out += fmt_g9(r.accuracy);
    out += ',';
    out += fmt_g9(r.loss_ce);
    out += ',';
    out += fmt_g9(r.loss_kl);
    out += ',';
    out += fmt_g9(r.loss_total);
    out += ',';
    out += fmt_g9(r.weight_l2);
    out += '\n';
  }
  return out;
}

MetricsLog metrics_from_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("metrics CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsCsvHeader) {
    throw FormatError("unexpected metrics CSV header '" + line + "'");
  }
  MetricsLog log;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 8) {
      throw FormatError("metrics CSV line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected 8");
    }
    try {
      MetricsRow r;
      r.step = std::stoll(fields[0]);
      r.distribution = fields[1];
      r.split = fields[2];
      r.accuracy = std::stod(fields[3]);
      r.loss_ce = std::stod(fields[4]);
      r.loss_kl = std::stod(fields[5]);
      r.loss_total = std::stod(fields[6]);
      r.weight_l2 = std::stod(fields[7]);
      log.rows.push_back(std::move(r));
    } catch (const std::exception&) {
      throw FormatError("metrics CSV line " + std::to_string(line_no) + " is not parseable");
    }
  }
  return log;
}

void metrics_save_csv(const MetricsLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string csv = metrics_to_csv(log);
  out.write(csv.data(), std::streamsize(csv.size()));
  if (!out) throw IoError("failed writing metrics to '" + path + "'");
}

MetricsLog metrics_load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metrics CSV '" + path + "'");
  std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return metrics_from_csv(csv);
}

std::string grokking_status_name(GrokkingStatus s) {
  switch (s) {
    case GrokkingStatus::grokked: return "grokked";
    case GrokkingStatus::memorized_only: return "memorized_only";
    case GrokkingStatus::no_fit: return "no_fit";
  }
  return "no_fit";
}

GrokkingReport detect_grokking(const MetricsLog& log, const std::string& distribution,
                               double theta_fit, double theta_gen) {
  if (log.rows.empty()) throw ContractError("detect_grokking requires a nonempty metrics log");
  bool saw_train = false, saw_test = false;
  GrokkingReport report;
  report.theta_fit = theta_fit;
  report.theta_gen = theta_gen;
  for (const MetricsRow& r : log.rows) {
    if (r.distribution != distribution) continue;
    if (r.split == "train") {
      saw_train = true;
      if (!report.t_fit && r.accuracy >= theta_fit) report.t_fit = r.step;
    } else if (r.split == "test") {
      saw_test = true;
      if (!report.t_gen && r.accuracy >= theta_gen) report.t_gen = r.step;
    }
  }
  if (!saw_train || !saw_test) {
    throw ContractError("metrics log lacks train/test series for distribution '" + distribution + "'");
  }
  if (report.t_fit && report.t_gen) report.grokking_gap = *report.t_gen - *report.t_fit;
  if (!report.t_fit) {
    report.status = GrokkingStatus::no_fit;
  } else if (!report.t_gen) {
    report.status = GrokkingStatus::memorized_only;
  } else {
    report.status = GrokkingStatus::grokked;
  }
  return report;
}

std::string reports_to_json(const MetricsLog& log, double theta_fit, double theta_gen) {
  nlohmann::json out = nlohmann::json::object();
  for (const std::string& dist : log.distributions()) {
    const GrokkingReport r = detect_grokking(log, dist, theta_fit, theta_gen);
    nlohmann::json j;
    j["status"] = grokking_status_name(r.status);
    j["theta_fit"] = r.theta_fit;
    j["theta_gen"] = r.theta_gen;
    j["t_fit"] = r.t_fit ? nlohmann::json(*r.t_fit) : nlohmann::json(nullptr);
    j["t_gen"] = r.t_gen ? nlohmann::json(*r.t_gen) : nlohmann::json(nullptr);
    j["grokking_gap"] = r.grokking_gap ? nlohmann::json(*r.grokking_gap) : nlohmann::json(nullptr);
    out[dist] = std::move(j);
  }
  return out.dump(2) + "\n";
}

}  // namespace grokkd
