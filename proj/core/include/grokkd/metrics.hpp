#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grokkd/errors.hpp"

namespace grokkd {

struct MetricsRow {
  std::int64_t step = 0;
  std::string distribution;
  std::string split;  // "train" or "test"
  double accuracy = 0.0;
  double loss_ce = 0.0;
  double loss_kl = 0.0;
  double loss_total = 0.0;
  double weight_l2 = 0.0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  std::vector<std::string> distributions() const;  // in first-appearance order
};

inline constexpr const char* kMetricsCsvHeader =
    "step,distribution,split,accuracy,loss_ce,loss_kl,loss_total,weight_l2";

// Floats printed with 9 significant digits, LF line endings.
std::string metrics_to_csv(const MetricsLog& log);
MetricsLog metrics_from_csv(const std::string& csv);
void metrics_save_csv(const MetricsLog& log, const std::string& path);
MetricsLog metrics_load_csv(const std::string& path);

enum class GrokkingStatus { grokked, memorized_only, no_fit };

std::string grokking_status_name(GrokkingStatus s);

// t_fit: first step with train accuracy >= theta_fit; t_gen: first step with
// test accuracy >= theta_gen. The gap may be negative (distilled runs can
// generalize before they fit) and is reported as-is.
struct GrokkingReport {
  std::optional<std::int64_t> t_fit;
  std::optional<std::int64_t> t_gen;
  std::optional<std::int64_t> grokking_gap;
  GrokkingStatus status = GrokkingStatus::no_fit;
  double theta_fit = 0.99;
  double theta_gen = 0.95;
};

GrokkingReport detect_grokking(const MetricsLog& log, const std::string& distribution,
                               double theta_fit = 0.99, double theta_gen = 0.95);

// JSON object mapping each distribution to its report.
std::string reports_to_json(const MetricsLog& log, double theta_fit, double theta_gen);

}  // namespace grokkd
