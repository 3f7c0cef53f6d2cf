#pragma once

#include <string>
#include <vector>

#include "grokkd/metrics.hpp"

namespace grokkd {

struct PlotOptions {
  std::vector<std::string> columns;  // accuracy, loss_ce, loss_kl, loss_total, weight_l2
  bool log_x = false;
  int width = 960;
  int height = 540;
};

// Self-contained SVG with one line per (column, distribution, split); colors
// and dash styles are deterministic from series order. Throws ConfigError on
// an unknown column or an empty log.
std::string render_plot_svg(const MetricsLog& log, const PlotOptions& options);

}  // namespace grokkd
