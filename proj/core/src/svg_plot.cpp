#include "grokkd/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace grokkd {

namespace {

double column_value(const MetricsRow& r, const std::string& column) {
  if (column == "accuracy") return r.accuracy;
  if (column == "loss_ce") return r.loss_ce;
  if (column == "loss_kl") return r.loss_kl;
  if (column == "loss_total") return r.loss_total;
  if (column == "weight_l2") return r.weight_l2;
  throw ConfigError("unknown series column '" + column +
                    "' (expected accuracy, loss_ce, loss_kl, loss_total or weight_l2)");
}

const char* kPalette[8] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                           "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

struct Series {
  std::string label;
  bool dashed = false;
  std::vector<std::pair<double, double>> points;  // (x, y) already in axis units
};

std::vector<double> nice_ticks(double lo, double hi, int target) {
  std::vector<double> ticks;
  if (!(hi > lo)) {
    ticks.push_back(lo);
    return ticks;
  }
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  }
  const double first = std::ceil(lo / step) * step;
  for (double v = first; v <= hi + step * 1e-9; v += step) ticks.push_back(v);
  return ticks;
}

std::string fmt_tick(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string render_plot_svg(const MetricsLog& log, const PlotOptions& options) {
  if (log.rows.empty()) throw ConfigError("metrics log has no data rows to plot");
  std::vector<std::string> columns = options.columns;
  if (columns.empty()) columns.push_back("accuracy");

  // Series keys in first-appearance order.
  std::vector<std::pair<std::string, std::string>> keys;
  for (const MetricsRow& r : log.rows) {
    const auto key = std::make_pair(r.distribution, r.split);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }

  auto x_of = [&](std::int64_t step) {
    const double s = double(std::max<std::int64_t>(step, options.log_x ? 1 : 0));
    return options.log_x ? std::log10(s) : s;
  };

  std::vector<Series> series;
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const std::string& column : columns) {
    for (const auto& [dist, split] : keys) {
      Series s;
      s.label = dist + "/" + split + " " + column;
      s.dashed = split == "test";
      for (const MetricsRow& r : log.rows) {
        if (r.distribution != dist || r.split != split) continue;
        const double x = x_of(r.step);
        const double y = column_value(r, column);
        s.points.emplace_back(x, y);
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
      if (!s.points.empty()) series.push_back(std::move(s));
    }
  }
  if (series.empty()) throw ConfigError("no matching series to plot");
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  const double y_pad = (y_hi - y_lo) > 0 ? 0.05 * (y_hi - y_lo) : std::max(0.05, std::abs(y_hi) * 0.05);
  y_lo -= y_pad;
  y_hi += y_pad;

  const double ml = 70, mr = 20, mt = 20, mb = 45;
  const double w = options.width, h = options.height;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return mt + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";

  // Grid and ticks.
  svg << "<g font-family=\"monospace\" font-size=\"11\" fill=\"#333\">\n";
  for (double t : nice_ticks(y_lo, y_hi, 8)) {
    const double y = py(t);
    svg << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << w - mr << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt_tick(t)
        << "</text>\n";
  }
  if (options.log_x) {
    for (int e = int(std::floor(x_lo)); e <= int(std::ceil(x_hi)); ++e) {
      if (e < x_lo - 1e-9 || e > x_hi + 1e-9) continue;
      const double x = px(double(e));
      svg << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\"" << h - mb
          << "\" stroke=\"#ddd\"/>\n";
      svg << "<text x=\"" << x << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\">1e" << e
          << "</text>\n";
    }
  } else {
    for (double t : nice_ticks(x_lo, x_hi, 10)) {
      const double x = px(t);
      svg << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\"" << h - mb
          << "\" stroke=\"#ddd\"/>\n";
      svg << "<text x=\"" << x << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\">"
          << fmt_tick(t) << "</text>\n";
    }
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">step"
      << (options.log_x ? " (log)" : "") << "</text>\n";
  svg << "</g>\n";

  // Axes.
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"#000\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"#000\"/>\n";

  // Series.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    svg << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 8] << "\" stroke-width=\"1.5\"";
    if (s.dashed) svg << " stroke-dasharray=\"6 3\"";
    svg << " points=\"";
    for (const auto& [x, y] : s.points) svg << px(x) << "," << py(y) << " ";
    svg << "\"/>\n";
  }

  // Legend.
  svg << "<g font-family=\"monospace\" font-size=\"12\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double ly = mt + 16 + 16 * double(i);
    svg << "<line x1=\"" << ml + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + 34 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << kPalette[i % 8] << "\" stroke-width=\"2\"";
    if (series[i].dashed) svg << " stroke-dasharray=\"6 3\"";
    svg << "/>\n";
    svg << "<text x=\"" << ml + 40 << "\" y=\"" << ly << "\">" << series[i].label << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace grokkd
