#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grokkd/data.hpp"
#include "grokkd/metrics.hpp"
#include "grokkd/run_config.hpp"
#include "grokkd/svg_plot.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNanAbort = 3;
constexpr int kExitIo = 4;

std::string default_out_root() {
  if (const char* env = std::getenv("GROKKD_OUT_ROOT")) return env;
  return ".";
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_root) {
  grokkd::ParsedConfig parsed = grokkd::parse_config_file(config_path, overrides);
  grokkd::RunManifest manifest = grokkd::build_manifest(std::move(parsed), out_root);
  grokkd::RunResult result = grokkd::execute_manifest(manifest);
  std::cout << "run " << manifest.parsed.run_name << " finished after "
            << manifest.parsed.config.max_steps << " steps\n";
  for (const auto& [dist, report] : result.reports) {
    std::cout << "  " << dist << ": " << grokkd::grokking_status_name(report.status);
    if (report.t_fit) std::cout << " t_fit=" << *report.t_fit;
    if (report.t_gen) std::cout << " t_gen=" << *report.t_gen;
    if (report.grokking_gap) std::cout << " gap=" << *report.grokking_gap;
    std::cout << "\n";
  }
  std::cout << "artifacts in " << manifest.output_dir << "\n";
  return kExitOk;
}

int cmd_plot(const std::string& csv_path, const std::vector<std::string>& series, bool logx,
             std::string out_path) {
  const grokkd::MetricsLog log = grokkd::metrics_load_csv(csv_path);
  grokkd::PlotOptions options;
  options.columns = series;
  options.log_x = logx;
  const std::string svg = grokkd::render_plot_svg(log, options);
  if (out_path.empty()) {
    out_path = std::filesystem::path(csv_path).replace_extension(".svg").string();
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw grokkd::IoError("cannot write plot to '" + out_path + "'");
  out << svg;
  std::cout << out_path << "\n";
  return kExitOk;
}

int cmd_report(const std::string& csv_path, double theta_fit, double theta_gen) {
  const grokkd::MetricsLog log = grokkd::metrics_load_csv(csv_path);
  std::cout << grokkd::reports_to_json(log, theta_fit, theta_gen);
  return kExitOk;
}

int cmd_dump_data(const std::string& config_path, const std::vector<std::string>& overrides,
                  const std::string& out_path) {
  const grokkd::ParsedConfig parsed = grokkd::parse_config_file(config_path, overrides);
  std::string text;
  for (const grokkd::TaskSpec& task : parsed.config.tasks) {
    const auto dataset = grokkd::split(grokkd::enumerate_task(task),
                                       parsed.config.fractions.at(task.distribution_id),
                                       parsed.config.data_seed);
    text += grokkd::dump_dataset(task, dataset);
  }
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw grokkd::IoError("cannot write dataset dump to '" + out_path + "'");
    out << text;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grokkd: grokking and knowledge-distillation training lab for modular arithmetic"};
  app.require_subcommand(1);

  std::string config_path, csv_path, out_path, out_root = default_out_root();
  std::vector<std::string> overrides, series;
  bool logx = false;
  double theta_fit = 0.99, theta_gen = 0.95;

  CLI::App* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--set", overrides, "override config keys (key=value)");
  run->add_option("--out-root", out_root, "root directory for run outputs ($GROKKD_OUT_ROOT)");

  CLI::App* plot = app.add_subcommand("plot", "render a metrics CSV as an SVG line chart");
  plot->add_option("csv", csv_path, "metrics CSV")->required();
  plot->add_option("--series", series, "metric columns to draw (default accuracy)");
  plot->add_flag("--logx", logx, "log-scale step axis");
  plot->add_option("--out", out_path, "output SVG path (default: csv path with .svg)");

  CLI::App* report = app.add_subcommand("report", "print the grokking report for a metrics CSV");
  report->add_option("csv", csv_path, "metrics CSV")->required();
  report->add_option("--theta-fit", theta_fit, "train-accuracy fit threshold");
  report->add_option("--theta-gen", theta_gen, "test-accuracy generalization threshold");

  CLI::App* dump = app.add_subcommand("dump-data", "write the encoded dataset of a config as text");
  dump->add_option("config", config_path, "config file")->required();
  dump->add_option("--set", overrides, "override config keys (key=value)");
  dump->add_option("--out", out_path, "output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, overrides, out_root);
    if (plot->parsed()) return cmd_plot(csv_path, series, logx, out_path);
    if (report->parsed()) return cmd_report(csv_path, theta_fit, theta_gen);
    if (dump->parsed()) return cmd_dump_data(config_path, overrides, out_path);
  } catch (const grokkd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const grokkd::NanAbortError& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kExitNanAbort;
  } catch (const grokkd::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const grokkd::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const grokkd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
