#pragma once

#include <string>
#include <vector>

#include "grokkd/experiment.hpp"

namespace grokkd {

// A parsed run description: the experiment plus CLI-facing extras.
struct ParsedConfig {
  ExperimentConfig config;
  std::string run_name;    // empty: derive from the config file name
  std::string output_dir;  // empty: <out_root>/<run_name>
};

// Flat dotted-key text format: one `key = value` per line, full-line `#`
// comments, comma-separated lists. Unknown keys are rejected; every default
// is materialized into the returned config.
ParsedConfig parse_config_text(const std::string& text, const std::string& source_name);
ParsedConfig parse_config_file(const std::string& path,
                               const std::vector<std::string>& overrides = {});

// Inverse of parsing: emits the fully resolved key set.
std::string config_to_text(const ParsedConfig& parsed);

// Fully resolved run header (every defaulted hyperparameter included).
std::string resolved_config_json(const ParsedConfig& parsed);

struct RunManifest {
  ParsedConfig parsed;
  std::string output_dir;
  std::string metrics_csv_path;
  std::string checkpoint_path;
  std::string report_json_path;
  std::string resolved_config_path;
};

RunManifest build_manifest(ParsedConfig parsed, const std::string& out_root);

// Runs the experiment and writes every artifact in the manifest.
RunResult execute_manifest(const RunManifest& manifest);

}  // namespace grokkd
