#include "grokkd/run_config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace grokkd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class KeyValues {
 public:
  void insert(const std::string& key, const std::string& value, const std::string& source) {
    if (map_.count(key)) throw ConfigError(source + ": duplicate key '" + key + "'");
    map_[key] = value;
  }

  bool has(const std::string& key) const { return map_.count(key) != 0; }

  std::string take_string(const std::string& key, const std::string& fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    used_.insert(key);
    return it->second;
  }

  double take_real(const std::string& key, double fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    used_.insert(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' expects a real number, got '" + it->second + "'");
    }
  }

  std::int64_t take_int(const std::string& key, std::int64_t fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    used_.insert(key);
    try {
      std::size_t pos = 0;
      const std::int64_t v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' expects an integer, got '" + it->second + "'");
    }
  }

  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    used_.insert(key);
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' expects an unsigned integer, got '" + it->second + "'");
    }
  }

  bool take_bool(const std::string& key, bool fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    used_.insert(key);
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError("key '" + key + "' expects true or false, got '" + it->second + "'");
  }

  std::vector<std::string> take_list(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return {};
    used_.insert(key);
    return split_list(it->second);
  }

  // All keys matching prefix.<middle>.suffix; returns the middle segments.
  std::vector<std::string> middles(const std::string& prefix, const std::string& suffix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : map_) {
      if (k.size() > prefix.size() + suffix.size() + 2 && k.starts_with(prefix + ".") &&
          k.ends_with("." + suffix)) {
        const std::string middle =
            k.substr(prefix.size() + 1, k.size() - prefix.size() - suffix.size() - 2);
        if (!middle.empty() && middle.find('.') == std::string::npos) out.push_back(middle);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void reject_unused(const std::string& source) const {
    for (const auto& [k, v] : map_) {
      if (!used_.count(k)) throw ConfigError(source + ": unknown key '" + k + "'");
    }
  }

 private:
  std::map<std::string, std::string> map_;
  std::set<std::string> used_;
};

std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ParsedConfig parse_config_text(const std::string& text, const std::string& source_name) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + t + "'");
    }
    kv.insert(trim(t.substr(0, eq)), trim(t.substr(eq + 1)), source_name);
  }

  ParsedConfig parsed;
  ExperimentConfig& cfg = parsed.config;

  const std::string scenario_str = kv.take_string("scenario", "");
  if (scenario_str.empty()) throw ConfigError(source_name + ": missing required key 'scenario'");
  cfg.scenario = scenario_from_name(scenario_str);

  // Tasks, ascending distribution-id order.
  for (const std::string& id : kv.middles("task", "modulus")) {
    TaskSpec t;
    t.distribution_id = id;
    t.modulus = int(kv.take_int("task." + id + ".modulus", 0));
    t.op = mod_op_from_name(kv.take_string("task." + id + ".operator", "add"));
    cfg.tasks.push_back(t);
    const double frac = kv.take_real("task." + id + ".fraction", -1.0);
    if (frac < 0.0) throw ConfigError("missing key 'task." + id + ".fraction'");
    cfg.fractions[id] = frac;
  }
  if (cfg.tasks.empty()) {
    throw ConfigError(source_name + ": no tasks declared (need task.<id>.modulus keys)");
  }

  for (const std::string& m : kv.take_list("vocab.extra_moduli")) {
    try {
      cfg.extra_vocab_moduli.push_back(std::stoi(m));
    } catch (const std::exception&) {
      throw ConfigError("key 'vocab.extra_moduli' expects integers, got '" + m + "'");
    }
  }

  cfg.data_seed = kv.take_u64("seed.data", 0);
  cfg.init_seed = kv.take_u64("seed.init", 0);

  cfg.model.n_layers = int(kv.take_int("model.n_layers", cfg.scenario == Scenario::joint ? 2 : 1));
  cfg.model.d_model = int(kv.take_int("model.d_model", 128));
  cfg.model.n_heads = int(kv.take_int("model.n_heads", 4));
  cfg.model.d_mlp = int(kv.take_int("model.d_mlp", 4 * cfg.model.d_model));
  cfg.model.init_scale = float(kv.take_real("model.init_scale", 0.02));

  cfg.optimizer = optimizer_from_name(kv.take_string("optimizer.kind", "adamw"));
  cfg.optim.lr = kv.take_real("optimizer.lr", 1e-3);
  cfg.optim.beta1 = kv.take_real("optimizer.beta1", 0.9);
  cfg.optim.beta2 = kv.take_real("optimizer.beta2", 0.999);
  cfg.optim.eps = kv.take_real("optimizer.eps", 1e-8);
  cfg.optim.weight_decay = kv.take_real("optimizer.weight_decay",
                                        cfg.optimizer == OptimizerKind::adamw ? 1.0 : 0.0);
  cfg.optim.clip_norm = kv.take_real("optimizer.clip_norm", 0.0);
  cfg.optim.decay_exclude = kv.take_list("optimizer.decay_exclude");

  cfg.joint_mode = joint_mode_from_name(kv.take_string("joint.mode", "ce_joint"));

  const bool label_only = cfg.scenario == Scenario::scratch ||
                          (cfg.scenario == Scenario::joint && cfg.joint_mode == JointMode::ce_joint);
  const bool kd_only = cfg.scenario == Scenario::joint && cfg.joint_mode == JointMode::kd_only;
  double default_alpha = 0.5;
  if (label_only) default_alpha = 0.0;
  if (kd_only) default_alpha = 1.0;
  cfg.loss.alpha = kv.take_real("loss.alpha", default_alpha);
  if (!(cfg.loss.alpha >= 0.0 && cfg.loss.alpha <= 1.0)) {
    throw ConfigError("key 'loss.alpha' must lie in [0,1], got " + fmt_real(cfg.loss.alpha));
  }
  if (label_only && cfg.loss.alpha != 0.0) {
    throw ConfigError("key 'loss.alpha' must be 0 (or omitted) for label-only training (scenario " +
                      scenario_name(cfg.scenario) + ")");
  }
  if (kd_only && cfg.loss.alpha != 1.0) {
    throw ConfigError("key 'loss.alpha' must be 1 (or omitted) for joint.mode = kd_only");
  }
  cfg.loss.temperature = kv.take_real("loss.temperature", 2.0);
  const std::string default_pos = cfg.scenario == Scenario::joint ? "answer" : "operator";
  cfg.loss.kd_position = kd_position_from_name(kv.take_string("loss.kd_position", default_pos));
  cfg.loss.scaled_kl = kv.take_bool("loss.scaled_kl", false);

  cfg.batch_size = kv.take_int("train.batch_size", 2048);
  cfg.max_steps = kv.take_int("train.max_steps", 15000);
  cfg.eval_every = kv.take_int("train.eval_every", 50);

  cfg.teacher_checkpoint = kv.take_string("teacher.checkpoint", "");
  for (const std::string& id : kv.middles("teacher", "checkpoint")) {
    cfg.joint_teachers[id] = kv.take_string("teacher." + id + ".checkpoint", "");
  }
  cfg.init_checkpoint = kv.take_string("init.checkpoint", "");
  cfg.continual_train_task = kv.take_string("continual.train_task", "");
  cfg.continual_use_kd = kv.take_bool("continual.use_kd", true);

  cfg.theta_fit = kv.take_real("report.theta_fit", 0.99);
  cfg.theta_gen = kv.take_real("report.theta_gen", 0.95);

  parsed.run_name = kv.take_string("run.name", "");
  parsed.output_dir = kv.take_string("output.dir", "");

  kv.reject_unused(source_name);
  cfg.validate();
  return parsed;
}

ParsedConfig parse_config_file(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  for (const std::string& kv : overrides) {
    if (kv.find('=') == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    text += "\n" + kv + "\n";
  }
  ParsedConfig parsed = parse_config_text(text, path);
  if (parsed.run_name.empty()) {
    parsed.run_name = std::filesystem::path(path).stem().string();
  }
  return parsed;
}

std::string config_to_text(const ParsedConfig& parsed) {
  const ExperimentConfig& cfg = parsed.config;
  std::ostringstream os;
  os << "scenario = " << scenario_name(cfg.scenario) << "\n";
  if (!parsed.run_name.empty()) os << "run.name = " << parsed.run_name << "\n";
  if (!parsed.output_dir.empty()) os << "output.dir = " << parsed.output_dir << "\n";
  for (const TaskSpec& t : cfg.tasks) {
    os << "task." << t.distribution_id << ".operator = " << mod_op_name(t.op) << "\n";
    os << "task." << t.distribution_id << ".modulus = " << t.modulus << "\n";
    os << "task." << t.distribution_id << ".fraction = "
       << fmt_real(cfg.fractions.at(t.distribution_id)) << "\n";
  }
  if (!cfg.extra_vocab_moduli.empty()) {
    os << "vocab.extra_moduli = ";
    for (std::size_t i = 0; i < cfg.extra_vocab_moduli.size(); ++i) {
      os << (i ? "," : "") << cfg.extra_vocab_moduli[i];
    }
    os << "\n";
  }
  os << "seed.data = " << cfg.data_seed << "\n";
  os << "seed.init = " << cfg.init_seed << "\n";
  os << "model.n_layers = " << cfg.model.n_layers << "\n";
  os << "model.d_model = " << cfg.model.d_model << "\n";
  os << "model.n_heads = " << cfg.model.n_heads << "\n";
  os << "model.d_mlp = " << cfg.model.d_mlp << "\n";
  os << "model.init_scale = " << fmt_real(double(cfg.model.init_scale)) << "\n";
  os << "optimizer.kind = " << optimizer_name(cfg.optimizer) << "\n";
  os << "optimizer.lr = " << fmt_real(cfg.optim.lr) << "\n";
  os << "optimizer.beta1 = " << fmt_real(cfg.optim.beta1) << "\n";
  os << "optimizer.beta2 = " << fmt_real(cfg.optim.beta2) << "\n";
  os << "optimizer.eps = " << fmt_real(cfg.optim.eps) << "\n";
  os << "optimizer.weight_decay = " << fmt_real(cfg.optim.weight_decay) << "\n";
  os << "optimizer.clip_norm = " << fmt_real(cfg.optim.clip_norm) << "\n";
  if (!cfg.optim.decay_exclude.empty()) {
    os << "optimizer.decay_exclude = ";
    for (std::size_t i = 0; i < cfg.optim.decay_exclude.size(); ++i) {
      os << (i ? "," : "") << cfg.optim.decay_exclude[i];
    }
    os << "\n";
  }
  os << "loss.alpha = " << fmt_real(cfg.loss.alpha) << "\n";
  os << "loss.temperature = " << fmt_real(cfg.loss.temperature) << "\n";
  os << "loss.kd_position = " << kd_position_name(cfg.loss.kd_position) << "\n";
  os << "loss.scaled_kl = " << (cfg.loss.scaled_kl ? "true" : "false") << "\n";
  os << "train.batch_size = " << cfg.batch_size << "\n";
  os << "train.max_steps = " << cfg.max_steps << "\n";
  os << "train.eval_every = " << cfg.eval_every << "\n";
  if (!cfg.teacher_checkpoint.empty()) os << "teacher.checkpoint = " << cfg.teacher_checkpoint << "\n";
  for (const auto& [id, path] : cfg.joint_teachers) {
    os << "teacher." << id << ".checkpoint = " << path << "\n";
  }
  if (!cfg.init_checkpoint.empty()) os << "init.checkpoint = " << cfg.init_checkpoint << "\n";
  if (cfg.scenario == Scenario::continual) {
    os << "continual.train_task = " << cfg.continual_train_task << "\n";
    os << "continual.use_kd = " << (cfg.continual_use_kd ? "true" : "false") << "\n";
  }
  if (cfg.scenario == Scenario::joint) {
    os << "joint.mode = " << joint_mode_name(cfg.joint_mode) << "\n";
  }
  os << "report.theta_fit = " << fmt_real(cfg.theta_fit) << "\n";
  os << "report.theta_gen = " << fmt_real(cfg.theta_gen) << "\n";
  return os.str();
}

std::string resolved_config_json(const ParsedConfig& parsed) {
  const ExperimentConfig& cfg = parsed.config;
  const Vocab vocab = cfg.build_vocab();
  nlohmann::json tasks = nlohmann::json::array();
  for (const TaskSpec& t : cfg.tasks) {
    tasks.push_back({{"distribution_id", t.distribution_id},
                     {"operator", mod_op_name(t.op)},
                     {"modulus", t.modulus},
                     {"fraction", cfg.fractions.at(t.distribution_id)}});
  }
  nlohmann::json j{
      {"scenario", scenario_name(cfg.scenario)},
      {"run_name", parsed.run_name},
      {"tasks", tasks},
      {"vocab",
       {{"extra_moduli", cfg.extra_vocab_moduli},
        {"moduli", vocab.moduli()},
        {"n_numeric", vocab.n_numeric()},
        {"size", vocab.size()}}},
      {"seeds", {{"data", cfg.data_seed}, {"init", cfg.init_seed}}},
      {"model",
       {{"n_layers", cfg.model.n_layers},
        {"d_model", cfg.model.d_model},
        {"n_heads", cfg.model.n_heads},
        {"d_mlp", cfg.model.d_mlp},
        {"vocab_size", vocab.size()},
        {"seq_len", cfg.model.seq_len},
        {"init_scale", cfg.model.init_scale}}},
      {"optimizer",
       {{"kind", optimizer_name(cfg.optimizer)},
        {"lr", cfg.optim.lr},
        {"beta1", cfg.optim.beta1},
        {"beta2", cfg.optim.beta2},
        {"eps", cfg.optim.eps},
        {"weight_decay", cfg.optim.weight_decay},
        {"clip_norm", cfg.optim.clip_norm},
        {"decay_exclude", cfg.optim.decay_exclude}}},
      {"loss",
       {{"alpha", cfg.loss.alpha},
        {"temperature", cfg.loss.temperature},
        {"kd_position", kd_position_name(cfg.loss.kd_position)},
        {"scaled_kl", cfg.loss.scaled_kl}}},
      {"train",
       {{"batch_size", cfg.batch_size},
        {"max_steps", cfg.max_steps},
        {"eval_every", cfg.eval_every}}},
      {"report", {{"theta_fit", cfg.theta_fit}, {"theta_gen", cfg.theta_gen}}},
  };
  if (!cfg.teacher_checkpoint.empty()) j["teacher_checkpoint"] = cfg.teacher_checkpoint;
  if (!cfg.joint_teachers.empty()) j["joint_teachers"] = cfg.joint_teachers;
  if (cfg.scenario == Scenario::joint) j["joint_mode"] = joint_mode_name(cfg.joint_mode);
  if (cfg.scenario == Scenario::continual) {
    j["init_checkpoint"] = cfg.init_checkpoint;
    j["continual"] = {{"train_task", cfg.continual_train_task}, {"use_kd", cfg.continual_use_kd}};
  }
  return j.dump(2) + "\n";
}

RunManifest build_manifest(ParsedConfig parsed, const std::string& out_root) {
  if (parsed.run_name.empty()) parsed.run_name = "run";
  RunManifest m;
  m.output_dir = parsed.output_dir.empty()
                     ? (std::filesystem::path(out_root) / parsed.run_name).string()
                     : parsed.output_dir;
  m.parsed = std::move(parsed);
  const std::filesystem::path dir(m.output_dir);
  m.metrics_csv_path = (dir / "metrics.csv").string();
  m.checkpoint_path = (dir / "checkpoint.grkd").string();
  m.report_json_path = (dir / "report.json").string();
  m.resolved_config_path = (dir / "config.resolved.json").string();
  return m;
}

RunResult execute_manifest(const RunManifest& manifest) {
  std::error_code ec;
  std::filesystem::create_directories(manifest.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + manifest.output_dir + "'");

  {
    std::ofstream out(manifest.resolved_config_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + manifest.resolved_config_path + "'");
    out << resolved_config_json(manifest.parsed);
  }

  RunResult result = run_experiment(manifest.parsed.config);

  metrics_save_csv(result.log, manifest.metrics_csv_path);
  checkpoint_save(result.final_params, result.meta, manifest.checkpoint_path);
  {
    std::ofstream out(manifest.report_json_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + manifest.report_json_path + "'");
    out << reports_to_json(result.log, manifest.parsed.config.theta_fit,
                           manifest.parsed.config.theta_gen);
  }
  return result;
}

}  // namespace grokkd
