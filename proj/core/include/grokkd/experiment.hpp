#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "grokkd/checkpoint.hpp"
#include "grokkd/data.hpp"
#include "grokkd/losses.hpp"
#include "grokkd/metrics.hpp"
#include "grokkd/model.hpp"
#include "grokkd/optim.hpp"

namespace grokkd {

enum class Scenario { scratch, kd_transfer, joint, continual };
enum class JointMode { ce_joint, kd_only };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);
std::string joint_mode_name(JointMode m);
JointMode joint_mode_from_name(const std::string& name);

// Full declarative description of one run. Tasks are kept in ascending
// distribution-id order; fractions are per task.
struct ExperimentConfig {
  Scenario scenario = Scenario::scratch;
  std::vector<TaskSpec> tasks;
  std::map<std::string, double> fractions;
  std::vector<int> extra_vocab_moduli;  // reserve tokens for later distillation partners
  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
  ModelConfig model;  // vocab_size is derived from the vocabulary
  OptimizerKind optimizer = OptimizerKind::adamw;
  OptimConfig optim;
  LossConfig loss;
  std::int64_t batch_size = 2048;
  std::int64_t max_steps = 15000;
  std::int64_t eval_every = 50;
  std::string teacher_checkpoint;                      // kd_transfer
  std::map<std::string, std::string> joint_teachers;   // distribution id -> path
  JointMode joint_mode = JointMode::ce_joint;
  std::string init_checkpoint;     // continual starting weights
  std::string continual_train_task;  // distribution id of the current task
  bool continual_use_kd = true;
  double theta_fit = 0.99;
  double theta_gen = 0.95;

  Vocab build_vocab() const;  // tasks plus extra moduli
  void validate() const;
  const TaskSpec& task(const std::string& distribution_id) const;

  bool operator==(const ExperimentConfig&) const = default;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_ce = 0.0;
  double mean_kl = 0.0;
};

// Accuracy is the fraction of examples whose answer-position argmax equals
// the label (ties break to the lowest token id); mean_ce is the stablemax
// cross-entropy at the answer position. Throws ContractError on an empty
// dataset.
EvalResult evaluate(const ModelParams& model, const std::vector<Example>& examples,
                    const Vocab& vocab);

// The accuracy rule by itself: argmax per [B,K] row, ties to the lowest id.
double accuracy_from_logits(const Tensor& logits, std::span<const std::int32_t> labels);

struct RunResult {
  MetricsLog log;
  ModelParams final_params;
  CheckpointMeta meta;
  std::map<std::string, GrokkingReport> reports;
};

RunResult run_scratch(const ExperimentConfig& config);
RunResult run_kd_transfer(const ExperimentConfig& config);
RunResult run_joint(const ExperimentConfig& config);
RunResult run_continual(const ExperimentConfig& config);
RunResult run_experiment(const ExperimentConfig& config);  // dispatch on scenario

}  // namespace grokkd
