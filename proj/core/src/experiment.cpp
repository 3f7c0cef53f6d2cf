#include "grokkd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "grokkd/ops.hpp"

namespace grokkd {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::scratch: return "scratch";
    case Scenario::kd_transfer: return "kd_transfer";
    case Scenario::joint: return "joint";
    case Scenario::continual: return "continual";
  }
  return "scratch";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "scratch") return Scenario::scratch;
  if (name == "kd_transfer") return Scenario::kd_transfer;
  if (name == "joint") return Scenario::joint;
  if (name == "continual") return Scenario::continual;
  throw ConfigError("unknown scenario '" + name + "'");
}

std::string joint_mode_name(JointMode m) { return m == JointMode::ce_joint ? "ce_joint" : "kd_only"; }

JointMode joint_mode_from_name(const std::string& name) {
  if (name == "ce_joint") return JointMode::ce_joint;
  if (name == "kd_only") return JointMode::kd_only;
  throw ConfigError("joint.mode must be ce_joint or kd_only, got '" + name + "'");
}

Vocab ExperimentConfig::build_vocab() const {
  std::vector<int> moduli;
  for (const TaskSpec& t : tasks) moduli.push_back(t.modulus);
  moduli.insert(moduli.end(), extra_vocab_moduli.begin(), extra_vocab_moduli.end());
  return Vocab::build(moduli);
}

const TaskSpec& ExperimentConfig::task(const std::string& distribution_id) const {
  for (const TaskSpec& t : tasks) {
    if (t.distribution_id == distribution_id) return t;
  }
  throw ConfigError("no task with distribution id '" + distribution_id + "'");
}

void ExperimentConfig::validate() const {
  if (tasks.empty() || tasks.size() > 2) {
    throw ConfigError("an experiment needs 1 or 2 tasks, got " + std::to_string(tasks.size()));
  }
  for (const TaskSpec& t : tasks) t.validate();
  if (tasks.size() == 2 && tasks[0].distribution_id == tasks[1].distribution_id) {
    throw ConfigError("task distribution ids must be distinct");
  }
  for (const TaskSpec& t : tasks) {
    auto it = fractions.find(t.distribution_id);
    if (it == fractions.end()) {
      throw ConfigError("missing train fraction for task '" + t.distribution_id + "'");
    }
    if (!(it->second > 0.0 && it->second < 1.0)) {
      throw ConfigError("task." + t.distribution_id + ".fraction must lie in (0,1)");
    }
  }
  for (int m : extra_vocab_moduli) {
    if (m < 2) throw ConfigError("vocab.extra_moduli entries must be >= 2");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  if (!(theta_fit > 0.0 && theta_fit <= 1.0) || !(theta_gen > 0.0 && theta_gen <= 1.0)) {
    throw ConfigError("report thresholds must lie in (0,1]");
  }
  loss.validate();
  optim.validate();

  switch (scenario) {
    case Scenario::scratch:
      if (tasks.size() != 1) throw ConfigError("scenario scratch trains exactly one task");
      break;
    case Scenario::kd_transfer:
      if (tasks.size() != 1) throw ConfigError("scenario kd_transfer trains exactly one task");
      if (teacher_checkpoint.empty()) {
        throw ConfigError("scenario kd_transfer requires teacher.checkpoint");
      }
      break;
    case Scenario::joint:
      if (tasks.size() != 2) throw ConfigError("scenario joint requires two tasks");
      if (joint_mode == JointMode::kd_only) {
        for (const TaskSpec& t : tasks) {
          if (!joint_teachers.count(t.distribution_id)) {
            throw ConfigError("joint.mode kd_only requires teacher." + t.distribution_id +
                              ".checkpoint");
          }
        }
      }
      break;
    case Scenario::continual:
      if (tasks.size() != 2) throw ConfigError("scenario continual requires two tasks");
      if (init_checkpoint.empty()) throw ConfigError("scenario continual requires init.checkpoint");
      if (continual_train_task.empty()) {
        throw ConfigError("scenario continual requires continual.train_task");
      }
      task(continual_train_task);  // throws when unknown
      break;
  }
}

namespace {

struct Teacher {
  ModelParams params;
  int native_modulus = 0;
};

struct TaskData {
  TaskSpec spec;
  SplitDataset dataset;
};

std::int32_t argmax_lowest(const float* row, std::int64_t k) {
  std::int32_t best = 0;
  float best_v = row[0];
  for (std::int64_t i = 1; i < k; ++i) {
    if (row[i] > best_v) {
      best_v = row[i];
      best = std::int32_t(i);
    }
  }
  return best;
}

// f64 per-row KL between temperature-softened rows of teacher/student logits.
double kl_row_f64(const float* teacher, const float* student, std::int64_t k, double t) {
  auto log_softmax_at = [&](const float* row, std::vector<double>& out) {
    double mx = row[0];
    for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, double(row[i]));
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) z += std::exp((double(row[i]) - mx) / t);
    const double logz = std::log(z);
    for (std::int64_t i = 0; i < k; ++i) out[std::size_t(i)] = (double(row[i]) - mx) / t - logz;
  };
  std::vector<double> lt(static_cast<std::size_t>(k)), ls(static_cast<std::size_t>(k));
  log_softmax_at(teacher, lt);
  log_softmax_at(student, ls);
  double acc = 0.0;
  for (std::int64_t i = 0; i < k; ++i) {
    const double q = std::exp(lt[std::size_t(i)]);
    acc += q * (lt[std::size_t(i)] - ls[std::size_t(i)]);
  }
  return acc;
}

// Stablemax cross-entropy of one answer-position row, in f64.
double stablemax_ce_row_f64(const float* row, std::int64_t k, std::int32_t label) {
  std::vector<double> g(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    const double x = double(row[i]);
    g[std::size_t(i)] = x >= 0.0 ? std::log1p(x) : -std::log1p(-x);
  }
  double mx = g[0];
  for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, g[std::size_t(i)]);
  double z = 0.0;
  for (std::int64_t i = 0; i < k; ++i) z += std::exp(g[std::size_t(i)] - mx);
  return -(g[std::size_t(label)] - mx - std::log(z));
}

std::vector<std::int64_t> kd_positions(KdPosition p) {
  switch (p) {
    case KdPosition::operator_token: return {kOperatorPosition};
    case KdPosition::answer: return {kAnswerPosition};
    case KdPosition::both: return {kOperatorPosition, kAnswerPosition};
  }
  return {kOperatorPosition};
}

constexpr std::int64_t kEvalChunk = 2048;

struct EvalOutput {
  double accuracy = 0.0;
  double mean_ce = 0.0;
  double mean_kl = 0.0;
};

// Chunked, deterministic full-set evaluation. teacher may be null.
EvalOutput eval_encoded(const ModelParams& model, const EncodedBatch& enc,
                        const std::vector<std::int32_t>* teacher_tokens, const Teacher* teacher,
                        const LossConfig& loss) {
  if (enc.batch == 0) throw ContractError("evaluate requires a nonempty dataset");
  const std::int64_t v = model.config().vocab_size;
  std::int64_t correct = 0;
  double ce_sum = 0.0;
  double kl_sum = 0.0;
  const auto positions = kd_positions(loss.kd_position);
  for (std::int64_t begin = 0; begin < enc.batch; begin += kEvalChunk) {
    const std::int64_t n = std::min(kEvalChunk, enc.batch - begin);
    std::span<const std::int32_t> tok(enc.tokens.data() + begin * 4, std::size_t(n * 4));
    Tensor logits = forward(model, tok, n, nullptr);
    if (!logits.all_finite()) throw NumericError("evaluation produced non-finite logits");
    const float* base = logits.data();
    Tensor t_logits;
    if (teacher) {
      std::span<const std::int32_t> ttok(teacher_tokens->data() + begin * 4, std::size_t(n * 4));
      t_logits = forward(teacher->params, ttok, n, nullptr);
      if (!t_logits.all_finite()) throw NumericError("teacher evaluation produced non-finite logits");
    }
    for (std::int64_t i = 0; i < n; ++i) {
      const float* ans = base + (i * 4 + kAnswerPosition) * v;
      const std::int32_t label = enc.labels[std::size_t(begin + i)];
      if (argmax_lowest(ans, v) == label) ++correct;
      ce_sum += stablemax_ce_row_f64(ans, v, label);
      if (teacher) {
        double kl = 0.0;
        for (std::int64_t pos : positions) {
          const float* srow = base + (i * 4 + pos) * v;
          const float* trow = t_logits.data() + (i * 4 + pos) * v;
          kl += kl_row_f64(trow, srow, v, loss.temperature);
        }
        kl_sum += kl / double(positions.size());
      }
    }
  }
  EvalOutput out;
  out.accuracy = double(correct) / double(enc.batch);
  out.mean_ce = ce_sum / double(enc.batch);
  out.mean_kl = kl_sum / double(enc.batch);
  return out;
}

struct EvalSet {
  std::string distribution;
  const char* split;
  EncodedBatch enc;
  std::vector<std::int32_t> teacher_tokens;
  const Teacher* teacher = nullptr;
};

struct TrainerSetup {
  ExperimentConfig cfg;
  Vocab vocab;
  std::vector<TaskData> tasks;                 // all tasks, config order
  std::vector<std::size_t> trained;            // indices into tasks
  ModelParams model;
  std::map<std::string, Teacher> teachers;     // by distribution id served
  double alpha_eff = 0.0;
  std::string scenario_str;
};

Teacher load_teacher_checkpoint(const std::string& path, const Vocab& vocab) {
  Checkpoint ck = checkpoint_load(path);
  if (ck.meta.vocab() != vocab) {
    std::string theirs;
    for (int m : ck.meta.vocab_moduli) theirs += std::to_string(m) + " ";
    std::string ours;
    for (int m : vocab.moduli()) ours += std::to_string(m) + " ";
    throw ConfigError("teacher checkpoint '" + path + "' vocabulary (moduli " + theirs +
                      ") does not match the experiment vocabulary (moduli " + ours +
                      "); teacher and student logit spaces must align");
  }
  if (ck.meta.tasks.empty()) {
    throw ConfigError("teacher checkpoint '" + path + "' records no task");
  }
  Teacher t;
  t.params = std::move(ck.params);
  t.params.set_requires_grad(false);
  t.native_modulus = ck.meta.tasks.front().modulus;
  return t;
}

RunResult train_loop(TrainerSetup setup) {
  const ExperimentConfig& cfg = setup.cfg;
  ModelParams& model = setup.model;
  model.set_requires_grad(true);

  // Training pool: trained tasks' train splits, task order.
  std::vector<Example> pool;
  std::vector<int> tag_of_row;  // index into setup.trained
  for (std::size_t gi = 0; gi < setup.trained.size(); ++gi) {
    const TaskData& td = setup.tasks[setup.trained[gi]];
    for (const Example& e : td.dataset.train) {
      pool.push_back(e);
      tag_of_row.push_back(int(gi));
    }
  }
  const EncodedBatch pool_enc = encode_batch(pool, setup.vocab);
  const std::int64_t pool_n = pool_enc.batch;
  const bool full_batch = pool_n <= cfg.batch_size;

  // Eval sets: every task, both splits, pre-encoded; KL reported against the
  // teacher serving that distribution, when one exists.
  std::vector<EvalSet> eval_sets;
  for (const TaskData& td : setup.tasks) {
    for (int si = 0; si < 2; ++si) {
      EvalSet es;
      es.distribution = td.spec.distribution_id;
      es.split = si == 0 ? "train" : "test";
      es.enc = encode_batch(si == 0 ? td.dataset.train : td.dataset.test, setup.vocab);
      // With a zero KL weight the run degenerates to label-only training and
      // must be indistinguishable from it, so skip teacher-side evaluation too.
      auto it = setup.teachers.find(td.spec.distribution_id);
      if (it != setup.teachers.end() && setup.alpha_eff > 0.0) {
        es.teacher = &it->second;
        es.teacher_tokens = remap_modulus_token(es.enc.tokens, setup.vocab, it->second.native_modulus);
      }
      eval_sets.push_back(std::move(es));
    }
  }

  MetricsLog log;
  auto run_eval = [&](std::int64_t step) {
    const double wnorm = param_l2_norm(model);
    for (EvalSet& es : eval_sets) {
      EvalOutput out;
      try {
        out = eval_encoded(model, es.enc, es.teacher ? &es.teacher_tokens : nullptr, es.teacher,
                           cfg.loss);
      } catch (const NumericError&) {
        throw NanAbortError("evaluation logits", step);
      }
      MetricsRow row;
      row.step = step;
      row.distribution = es.distribution;
      row.split = es.split;
      row.accuracy = out.accuracy;
      row.loss_ce = out.mean_ce;
      row.loss_kl = out.mean_kl;
      row.loss_total = (1.0 - setup.alpha_eff) * out.mean_ce + setup.alpha_eff * out.mean_kl;
      row.weight_l2 = wnorm;
      log.rows.push_back(std::move(row));
    }
  };

  AdamState state(model);
  std::mt19937_64 epoch_rng(cfg.data_seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::int64_t> order(static_cast<std::size_t>(pool_n));
  std::iota(order.begin(), order.end(), std::int64_t(0));
  std::int64_t cursor = 0;
  if (!full_batch) std::shuffle(order.begin(), order.end(), epoch_rng);

  // Per-step scratch for the shuffled-batch path.
  std::vector<std::int32_t> batch_tokens, batch_labels;
  std::vector<std::vector<std::int64_t>> group_rows(setup.trained.size());
  std::vector<std::vector<std::int32_t>> group_tokens(setup.trained.size());

  // Teachers per trained task (null when that task is trained on labels only).
  std::vector<const Teacher*> group_teacher(setup.trained.size(), nullptr);
  for (std::size_t gi = 0; gi < setup.trained.size(); ++gi) {
    auto it = setup.teachers.find(setup.tasks[setup.trained[gi]].spec.distribution_id);
    if (it != setup.teachers.end()) group_teacher[gi] = &it->second;
  }
  const double t_soft = cfg.loss.temperature;
  const double kl_weight_scale = cfg.loss.scaled_kl ? t_soft * t_soft : 1.0;
  const auto positions = kd_positions(cfg.loss.kd_position);

  run_eval(0);
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    // Assemble the batch.
    std::span<const std::int32_t> tokens;
    std::span<const std::int32_t> labels;
    std::int64_t bsz = 0;
    std::span<const std::int64_t> batch_rows;  // pool rows, shuffled path only
    if (full_batch) {
      tokens = pool_enc.tokens;
      labels = pool_enc.labels;
      bsz = pool_n;
    } else {
      const std::int64_t end = std::min(cursor + cfg.batch_size, pool_n);
      bsz = end - cursor;
      batch_tokens.resize(std::size_t(bsz * 4));
      batch_labels.resize(std::size_t(bsz));
      for (std::int64_t i = 0; i < bsz; ++i) {
        const std::int64_t r = order[std::size_t(cursor + i)];
        std::copy_n(pool_enc.tokens.begin() + r * 4, 4, batch_tokens.begin() + i * 4);
        batch_labels[std::size_t(i)] = pool_enc.labels[std::size_t(r)];
      }
      batch_rows = std::span<const std::int64_t>(order.data() + cursor, std::size_t(bsz));
      tokens = batch_tokens;
      labels = batch_labels;
      cursor = end;
      if (cursor == pool_n) {
        std::shuffle(order.begin(), order.end(), epoch_rng);
        cursor = 0;
      }
    }

    Tape tape;
    Tensor loss;
    try {
      Tensor logits = forward(model, tokens, bsz, &tape);

      Tensor ce, kl;
      if (setup.alpha_eff < 1.0) {
        Tensor ans = logits_at(logits, kAnswerPosition, &tape);
        ce = stablemax_ce(ans, labels, &tape);
      }
      if (setup.alpha_eff > 0.0) {
        // Group batch rows by trained task; single-task scenarios have one group.
        for (auto& g : group_rows) g.clear();
        if (setup.trained.size() == 1) {
          group_rows[0].resize(std::size_t(bsz));
          std::iota(group_rows[0].begin(), group_rows[0].end(), std::int64_t(0));
        } else {
          for (std::int64_t i = 0; i < bsz; ++i) {
            const std::int64_t pool_row = full_batch ? i : batch_rows[std::size_t(i)];
            group_rows[std::size_t(tag_of_row[std::size_t(pool_row)])].push_back(i);
          }
        }
        for (std::int64_t pos : positions) {
          Tensor student_pos = ops::select_position(logits, pos, &tape);
          for (std::size_t gi = 0; gi < setup.trained.size(); ++gi) {
            const Teacher* teacher = group_teacher[gi];
            if (!teacher || group_rows[gi].empty()) continue;
            const std::int64_t gn = std::int64_t(group_rows[gi].size());
            // Teacher sees the student inputs with the modulus token remapped
            // to its own training modulus.
            auto& ttok = group_tokens[gi];
            ttok.resize(std::size_t(gn * 4));
            const std::int32_t t_mod = setup.vocab.modulus_token(teacher->native_modulus);
            for (std::int64_t i = 0; i < gn; ++i) {
              const std::int64_t r = group_rows[gi][std::size_t(i)];
              std::copy_n(tokens.begin() + r * 4, 4, ttok.begin() + i * 4);
              ttok[std::size_t(i * 4 + 3)] = t_mod;
            }
            Tensor t_logits = forward(teacher->params, ttok, gn, nullptr);
            Tensor t_pos = ops::select_position(t_logits, pos, nullptr);
            Tensor s_pos = gn == bsz ? student_pos
                                     : ops::gather_rows(student_pos, group_rows[gi], &tape);
            Tensor kl_group = kl_distill(t_pos, s_pos, t_soft, &tape);
            const double weight = (double(gn) / double(bsz)) * kl_weight_scale /
                                  double(positions.size());
            Tensor weighted = ops::scale(kl_group, weight, &tape);
            kl = kl.defined() ? ops::add(kl, weighted, &tape) : weighted;
          }
        }
        if (!kl.defined()) kl = Tensor::scalar(0.0f);
      }

      if (setup.alpha_eff <= 0.0) {
        loss = ce;
      } else if (setup.alpha_eff >= 1.0) {
        loss = kl;
      } else {
        loss = total_loss(ce, kl, setup.alpha_eff, &tape);
      }
    } catch (const NumericError&) {
      throw NanAbortError("training activations", step);
    }
    if (!std::isfinite(loss.item())) throw NanAbortError("loss", step);

    model.zero_grad();
    tape.backward(loss);
    if (cfg.optimizer == OptimizerKind::adam) {
      adam_step(model, state, cfg.optim);
    } else {
      adamw_step(model, state, cfg.optim);
    }

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) run_eval(step);
  }

  RunResult result;
  result.log = std::move(log);
  result.meta.model = model.config();
  result.meta.vocab_moduli = setup.vocab.moduli();
  result.meta.tasks = cfg.tasks;
  result.meta.scenario = setup.scenario_str;
  for (const TaskData& td : setup.tasks) {
    result.reports.emplace(td.spec.distribution_id,
                           detect_grokking(result.log, td.spec.distribution_id, cfg.theta_fit,
                                           cfg.theta_gen));
  }
  result.final_params = std::move(model);
  return result;
}

TrainerSetup base_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainerSetup setup;
  setup.cfg = cfg;
  setup.vocab = cfg.build_vocab();
  setup.cfg.model.vocab_size = setup.vocab.size();
  setup.cfg.model.validate();
  for (const TaskSpec& t : cfg.tasks) {
    TaskData td;
    td.spec = t;
    td.dataset = split(enumerate_task(t), cfg.fractions.at(t.distribution_id), cfg.data_seed);
    setup.tasks.push_back(std::move(td));
  }
  setup.scenario_str = scenario_name(cfg.scenario);
  return setup;
}

}  // namespace

double accuracy_from_logits(const Tensor& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != std::int64_t(labels.size())) {
    throw DimensionError("accuracy_from_logits expects [B,K] logits with B labels");
  }
  const std::int64_t b = logits.dim(0), k = logits.dim(1);
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < b; ++i) {
    if (argmax_lowest(logits.data() + i * k, k) == labels[std::size_t(i)]) ++correct;
  }
  return double(correct) / double(b);
}

EvalResult evaluate(const ModelParams& model, const std::vector<Example>& examples,
                    const Vocab& vocab) {
  if (examples.empty()) throw ContractError("evaluate requires a nonempty dataset");
  const EncodedBatch enc = encode_batch(examples, vocab);
  LossConfig loss;  // no teacher: only accuracy and CE are produced
  const EvalOutput out = eval_encoded(model, enc, nullptr, nullptr, loss);
  return EvalResult{out.accuracy, out.mean_ce, out.mean_kl};
}

RunResult run_scratch(const ExperimentConfig& cfg) {
  if (cfg.scenario != Scenario::scratch) throw ConfigError("run_scratch requires scenario=scratch");
  TrainerSetup setup = base_setup(cfg);
  setup.trained = {0};
  setup.model = init_model(setup.cfg.model, cfg.init_seed);
  setup.alpha_eff = 0.0;  // label cross-entropy only
  return train_loop(std::move(setup));
}

RunResult run_kd_transfer(const ExperimentConfig& cfg) {
  if (cfg.scenario != Scenario::kd_transfer) {
    throw ConfigError("run_kd_transfer requires scenario=kd_transfer");
  }
  TrainerSetup setup = base_setup(cfg);
  setup.trained = {0};
  Teacher teacher = load_teacher_checkpoint(cfg.teacher_checkpoint, setup.vocab);
  const int p_student = cfg.tasks[0].modulus;
  if (p_student > teacher.native_modulus) {
    throw ConfigError("kd_transfer requires the student modulus (" + std::to_string(p_student) +
                      ") to be <= the teacher modulus (" + std::to_string(teacher.native_modulus) +
                      ") for token coverage");
  }
  setup.model = init_model(setup.cfg.model, cfg.init_seed);
  setup.alpha_eff = cfg.loss.alpha;
  setup.teachers.emplace(cfg.tasks[0].distribution_id, std::move(teacher));
  return train_loop(std::move(setup));
}

RunResult run_joint(const ExperimentConfig& cfg) {
  if (cfg.scenario != Scenario::joint) throw ConfigError("run_joint requires scenario=joint");
  TrainerSetup setup = base_setup(cfg);
  setup.trained = {0, 1};
  setup.model = init_model(setup.cfg.model, cfg.init_seed);
  if (cfg.joint_mode == JointMode::kd_only) {
    setup.alpha_eff = 1.0;
    for (const TaskSpec& t : cfg.tasks) {
      Teacher teacher = load_teacher_checkpoint(cfg.joint_teachers.at(t.distribution_id), setup.vocab);
      if (teacher.native_modulus != t.modulus) {
        throw ConfigError("joint teacher for '" + t.distribution_id + "' was trained on modulus " +
                          std::to_string(teacher.native_modulus) + ", expected " +
                          std::to_string(t.modulus));
      }
      setup.teachers.emplace(t.distribution_id, std::move(teacher));
    }
  } else {
    setup.alpha_eff = 0.0;
  }
  return train_loop(std::move(setup));
}

RunResult run_continual(const ExperimentConfig& cfg) {
  if (cfg.scenario != Scenario::continual) {
    throw ConfigError("run_continual requires scenario=continual");
  }
  TrainerSetup setup = base_setup(cfg);
  Checkpoint init = checkpoint_load(cfg.init_checkpoint);
  if (init.meta.vocab() != setup.vocab) {
    throw ConfigError("continual init checkpoint vocabulary does not match the experiment (" +
                      cfg.init_checkpoint + ")");
  }
  if (!(init.meta.model == setup.cfg.model)) {
    throw ConfigError("continual init checkpoint model configuration does not match the experiment");
  }
  for (const TaskSpec& ct : init.meta.tasks) {
    bool found = false;
    for (const TaskSpec& t : cfg.tasks) {
      found = found || (t.modulus == ct.modulus && t.op == ct.op);
    }
    if (!found) {
      throw ConfigError("continual init checkpoint task (modulus " + std::to_string(ct.modulus) +
                        ") is not among the experiment tasks");
    }
  }
  for (std::size_t i = 0; i < setup.tasks.size(); ++i) {
    if (setup.tasks[i].spec.distribution_id == cfg.continual_train_task) setup.trained = {i};
  }
  if (cfg.continual_use_kd) {
    Teacher teacher;
    teacher.params = init.params.clone();
    teacher.params.set_requires_grad(false);
    if (init.meta.tasks.empty()) {
      throw ConfigError("continual init checkpoint records no task");
    }
    teacher.native_modulus = init.meta.tasks.front().modulus;
    setup.teachers.emplace(cfg.continual_train_task, std::move(teacher));
    setup.alpha_eff = cfg.loss.alpha;
  } else {
    setup.alpha_eff = 0.0;
  }
  setup.model = std::move(init.params);
  return train_loop(std::move(setup));
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.scenario) {
    case Scenario::scratch: return run_scratch(cfg);
    case Scenario::kd_transfer: return run_kd_transfer(cfg);
    case Scenario::joint: return run_joint(cfg);
    case Scenario::continual: return run_continual(cfg);
  }
  throw ConfigError("unknown scenario");
}

}  // namespace grokkd
