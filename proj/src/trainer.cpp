#include "mt6/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "mt6/error.hpp"
#include "mt6/pnat.hpp"

namespace mt6 {

namespace {

// Seed streams; distinct constants keep the draws of each role independent.
constexpr uint64_t kStreamMono = 0x534301;
constexpr uint64_t kStreamCross = 0x584c02;
constexpr uint64_t kStreamFinetune = 0x465403;

}  // namespace

double LearningRate(uint64_t step, const OptimizerConfig& hp) {
  if (hp.total_steps <= hp.warmup_steps) {
    Fail(ErrorKind::kInvalidArgument, "total_steps must exceed warmup_steps");
  }
  if (step < hp.warmup_steps) {
    return hp.base_lr * static_cast<double>(step) / static_cast<double>(hp.warmup_steps);
  }
  if (step >= hp.total_steps) return 0.0;
  return hp.base_lr * static_cast<double>(hp.total_steps - step) /
         static_cast<double>(hp.total_steps - hp.warmup_steps);
}

OptimizerState MakeOptimizerState(const OptimizerConfig& hp, const ParameterSet& params) {
  LearningRate(0, hp);  // validates the schedule
  Require(hp.beta1 >= 0 && hp.beta1 < 1 && hp.beta2 >= 0 && hp.beta2 < 1, "Adam betas in [0, 1)");
  Require(hp.eps > 0 && hp.clip_norm > 0, "eps and clip_norm must be positive");
  OptimizerState s;
  s.hp = hp;
  s.m = params.ZerosLike();
  s.v = params.ZerosLike();
  return s;
}

AdamStepInfo AdamStep(ParameterSet& params, const ParameterSet& grads, OptimizerState& opt) {
  Require(params.SameLayout(grads) && params.SameLayout(opt.m) && params.SameLayout(opt.v),
          "parameter, gradient and moment layouts differ");
  if (!grads.AllFinite()) Fail(ErrorKind::kNumeric, "non-finite gradient");
  AdamStepInfo info;
  info.grad_norm = std::sqrt(grads.SquaredNorm());
  if (info.grad_norm > opt.hp.clip_norm) info.clip_scale = opt.hp.clip_norm / info.grad_norm;
  opt.t += 1;
  info.lr = LearningRate(opt.t, opt.hp);
  const double b1 = opt.hp.beta1, b2 = opt.hp.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i).data;
    const auto& g = grads.at(i).data;
    auto& m = opt.m.at(i).data;
    auto& v = opt.v.at(i).data;
    for (size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k] * info.clip_scale;
      m[k] = b1 * m[k] + (1.0 - b1) * gk;
      v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= info.lr * mhat / (std::sqrt(vhat) + opt.hp.eps);
    }
  }
  return info;
}

std::string MetricsCsvHeader() { return "step,lr,loss_total,loss_sc,loss_x,grad_norm\n"; }

std::string MetricsCsvRow(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                static_cast<unsigned long long>(m.step), m.lr, m.loss_total, m.loss_sc, m.loss_x,
                m.grad_norm);
  return buf;
}

void PretrainPlan::Validate() const {
  Require(n_groups >= 1, "n_groups must be >= 1");
  Require(batch_size >= 1, "batch_size must be >= 1");
  Require(steps >= 1, "steps must be >= 1");
  Require(corruption.noise_density > 0 && corruption.noise_density <= 1,
          "noise density must be in (0, 1]");
  Require(corruption.mean_span_len >= 1, "mean_span_len must be >= 1");
  Require(!cross_task || *cross_task != Task::kSC, "cross-lingual task must be MT, TPSC or TSC");
  model.Validate();
  LearningRate(0, optimizer);
}

TrainingExample BuildExample(Task task, const Vocabulary& vocab, const TokenIds& e,
                             const TokenIds& f, const CorruptionOptions& opts, size_t n_groups,
                             Rng& rng) {
  TrainingExample ex;
  switch (task) {
    case Task::kSC: ex = MakeSpanCorruption(vocab, e, opts, rng); break;
    case Task::kMT: ex = MakeTranslation(e, f); break;
    case Task::kTPSC: ex = MakeTranslationPairSpanCorruption(vocab, e, f, opts, rng); break;
    case Task::kTSC: ex = MakeTranslationSpanCorruption(vocab, e, f, opts, rng); break;
  }
  ex.groups = PartitionGroups(ex, n_groups);
  return ex;
}

namespace {

std::vector<uint64_t> MonoSizes(const PretrainData& data) {
  std::vector<uint64_t> s;
  for (const auto& c : data.monolingual) s.push_back(c.sentences.size());
  return s;
}

std::vector<uint64_t> ParallelSizes(const PretrainData& data) {
  std::vector<uint64_t> s;
  for (const auto& c : data.parallel) s.push_back(c.pairs.size());
  return s;
}

}  // namespace

std::vector<TrainingExample> DrawMonolingualBatch(const PretrainPlan& plan, const PretrainData& data,
                                                  const Vocabulary& vocab, uint64_t step) {
  Require(!data.monolingual.empty(), "span corruption needs a monolingual corpus");
  const SamplingDistribution dist = MakeSamplingDistribution(MonoSizes(data), plan.alpha);
  std::vector<TrainingExample> batch;
  batch.reserve(plan.batch_size);
  for (size_t b = 0; b < plan.batch_size; ++b) {
    Rng rng(MixSeed(plan.seed, kStreamMono, step * plan.batch_size + b));
    const auto& corpus = data.monolingual[rng.Categorical(dist.weights)];
    const TokenIds& s = corpus.sentences[rng.Below(corpus.sentences.size())];
    batch.push_back(BuildExample(Task::kSC, vocab, s, {}, plan.corruption, plan.n_groups, rng));
  }
  return batch;
}

std::vector<TrainingExample> DrawCrossLingualBatch(const PretrainPlan& plan,
                                                   const PretrainData& data,
                                                   const Vocabulary& vocab, uint64_t step) {
  Require(plan.cross_task.has_value(), "no cross-lingual task configured");
  if (data.parallel.empty()) {
    Fail(ErrorKind::kState, std::string("task ") + TaskName(*plan.cross_task) +
                                " needs a parallel corpus");
  }
  const SamplingDistribution dist = MakeSamplingDistribution(ParallelSizes(data), plan.alpha);
  std::vector<TrainingExample> batch;
  batch.reserve(plan.batch_size);
  for (size_t b = 0; b < plan.batch_size; ++b) {
    Rng rng(MixSeed(plan.seed, kStreamCross, step * plan.batch_size + b));
    const auto& corpus = data.parallel[rng.Categorical(dist.weights)];
    const SentencePair& pair = corpus.pairs[rng.Below(corpus.pairs.size())];
    batch.push_back(
        BuildExample(*plan.cross_task, vocab, pair.e, pair.f, plan.corruption, plan.n_groups, rng));
  }
  return batch;
}

Checkpoint Pretrain(const PretrainPlan& plan, const PretrainData& data, const Vocabulary& vocab,
                    const Checkpoint* resume, const TrainCallbacks& callbacks) {
  plan.Validate();
  Require(plan.model.vocab_size == static_cast<int>(vocab.size()),
          "model vocab_size differs from the vocabulary");
  Require(!data.monolingual.empty(), "span corruption needs a monolingual corpus");
  if (plan.cross_task && data.parallel.empty()) {
    Fail(ErrorKind::kState, std::string("task ") + TaskName(*plan.cross_task) +
                                " needs a parallel corpus");
  }
  const Transformer model(plan.model);

  Checkpoint ckpt;
  if (resume) {
    if (resume->vocab_fingerprint != vocab.Fingerprint()) {
      Fail(ErrorKind::kState, "checkpoint was trained with a different vocabulary");
    }
    Require(resume->model == plan.model, "checkpoint model shape differs from the plan");
    if (resume->phase != "pretrain") Fail(ErrorKind::kState, "can only resume a pretraining checkpoint");
    ckpt = *resume;
    ckpt.optimizer.hp = plan.optimizer;
  } else {
    ckpt.model = plan.model;
    ckpt.vocab_fingerprint = vocab.Fingerprint();
    ckpt.phase = "pretrain";
    ckpt.params = model.InitParams(plan.seed);
    ckpt.optimizer = MakeOptimizerState(plan.optimizer, ckpt.params);
  }
  ckpt.extra["pretrain.cross_task"] = plan.cross_task ? TaskName(*plan.cross_task) : "none";
  ckpt.extra["pretrain.n_groups"] = std::to_string(plan.n_groups);

  while (ckpt.optimizer.t < plan.steps) {
    const uint64_t step = ckpt.optimizer.t;  // 0-based index of the step being taken
    const auto sc_batch = DrawMonolingualBatch(plan, data, vocab, step);
    LossAndGrads sc = ComputeLossAndGrads(model, ckpt.params, sc_batch, plan.threads);
    StepMetrics m;
    m.loss_sc = sc.loss;
    if (plan.cross_task) {
      const auto x_batch = DrawCrossLingualBatch(plan, data, vocab, step);
      LossAndGrads x = ComputeLossAndGrads(model, ckpt.params, x_batch, plan.threads);
      m.loss_x = x.loss;
      sc.grads.Accumulate(x.grads);
    }
    m.loss_total = m.loss_sc + m.loss_x;
    const AdamStepInfo info = AdamStep(ckpt.params, sc.grads, ckpt.optimizer);
    m.step = ckpt.optimizer.t;
    m.lr = info.lr;
    m.grad_norm = info.grad_norm;
    if (callbacks.on_step) callbacks.on_step(m);
    const bool scheduled = plan.checkpoint_every > 0 && m.step % plan.checkpoint_every == 0;
    if (callbacks.on_checkpoint && (scheduled || m.step == plan.steps)) callbacks.on_checkpoint(ckpt);
  }
  return ckpt;
}

Checkpoint Finetune(const Checkpoint& start, const Vocabulary& vocab,
                    const std::vector<TrainingExample>& dataset, const FinetunePlan& plan,
                    const TrainCallbacks& callbacks) {
  Require(!dataset.empty(), "empty fine-tuning dataset");
  Require(plan.batch_size >= 1 && plan.steps >= 1, "batch_size and steps must be >= 1");
  if (start.vocab_fingerprint != vocab.Fingerprint() ||
      start.model.vocab_size != static_cast<int>(vocab.size())) {
    Fail(ErrorKind::kState, "checkpoint was trained with a different vocabulary");
  }
  const Transformer model(start.model);
  Require(model.Matches(start.params), "checkpoint parameters do not match its model shape");

  Checkpoint ckpt = start;
  if (plan.resume) {
    if (start.phase != "finetune") Fail(ErrorKind::kState, "can only resume a fine-tuning checkpoint");
    ckpt.optimizer.hp = plan.optimizer;
  } else {
    ckpt.phase = "finetune";
    ckpt.optimizer = MakeOptimizerState(plan.optimizer, ckpt.params);
  }

  // Single group everywhere: plain teacher forcing.
  std::vector<TrainingExample> data = dataset;
  for (auto& ex : data) ex.groups = SingleGroup(ex.target.size());

  while (ckpt.optimizer.t < plan.steps) {
    const uint64_t step = ckpt.optimizer.t;
    std::vector<TrainingExample> batch;
    for (size_t b = 0; b < plan.batch_size; ++b) {
      Rng rng(MixSeed(plan.seed, kStreamFinetune, step * plan.batch_size + b));
      batch.push_back(data[rng.Below(data.size())]);
    }
    LossAndGrads lg = ComputeLossAndGrads(model, ckpt.params, batch, plan.threads);
    const AdamStepInfo info = AdamStep(ckpt.params, lg.grads, ckpt.optimizer);
    StepMetrics m;
    m.step = ckpt.optimizer.t;
    m.lr = info.lr;
    m.loss_total = lg.loss;
    m.loss_x = lg.loss;
    m.grad_norm = info.grad_norm;
    if (callbacks.on_step) callbacks.on_step(m);
    const bool scheduled = plan.checkpoint_every > 0 && m.step % plan.checkpoint_every == 0;
    if (callbacks.on_checkpoint && (scheduled || m.step == plan.steps)) callbacks.on_checkpoint(ckpt);
  }
  return ckpt;
}

}  // namespace mt6
