#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mt6/checkpoint.hpp"
#include "mt6/corpus.hpp"
#include "mt6/corruption.hpp"
#include "mt6/model.hpp"

namespace mt6 {

// Linear warmup from 0 to base_lr over warmup_steps, then linear decay to 0
// at total_steps.
double LearningRate(uint64_t step, const OptimizerConfig& hp);

OptimizerState MakeOptimizerState(const OptimizerConfig& hp, const ParameterSet& params);

struct AdamStepInfo {
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
  double clip_scale = 1.0;
};

// Global-norm clipping, then one bias-corrected Adam update at step t + 1.
AdamStepInfo AdamStep(ParameterSet& params, const ParameterSet& grads, OptimizerState& opt);

struct StepMetrics {
  uint64_t step = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_sc = 0.0;
  double loss_x = 0.0;
  double grad_norm = 0.0;
};

std::string MetricsCsvHeader();
std::string MetricsCsvRow(const StepMetrics& m);

struct PretrainPlan {
  std::optional<Task> cross_task;  // nullopt: SC only
  size_t n_groups = 3;
  CorruptionOptions corruption;
  size_t batch_size = 16;
  uint64_t steps = 2000;
  uint64_t seed = 1;
  double alpha = 0.7;
  uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  OptimizerConfig optimizer;
  ModelConfig model;
  int threads = 1;

  void Validate() const;
};

struct PretrainData {
  std::vector<MonolingualCorpus> monolingual;
  std::vector<ParallelCorpus> parallel;
};

struct TrainCallbacks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

// Example builders used by the training loops; exposed so that dumps and
// tests see exactly what a given (seed, step) trains on.
std::vector<TrainingExample> DrawMonolingualBatch(const PretrainPlan& plan, const PretrainData& data,
                                                  const Vocabulary& vocab, uint64_t step);
std::vector<TrainingExample> DrawCrossLingualBatch(const PretrainPlan& plan,
                                                   const PretrainData& data,
                                                   const Vocabulary& vocab, uint64_t step);

// Builds one example of `task` from a monolingual sentence (SC) or a pair,
// with groups filled for n_groups.
TrainingExample BuildExample(Task task, const Vocabulary& vocab, const TokenIds& e,
                             const TokenIds& f, const CorruptionOptions& opts, size_t n_groups,
                             Rng& rng);

// Joint objective: every step sums the PNAT loss of one SC batch and one
// batch of the cross-lingual task, then takes one optimizer step. Passing a
// checkpoint resumes from its step and optimizer state.
Checkpoint Pretrain(const PretrainPlan& plan, const PretrainData& data, const Vocabulary& vocab,
                    const Checkpoint* resume = nullptr, const TrainCallbacks& callbacks = {});

struct FinetunePlan {
  size_t batch_size = 8;
  uint64_t steps = 500;
  uint64_t seed = 1;
  OptimizerConfig optimizer;
  uint64_t checkpoint_every = 0;
  bool resume = false;  // continue the checkpoint's fine-tuning optimizer state
  int threads = 1;
};

// Fine-tuning always decodes with a single group (plain teacher forcing),
// whatever group count pretraining used.
Checkpoint Finetune(const Checkpoint& start, const Vocabulary& vocab,
                    const std::vector<TrainingExample>& dataset, const FinetunePlan& plan,
                    const TrainCallbacks& callbacks = {});

}  // namespace mt6
