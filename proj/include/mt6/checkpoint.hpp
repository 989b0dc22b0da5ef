#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mt6/model.hpp"
#include "mt6/params.hpp"

namespace mt6 {

struct OptimizerConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double clip_norm = 1.0;
  uint64_t warmup_steps = 100;
  uint64_t total_steps = 2000;
};

struct OptimizerState {
  OptimizerConfig hp;
  uint64_t t = 0;
  ParameterSet m;
  ParameterSet v;
};

// Versioned binary container:
//   "MT6CKPT\n" | u32 version | u32 #meta | (str key, str value)* |
//   u32 #arrays | (str name, u32 ndim, u64 dims[ndim], f64 data[])*
// Strings are u32 length + bytes; all integers and doubles little-endian.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  ModelConfig model;
  uint64_t vocab_fingerprint = 0;
  std::string phase;  // "pretrain" or "finetune"
  ParameterSet params;
  OptimizerState optimizer;
  std::map<std::string, std::string> extra;

  std::string Serialize() const;
  static Checkpoint Deserialize(const std::string& bytes);
  void Save(const std::string& path) const;
  static Checkpoint Load(const std::string& path);
};

}  // namespace mt6
