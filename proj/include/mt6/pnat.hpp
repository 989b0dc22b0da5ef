#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mt6/corruption.hpp"

namespace mt6 {

// Splits the target into n_groups runs of consecutive spans. When n_groups
// does not divide the span count m, the first (m mod n_groups) groups take
// one extra span; n_groups is clamped to m. MT targets, which carry no
// sentinels, are split into near-equal contiguous token segments instead.
GroupPartition PartitionGroups(const TrainingExample& example, size_t n_groups);

// Single group covering [0, len): ordinary teacher forcing.
GroupPartition SingleGroup(size_t len);

// Throws unless the ranges tile [0, len) in order.
void ValidatePartition(const GroupPartition& p, size_t len);

// Decoder self-attention pattern for a partition: query i may attend to key
// k iff both lie in the same group and k <= i.
class AttentionMaskSpec {
 public:
  AttentionMaskSpec() = default;
  explicit AttentionMaskSpec(std::vector<size_t> group_begin)
      : group_begin_(std::move(group_begin)) {}

  static AttentionMaskSpec Causal(size_t len);

  size_t size() const { return group_begin_.size(); }
  bool Allowed(size_t query, size_t key) const {
    return key <= query && key >= group_begin_[query];
  }
  // First key visible to a query.
  size_t FirstKey(size_t query) const { return group_begin_[query]; }
  bool IsGroupStart(size_t pos) const { return group_begin_[pos] == pos; }

  std::vector<std::vector<bool>> Materialize() const;

 private:
  std::vector<size_t> group_begin_;
};

AttentionMaskSpec BuildDecoderMask(const GroupPartition& p, size_t target_len);

// Shift-right decoder inputs under a mask: a group's first position sees the
// decoder start token <bos>, every other position sees the previous target.
TokenIds DecoderInputs(const TokenIds& target, const AttentionMaskSpec& mask);

// -sum_j sum_{i in group j} log p(y_i | x, y_{l_j..i-1}); log_probs is a
// row-major |target| x vocab_size table produced under the matching mask.
double PnatLoss(std::span<const double> log_probs, size_t vocab_size, const TokenIds& target,
                const GroupPartition& partition);

// Plain teacher-forcing negative log likelihood.
double SequenceNll(std::span<const double> log_probs, size_t vocab_size, const TokenIds& target);

}  // namespace mt6
