#include "mt6/pnat.hpp"

#include <algorithm>
#include <string>

#include "mt6/error.hpp"

namespace mt6 {

namespace {

std::vector<size_t> BalancedSizes(size_t total, size_t parts) {
  std::vector<size_t> sizes(parts, total / parts);
  for (size_t j = 0; j < total % parts; ++j) ++sizes[j];
  return sizes;
}

}  // namespace

GroupPartition SingleGroup(size_t len) {
  Require(len > 0, "empty target");
  return GroupPartition{{{0, len}}};
}

GroupPartition PartitionGroups(const TrainingExample& example, size_t n_groups) {
  Require(n_groups >= 1, "group count must be >= 1");
  const size_t len = example.target.size();
  Require(len > 0, "empty target");
  GroupPartition p;

  if (example.task == Task::kMT) {
    const size_t g = std::min(n_groups, len);
    size_t begin = 0;
    for (size_t size : BalancedSizes(len, g)) {
      p.ranges.push_back({begin, begin + size});
      begin += size;
    }
    return p;
  }

  const auto& starts = example.span_starts;
  Require(!starts.empty(), "span task without span starts");
  Require(starts.front() == 0, "first span must start at target position 0");
  for (size_t k = 1; k < starts.size(); ++k) {
    Require(starts[k] > starts[k - 1], "span starts must be strictly increasing");
  }
  Require(starts.back() < len, "span start beyond target");
  const size_t g = std::min(n_groups, starts.size());
  size_t span = 0;
  for (size_t size : BalancedSizes(starts.size(), g)) {
    const size_t begin = starts[span];
    span += size;
    const size_t end = span < starts.size() ? starts[span] : len;
    p.ranges.push_back({begin, end});
  }
  return p;
}

void ValidatePartition(const GroupPartition& p, size_t len) {
  Require(!p.ranges.empty(), "partition has no groups");
  size_t expect = 0;
  for (const auto& r : p.ranges) {
    Require(r.begin == expect && r.end > r.begin, "partition ranges must tile the target");
    expect = r.end;
  }
  Require(expect == len, "partition covers " + std::to_string(expect) + " of " +
                             std::to_string(len) + " target positions");
}

AttentionMaskSpec AttentionMaskSpec::Causal(size_t len) {
  return AttentionMaskSpec(std::vector<size_t>(len, 0));
}

std::vector<std::vector<bool>> AttentionMaskSpec::Materialize() const {
  std::vector<std::vector<bool>> m(size(), std::vector<bool>(size(), false));
  for (size_t i = 0; i < size(); ++i) {
    for (size_t k = 0; k < size(); ++k) m[i][k] = Allowed(i, k);
  }
  return m;
}

AttentionMaskSpec BuildDecoderMask(const GroupPartition& p, size_t target_len) {
  ValidatePartition(p, target_len);
  std::vector<size_t> begin(target_len);
  for (const auto& r : p.ranges) {
    for (size_t i = r.begin; i < r.end; ++i) begin[i] = r.begin;
  }
  return AttentionMaskSpec(std::move(begin));
}

TokenIds DecoderInputs(const TokenIds& target, const AttentionMaskSpec& mask) {
  Require(mask.size() == target.size(), "mask and target lengths differ");
  TokenIds in(target.size());
  for (size_t i = 0; i < target.size(); ++i) {
    in[i] = mask.IsGroupStart(i) ? Vocabulary::kBos : target[i - 1];
  }
  return in;
}

double SequenceNll(std::span<const double> log_probs, size_t vocab_size, const TokenIds& target) {
  Require(log_probs.size() == target.size() * vocab_size,
          "log-prob table does not match target length");
  double loss = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    const TokenId y = target[i];
    Require(y >= 0 && static_cast<size_t>(y) < vocab_size, "target id out of range");
    loss -= log_probs[i * vocab_size + static_cast<size_t>(y)];
  }
  return loss;
}

double PnatLoss(std::span<const double> log_probs, size_t vocab_size, const TokenIds& target,
                const GroupPartition& partition) {
  Require(log_probs.size() == target.size() * vocab_size,
          "log-prob table does not match target length");
  ValidatePartition(partition, target.size());
  double loss = 0.0;
  for (const auto& r : partition.ranges) {
    for (size_t i = r.begin; i < r.end; ++i) {
      const TokenId y = target[i];
      Require(y >= 0 && static_cast<size_t>(y) < vocab_size, "target id out of range");
      loss -= log_probs[i * vocab_size + static_cast<size_t>(y)];
    }
  }
  return loss;
}

}  // namespace mt6
