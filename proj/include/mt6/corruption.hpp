#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "mt6/rng.hpp"
#include "mt6/vocab.hpp"

namespace mt6 {

enum class Task { kSC, kMT, kTPSC, kTSC };

const char* TaskName(Task task);
Task ParseTask(const std::string& name);  // case-insensitive "sc", "mt", ...

struct Span {
  size_t start = 0;
  size_t len = 0;
  bool operator==(const Span&) const = default;
};

// Sorted, disjoint, non-touching spans over a sentence of sentence_len tokens.
struct SpanMaskPlan {
  size_t sentence_len = 0;
  std::vector<Span> spans;

  size_t masked() const;
  // Throws unless the invariants hold.
  void Validate(size_t max_spans = std::numeric_limits<size_t>::max()) const;
};

// Half-open target range [begin, end).
struct GroupRange {
  size_t begin = 0;
  size_t end = 0;
  bool operator==(const GroupRange&) const = default;
};

struct GroupPartition {
  std::vector<GroupRange> ranges;
  size_t n_groups() const { return ranges.size(); }
};

struct TrainingExample {
  Task task = Task::kSC;
  TokenIds input;
  TokenIds target;
  std::vector<size_t> span_starts;
  GroupPartition groups;
};

// Masked count = max(1, round(len * noise_density)); span count =
// max(1, round(masked / mean_span_len)) clamped so the spans fit with a gap
// between neighbours and within max_spans. Span lengths and gaps are uniform
// random compositions.
SpanMaskPlan SampleSpans(size_t len, double noise_density, size_t mean_span_len, Rng& rng,
                         size_t max_spans = std::numeric_limits<size_t>::max());

// g_i: k-th span replaced by sentinel [M_k].
TokenIds ApplyInputCorruption(const Vocabulary& vocab, const TokenIds& s,
                              const SpanMaskPlan& plan);
// g_o: [M_1] span_1 [M_2] span_2 ...
TokenIds ApplyTargetCorruption(const Vocabulary& vocab, const TokenIds& s,
                               const SpanMaskPlan& plan);

// Inverse of the pair above: splices target spans back into the input.
TokenIds Reconstruct(const Vocabulary& vocab, const TokenIds& corrupted_input,
                     const TokenIds& span_target);

// Indices in a target where each sentinel sits.
std::vector<size_t> SentinelPositions(const Vocabulary& vocab, const TokenIds& target);

struct CorruptionOptions {
  double noise_density = 0.5;
  size_t mean_span_len = 3;
};

TrainingExample MakeSpanCorruption(const Vocabulary& vocab, const TokenIds& s,
                                   const CorruptionOptions& opts, Rng& rng);
TrainingExample MakeSpanCorruption(const Vocabulary& vocab, const TokenIds& s,
                                   const SpanMaskPlan& plan);

TrainingExample MakeTranslation(const TokenIds& e, const TokenIds& f);

// Plan coordinates are over e <sep> f; the <sep> position is never masked.
TrainingExample MakeTranslationPairSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                                  const TokenIds& f,
                                                  const CorruptionOptions& opts, Rng& rng);
TrainingExample MakeTranslationPairSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                                  const TokenIds& f, const SpanMaskPlan& plan);

enum class CorruptedSide { kSource, kTarget };

// The corrupted side goes first: [g_i(side) <sep> other] -> g_o(side).
TrainingExample MakeTranslationSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                              const TokenIds& f, const CorruptionOptions& opts,
                                              Rng& rng);
TrainingExample MakeTranslationSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                              const TokenIds& f, CorruptedSide side,
                                              const SpanMaskPlan& plan);

// JSON-lines record: {"task","input","target","span_starts","groups"}.
std::string ExampleToJson(const TrainingExample& ex);
TrainingExample ExampleFromJson(const std::string& line);

}  // namespace mt6
