#include "mt6/corruption.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <json.hpp>

#include "mt6/error.hpp"

namespace mt6 {

const char* TaskName(Task task) {
  switch (task) {
    case Task::kSC: return "SC";
    case Task::kMT: return "MT";
    case Task::kTPSC: return "TPSC";
    case Task::kTSC: return "TSC";
  }
  return "?";
}

Task ParseTask(const std::string& name) {
  std::string up;
  for (char c : name) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "SC") return Task::kSC;
  if (up == "MT") return Task::kMT;
  if (up == "TPSC") return Task::kTPSC;
  if (up == "TSC") return Task::kTSC;
  Fail(ErrorKind::kInvalidArgument, "unknown task '" + name + "'");
}

size_t SpanMaskPlan::masked() const {
  size_t n = 0;
  for (const auto& s : spans) n += s.len;
  return n;
}

void SpanMaskPlan::Validate(size_t max_spans) const {
  if (spans.size() > max_spans) {
    Fail(ErrorKind::kInvalidArgument, std::to_string(spans.size()) +
                                          " spans exceed the sentinel budget of " +
                                          std::to_string(max_spans));
  }
  size_t next_free = 0;
  for (size_t k = 0; k < spans.size(); ++k) {
    const Span& s = spans[k];
    Require(s.len >= 1, "span of length 0");
    Require(s.start >= next_free, "spans overlap, touch, or are unsorted");
    Require(s.start + s.len <= sentence_len, "span exceeds sentence length");
    next_free = s.start + s.len + 1;
  }
}

SpanMaskPlan SampleSpans(size_t len, double noise_density, size_t mean_span_len, Rng& rng,
                         size_t max_spans) {
  Require(len > 0, "cannot corrupt an empty sentence");
  Require(noise_density > 0.0 && noise_density <= 1.0, "noise density must be in (0, 1]");
  Require(mean_span_len >= 1 && mean_span_len <= len, "mean span length must be in [1, len]");
  Require(max_spans >= 1, "sentinel budget must allow one span");

  size_t masked = static_cast<size_t>(std::llround(static_cast<double>(len) * noise_density));
  masked = std::clamp<size_t>(masked, 1, len);
  const size_t unmasked = len - masked;
  size_t n_spans = static_cast<size_t>(
      std::llround(static_cast<double>(masked) / static_cast<double>(mean_span_len)));
  n_spans = std::max<size_t>(1, n_spans);
  n_spans = std::min({n_spans, masked, unmasked + 1, max_spans});

  // Span lengths: uniform composition of `masked` into n_spans positive parts.
  std::vector<size_t> lengths;
  {
    const auto cuts = SampleSortedSubset(masked - 1, n_spans - 1, rng);
    size_t prev = 0;
    for (size_t c : cuts) {
      lengths.push_back(c + 1 - prev);
      prev = c + 1;
    }
    lengths.push_back(masked - prev);
  }
  // Gaps: n_spans + 1 bins, interior ones at least 1 wide.
  const size_t free_tokens = unmasked - (n_spans - 1);
  std::vector<size_t> gaps;
  {
    const auto bars = SampleSortedSubset(free_tokens + n_spans, n_spans, rng);
    size_t prev = 0;
    for (size_t b : bars) {
      gaps.push_back(b - prev);
      prev = b + 1;
    }
    gaps.push_back(free_tokens + n_spans - prev);
  }

  SpanMaskPlan plan;
  plan.sentence_len = len;
  size_t pos = gaps[0];
  for (size_t k = 0; k < n_spans; ++k) {
    plan.spans.push_back({pos, lengths[k]});
    pos += lengths[k] + gaps[k + 1] + (k + 1 < n_spans ? 1 : 0);
  }
  return plan;
}

namespace {

void CheckPlan(const Vocabulary& vocab, const TokenIds& s, const SpanMaskPlan& plan) {
  Require(plan.sentence_len == s.size(), "plan length does not match the sentence");
  plan.Validate(static_cast<size_t>(vocab.sentinel_count()));
}

}  // namespace

TokenIds ApplyInputCorruption(const Vocabulary& vocab, const TokenIds& s,
                              const SpanMaskPlan& plan) {
  CheckPlan(vocab, s, plan);
  TokenIds out;
  size_t pos = 0;
  for (size_t k = 0; k < plan.spans.size(); ++k) {
    const Span& span = plan.spans[k];
    out.insert(out.end(), s.begin() + static_cast<long>(pos), s.begin() + static_cast<long>(span.start));
    out.push_back(vocab.Sentinel(static_cast<int>(k) + 1));
    pos = span.start + span.len;
  }
  out.insert(out.end(), s.begin() + static_cast<long>(pos), s.end());
  return out;
}

TokenIds ApplyTargetCorruption(const Vocabulary& vocab, const TokenIds& s,
                               const SpanMaskPlan& plan) {
  CheckPlan(vocab, s, plan);
  TokenIds out;
  for (size_t k = 0; k < plan.spans.size(); ++k) {
    const Span& span = plan.spans[k];
    out.push_back(vocab.Sentinel(static_cast<int>(k) + 1));
    out.insert(out.end(), s.begin() + static_cast<long>(span.start),
               s.begin() + static_cast<long>(span.start + span.len));
  }
  return out;
}

std::vector<size_t> SentinelPositions(const Vocabulary& vocab, const TokenIds& target) {
  std::vector<size_t> pos;
  for (size_t i = 0; i < target.size(); ++i) {
    if (vocab.IsSentinel(target[i])) pos.push_back(i);
  }
  return pos;
}

TokenIds Reconstruct(const Vocabulary& vocab, const TokenIds& corrupted_input,
                     const TokenIds& span_target) {
  const std::vector<size_t> starts = SentinelPositions(vocab, span_target);
  if (!span_target.empty() && (starts.empty() || starts.front() != 0)) {
    Fail(ErrorKind::kFormat, "span target must begin with a sentinel");
  }
  TokenIds out;
  size_t next = 0;
  for (TokenId id : corrupted_input) {
    if (!vocab.IsSentinel(id)) {
      out.push_back(id);
      continue;
    }
    if (next >= starts.size() || span_target[starts[next]] != id) {
      Fail(ErrorKind::kFormat, "sentinel " + vocab.token(id) + " has no matching target span");
    }
    const size_t begin = starts[next] + 1;
    const size_t end = next + 1 < starts.size() ? starts[next + 1] : span_target.size();
    out.insert(out.end(), span_target.begin() + static_cast<long>(begin),
               span_target.begin() + static_cast<long>(end));
    ++next;
  }
  if (next != starts.size()) Fail(ErrorKind::kFormat, "target has spans absent from the input");
  return out;
}

TrainingExample MakeSpanCorruption(const Vocabulary& vocab, const TokenIds& s,
                                   const SpanMaskPlan& plan) {
  TrainingExample ex;
  ex.task = Task::kSC;
  ex.input = ApplyInputCorruption(vocab, s, plan);
  ex.target = ApplyTargetCorruption(vocab, s, plan);
  ex.span_starts = SentinelPositions(vocab, ex.target);
  return ex;
}

TrainingExample MakeSpanCorruption(const Vocabulary& vocab, const TokenIds& s,
                                   const CorruptionOptions& opts, Rng& rng) {
  Require(!s.empty(), "cannot corrupt an empty sentence");
  const size_t mean = std::min(opts.mean_span_len, s.size());
  return MakeSpanCorruption(
      vocab, s,
      SampleSpans(s.size(), opts.noise_density, mean, rng,
                  static_cast<size_t>(vocab.sentinel_count())));
}

TrainingExample MakeTranslation(const TokenIds& e, const TokenIds& f) {
  Require(!e.empty() && !f.empty(), "translation pair has an empty side");
  TrainingExample ex;
  ex.task = Task::kMT;
  ex.input = e;
  ex.target = f;
  ex.span_starts = {0};
  return ex;
}

namespace {

TokenIds JoinWithSep(const TokenIds& a, const TokenIds& b) {
  TokenIds c = a;
  c.push_back(Vocabulary::kSep);
  c.insert(c.end(), b.begin(), b.end());
  return c;
}

}  // namespace

TrainingExample MakeTranslationPairSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                                  const TokenIds& f, const SpanMaskPlan& plan) {
  Require(!e.empty() && !f.empty(), "translation pair has an empty side");
  for (const Span& s : plan.spans) {
    Require(s.start + s.len <= e.size() || s.start > e.size(),
            "TPSC spans may not cover the segment separator");
  }
  const TokenIds c = JoinWithSep(e, f);
  TrainingExample ex = MakeSpanCorruption(vocab, c, plan);
  ex.task = Task::kTPSC;
  return ex;
}

TrainingExample MakeTranslationPairSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                                  const TokenIds& f,
                                                  const CorruptionOptions& opts, Rng& rng) {
  Require(!e.empty() && !f.empty(), "translation pair has an empty side");
  // Sample over e ++ f with the separator removed, truncate any span that
  // crosses from e into f, then shift f-side spans past the separator.
  const size_t n = e.size() + f.size();
  const SpanMaskPlan flat =
      SampleSpans(n, opts.noise_density, std::min(opts.mean_span_len, n), rng,
                  static_cast<size_t>(vocab.sentinel_count()));
  SpanMaskPlan plan;
  plan.sentence_len = n + 1;
  for (const Span& s : flat.spans) {
    if (s.start < e.size()) {
      plan.spans.push_back({s.start, std::min(s.len, e.size() - s.start)});
    } else {
      plan.spans.push_back({s.start + 1, s.len});
    }
  }
  return MakeTranslationPairSpanCorruption(vocab, e, f, plan);
}

TrainingExample MakeTranslationSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                              const TokenIds& f, CorruptedSide side,
                                              const SpanMaskPlan& plan) {
  Require(!e.empty() && !f.empty(), "translation pair has an empty side");
  const TokenIds& corrupted = side == CorruptedSide::kSource ? e : f;
  const TokenIds& context = side == CorruptedSide::kSource ? f : e;
  TrainingExample ex;
  ex.task = Task::kTSC;
  ex.input = JoinWithSep(ApplyInputCorruption(vocab, corrupted, plan), context);
  ex.target = ApplyTargetCorruption(vocab, corrupted, plan);
  ex.span_starts = SentinelPositions(vocab, ex.target);
  return ex;
}

TrainingExample MakeTranslationSpanCorruption(const Vocabulary& vocab, const TokenIds& e,
                                              const TokenIds& f, const CorruptionOptions& opts,
                                              Rng& rng) {
  Require(!e.empty() && !f.empty(), "translation pair has an empty side");
  const CorruptedSide side = rng.Bernoulli(0.5) ? CorruptedSide::kSource : CorruptedSide::kTarget;
  const TokenIds& corrupted = side == CorruptedSide::kSource ? e : f;
  const SpanMaskPlan plan =
      SampleSpans(corrupted.size(), opts.noise_density,
                  std::min(opts.mean_span_len, corrupted.size()), rng,
                  static_cast<size_t>(vocab.sentinel_count()));
  return MakeTranslationSpanCorruption(vocab, e, f, side, plan);
}

std::string ExampleToJson(const TrainingExample& ex) {
  nlohmann::ordered_json j;
  j["task"] = TaskName(ex.task);
  j["input"] = ex.input;
  j["target"] = ex.target;
  j["span_starts"] = ex.span_starts;
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const auto& r : ex.groups.ranges) groups.push_back({r.begin, r.end});
  j["groups"] = groups;
  return j.dump();
}

TrainingExample ExampleFromJson(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    TrainingExample ex;
    ex.task = ParseTask(j.at("task").get<std::string>());
    ex.input = j.at("input").get<TokenIds>();
    ex.target = j.at("target").get<TokenIds>();
    ex.span_starts = j.at("span_starts").get<std::vector<size_t>>();
    for (const auto& g : j.at("groups")) {
      ex.groups.ranges.push_back({g.at(0).get<size_t>(), g.at(1).get<size_t>()});
    }
    return ex;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("bad example record: ") + e.what());
  }
}

}  // namespace mt6
