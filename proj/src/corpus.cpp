#include "mt6/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mt6/error.hpp"
#include "mt6/io.hpp"
#include "mt6/rng.hpp"

namespace mt6 {

MonolingualCorpus LoadMonolingual(const std::string& path, const std::string& lang,
                                  const Vocabulary& vocab) {
  Require(!lang.empty(), "language code must be nonempty");
  MonolingualCorpus corpus;
  corpus.lang = lang;
  for (const auto& line : ReadLines(path)) {
    TokenIds ids = vocab.Encode(line);
    if (ids.empty()) continue;
    corpus.sentences.push_back(std::move(ids));
  }
  if (corpus.sentences.empty()) Fail(ErrorKind::kFormat, "'" + path + "' has no usable lines");
  return corpus;
}

ParallelCorpus LoadParallel(const std::string& path,
                            const std::pair<std::string, std::string>& langs,
                            const Vocabulary& vocab) {
  ParallelCorpus corpus;
  corpus.lang_pair = langs;
  for (const auto& line : ReadLines(path)) {
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      ++corpus.rejected_lines;
      continue;
    }
    SentencePair p{vocab.Encode(std::string_view(line).substr(0, tab)),
                   vocab.Encode(std::string_view(line).substr(tab + 1))};
    if (p.e.empty() || p.f.empty()) {
      ++corpus.rejected_lines;
      continue;
    }
    corpus.pairs.push_back(std::move(p));
  }
  if (corpus.pairs.empty()) {
    Fail(ErrorKind::kFormat, "'" + path + "' has no well-formed pairs (" +
                                 std::to_string(corpus.rejected_lines) + " rejected)");
  }
  return corpus;
}

Alignment ParseAlignmentLine(const std::string& line) {
  Alignment links;
  for (const auto& item : SplitWhitespace(line)) {
    const size_t dash = item.find('-');
    if (dash == std::string::npos) Fail(ErrorKind::kFormat, "bad alignment link '" + item + "'");
    try {
      size_t used_i = 0, used_j = 0;
      const int i = std::stoi(item.substr(0, dash), &used_i);
      const int j = std::stoi(item.substr(dash + 1), &used_j);
      if (used_i != dash || used_j != item.size() - dash - 1 || i < 0 || j < 0) throw 0;
      links.emplace_back(i, j);
    } catch (...) {
      Fail(ErrorKind::kFormat, "bad alignment link '" + item + "'");
    }
  }
  std::sort(links.begin(), links.end());
  return links;
}

std::vector<Alignment> LoadAlignments(const std::string& path) {
  std::vector<Alignment> out;
  for (const auto& line : ReadLines(path)) out.push_back(ParseAlignmentLine(line));
  return out;
}

std::string FormatAlignments(const std::vector<Alignment>& alignments) {
  std::string out;
  for (const auto& a : alignments) {
    for (size_t k = 0; k < a.size(); ++k) {
      if (k) out += ' ';
      out += std::to_string(a[k].first) + "-" + std::to_string(a[k].second);
    }
    out += '\n';
  }
  return out;
}

std::string CipherSourceToken(int i) { return "a" + std::to_string(i); }
std::string CipherTargetToken(int i) { return "b" + std::to_string(i); }

namespace {

// Seeded Markov source. Each state prefers a handful of successors with
// Zipf-like weights so the text has structure a model can keep learning.
class MarkovSource {
 public:
  MarkovSource(uint64_t seed, int k) : k_(k) {
    Rng rng(MixSeed(seed, 0x6d61726b, 0));
    std::vector<double> zipf(static_cast<size_t>(k));
    for (int r = 0; r < k; ++r) zipf[r] = 1.0 / std::pow(r + 1.0, 1.1);
    std::vector<int> order(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) order[i] = i;
    rng.Shuffle(order);
    std::vector<double> s(static_cast<size_t>(k));
    for (int r = 0; r < k; ++r) s[order[r]] = zipf[r];
    start_ = s;
    transitions_.resize(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      rng.Shuffle(order);
      std::vector<double> row(static_cast<size_t>(k));
      for (int r = 0; r < k; ++r) row[order[r]] = 1.0 / std::pow(r + 1.0, 1.6);
      transitions_[i] = std::move(row);
    }
  }

  std::vector<int> Sentence(Rng& rng, int len) const {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(len));
    int cur = static_cast<int>(rng.Categorical(start_));
    out.push_back(cur);
    while (static_cast<int>(out.size()) < len) {
      cur = static_cast<int>(rng.Categorical(transitions_[cur]));
      out.push_back(cur);
    }
    return out;
  }

 private:
  int k_;
  std::vector<double> start_;
  std::vector<std::vector<double>> transitions_;
};

void ValidateSpec(const CipherSpec& spec) {
  Require(spec.vocab_size >= 4, "cipher vocab_size must be >= 4");
  Require(spec.min_len >= 1 && spec.max_len >= spec.min_len, "invalid sentence length range");
  Require(spec.reorder_window >= 1, "reorder_window must be >= 1");
}

std::string JoinTokens(const std::vector<int>& ids, bool target_side) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += target_side ? CipherTargetToken(ids[i] + 1) : CipherSourceToken(ids[i] + 1);
  }
  return out;
}

// Returns perm with perm[i] = target position of source position i.
std::vector<int> LocalShuffle(size_t len, int window, Rng& rng) {
  std::vector<int> dest(len);
  for (size_t start = 0; start < len; start += static_cast<size_t>(window)) {
    const size_t end = std::min(len, start + static_cast<size_t>(window));
    std::vector<int> block;
    for (size_t p = start; p < end; ++p) block.push_back(static_cast<int>(p));
    rng.Shuffle(block);
    for (size_t p = start; p < end; ++p) dest[p] = block[p - start];
  }
  return dest;
}

}  // namespace

CipherText GenerateCipherText(const CipherSpec& spec) {
  ValidateSpec(spec);
  Require(spec.n_pairs >= 1, "n_pairs must be >= 1");
  MarkovSource source(spec.seed, spec.vocab_size);
  CipherText text;
  for (size_t n = 0; n < spec.n_pairs; ++n) {
    Rng rng(MixSeed(spec.seed, 1, n));
    const int len = spec.min_len + static_cast<int>(rng.Below(
                                       static_cast<uint64_t>(spec.max_len - spec.min_len + 1)));
    const std::vector<int> e = source.Sentence(rng, len);
    const std::vector<int> dest = LocalShuffle(e.size(), spec.reorder_window, rng);
    std::vector<int> f(e.size());
    Alignment gold;
    for (size_t i = 0; i < e.size(); ++i) {
      f[static_cast<size_t>(dest[i])] = e[i];
      gold.emplace_back(static_cast<int>(i), dest[i]);
    }
    text.src.push_back(JoinTokens(e, false));
    text.tgt.push_back(JoinTokens(f, true));
    text.gold.push_back(std::move(gold));
  }
  return text;
}

std::vector<std::string> GenerateCipherMonolingual(const CipherSpec& spec, size_t n,
                                                   bool target_side, uint64_t stream) {
  ValidateSpec(spec);
  MarkovSource source(spec.seed, spec.vocab_size);
  std::vector<std::string> out;
  out.reserve(n);
  for (size_t s = 0; s < n; ++s) {
    Rng rng(MixSeed(spec.seed, stream, s));
    const int len = spec.min_len + static_cast<int>(rng.Below(
                                       static_cast<uint64_t>(spec.max_len - spec.min_len + 1)));
    std::vector<int> e = source.Sentence(rng, len);
    if (target_side) {
      const std::vector<int> dest = LocalShuffle(e.size(), spec.reorder_window, rng);
      std::vector<int> f(e.size());
      for (size_t i = 0; i < e.size(); ++i) f[static_cast<size_t>(dest[i])] = e[i];
      e = std::move(f);
    }
    out.push_back(JoinTokens(e, target_side));
  }
  return out;
}

ParallelCorpus GenerateCipherCorpus(const CipherSpec& spec, const Vocabulary& vocab) {
  const CipherText text = GenerateCipherText(spec);
  ParallelCorpus corpus;
  corpus.lang_pair = {spec.src_lang, spec.tgt_lang};
  for (size_t n = 0; n < text.src.size(); ++n) {
    corpus.pairs.push_back({vocab.Encode(text.src[n]), vocab.Encode(text.tgt[n])});
  }
  corpus.gold_alignments = text.gold;
  return corpus;
}

SamplingDistribution MakeSamplingDistribution(const std::vector<uint64_t>& sizes, double alpha) {
  Require(!sizes.empty(), "no corpora to sample from");
  Require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be >= 0");
  double total = 0.0;
  for (uint64_t s : sizes) {
    Require(s > 0, "corpus sizes must be positive");
    total += static_cast<double>(s);
  }
  SamplingDistribution d;
  double z = 0.0;
  for (uint64_t s : sizes) {
    const double w = std::pow(static_cast<double>(s) / total, alpha);
    d.weights.push_back(w);
    z += w;
  }
  for (double& w : d.weights) w /= z;
  return d;
}

}  // namespace mt6
