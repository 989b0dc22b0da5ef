#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mt6/vocab.hpp"

namespace mt6 {

struct MonolingualCorpus {
  std::string lang;
  std::vector<TokenIds> sentences;
};

// Word alignment as (source index, target index) links, kept sorted.
using Alignment = std::vector<std::pair<int, int>>;

struct SentencePair {
  TokenIds e;
  TokenIds f;
};

struct ParallelCorpus {
  std::pair<std::string, std::string> lang_pair;
  std::vector<SentencePair> pairs;
  std::vector<Alignment> gold_alignments;  // empty, or one per pair
  size_t rejected_lines = 0;
};

MonolingualCorpus LoadMonolingual(const std::string& path, const std::string& lang,
                                  const Vocabulary& vocab);

ParallelCorpus LoadParallel(const std::string& path,
                            const std::pair<std::string, std::string>& langs,
                            const Vocabulary& vocab);

// Pharaoh format: one line per pair, space separated "i-j" links.
std::vector<Alignment> LoadAlignments(const std::string& path);
std::string FormatAlignments(const std::vector<Alignment>& alignments);
Alignment ParseAlignmentLine(const std::string& line);

struct CipherSpec {
  uint64_t seed = 1;
  int vocab_size = 64;  // tokens per language
  size_t n_pairs = 1000;
  int min_len = 6;
  int max_len = 12;
  int reorder_window = 3;
  std::string src_lang = "a";
  std::string tgt_lang = "b";
};

// Surface-level synthetic corpus: the text of each side plus the gold
// alignment. Kept as strings so it can be written to disk and reloaded
// through the ordinary loaders.
struct CipherText {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::vector<Alignment> gold;
};

// Language A sentences come from a seeded first-order Markov source over
// a1..ak; language B applies the token bijection a_i -> b_i and then shuffles
// positions inside consecutive windows of reorder_window tokens. The gold
// alignment links every source position to where its token landed.
CipherText GenerateCipherText(const CipherSpec& spec);

// Monolingual text in one language of the cipher pair, drawn from the same
// source as the parallel data under an independent seed stream.
std::vector<std::string> GenerateCipherMonolingual(const CipherSpec& spec, size_t n,
                                                   bool target_side, uint64_t stream);

ParallelCorpus GenerateCipherCorpus(const CipherSpec& spec, const Vocabulary& vocab);

std::string CipherSourceToken(int i);
std::string CipherTargetToken(int i);

struct SamplingDistribution {
  std::vector<double> weights;
};

// p_i = q_i^alpha / sum_j q_j^alpha with q_i the empirical proportions.
SamplingDistribution MakeSamplingDistribution(const std::vector<uint64_t>& sizes, double alpha);

}  // namespace mt6
