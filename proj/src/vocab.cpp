#include "mt6/vocab.hpp"

#include <algorithm>
#include <map>

#include "mt6/error.hpp"
#include "mt6/io.hpp"

namespace mt6 {

std::vector<std::string> SplitWhitespace(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> SpecialTokenStrings(int sentinel_count) {
  std::vector<std::string> s = {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>",
                                "<loc>", "<per>", "<org>", "<misc>"};
  for (int k = 1; k <= sentinel_count; ++k) s.push_back("[M_" + std::to_string(k) + "]");
  return s;
}

void Vocabulary::AddToken(const std::string& token) {
  if (id_of_.count(token)) Fail(ErrorKind::kFormat, "duplicate token '" + token + "'");
  id_of_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::Build(const std::vector<std::vector<std::string>>& corpora,
                             size_t max_size, int sentinel_count) {
  Require(sentinel_count > 0, "sentinel_count must be positive");
  Require(!corpora.empty(), "empty corpus");
  Vocabulary v;
  v.sentinel_count_ = sentinel_count;
  for (const auto& s : SpecialTokenStrings(sentinel_count)) v.AddToken(s);
  Require(max_size > v.size(), "max_size must exceed the number of special tokens (" +
                                   std::to_string(v.size()) + ")");

  std::map<std::string, uint64_t> counts;
  bool any = false;
  for (const auto& stream : corpora) {
    for (const auto& tok : stream) {
      any = true;
      if (v.id_of_.count(tok)) continue;  // specials are reserved
      ++counts[tok];
    }
  }
  Require(any, "empty corpus");

  std::vector<std::pair<std::string, uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const size_t room = max_size - v.size();
  for (size_t i = 0; i < ranked.size() && i < room; ++i) v.AddToken(ranked[i].first);
  return v;
}

Vocabulary Vocabulary::BuildFromLines(const std::vector<std::string>& lines,
                                      size_t max_size, int sentinel_count) {
  std::vector<std::string> stream;
  for (const auto& line : lines) {
    for (auto& t : SplitWhitespace(line)) stream.push_back(std::move(t));
  }
  return Build({stream}, max_size, sentinel_count);
}

std::string Vocabulary::Serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::Deserialize(std::string_view text) {
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  int sentinels = 0;
  while (static_cast<size_t>(kFirstSentinel + sentinels) < lines.size() &&
         lines[kFirstSentinel + sentinels] == "[M_" + std::to_string(sentinels + 1) + "]") {
    ++sentinels;
  }
  if (sentinels == 0) Fail(ErrorKind::kFormat, "vocabulary has no sentinel block");
  const auto specials = SpecialTokenStrings(sentinels);
  Vocabulary v;
  v.sentinel_count_ = sentinels;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i < specials.size() && lines[i] != specials[i]) {
      Fail(ErrorKind::kFormat, "vocabulary line " + std::to_string(i + 1) +
                                   ": expected special token " + specials[i]);
    }
    if (lines[i].empty() || lines[i].find_first_of(" \t\r") != std::string::npos) {
      Fail(ErrorKind::kFormat, "vocabulary line " + std::to_string(i + 1) + " is not a token");
    }
    v.AddToken(lines[i]);
  }
  return v;
}

Vocabulary Vocabulary::Load(const std::string& path) { return Deserialize(ReadFile(path)); }

void Vocabulary::Save(const std::string& path) const { WriteFileAtomic(path, Serialize()); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
    Fail(ErrorKind::kInvalidArgument, "token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<size_t>(id)];
}

TokenId Vocabulary::Find(std::string_view token) const {
  auto it = id_of_.find(std::string(token));
  return it == id_of_.end() ? -1 : it->second;
}

TokenId Vocabulary::Lookup(std::string_view surface) const {
  const TokenId id = Find(surface);
  if (id < 0 || IsSpecial(id)) return kUnk;
  return id;
}

TokenId Vocabulary::Sentinel(int k) const {
  if (k < 1 || k > sentinel_count_) {
    Fail(ErrorKind::kInvalidArgument, "sentinel index " + std::to_string(k) +
                                          " outside 1.." + std::to_string(sentinel_count_));
  }
  return kFirstSentinel + k - 1;
}

TokenIds Vocabulary::Encode(std::string_view text) const {
  TokenIds ids;
  for (const auto& t : SplitWhitespace(text)) ids.push_back(Lookup(t));
  return ids;
}

std::string Vocabulary::Decode(const TokenIds& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

uint64_t Vocabulary::Fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mt6
