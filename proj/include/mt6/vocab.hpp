#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mt6 {

using TokenId = int32_t;
using TokenIds = std::vector<TokenId>;

enum class EntityTag { kLoc, kPer, kOrg, kMisc };

// Token <-> id map. Special tokens occupy the lowest ids in a fixed order:
//   <pad> <bos> <eos> <sep> <unk> <loc> <per> <org> <misc> [M_1] .. [M_S]
// followed by surface tokens in descending corpus frequency.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr TokenId kFirstEntityTag = 5;
  static constexpr int kNumEntityTags = 4;
  static constexpr TokenId kFirstSentinel = kFirstEntityTag + kNumEntityTags;
  static constexpr int kDefaultSentinels = 100;

  Vocabulary() = default;

  // Keeps the most frequent surface tokens so that the total size (specials
  // included) does not exceed max_size. Ties go to the lexicographically
  // smaller token.
  static Vocabulary Build(const std::vector<std::vector<std::string>>& corpora,
                          size_t max_size,
                          int sentinel_count = kDefaultSentinels);

  // Convenience overload over raw text lines.
  static Vocabulary BuildFromLines(const std::vector<std::string>& lines,
                                   size_t max_size,
                                   int sentinel_count = kDefaultSentinels);

  static Vocabulary Load(const std::string& path);
  void Save(const std::string& path) const;
  std::string Serialize() const;
  static Vocabulary Deserialize(std::string_view text);

  size_t size() const { return tokens_.size(); }
  int sentinel_count() const { return sentinel_count_; }
  size_t num_specials() const { return kFirstSentinel + sentinel_count_; }

  const std::string& token(TokenId id) const;
  // Surface lookup; specials are never produced here, they map to <unk>.
  TokenId Lookup(std::string_view surface) const;
  // Exact lookup including special strings; -1 if absent.
  TokenId Find(std::string_view token) const;

  TokenId Sentinel(int k) const;  // k in 1..S
  bool IsSentinel(TokenId id) const {
    return id >= kFirstSentinel && id < kFirstSentinel + sentinel_count_;
  }
  int SentinelIndex(TokenId id) const { return id - kFirstSentinel + 1; }
  bool IsSpecial(TokenId id) const {
    return id >= 0 && static_cast<size_t>(id) < num_specials();
  }
  static TokenId Tag(EntityTag tag) {
    return kFirstEntityTag + static_cast<TokenId>(tag);
  }
  static bool IsEntityTag(TokenId id) {
    return id >= kFirstEntityTag && id < kFirstEntityTag + kNumEntityTags;
  }

  TokenIds Encode(std::string_view text) const;
  std::string Decode(const TokenIds& ids) const;

  // FNV-1a over the serialized form; stored in checkpoints.
  uint64_t Fingerprint() const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && sentinel_count_ == other.sentinel_count_;
  }

 private:
  void AddToken(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> id_of_;
  int sentinel_count_ = 0;
};

// Whitespace tokenization shared by the vocabulary and every metric.
std::vector<std::string> SplitWhitespace(std::string_view text);

std::vector<std::string> SpecialTokenStrings(int sentinel_count);

}  // namespace mt6
