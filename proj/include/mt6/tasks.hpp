#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mt6/corruption.hpp"
#include "mt6/model.hpp"
#include "mt6/vocab.hpp"

namespace mt6 {

enum class TaskKind { kClassification, kQa, kNer, kGeneration };

const char* TaskKindName(TaskKind kind);
TaskKind ParseTaskKind(const std::string& name);

// Prefix tree over tokenized label strings.
class LabelTrie {
 public:
  void Insert(const TokenIds& label);
  // Tokens that may follow `prefix`; <eos> is included when prefix is a
  // complete label. Empty when prefix leaves the trie.
  std::vector<TokenId> Next(const TokenIds& prefix) const;
  bool Contains(const TokenIds& label) const;
  size_t size() const { return labels_; }

 private:
  struct Node {
    std::map<TokenId, size_t> children;
    bool terminal = false;
  };
  std::vector<Node> nodes_{Node{}};
  size_t labels_ = 0;
};

struct Entity {
  EntityTag tag = EntityTag::kMisc;
  size_t start = 0;  // token position in the source sentence
  size_t end = 0;    // exclusive
  bool matched = true;
  TokenIds tokens;

  bool operator<(const Entity& o) const;
  bool operator==(const Entity& o) const;
};

// Rules for decoding NER targets: after <bos> or <sep> only an entity tag
// or <eos> may follow; otherwise only a source-sentence token or <sep>.
class NerAutomaton {
 public:
  enum class State { kAfterBosOrSep, kInsideEntity, kDone };

  explicit NerAutomaton(std::set<TokenId> source_tokens) : source_(std::move(source_tokens)) {}

  State state() const { return state_; }
  bool Allows(TokenId id) const;
  std::vector<TokenId> AllowedTokens() const;
  void Advance(TokenId id);  // throws if not allowed

 private:
  std::set<TokenId> source_;
  State state_ = State::kAfterBosOrSep;
};

struct FormattedExample {
  TaskKind kind = TaskKind::kClassification;
  TokenIds input;
  TokenIds target;
  // Constraint payloads, one of which is used depending on kind.
  LabelTrie labels;
  std::set<TokenId> allowed;  // QA: passage tokens + <eos>; NER: source tokens
  TokenIds source;            // NER source sentence (no specials)
  std::vector<Entity> entities;
  std::string reference;  // label / answer / generation target text
  bool answer_in_passage = true;

  TrainingExample AsTrainingExample() const;
};

FormattedExample FormatClassification(const Vocabulary& vocab, const std::string& a,
                                      const std::optional<std::string>& b,
                                      const std::string& label,
                                      const std::vector<std::string>& label_set);

FormattedExample FormatQa(const Vocabulary& vocab, const std::string& passage,
                          const std::string& question, const std::string& answer);

FormattedExample FormatNer(const Vocabulary& vocab, const std::vector<std::string>& tokens,
                           const std::vector<std::string>& bio_tags);

FormattedExample FormatGeneration(const Vocabulary& vocab, const std::string& source,
                                  const std::string& target);

// Entities from a BIO tagging; throws on I- without a matching B-.
std::vector<Entity> EntitiesFromBio(const std::vector<std::string>& bio_tags,
                                    const TokenIds& source);

// Inverse of the NER target format. Spans are matched to the source greedily
// left to right; an entity whose tokens do not occur after the previous match
// is returned with matched == false. Empty entities are dropped.
std::vector<Entity> ParseNerOutput(const TokenIds& decoded, const TokenIds& source);

// Greedy decoding restricted to the example's allowed tokens at every step.
// The leading <bos> of the target format is forced. Classification follows
// the label trie and always completes exactly one label; the others stop at
// <eos> or after max_len output tokens.
TokenIds ConstrainedGreedyDecode(const Transformer& model, const ParameterSet& params,
                                 const FormattedExample& example, size_t max_len);

// Unconstrained argmax decoding (leading <bos> forced). Ties go to the
// lowest token id.
TokenIds GreedyDecode(const Transformer& model, const ParameterSet& params, const TokenIds& input,
                      size_t max_len);

// Decoded tokens between <bos> and <eos>, as text.
std::string DecodedBody(const Vocabulary& vocab, const TokenIds& decoded);

// JSON-lines datasets: classification {"a","b"?,"label"}, QA
// {"passage","question","answer"}, NER {"tokens":[..],"tags":[..]},
// generation {"source","target"}. For classification an empty label_set is
// replaced by the sorted labels found in the file.
std::vector<FormattedExample> LoadTaskDataset(const std::string& path, TaskKind kind,
                                              const Vocabulary& vocab,
                                              std::vector<std::string> label_set = {});

// Surface text of every dataset file, for building vocabularies.
std::vector<std::string> TaskDatasetText(const std::string& path, TaskKind kind);

}  // namespace mt6
