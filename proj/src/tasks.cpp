#include "mt6/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

#include <json.hpp>

#include "mt6/error.hpp"
#include "mt6/io.hpp"

namespace mt6 {

const char* TaskKindName(TaskKind kind) {
  switch (kind) {
    case TaskKind::kClassification: return "classification";
    case TaskKind::kQa: return "qa";
    case TaskKind::kNer: return "ner";
    case TaskKind::kGeneration: return "generation";
  }
  return "?";
}

TaskKind ParseTaskKind(const std::string& name) {
  if (name == "classification" || name == "cls") return TaskKind::kClassification;
  if (name == "qa") return TaskKind::kQa;
  if (name == "ner") return TaskKind::kNer;
  if (name == "generation" || name == "gen") return TaskKind::kGeneration;
  Fail(ErrorKind::kInvalidArgument, "unknown task kind '" + name + "'");
}

void LabelTrie::Insert(const TokenIds& label) {
  Require(!label.empty(), "empty label");
  size_t node = 0;
  for (TokenId id : label) {
    auto it = nodes_[node].children.find(id);
    if (it == nodes_[node].children.end()) {
      nodes_.push_back(Node{});
      it = nodes_[node].children.emplace(id, nodes_.size() - 1).first;
    }
    node = it->second;
  }
  if (!nodes_[node].terminal) ++labels_;
  nodes_[node].terminal = true;
}

std::vector<TokenId> LabelTrie::Next(const TokenIds& prefix) const {
  size_t node = 0;
  for (TokenId id : prefix) {
    auto it = nodes_[node].children.find(id);
    if (it == nodes_[node].children.end()) return {};
    node = it->second;
  }
  std::vector<TokenId> out;
  if (nodes_[node].terminal) out.push_back(Vocabulary::kEos);
  for (const auto& [id, _] : nodes_[node].children) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

bool LabelTrie::Contains(const TokenIds& label) const {
  size_t node = 0;
  for (TokenId id : label) {
    auto it = nodes_[node].children.find(id);
    if (it == nodes_[node].children.end()) return false;
    node = it->second;
  }
  return nodes_[node].terminal;
}

bool Entity::operator<(const Entity& o) const {
  return std::tie(start, end, tag, matched, tokens) <
         std::tie(o.start, o.end, o.tag, o.matched, o.tokens);
}

bool Entity::operator==(const Entity& o) const {
  return tag == o.tag && start == o.start && end == o.end && matched == o.matched &&
         tokens == o.tokens;
}

bool NerAutomaton::Allows(TokenId id) const {
  switch (state_) {
    case State::kAfterBosOrSep:
      return Vocabulary::IsEntityTag(id) || id == Vocabulary::kEos;
    case State::kInsideEntity:
      return id == Vocabulary::kSep || source_.count(id) > 0;
    case State::kDone:
      return false;
  }
  return false;
}

std::vector<TokenId> NerAutomaton::AllowedTokens() const {
  std::vector<TokenId> out;
  switch (state_) {
    case State::kAfterBosOrSep:
      out.push_back(Vocabulary::kEos);
      for (int k = 0; k < Vocabulary::kNumEntityTags; ++k) out.push_back(Vocabulary::kFirstEntityTag + k);
      break;
    case State::kInsideEntity:
      out.assign(source_.begin(), source_.end());
      out.push_back(Vocabulary::kSep);
      break;
    case State::kDone:
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void NerAutomaton::Advance(TokenId id) {
  if (!Allows(id)) Fail(ErrorKind::kFormat, "token " + std::to_string(id) + " violates NER rules");
  if (id == Vocabulary::kEos) {
    state_ = State::kDone;
  } else if (id == Vocabulary::kSep) {
    state_ = State::kAfterBosOrSep;
  } else if (Vocabulary::IsEntityTag(id) && state_ == State::kAfterBosOrSep) {
    state_ = State::kInsideEntity;
  }
}

TrainingExample FormattedExample::AsTrainingExample() const {
  TrainingExample ex;
  ex.task = Task::kMT;  // plain sequence-to-sequence
  ex.input = input;
  ex.target = target;
  ex.span_starts = {0};
  return ex;
}

namespace {

TokenIds Wrap(const Vocabulary& vocab, const std::vector<std::string>& segments) {
  TokenIds ids{Vocabulary::kBos};
  for (const auto& s : segments) {
    const TokenIds enc = vocab.Encode(s);
    ids.insert(ids.end(), enc.begin(), enc.end());
    ids.push_back(Vocabulary::kEos);
  }
  return ids;
}

std::string JoinWords(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::optional<EntityTag> TagFromName(const std::string& name) {
  std::string up;
  for (char c : name) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "LOC") return EntityTag::kLoc;
  if (up == "PER") return EntityTag::kPer;
  if (up == "ORG") return EntityTag::kOrg;
  if (up == "MISC") return EntityTag::kMisc;
  return std::nullopt;
}

}  // namespace

FormattedExample FormatClassification(const Vocabulary& vocab, const std::string& a,
                                      const std::optional<std::string>& b,
                                      const std::string& label,
                                      const std::vector<std::string>& label_set) {
  if (std::find(label_set.begin(), label_set.end(), label) == label_set.end()) {
    Fail(ErrorKind::kInvalidArgument, "label '" + label + "' is not in the label set");
  }
  FormattedExample ex;
  ex.kind = TaskKind::kClassification;
  ex.input = b ? Wrap(vocab, {a, *b}) : Wrap(vocab, {a});
  ex.target = Wrap(vocab, {label});
  for (const auto& l : label_set) ex.labels.Insert(vocab.Encode(l));
  ex.reference = JoinWords(SplitWhitespace(label));
  return ex;
}

FormattedExample FormatQa(const Vocabulary& vocab, const std::string& passage,
                          const std::string& question, const std::string& answer) {
  FormattedExample ex;
  ex.kind = TaskKind::kQa;
  ex.input = Wrap(vocab, {passage, question});
  ex.target = Wrap(vocab, {answer});
  const TokenIds p = vocab.Encode(passage);
  ex.allowed.insert(p.begin(), p.end());
  ex.allowed.insert(Vocabulary::kEos);
  for (TokenId id : vocab.Encode(answer)) {
    if (!ex.allowed.count(id)) ex.answer_in_passage = false;
  }
  ex.reference = JoinWords(SplitWhitespace(answer));
  return ex;
}

std::vector<Entity> EntitiesFromBio(const std::vector<std::string>& bio_tags,
                                    const TokenIds& source) {
  Require(bio_tags.size() == source.size(), "token and tag counts differ");
  std::vector<Entity> out;
  std::optional<Entity> cur;
  auto close = [&] {
    if (cur) {
      cur->tokens.assign(source.begin() + static_cast<long>(cur->start),
                         source.begin() + static_cast<long>(cur->end));
      out.push_back(*cur);
      cur.reset();
    }
  };
  for (size_t i = 0; i < bio_tags.size(); ++i) {
    const std::string& t = bio_tags[i];
    if (t == "O") {
      close();
      continue;
    }
    if (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-') {
      Fail(ErrorKind::kFormat, "malformed BIO tag '" + t + "'");
    }
    const auto tag = TagFromName(t.substr(2));
    if (!tag) Fail(ErrorKind::kFormat, "unknown entity type in '" + t + "'");
    if (t[0] == 'B') {
      close();
      cur = Entity{*tag, i, i + 1, true, {}};
    } else {
      if (!cur || cur->tag != *tag) {
        Fail(ErrorKind::kFormat, "I- tag without a preceding B- at position " + std::to_string(i));
      }
      cur->end = i + 1;
    }
  }
  close();
  return out;
}

FormattedExample FormatNer(const Vocabulary& vocab, const std::vector<std::string>& tokens,
                           const std::vector<std::string>& bio_tags) {
  FormattedExample ex;
  ex.kind = TaskKind::kNer;
  ex.source = vocab.Encode(JoinWords(tokens));
  Require(ex.source.size() == tokens.size(), "NER tokens must not contain whitespace");
  ex.entities = EntitiesFromBio(bio_tags, ex.source);
  ex.input = {Vocabulary::kBos};
  ex.input.insert(ex.input.end(), ex.source.begin(), ex.source.end());
  ex.input.push_back(Vocabulary::kEos);
  ex.target = {Vocabulary::kBos};
  for (const Entity& e : ex.entities) {
    ex.target.push_back(Vocabulary::Tag(e.tag));
    ex.target.insert(ex.target.end(), e.tokens.begin(), e.tokens.end());
    ex.target.push_back(Vocabulary::kSep);
  }
  ex.target.push_back(Vocabulary::kEos);
  ex.allowed.insert(ex.source.begin(), ex.source.end());
  return ex;
}

FormattedExample FormatGeneration(const Vocabulary& vocab, const std::string& source,
                                  const std::string& target) {
  FormattedExample ex;
  ex.kind = TaskKind::kGeneration;
  ex.input = Wrap(vocab, {source});
  ex.target = Wrap(vocab, {target});
  ex.reference = JoinWords(SplitWhitespace(target));
  return ex;
}

std::vector<Entity> ParseNerOutput(const TokenIds& decoded, const TokenIds& source) {
  size_t i = 0;
  if (!decoded.empty() && decoded[0] == Vocabulary::kBos) ++i;
  NerAutomaton automaton(std::set<TokenId>(source.begin(), source.end()));
  std::vector<Entity> out;
  size_t cursor = 0;
  std::optional<Entity> cur;
  for (; i < decoded.size(); ++i) {
    const TokenId id = decoded[i];
    automaton.Advance(id);
    if (id == Vocabulary::kEos) break;
    if (Vocabulary::IsEntityTag(id) && !cur) {
      cur = Entity{static_cast<EntityTag>(id - Vocabulary::kFirstEntityTag), 0, 0, false, {}};
    } else if (id == Vocabulary::kSep) {
      if (cur && !cur->tokens.empty()) {
        const auto it = std::search(source.begin() + static_cast<long>(cursor), source.end(),
                                    cur->tokens.begin(), cur->tokens.end());
        if (it != source.end()) {
          cur->start = static_cast<size_t>(it - source.begin());
          cur->end = cur->start + cur->tokens.size();
          cur->matched = true;
          cursor = cur->end;
        }
        out.push_back(*cur);
      }
      cur.reset();
    } else {
      cur->tokens.push_back(id);
    }
  }
  return out;
}

namespace {

TokenId ArgmaxOver(const Eigen::RowVectorXd& logp, const std::vector<TokenId>& allowed) {
  if (allowed.empty()) Fail(ErrorKind::kState, "constrained decoding reached an empty allowed set");
  TokenId best = allowed.front();
  for (TokenId id : allowed) {
    if (logp(id) > logp(best) || (logp(id) == logp(best) && id < best)) best = id;
  }
  return best;
}

}  // namespace

TokenIds ConstrainedGreedyDecode(const Transformer& model, const ParameterSet& params,
                                 const FormattedExample& example, size_t max_len) {
  const Matrix enc = model.EncoderStates(params, example.input).back();
  TokenIds out{Vocabulary::kBos};
  TokenIds dec_in{Vocabulary::kBos, Vocabulary::kBos};
  std::optional<NerAutomaton> ner;
  if (example.kind == TaskKind::kNer) ner.emplace(example.allowed);
  std::vector<TokenId> qa_allowed(example.allowed.begin(), example.allowed.end());
  TokenIds label_prefix;

  const size_t model_cap = static_cast<size_t>(model.config().max_len);
  while (dec_in.size() <= model_cap) {
    std::vector<TokenId> allowed;
    switch (example.kind) {
      case TaskKind::kClassification:
        allowed = example.labels.Next(label_prefix);
        break;
      case TaskKind::kQa:
        allowed = qa_allowed;
        break;
      case TaskKind::kNer:
        allowed = ner->AllowedTokens();
        break;
      case TaskKind::kGeneration:
        Fail(ErrorKind::kInvalidArgument, "generation examples have no decoding constraint");
    }
    if (example.kind != TaskKind::kClassification && out.size() >= max_len) break;
    const Eigen::RowVectorXd logp = model.NextTokenLogProbs(params, enc, dec_in);
    const TokenId next = ArgmaxOver(logp, allowed);
    out.push_back(next);
    dec_in.push_back(next);
    if (ner) ner->Advance(next);
    if (example.kind == TaskKind::kClassification) label_prefix.push_back(next);
    if (next == Vocabulary::kEos) break;
  }
  return out;
}

TokenIds GreedyDecode(const Transformer& model, const ParameterSet& params, const TokenIds& input,
                      size_t max_len) {
  const Matrix enc = model.EncoderStates(params, input).back();
  TokenIds out{Vocabulary::kBos};
  TokenIds dec_in{Vocabulary::kBos, Vocabulary::kBos};
  const size_t cap = std::min(max_len, static_cast<size_t>(model.config().max_len));
  while (out.size() < cap) {
    const Eigen::RowVectorXd logp = model.NextTokenLogProbs(params, enc, dec_in);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logp.size(); ++k) {
      if (logp(k) > logp(best)) best = k;
    }
    const TokenId next = static_cast<TokenId>(best);
    out.push_back(next);
    dec_in.push_back(next);
    if (next == Vocabulary::kEos) break;
  }
  return out;
}

std::string DecodedBody(const Vocabulary& vocab, const TokenIds& decoded) {
  TokenIds body;
  for (size_t i = 0; i < decoded.size(); ++i) {
    if (i == 0 && decoded[i] == Vocabulary::kBos) continue;
    if (decoded[i] == Vocabulary::kEos) break;
    body.push_back(decoded[i]);
  }
  return vocab.Decode(body);
}

namespace {

std::vector<nlohmann::json> ReadJsonLines(const std::string& path) {
  std::vector<nlohmann::json> rows;
  size_t n = 0;
  for (const auto& line : ReadLines(path)) {
    ++n;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorKind::kFormat, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  if (rows.empty()) Fail(ErrorKind::kFormat, "'" + path + "' has no records");
  return rows;
}

template <typename T>
T Field(const nlohmann::json& row, const char* key) {
  try {
    return row.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    Fail(ErrorKind::kFormat, std::string("record lacks a valid \"") + key + "\" field");
  }
}

}  // namespace

std::vector<FormattedExample> LoadTaskDataset(const std::string& path, TaskKind kind,
                                              const Vocabulary& vocab,
                                              std::vector<std::string> label_set) {
  const auto rows = ReadJsonLines(path);
  std::vector<FormattedExample> out;
  if (kind == TaskKind::kClassification && label_set.empty()) {
    std::set<std::string> labels;
    for (const auto& r : rows) labels.insert(Field<std::string>(r, "label"));
    label_set.assign(labels.begin(), labels.end());
  }
  for (const auto& r : rows) {
    switch (kind) {
      case TaskKind::kClassification: {
        std::optional<std::string> b;
        if (r.contains("b") && !r["b"].is_null()) b = Field<std::string>(r, "b");
        out.push_back(FormatClassification(vocab, Field<std::string>(r, "a"), b,
                                           Field<std::string>(r, "label"), label_set));
        break;
      }
      case TaskKind::kQa:
        out.push_back(FormatQa(vocab, Field<std::string>(r, "passage"),
                               Field<std::string>(r, "question"), Field<std::string>(r, "answer")));
        break;
      case TaskKind::kNer:
        out.push_back(FormatNer(vocab, Field<std::vector<std::string>>(r, "tokens"),
                                Field<std::vector<std::string>>(r, "tags")));
        break;
      case TaskKind::kGeneration:
        out.push_back(FormatGeneration(vocab, Field<std::string>(r, "source"),
                                       Field<std::string>(r, "target")));
        break;
    }
  }
  return out;
}

std::vector<std::string> TaskDatasetText(const std::string& path, TaskKind kind) {
  std::vector<std::string> text;
  for (const auto& r : ReadJsonLines(path)) {
    switch (kind) {
      case TaskKind::kClassification:
        text.push_back(Field<std::string>(r, "a"));
        if (r.contains("b") && !r["b"].is_null()) text.push_back(Field<std::string>(r, "b"));
        text.push_back(Field<std::string>(r, "label"));
        break;
      case TaskKind::kQa:
        text.push_back(Field<std::string>(r, "passage"));
        text.push_back(Field<std::string>(r, "question"));
        text.push_back(Field<std::string>(r, "answer"));
        break;
      case TaskKind::kNer:
        text.push_back(JoinWords(Field<std::vector<std::string>>(r, "tokens")));
        break;
      case TaskKind::kGeneration:
        text.push_back(Field<std::string>(r, "source"));
        text.push_back(Field<std::string>(r, "target"));
        break;
    }
  }
  return text;
}

}  // namespace mt6
