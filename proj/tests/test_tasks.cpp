#include <doctest.h>

#include <algorithm>
#include <set>

#include "mt6/error.hpp"
#include "mt6/tasks.hpp"
#include "mt6/trainer.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mt6;

namespace {

Vocabulary TextVocab(const std::vector<std::string>& lines) {
  return Vocabulary::BuildFromLines(lines, 1000, 10);
}

std::string Render(const Vocabulary& v, const TokenIds& ids) { return v.Decode(ids); }

ModelConfig DecodeConfig(int vocab_size) {
  ModelConfig c;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.d_model = 16;
  c.d_ff = 32;
  c.heads = 2;
  c.vocab_size = vocab_size;
  c.max_len = 32;
  return c;
}

}  // namespace

TEST_CASE("tasks: classification format") {
  auto v = TextVocab({"You have access to the facts . The facts are accessible to you . entailment neutral contradiction"});
  const std::vector<std::string> labels = {"entailment", "neutral", "contradiction"};
  auto ex = FormatClassification(v, "You have access to the facts .",
                                 std::string("The facts are accessible to you ."), "entailment", labels);
  CHECK(Render(v, ex.input) ==
        "<bos> You have access to the facts . <eos> The facts are accessible to you . <eos>");
  CHECK(Render(v, ex.target) == "<bos> entailment <eos>");
  CHECK(ex.reference == "entailment");

  auto single = FormatClassification(v, "the facts", std::nullopt, "neutral", labels);
  CHECK(std::count(single.input.begin(), single.input.end(), Vocabulary::kEos) == 1);
  CHECK(single.input.front() == Vocabulary::kBos);
  CHECK(single.input.back() == Vocabulary::kEos);

  CHECK_THROWS_AS(FormatClassification(v, "x", std::nullopt, "maybe", labels), Error);
}

TEST_CASE("tasks: label round trip over random labels") {
  Rng rng(1);
  std::vector<std::string> labels, words;
  for (int i = 0; i < 30; ++i) words.push_back("l" + std::to_string(i));
  for (int i = 0; i < 100; ++i) {
    std::string l;
    for (size_t k = 0, n = 1 + rng.Below(3); k < n; ++k) l += (k ? " " : "") + words[rng.Below(words.size())];
    labels.push_back(l);
  }
  std::string all;
  for (const auto& w : words) all += w + " ";
  auto v = TextVocab({all});
  for (const auto& l : labels) {
    auto ex = FormatClassification(v, "l1", std::nullopt, l, labels);
    TokenIds body;
    for (TokenId id : ex.target) {
      if (!v.IsSpecial(id)) body.push_back(id);
    }
    CHECK(v.Decode(body) == l);
    CHECK(ex.labels.Contains(v.Encode(l)));
  }
}

TEST_CASE("tasks: label trie") {
  LabelTrie t;
  t.Insert({10, 11});
  t.Insert({10});
  t.Insert({12, 13});
  CHECK(t.size() == 3);
  CHECK(t.Next({}) == std::vector<TokenId>{10, 12});
  CHECK(t.Next({10}) == std::vector<TokenId>{Vocabulary::kEos, 11});
  CHECK(t.Next({10, 11}) == std::vector<TokenId>{Vocabulary::kEos});
  CHECK(t.Next({11}).empty());
  CHECK(t.Contains({12, 13}));
  CHECK_FALSE(t.Contains({12}));
}

TEST_CASE("tasks: QA format") {
  auto v = TextVocab({"It has offices in Seoul , South Korea . Where is the office ?"});
  auto ex = FormatQa(v, "It has offices in Seoul , South Korea .",
                     "Where is the office in South Korea ?", "Seoul");
  CHECK(Render(v, ex.target) == "<bos> Seoul <eos>");
  CHECK(Render(v, ex.input) ==
        "<bos> It has offices in Seoul , South Korea . <eos> Where is the office in South Korea ? <eos>");
  CHECK(ex.answer_in_passage);

  auto whole = FormatQa(v, "It has offices", "Where ?", "It has offices");
  CHECK(whole.target.size() == 3 + 2);

  auto missing = FormatQa(v, "It has offices", "Where ?", "Korea");
  CHECK_FALSE(missing.answer_in_passage);
}

TEST_CASE("tasks: QA constraint set is the passage tokens plus eos") {
  auto v = testing::WordVocab(50);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const TokenIds passage = testing::RandomSentence(v, 1 + rng.Below(15), rng);
    const TokenIds question = testing::RandomSentence(v, 1 + rng.Below(6), rng);
    auto ex = FormatQa(v, v.Decode(passage), v.Decode(question), v.Decode({passage[0]}));
    std::set<TokenId> expect;
    for (TokenId t : passage) expect.insert(t);
    expect.insert(Vocabulary::kEos);
    CHECK(ex.allowed == expect);
  }
}

TEST_CASE("tasks: NER format") {
  auto v = TextVocab({"Italy recalled Marcello Cuttitta ."});
  auto ex = FormatNer(v, {"Italy", "recalled", "Marcello", "Cuttitta", "."},
                      {"B-LOC", "O", "B-PER", "I-PER", "O"});
  CHECK(Render(v, ex.target) == "<bos> <loc> Italy <sep> <per> Marcello Cuttitta <sep> <eos>");
  CHECK(Render(v, ex.input) == "<bos> Italy recalled Marcello Cuttitta . <eos>");
  REQUIRE(ex.entities.size() == 2);
  CHECK(ex.entities[1].start == 2);
  CHECK(ex.entities[1].end == 4);

  auto none = FormatNer(v, {"Italy", "recalled"}, {"O", "O"});
  CHECK(Render(v, none.target) == "<bos> <eos>");

  CHECK_THROWS_AS(FormatNer(v, {"Italy", "recalled"}, {"O", "I-PER"}), Error);
  CHECK_THROWS_AS(FormatNer(v, {"Italy", "recalled"}, {"B-LOC", "I-PER"}), Error);
  CHECK_THROWS_AS(FormatNer(v, {"Italy"}, {"B-XYZ"}), Error);
  CHECK_THROWS_AS(FormatNer(v, {"Italy"}, {"O", "O"}), Error);
}

TEST_CASE("tasks: NER parse inverts format on random taggings") {
  auto v = testing::WordVocab(8);  // small vocabulary forces repeated tokens
  Rng rng(3);
  const char* types[] = {"LOC", "PER", "ORG", "MISC"};
  for (int i = 0; i < 1000; ++i) {
    const size_t n = 1 + rng.Below(12);
    std::vector<std::string> toks, tags;
    bool open = false;
    std::string type;
    for (size_t k = 0; k < n; ++k) {
      toks.push_back("w" + std::to_string(rng.Below(8)));
      const uint64_t r = rng.Below(3);
      if (r == 0) {
        tags.push_back("O");
        open = false;
      } else if (r == 1 || !open) {
        type = types[rng.Below(4)];
        tags.push_back("B-" + type);
        open = true;
      } else {
        tags.push_back("I-" + type);
      }
    }
    auto ex = FormatNer(v, toks, tags);
    auto parsed = ParseNerOutput(ex.target, ex.source);
    REQUIRE(parsed.size() == ex.entities.size());
    for (size_t k = 0; k < parsed.size(); ++k) {
      CHECK(parsed[k].tag == ex.entities[k].tag);
      CHECK(parsed[k].tokens == ex.entities[k].tokens);
      CHECK(parsed[k].matched);
    }
    CHECK(oracle::NerOutputWellFormed(ex.target, std::set<TokenId>(ex.source.begin(), ex.source.end()), true));
  }
}

TEST_CASE("tasks: NER parse positions and unmatched spans") {
  auto v = TextVocab({"a b c"});
  const TokenId a = v.Find("a"), b = v.Find("b"), c = v.Find("c");
  const TokenId loc = Vocabulary::Tag(EntityTag::kLoc), per = Vocabulary::Tag(EntityTag::kPer);
  const TokenIds src = {a, b, a, c};
  auto out = ParseNerOutput({Vocabulary::kBos, loc, a, Vocabulary::kSep, per, a, c,
                             Vocabulary::kSep, Vocabulary::kEos},
                            src);
  REQUIRE(out.size() == 2);
  CHECK(out[0].start == 0);
  CHECK(out[1].start == 2);
  CHECK(out[1].end == 4);
  auto miss = ParseNerOutput({Vocabulary::kBos, loc, c, a, Vocabulary::kSep, Vocabulary::kEos}, src);
  REQUIRE(miss.size() == 1);
  CHECK_FALSE(miss[0].matched);
  // Empty entity dropped.
  CHECK(ParseNerOutput({Vocabulary::kBos, loc, Vocabulary::kSep, Vocabulary::kEos}, src).empty());
  CHECK_THROWS_AS(ParseNerOutput({Vocabulary::kBos, a}, src), Error);
}

TEST_CASE("tasks: NER automaton") {
  NerAutomaton m({20, 21});
  CHECK(m.state() == NerAutomaton::State::kAfterBosOrSep);
  CHECK(m.AllowedTokens() == std::vector<TokenId>{2, 5, 6, 7, 8});
  CHECK_FALSE(m.Allows(20));
  m.Advance(6);
  CHECK(m.AllowedTokens() == std::vector<TokenId>{Vocabulary::kSep, 20, 21});
  CHECK_THROWS_AS(m.Advance(7), Error);
  m.Advance(21);
  m.Advance(Vocabulary::kSep);
  m.Advance(Vocabulary::kEos);
  CHECK(m.state() == NerAutomaton::State::kDone);
  CHECK(m.AllowedTokens().empty());
}

TEST_CASE("tasks: constrained decodes on random parameters") {
  std::vector<std::string> words;
  std::string all;
  for (int i = 0; i < 40; ++i) {
    words.push_back("w" + std::to_string(i));
    all += words.back() + " ";
  }
  auto v = TextVocab({all + "entailment neutral contradiction"});
  Transformer model(DecodeConfig(static_cast<int>(v.size())));
  const std::vector<std::string> labels = {"entailment", "neutral", "contradiction"};
  Rng rng(4);
  for (int i = 0; i < 60; ++i) {
    const auto params = model.InitParams(100 + static_cast<uint64_t>(i));
    const TokenIds s = testing::RandomSentence(v, 2 + rng.Below(8), rng);
    std::string text = v.Decode(s);

    auto cls = FormatClassification(v, text, std::nullopt, "neutral", labels);
    const TokenIds c = ConstrainedGreedyDecode(model, params, cls, 20);
    CHECK(std::find(labels.begin(), labels.end(), DecodedBody(v, c)) != labels.end());
    CHECK(c.back() == Vocabulary::kEos);

    auto qa = FormatQa(v, text, "w1 w2", v.Decode({s[0]}));
    const TokenIds q = ConstrainedGreedyDecode(model, params, qa, 10);
    CHECK(q.size() <= 10);
    for (size_t k = 1; k < q.size(); ++k) CHECK(qa.allowed.count(q[k]) == 1);

    std::vector<std::string> toks = SplitWhitespace(text), tags(toks.size(), "O");
    auto ner = FormatNer(v, toks, tags);
    const TokenIds n = ConstrainedGreedyDecode(model, params, ner, 16);
    CHECK(oracle::NerOutputWellFormed(n, ner.allowed, false));
    CHECK_NOTHROW(ParseNerOutput(n, ner.source));
  }
}

TEST_CASE("tasks: greedy decoding") {
  auto v = testing::WordVocab(12);
  Transformer model(DecodeConfig(static_cast<int>(v.size())));
  auto params = model.InitParams(5);

  SUBCASE("a model that always prefers eos yields an empty body") {
    auto p = params;
    const size_t d = static_cast<size_t>(model.config().d_model);
    for (double& x : p["dec.final_norm.g"].data) x = 0.0;
    for (double& x : p["dec.final_norm.b"].data) x = 1.0;
    for (double& x : p["embed.token"].data) x = 0.0;
    for (size_t k = 0; k < d; ++k) p["embed.token"].data[Vocabulary::kEos * d + k] = 1.0;
    const TokenIds out = GreedyDecode(model, p, {v.Find("w1"), v.Find("w2")}, 20);
    CHECK(out == TokenIds{Vocabulary::kBos, Vocabulary::kEos});
    CHECK(DecodedBody(v, out).empty());
  }
  SUBCASE("deterministic and capped") {
    const TokenIds in = {Vocabulary::kBos, v.Find("w3"), Vocabulary::kEos};
    const TokenIds a = GreedyDecode(model, params, in, 9);
    CHECK(a == GreedyDecode(model, params, in, 9));
    CHECK(a.size() <= 9);
    CHECK(a.front() == Vocabulary::kBos);
  }
  SUBCASE("an overfit pair decodes its target") {
    auto fx = FormatGeneration(v, "w1 w2 w3", "w7 w5 w5 w9");
    Checkpoint start;
    start.model = model.config();
    start.vocab_fingerprint = v.Fingerprint();
    start.phase = "pretrain";
    start.params = params;
    FinetunePlan plan;
    plan.batch_size = 1;
    plan.steps = 300;
    plan.optimizer.base_lr = 1e-2;
    plan.optimizer.warmup_steps = 10;
    plan.optimizer.total_steps = 301;
    auto ck = Finetune(start, v, {fx.AsTrainingExample()}, plan);
    const TokenIds out = GreedyDecode(model, ck.params, fx.input, 20);
    CHECK(out == fx.target);
    CHECK(DecodedBody(v, out) == "w7 w5 w5 w9");
  }
}

TEST_CASE("tasks: JSON-lines datasets") {
  testing::TempDir dir;
  auto v = TextVocab({"a b c d yes no"});
  testing::WriteText(dir / "cls.jsonl",
                     "{\"a\":\"a b\",\"label\":\"yes\"}\n\n{\"a\":\"c\",\"b\":\"d\",\"label\":\"no\"}\n");
  auto cls = LoadTaskDataset(dir / "cls.jsonl", TaskKind::kClassification, v);
  REQUIRE(cls.size() == 2);
  CHECK(cls[1].labels.size() == 2);
  CHECK(std::count(cls[1].input.begin(), cls[1].input.end(), Vocabulary::kEos) == 2);

  testing::WriteText(dir / "qa.jsonl", "{\"passage\":\"a b c\",\"question\":\"d\",\"answer\":\"b\"}\n");
  CHECK(LoadTaskDataset(dir / "qa.jsonl", TaskKind::kQa, v)[0].reference == "b");

  testing::WriteText(dir / "ner.jsonl", "{\"tokens\":[\"a\",\"b\"],\"tags\":[\"B-ORG\",\"I-ORG\"]}\n");
  CHECK(LoadTaskDataset(dir / "ner.jsonl", TaskKind::kNer, v)[0].entities.size() == 1);

  testing::WriteText(dir / "bad.jsonl", "{\"a\":\"a\"}\n");
  CHECK_THROWS_AS(LoadTaskDataset(dir / "bad.jsonl", TaskKind::kClassification, v), Error);
  testing::WriteText(dir / "broken.jsonl", "{not json\n");
  CHECK_THROWS_AS(LoadTaskDataset(dir / "broken.jsonl", TaskKind::kQa, v), Error);
  testing::WriteText(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(LoadTaskDataset(dir / "empty.jsonl", TaskKind::kQa, v), Error);

  CHECK(ParseTaskKind("qa") == TaskKind::kQa);
  CHECK(ParseTaskKind("classification") == TaskKind::kClassification);
  CHECK_THROWS_AS(ParseTaskKind("summarize"), Error);
}
