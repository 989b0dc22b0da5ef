#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "mt6/error.hpp"
#include "mt6/vocab.hpp"
#include "test_support.hpp"

using namespace mt6;

TEST_CASE("vocab: frequency order decides ids") {
  const int S = 2;
  const size_t specials = SpecialTokenStrings(S).size();
  auto v = Vocabulary::BuildFromLines({"a a b"}, specials + 8, S);
  CHECK(v.size() == specials + 2);
  CHECK(v.Find("a") >= 0);
  CHECK(v.Find("b") >= 0);
  CHECK(v.Find("a") < v.Find("b"));
  for (size_t i = 0; i < specials; ++i) CHECK(v.token(static_cast<TokenId>(i)) == SpecialTokenStrings(S)[i]);
}

TEST_CASE("vocab: corpus order does not matter") {
  std::vector<std::string> f1 = {"x y z z", "q r"};
  std::vector<std::string> f2 = {"b a", "c c a"};
  auto lines_a = f1;
  lines_a.insert(lines_a.end(), f2.begin(), f2.end());
  auto lines_b = f2;
  lines_b.insert(lines_b.end(), f1.begin(), f1.end());
  CHECK(Vocabulary::BuildFromLines(lines_a, 500, 4) == Vocabulary::BuildFromLines(lines_b, 500, 4));

  std::vector<std::string> t1 = SplitWhitespace("x y z z q r");
  std::vector<std::string> t2 = SplitWhitespace("b a c c a");
  CHECK(Vocabulary::Build({t1, t2}, 500, 4) == Vocabulary::Build({t2, t1}, 500, 4));
}

TEST_CASE("vocab: truncation keeps the most frequent tokens") {
  Rng rng(11);
  std::vector<std::string> stream;
  for (int i = 0; i < 1000; ++i) {
    const int reps = 1 + static_cast<int>(rng.Below(50));
    for (int r = 0; r < reps; ++r) stream.push_back("tok" + std::to_string(i));
  }
  rng.Shuffle(stream);
  const int S = 5;
  const size_t specials = SpecialTokenStrings(S).size();
  auto v = Vocabulary::Build({stream}, specials + 10, S);
  REQUIRE(v.size() == specials + 10);

  // Independent tally: count, then order by (count desc, token asc).
  std::map<std::string, int> tally;
  for (const auto& t : stream) tally[t] += 1;
  std::vector<std::pair<int, std::string>> order;
  for (const auto& [tok, c] : tally) order.emplace_back(-c, tok);
  std::sort(order.begin(), order.end());
  for (size_t k = 0; k < 10; ++k) {
    CHECK(v.token(static_cast<TokenId>(specials + k)) == order[k].second);
  }
}

TEST_CASE("vocab: special and size errors") {
  CHECK_THROWS_AS(Vocabulary::BuildFromLines({"a"}, 5, 2), Error);
  CHECK_THROWS_AS(Vocabulary::BuildFromLines({}, 100, 2), Error);
  CHECK_THROWS_AS(Vocabulary::BuildFromLines({"a"}, 100, 0), Error);
}

TEST_CASE("vocab: encode and decode") {
  auto v = Vocabulary::BuildFromLines({"a b c"}, 100, 3);
  const TokenIds ab = v.Encode("a b");
  CHECK(ab == TokenIds{v.Find("a"), v.Find("b")});
  CHECK(v.Decode(ab) == "a b");
  CHECK(v.Encode("a zzz") == TokenIds{v.Find("a"), Vocabulary::kUnk});
  // Special strings in text are not specials.
  CHECK(v.Encode("<eos>") == TokenIds{Vocabulary::kUnk});
  CHECK_THROWS_AS(v.Decode({static_cast<TokenId>(v.size())}), Error);
  CHECK_THROWS_AS(v.Decode({-1}), Error);
}

TEST_CASE("vocab: random sentences round trip") {
  auto v = testing::WordVocab(40);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const TokenIds s = testing::RandomSentence(v, 1 + rng.Below(20), rng);
    CHECK(v.Encode(v.Decode(s)) == s);
  }
}

TEST_CASE("vocab: sentinel block") {
  auto v = Vocabulary::BuildFromLines({"a"}, 100, 20);
  std::set<TokenId> ids;
  for (int k = 1; k <= 20; ++k) {
    const TokenId id = v.Sentinel(k);
    CHECK(id == Vocabulary::kFirstSentinel + k - 1);
    CHECK(v.IsSentinel(id));
    CHECK(v.SentinelIndex(id) == k);
    CHECK(v.token(id) == "[M_" + std::to_string(k) + "]");
    ids.insert(id);
  }
  CHECK(ids.size() == 20);
  CHECK_FALSE(v.IsSentinel(v.Find("a")));
  CHECK_THROWS_AS(v.Sentinel(0), Error);
  CHECK_THROWS_AS(v.Sentinel(21), Error);
}

TEST_CASE("vocab: serialization round trip and fingerprint") {
  auto v = Vocabulary::BuildFromLines({"c b a a"}, 100, 7);
  testing::TempDir dir;
  v.Save(dir / "vocab.txt");
  auto w = Vocabulary::Load(dir / "vocab.txt");
  CHECK(v == w);
  CHECK(v.Fingerprint() == w.Fingerprint());
  auto other = Vocabulary::BuildFromLines({"c c b a"}, 100, 7);
  CHECK(v.Fingerprint() != other.Fingerprint());
  CHECK_THROWS_AS(Vocabulary::Deserialize("<pad>\nfoo\n"), Error);
}
