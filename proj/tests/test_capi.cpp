// Exercises the shared library through its C header only.
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "mt6/mt6.h"
#include "temp_dir.hpp"

using mt6::testing::TempDir;

namespace {

std::string Resolve(const mt6_config* cfg, const char* command) {
  size_t len = 0;
  REQUIRE(mt6_config_resolve(cfg, command, nullptr, 0, &len) == MT6_ERR_BUFFER_TOO_SMALL);
  std::string out(len + 1, '\0');
  REQUIRE(mt6_config_resolve(cfg, command, out.data(), out.size(), &len) == MT6_OK);
  out.resize(len);
  return out;
}

struct Config {
  mt6_config* cfg = nullptr;
  Config() { REQUIRE(mt6_config_create(&cfg) == MT6_OK); }
  ~Config() { mt6_config_destroy(cfg); }
  void Set(const char* k, const std::string& v) { REQUIRE(mt6_config_set(cfg, k, v.c_str()) == MT6_OK); }
};

// Tiny cipher data plus a 10-step model in `dir`.
void TinyPipeline(const TempDir& dir) {
  Config gen;
  gen.Set("out_dir", dir / "data");
  gen.Set("vocab_size", "12");
  gen.Set("n_pairs", "100");
  gen.Set("n_mono", "100");
  gen.Set("n_test", "10");
  gen.Set("sentinels", "20");
  REQUIRE(mt6_cmd_gen_data(gen.cfg) == MT6_OK);

  Config pre;
  pre.Set("data_dir", dir / "data");
  pre.Set("out_dir", dir / "run");
  pre.Set("task", "tsc");
  pre.Set("steps", "10");
  pre.Set("warmup", "2");
  pre.Set("batch_size", "4");
  pre.Set("d_model", "16");
  pre.Set("d_ff", "32");
  pre.Set("heads", "2");
  pre.Set("d_kv", "8");
  pre.Set("enc_layers", "1");
  pre.Set("dec_layers", "1");
  pre.Set("log_every", "0");
  REQUIRE(mt6_cmd_pretrain(pre.cfg) == MT6_OK);
}

}  // namespace

TEST_CASE("capi: status names and version") {
  CHECK(std::string(mt6_status_name(MT6_OK)) == "ok");
  CHECK(std::string(mt6_status_name(MT6_ERR_STATE)) == "state");
  CHECK(std::string(mt6_status_name(MT6_ERR_BUFFER_TOO_SMALL)) == "buffer_too_small");
  CHECK(std::string(mt6_version()).size() > 0);
}

TEST_CASE("capi: configuration") {
  Config c;
  CHECK(mt6_config_apply_override(c.cfg, "steps=7") == MT6_OK);
  CHECK(mt6_config_apply_override(c.cfg, "steps") == MT6_ERR_INVALID_ARGUMENT);
  CHECK(std::string(mt6_last_error()).find("key=value") != std::string::npos);

  size_t len = 0;
  char buf[16];
  CHECK(mt6_config_get(c.cfg, "steps", buf, sizeof(buf), &len) == MT6_OK);
  CHECK(std::string(buf) == "7");
  CHECK(len == 1);
  CHECK(mt6_config_get(c.cfg, "nope", buf, sizeof(buf), &len) != MT6_OK);

  const std::string resolved = Resolve(c.cfg, "pretrain");
  CHECK(resolved.find("steps=7\n") != std::string::npos);
  CHECK(resolved.find("lr=0.001\n") != std::string::npos);
  CHECK(mt6_config_resolve(c.cfg, "gen-data", nullptr, 0, &len) == MT6_ERR_INVALID_ARGUMENT);

  TempDir dir;
  mt6::testing::WriteText(dir / "f.cfg", "steps = 9\nlr = 0.5\n");
  CHECK(mt6_config_load_file(c.cfg, (dir / "f.cfg").c_str()) == MT6_OK);
  CHECK(mt6_config_get(c.cfg, "steps", buf, sizeof(buf), &len) == MT6_OK);
  CHECK(std::string(buf) == "9");
  CHECK(mt6_config_load_file(c.cfg, (dir / "missing.cfg").c_str()) == MT6_ERR_IO);
}

TEST_CASE("capi: commands") {
  CHECK(mt6_command_count() == 6);
  CHECK(std::string(mt6_command_name(0)) == "gen-data");
  size_t len = 0;
  CHECK(mt6_command_help("eval", nullptr, 0, &len) == MT6_ERR_BUFFER_TOO_SMALL);
  CHECK(len > 0);
  Config c;
  CHECK(mt6_run("train", c.cfg) == MT6_ERR_INVALID_ARGUMENT);
  CHECK(mt6_run(nullptr, c.cfg) == MT6_ERR_INVALID_ARGUMENT);
  c.Set("seed", "1");
  c.Set("input", "/nonexistent/corpus.txt");
  CHECK(mt6_cmd_corrupt(c.cfg) == MT6_ERR_IO);
}

TEST_CASE("capi: vocabulary, examples and a trained model") {
  TempDir dir;
  TinyPipeline(dir);
  const std::string vocab_path = dir / "data/vocab.txt";

  mt6_vocab* vocab = nullptr;
  REQUIRE(mt6_vocab_load(vocab_path.c_str(), &vocab) == MT6_OK);
  CHECK(mt6_vocab_size(vocab) == 9 + 20 + 24);
  int32_t id = 0;
  CHECK(mt6_vocab_token_id(vocab, "<sep>", &id) == MT6_OK);
  CHECK(id == 3);
  CHECK(mt6_vocab_token_id(vocab, "zzz", &id) == MT6_OK);
  CHECK(id == -1);

  size_t n = 0;
  CHECK(mt6_vocab_encode(vocab, "a1 a2 qq", nullptr, 0, &n) == MT6_ERR_BUFFER_TOO_SMALL);
  CHECK(n == 3);
  std::vector<int32_t> ids(n);
  CHECK(mt6_vocab_encode(vocab, "a1 a2 qq", ids.data(), ids.size(), &n) == MT6_OK);
  CHECK(ids[2] == 4);  // unknown
  char text[64];
  size_t len = 0;
  CHECK(mt6_vocab_decode(vocab, ids.data(), 2, text, sizeof(text), &len) == MT6_OK);
  CHECK(std::string(text) == "a1 a2");

  std::vector<char> buf(4096);
  REQUIRE(mt6_make_example(vocab, "tsc", "a1 a2 a3 a4", "b1 b2 b3 b4", 1.0, 3, 1, 7, buf.data(),
                           buf.size(), &len) == MT6_OK);
  const auto js = nlohmann::json::parse(std::string(buf.data(), len));
  CHECK(js["task"] == "TSC");
  CHECK(js["target"].size() == 5);  // one sentinel plus a whole side
  CHECK(mt6_make_example(vocab, "mt", "a1", nullptr, 0.5, 3, 1, 7, buf.data(), buf.size(), &len) ==
        MT6_ERR_INVALID_ARGUMENT);
  CHECK(mt6_make_example(vocab, "xx", "a1", "b1", 0.5, 3, 1, 7, buf.data(), buf.size(), &len) ==
        MT6_ERR_INVALID_ARGUMENT);
  mt6_vocab_destroy(vocab);

  mt6_model* model = nullptr;
  REQUIRE(mt6_model_load((dir / "run/checkpoint.bin").c_str(), vocab_path.c_str(), &model) == MT6_OK);
  CHECK(mt6_model_layers(model) == 2);
  CHECK(mt6_model_dim(model) == 16);
  std::vector<double> emb(16), again(16);
  CHECK(mt6_model_sentence_embedding(model, "a1 a2 a3", -1, emb.data(), emb.size()) == MT6_OK);
  CHECK(mt6_model_sentence_embedding(model, "a1 a2 a3", 1, again.data(), again.size()) == MT6_OK);
  CHECK(emb == again);
  CHECK(mt6_model_sentence_embedding(model, "a1", 2, emb.data(), emb.size()) == MT6_ERR_INVALID_ARGUMENT);
  CHECK(mt6_model_sentence_embedding(model, "a1", 0, emb.data(), 3) == MT6_ERR_BUFFER_TOO_SMALL);
  CHECK(mt6_model_greedy_decode(model, "a1 a2", 6, nullptr, 0, &len) == MT6_ERR_BUFFER_TOO_SMALL);
  std::vector<char> out(len + 1);
  CHECK(mt6_model_greedy_decode(model, "a1 a2", 6, out.data(), out.size(), &len) == MT6_OK);
  mt6_model_destroy(model);

  // A vocabulary from a different corpus is refused.
  mt6::testing::WriteText(dir / "other.txt", "<pad>\n<bos>\n<eos>\n<sep>\n<unk>\n");
  CHECK(mt6_model_load((dir / "run/checkpoint.bin").c_str(), (dir / "other.txt").c_str(), &model) != MT6_OK);
}

TEST_CASE("capi: metrics") {
  mt6_prf p{};
  CHECK(mt6_rouge_l("a b c d", "a c d", &p) == MT6_OK);
  CHECK(p.precision == doctest::Approx(0.75));
  CHECK(p.recall == doctest::Approx(1.0));
  CHECK(mt6_rouge_n("a b", "a b", 2, &p) == MT6_OK);
  CHECK(p.f1 == 1.0);
  CHECK(mt6_rouge_n("a b", "a b", 0, &p) == MT6_ERR_INVALID_ARGUMENT);

  double em = 0, f1 = 0;
  CHECK(mt6_qa_scores("x y", "x y", &em, &f1) == MT6_OK);
  CHECK(em == 1.0);

  const double others[] = {70.0, 80.0};
  double gap = 0;
  CHECK(mt6_transfer_gap(90.0, others, 2, &gap) == MT6_OK);
  CHECK(gap == 15.0);
  CHECK(mt6_transfer_gap(90.0, others, 0, &gap) == MT6_ERR_INVALID_ARGUMENT);

  const mt6_link sure[] = {{0, 0}, {1, 1}, {2, 2}};
  const mt6_link half[] = {{0, 0}, {1, 1}};
  double aer = -1;
  CHECK(mt6_aer(sure, 3, sure, 3, nullptr, 0, &aer) == MT6_OK);
  CHECK(aer == 0.0);
  CHECK(mt6_aer(half, 2, sure, 3, nullptr, 0, &aer) == MT6_OK);
  CHECK(aer == doctest::Approx(1.0 - 4.0 / 5.0));

  const double sim[] = {0.9, 0.1, 0.2, 0.8};
  mt6_link links[4];
  size_t n = 0;
  CHECK(mt6_mutual_argmax_align(sim, 2, 2, links, 4, &n) == MT6_OK);
  REQUIRE(n == 2);
  CHECK(links[0].src == 0);
  CHECK(links[0].tgt == 0);
  CHECK(links[1].src == 1);
  CHECK(links[1].tgt == 1);
  CHECK(mt6_mutual_argmax_align(sim, 2, 2, links, 1, &n) == MT6_ERR_BUFFER_TOO_SMALL);

  const double src[] = {1, 0, 0, 1};
  const double tgt[] = {0, 2, 3, 0};
  mt6_retrieval r{};
  CHECK(mt6_retrieval_accuracy(src, tgt, 2, 2, &r) == MT6_OK);
  CHECK(r.mean == 0.0);
  CHECK(mt6_retrieval_accuracy(src, src, 2, 2, &r) == MT6_OK);
  CHECK(r.mean == 1.0);
}
