#include "mt6/mt6.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "mt6/checkpoint.hpp"
#include "mt6/config.hpp"
#include "mt6/error.hpp"
#include "mt6/eval.hpp"
#include "mt6/pipeline.hpp"
#include "mt6/rng.hpp"
#include "mt6/trainer.hpp"
#include "mt6/vocab.hpp"

struct mt6_config {
  mt6::RunConfig cfg;
};

struct mt6_vocab {
  mt6::Vocabulary vocab;
};

struct mt6_model {
  mt6::Checkpoint checkpoint;
  mt6::Vocabulary vocab;
  mt6::Transformer transformer;
};

namespace {

thread_local std::string g_last_error;

mt6_status StatusFor(mt6::ErrorKind kind) {
  switch (kind) {
    case mt6::ErrorKind::kInvalidArgument: return MT6_ERR_INVALID_ARGUMENT;
    case mt6::ErrorKind::kIo: return MT6_ERR_IO;
    case mt6::ErrorKind::kFormat: return MT6_ERR_FORMAT;
    case mt6::ErrorKind::kNumeric: return MT6_ERR_NUMERIC;
    case mt6::ErrorKind::kState: return MT6_ERR_STATE;
  }
  return MT6_ERR_INTERNAL;
}

mt6_status Fail(mt6_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename F>
mt6_status Guard(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const mt6::Error& e) {
    return Fail(StatusFor(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return Fail(MT6_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Fail(MT6_ERR_INTERNAL, e.what());
  } catch (...) {
    return Fail(MT6_ERR_INTERNAL, "unknown failure");
  }
}

mt6_status NeedArg(const void* p, const char* name) {
  if (p) return MT6_OK;
  return Fail(MT6_ERR_INVALID_ARGUMENT, std::string(name) + " is NULL");
}

#define MT6_REQUIRE_ARG(p)                                            \
  do {                                                                \
    if (const mt6_status s_ = NeedArg((p), #p); s_ != MT6_OK) return s_; \
  } while (0)

mt6_status CopyOut(const std::string& s, char* buf, size_t cap, size_t* len) {
  MT6_REQUIRE_ARG(len);
  *len = s.size();
  if (!buf || cap <= s.size()) {
    return Fail(MT6_ERR_BUFFER_TOO_SMALL, "output needs " + std::to_string(s.size() + 1) + " bytes");
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return MT6_OK;
}

mt6::AlignmentSet Links(const mt6_link* links, size_t n) {
  mt6::AlignmentSet out;
  for (size_t i = 0; i < n; ++i) out.emplace(links[i].src, links[i].tgt);
  return out;
}

mt6_prf ToPrf(const mt6::Prf& p) { return {p.precision, p.recall, p.f1}; }

}  // namespace

extern "C" {

const char* mt6_status_name(mt6_status status) {
  switch (status) {
    case MT6_OK: return "ok";
    case MT6_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MT6_ERR_IO: return "io";
    case MT6_ERR_FORMAT: return "format";
    case MT6_ERR_NUMERIC: return "numeric";
    case MT6_ERR_STATE: return "state";
    case MT6_ERR_INTERNAL: return "internal";
    case MT6_ERR_BUFFER_TOO_SMALL: return "buffer_too_small";
  }
  return "unknown";
}

const char* mt6_last_error(void) { return g_last_error.c_str(); }

const char* mt6_version(void) { return "0.1.0"; }

mt6_status mt6_config_create(mt6_config** out) {
  MT6_REQUIRE_ARG(out);
  return Guard([&] {
    *out = new mt6_config();
    return MT6_OK;
  });
}

void mt6_config_destroy(mt6_config* cfg) { delete cfg; }

mt6_status mt6_config_load_file(mt6_config* cfg, const char* path) {
  MT6_REQUIRE_ARG(cfg);
  MT6_REQUIRE_ARG(path);
  return Guard([&] {
    cfg->cfg.Merge(mt6::RunConfig::Load(path));
    return MT6_OK;
  });
}

mt6_status mt6_config_set(mt6_config* cfg, const char* key, const char* value) {
  MT6_REQUIRE_ARG(cfg);
  MT6_REQUIRE_ARG(key);
  MT6_REQUIRE_ARG(value);
  return Guard([&] {
    cfg->cfg.Set(key, value);
    return MT6_OK;
  });
}

mt6_status mt6_config_apply_override(mt6_config* cfg, const char* assignment) {
  MT6_REQUIRE_ARG(cfg);
  MT6_REQUIRE_ARG(assignment);
  return Guard([&] {
    cfg->cfg.ApplyOverride(assignment);
    return MT6_OK;
  });
}

mt6_status mt6_config_get(const mt6_config* cfg, const char* key, char* buf, size_t cap,
                          size_t* len) {
  MT6_REQUIRE_ARG(cfg);
  MT6_REQUIRE_ARG(key);
  return Guard([&] {
    const auto v = cfg->cfg.Find(key);
    if (!v) return Fail(MT6_ERR_INVALID_ARGUMENT, std::string("key '") + key + "' is not set");
    return CopyOut(*v, buf, cap, len);
  });
}

mt6_status mt6_config_resolve(const mt6_config* cfg, const char* command, char* buf, size_t cap,
                              size_t* len) {
  MT6_REQUIRE_ARG(cfg);
  MT6_REQUIRE_ARG(command);
  return Guard([&] {
    const auto resolved = mt6::ResolveConfig(cfg->cfg, mt6::CommandSchema(command), command);
    return CopyOut(resolved.Serialize(), buf, cap, len);
  });
}

size_t mt6_command_count(void) { return mt6::CommandNames().size(); }

const char* mt6_command_name(size_t index) {
  static const std::vector<std::string> names = mt6::CommandNames();
  return index < names.size() ? names[index].c_str() : nullptr;
}

mt6_status mt6_command_help(const char* command, char* buf, size_t cap, size_t* len) {
  MT6_REQUIRE_ARG(command);
  return Guard([&] {
    std::string text;
    for (const auto& k : mt6::CommandSchema(command)) {
      text += k.name + " (" + (k.default_value.empty() ? "unset" : k.default_value) + "): " +
              k.help + "\n";
    }
    return CopyOut(text, buf, cap, len);
  });
}

mt6_status mt6_run(const char* command, const mt6_config* cfg) {
  MT6_REQUIRE_ARG(command);
  MT6_REQUIRE_ARG(cfg);
  return Guard([&] {
    mt6::RunCommand(command, cfg->cfg);
    return MT6_OK;
  });
}

mt6_status mt6_cmd_gen_data(const mt6_config* cfg) { return mt6_run("gen-data", cfg); }
mt6_status mt6_cmd_corrupt(const mt6_config* cfg) { return mt6_run("corrupt", cfg); }
mt6_status mt6_cmd_pretrain(const mt6_config* cfg) { return mt6_run("pretrain", cfg); }
mt6_status mt6_cmd_finetune(const mt6_config* cfg) { return mt6_run("finetune", cfg); }
mt6_status mt6_cmd_eval(const mt6_config* cfg) { return mt6_run("eval", cfg); }
mt6_status mt6_cmd_sweep_noise(const mt6_config* cfg) { return mt6_run("sweep-noise", cfg); }

mt6_status mt6_vocab_load(const char* path, mt6_vocab** out) {
  MT6_REQUIRE_ARG(path);
  MT6_REQUIRE_ARG(out);
  return Guard([&] {
    *out = new mt6_vocab{mt6::Vocabulary::Load(path)};
    return MT6_OK;
  });
}

void mt6_vocab_destroy(mt6_vocab* vocab) { delete vocab; }

size_t mt6_vocab_size(const mt6_vocab* vocab) { return vocab ? vocab->vocab.size() : 0; }

mt6_status mt6_vocab_token_id(const mt6_vocab* vocab, const char* token, int32_t* id) {
  MT6_REQUIRE_ARG(vocab);
  MT6_REQUIRE_ARG(token);
  MT6_REQUIRE_ARG(id);
  return Guard([&] {
    *id = vocab->vocab.Find(token);
    return MT6_OK;
  });
}

mt6_status mt6_vocab_encode(const mt6_vocab* vocab, const char* text, int32_t* ids, size_t cap,
                            size_t* n) {
  MT6_REQUIRE_ARG(vocab);
  MT6_REQUIRE_ARG(text);
  MT6_REQUIRE_ARG(n);
  return Guard([&] {
    const mt6::TokenIds enc = vocab->vocab.Encode(text);
    *n = enc.size();
    if (!ids || cap < enc.size()) {
      return Fail(MT6_ERR_BUFFER_TOO_SMALL, "output needs " + std::to_string(enc.size()) + " ids");
    }
    std::copy(enc.begin(), enc.end(), ids);
    return MT6_OK;
  });
}

mt6_status mt6_vocab_decode(const mt6_vocab* vocab, const int32_t* ids, size_t n, char* buf,
                            size_t cap, size_t* len) {
  MT6_REQUIRE_ARG(vocab);
  if (n > 0) MT6_REQUIRE_ARG(ids);
  return Guard([&] {
    const mt6::TokenIds in(ids, ids + n);
    return CopyOut(vocab->vocab.Decode(in), buf, cap, len);
  });
}

mt6_status mt6_make_example(const mt6_vocab* vocab, const char* task, const char* e,
                            const char* f, double noise_density, double mean_span,
                            size_t n_groups, uint64_t seed, char* buf, size_t cap, size_t* len) {
  MT6_REQUIRE_ARG(vocab);
  MT6_REQUIRE_ARG(task);
  MT6_REQUIRE_ARG(e);
  return Guard([&] {
    const mt6::Task t = mt6::ParseTask(task);
    if (t != mt6::Task::kSC && !f) {
      return Fail(MT6_ERR_INVALID_ARGUMENT, std::string("task ") + task + " needs a translation");
    }
    mt6::CorruptionOptions opts;
    opts.noise_density = noise_density;
    opts.mean_span_len = mean_span;
    mt6::Rng rng(seed);
    const mt6::TokenIds fe = f ? vocab->vocab.Encode(f) : mt6::TokenIds{};
    const auto ex = mt6::BuildExample(t, vocab->vocab, vocab->vocab.Encode(e), fe, opts, n_groups, rng);
    return CopyOut(mt6::ExampleToJson(ex), buf, cap, len);
  });
}

mt6_status mt6_model_load(const char* checkpoint_path, const char* vocab_path, mt6_model** out) {
  MT6_REQUIRE_ARG(checkpoint_path);
  MT6_REQUIRE_ARG(vocab_path);
  MT6_REQUIRE_ARG(out);
  return Guard([&] {
    mt6::Checkpoint ck = mt6::Checkpoint::Load(checkpoint_path);
    mt6::Vocabulary vocab = mt6::Vocabulary::Load(vocab_path);
    if (ck.vocab_fingerprint != vocab.Fingerprint()) {
      return Fail(MT6_ERR_STATE, "checkpoint was trained with a different vocabulary");
    }
    mt6::Transformer model(ck.model);
    if (!model.Matches(ck.params)) {
      return Fail(MT6_ERR_FORMAT, "checkpoint parameters do not match its model shape");
    }
    *out = new mt6_model{std::move(ck), std::move(vocab), std::move(model)};
    return MT6_OK;
  });
}

void mt6_model_destroy(mt6_model* model) { delete model; }

size_t mt6_model_layers(const mt6_model* model) {
  return model ? static_cast<size_t>(model->checkpoint.model.enc_layers) + 1 : 0;
}

size_t mt6_model_dim(const mt6_model* model) {
  return model ? static_cast<size_t>(model->checkpoint.model.d_model) : 0;
}

mt6_status mt6_model_sentence_embedding(const mt6_model* model, const char* text, int layer,
                                        double* out, size_t cap) {
  MT6_REQUIRE_ARG(model);
  MT6_REQUIRE_ARG(text);
  MT6_REQUIRE_ARG(out);
  return Guard([&] {
    const size_t layers = mt6_model_layers(model);
    const size_t l = layer < 0 ? layers - 1 : static_cast<size_t>(layer);
    if (l >= layers) return Fail(MT6_ERR_INVALID_ARGUMENT, "layer exceeds the encoder depth");
    if (cap < mt6_model_dim(model)) {
      return Fail(MT6_ERR_BUFFER_TOO_SMALL,
                  "output needs " + std::to_string(mt6_model_dim(model)) + " doubles");
    }
    const auto reps = mt6::SentenceRepresentations(model->transformer, model->checkpoint.params,
                                                   model->vocab, model->vocab.Encode(text));
    std::copy(reps[l].data(), reps[l].data() + reps[l].size(), out);
    return MT6_OK;
  });
}

mt6_status mt6_model_greedy_decode(const mt6_model* model, const char* input, size_t max_len,
                                   char* buf, size_t cap, size_t* len) {
  MT6_REQUIRE_ARG(model);
  MT6_REQUIRE_ARG(input);
  return Guard([&] {
    const auto out = mt6::GreedyDecode(model->transformer, model->checkpoint.params,
                                       model->vocab.Encode(input), max_len);
    return CopyOut(mt6::DecodedBody(model->vocab, out), buf, cap, len);
  });
}

mt6_status mt6_rouge_n(const char* candidate, const char* reference, int n, mt6_prf* out) {
  MT6_REQUIRE_ARG(candidate);
  MT6_REQUIRE_ARG(reference);
  MT6_REQUIRE_ARG(out);
  return Guard([&] {
    *out = ToPrf(mt6::RougeN(candidate, reference, n));
    return MT6_OK;
  });
}

mt6_status mt6_rouge_l(const char* candidate, const char* reference, mt6_prf* out) {
  MT6_REQUIRE_ARG(candidate);
  MT6_REQUIRE_ARG(reference);
  MT6_REQUIRE_ARG(out);
  return Guard([&] {
    *out = ToPrf(mt6::RougeL(candidate, reference));
    return MT6_OK;
  });
}

mt6_status mt6_qa_scores(const char* pred, const char* gold, double* exact_match, double* f1) {
  MT6_REQUIRE_ARG(pred);
  MT6_REQUIRE_ARG(gold);
  MT6_REQUIRE_ARG(exact_match);
  MT6_REQUIRE_ARG(f1);
  return Guard([&] {
    const mt6::QaScore s = mt6::QaScores(pred, gold);
    *exact_match = s.exact_match;
    *f1 = s.f1;
    return MT6_OK;
  });
}

mt6_status mt6_transfer_gap(double en_score, const double* other_scores, size_t n, double* out) {
  MT6_REQUIRE_ARG(out);
  if (n > 0) MT6_REQUIRE_ARG(other_scores);
  return Guard([&] {
    *out = mt6::TransferGap(en_score, std::vector<double>(other_scores, other_scores + n));
    return MT6_OK;
  });
}

mt6_status mt6_aer(const mt6_link* pred, size_t n_pred, const mt6_link* sure, size_t n_sure,
                   const mt6_link* possible, size_t n_possible, double* out) {
  MT6_REQUIRE_ARG(out);
  if (n_pred > 0) MT6_REQUIRE_ARG(pred);
  if (n_sure > 0) MT6_REQUIRE_ARG(sure);
  return Guard([&] {
    const auto a = Links(pred, n_pred);
    const auto s = Links(sure, n_sure);
    *out = possible ? mt6::Aer(a, s, Links(possible, n_possible)) : mt6::Aer(a, s);
    return MT6_OK;
  });
}

mt6_status mt6_mutual_argmax_align(const double* sim, size_t rows, size_t cols, mt6_link* out,
                                   size_t cap, size_t* n) {
  MT6_REQUIRE_ARG(n);
  if (rows * cols > 0) MT6_REQUIRE_ARG(sim);
  return Guard([&] {
    mt6::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (rows * cols > 0) std::copy(sim, sim + rows * cols, m.data());
    const auto links = mt6::MutualArgmaxAlign(m);
    *n = links.size();
    if (!out || cap < links.size()) {
      return Fail(MT6_ERR_BUFFER_TOO_SMALL, "output needs " + std::to_string(links.size()) + " links");
    }
    size_t i = 0;
    for (const auto& [s, t] : links) out[i++] = mt6_link{s, t};
    return MT6_OK;
  });
}

mt6_status mt6_retrieval_accuracy(const double* src, const double* tgt, size_t n, size_t dim,
                                  mt6_retrieval* out) {
  MT6_REQUIRE_ARG(out);
  if (n * dim > 0) {
    MT6_REQUIRE_ARG(src);
    MT6_REQUIRE_ARG(tgt);
  }
  return Guard([&] {
    std::vector<Eigen::VectorXd> a, b;
    for (size_t i = 0; i < n; ++i) {
      a.push_back(Eigen::Map<const Eigen::VectorXd>(src + i * dim, static_cast<Eigen::Index>(dim)));
      b.push_back(Eigen::Map<const Eigen::VectorXd>(tgt + i * dim, static_cast<Eigen::Index>(dim)));
    }
    const mt6::RetrievalResult r = mt6::RetrievalAccuracy(a, b);
    *out = {r.src_to_tgt, r.tgt_to_src, r.mean};
    return MT6_OK;
  });
}

}  // extern "C"
