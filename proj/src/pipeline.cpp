#include "mt6/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "mt6/checkpoint.hpp"
#include "mt6/corpus.hpp"
#include "mt6/error.hpp"
#include "mt6/eval.hpp"
#include "mt6/io.hpp"
#include "mt6/rng.hpp"
#include "mt6/tasks.hpp"
#include "mt6/trainer.hpp"

namespace mt6 {

namespace {

constexpr uint64_t kTestStream = 0x74657374;
constexpr uint64_t kCorruptStream = 0x636f7272;

const std::vector<KeySpec> kCommon = {
    {"seed", "1", "global seed"},
    {"threads", "1", "worker threads (results do not depend on it)"},
};

const std::vector<KeySpec> kGenData = {
    {"out_dir", "data", "output directory"},
    {"vocab_size", "64", "tokens per cipher language"},
    {"n_pairs", "20000", "training sentence pairs"},
    {"n_mono", "20000", "monolingual sentences per language"},
    {"n_test", "500", "held-out sentence pairs"},
    {"min_len", "6", "shortest sentence"},
    {"max_len", "12", "longest sentence"},
    {"reorder_window", "3", "window for local reordering of language b"},
    {"sentinels", "100", "number of sentinel tokens in the vocabulary"},
};

const std::vector<KeySpec> kCorrupt = {
    {"task", "sc", "sc, mt, tpsc or tsc"},
    {"input", "", "monolingual text (sc) or tab-separated pairs"},
    {"vocab", "data/vocab.txt", "vocabulary file"},
    {"noise_density", "0.5", "fraction of tokens masked"},
    {"mean_span", "3", "mean span length"},
    {"n_groups", "1", "decoding groups"},
    {"limit", "0", "stop after this many examples (0: all)"},
    {"out", "corrupt.jsonl", "output file"},
};

const std::vector<KeySpec> kData = {
    {"data_dir", "data", "directory written by gen-data"},
    {"vocab", "", "vocabulary file (default <data_dir>/vocab.txt)"},
};

const std::vector<KeySpec> kPretrain = {
    {"mono", "", "comma separated monolingual files (default <data_dir>/mono.{a,b}.txt)"},
    {"parallel", "", "comma separated pair files (default <data_dir>/train.a-b.tsv)"},
    {"task", "none", "cross-lingual task: none, mt, tpsc or tsc"},
    {"n_groups", "3", "decoding groups"},
    {"noise_density", "0.5", "fraction of tokens masked"},
    {"mean_span", "3", "mean span length"},
    {"batch_size", "16", "examples per batch for each task"},
    {"steps", "2000", "optimizer steps"},
    {"alpha", "0.7", "corpus sampling exponent"},
    {"model", "desk", "model preset: desk or small"},
    {"enc_layers", "", "override the preset"},
    {"dec_layers", "", "override the preset"},
    {"d_model", "", "override the preset"},
    {"d_ff", "", "override the preset"},
    {"heads", "", "override the preset"},
    {"d_kv", "", "override the preset"},
    {"max_len", "", "override the preset"},
    {"lr", "0.001", "peak learning rate"},
    {"warmup", "100", "warmup steps"},
    {"beta1", "0.9", "Adam beta1"},
    {"beta2", "0.999", "Adam beta2"},
    {"eps", "1e-6", "Adam epsilon"},
    {"clip", "1.0", "global gradient norm limit"},
    {"checkpoint_every", "0", "also keep checkpoint-<step>.bin every N steps"},
    {"resume", "", "checkpoint to continue from"},
    {"log_every", "100", "progress line every N steps (0: silent)"},
    {"out_dir", "run", "output directory"},
};

const std::vector<KeySpec> kFinetune = {
    {"checkpoint", "", "starting checkpoint"},
    {"vocab", "data/vocab.txt", "vocabulary the checkpoint was trained with"},
    {"task_kind", "classification", "classification, qa, ner or generation"},
    {"train", "", "JSON-lines training set"},
    {"labels", "", "comma separated label set (classification)"},
    {"batch_size", "8", "examples per batch"},
    {"steps", "500", "optimizer steps"},
    {"lr", "0.001", "peak learning rate"},
    {"warmup", "50", "warmup steps"},
    {"beta1", "0.9", "Adam beta1"},
    {"beta2", "0.999", "Adam beta2"},
    {"eps", "1e-6", "Adam epsilon"},
    {"clip", "1.0", "global gradient norm limit"},
    {"checkpoint_every", "0", "also keep checkpoint-<step>.bin every N steps"},
    {"resume", "false", "checkpoint is a fine-tuning checkpoint to continue"},
    {"log_every", "100", "progress line every N steps (0: silent)"},
    {"out_dir", "finetune", "output directory"},
};

const std::vector<KeySpec> kEvalOnly = {
    {"test", "", "held-out pairs (default <data_dir>/test.a-b.tsv)"},
    {"test_align", "", "gold alignments (default <data_dir>/test.a-b.align if present)"},
    {"align_layer", "-1", "encoder layer for word alignment (-1: last)"},
};

const std::vector<KeySpec> kEvalTask = {
    {"checkpoint", "", "checkpoint to evaluate"},
    {"task_kind", "", "also score a task set: classification, qa, ner or generation"},
    {"task_data", "", "JSON-lines task set"},
    {"labels", "", "comma separated label set (classification)"},
    {"max_len", "64", "decoding length limit"},
    {"out_dir", "eval", "output directory"},
};

const std::vector<KeySpec> kSweep = {
    {"densities", "0.15,0.3,0.5,1.0", "noise densities to pretrain with"},
};

std::vector<KeySpec> Concat(std::initializer_list<const std::vector<KeySpec>*> parts) {
  std::vector<KeySpec> out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

const std::map<std::string, std::vector<KeySpec>>& Schemas() {
  static const std::map<std::string, std::vector<KeySpec>> schemas = [] {
    std::map<std::string, std::vector<KeySpec>> m;
    m["gen-data"] = Concat({&kCommon, &kGenData});
    m["corrupt"] = Concat({&kCommon, &kCorrupt});
    m["pretrain"] = Concat({&kCommon, &kData, &kPretrain});
    m["finetune"] = Concat({&kCommon, &kFinetune});
    m["eval"] = Concat({&kCommon, &kData, &kEvalOnly, &kEvalTask});
    std::vector<KeySpec> sweep = Concat({&kCommon, &kData, &kPretrain, &kEvalOnly, &kSweep});
    for (auto& k : sweep) {
      if (k.name == "task") k.default_value = "tsc";
      if (k.name == "out_dir") k.default_value = "sweep";
    }
    std::erase_if(sweep, [](const KeySpec& k) { return k.name == "resume"; });
    m["sweep-noise"] = sweep;
    return m;
  }();
  return schemas;
}

std::string Fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

void WriteResolved(const RunConfig& cfg, const std::string& dir, const std::string& command) {
  WriteFileAtomic(JoinPath(dir, "config.txt"), "# " + command + "\n" + cfg.Serialize());
}

std::string DataPath(const RunConfig& cfg, const std::string& key, const std::string& file) {
  const std::string& v = cfg.GetString(key);
  return v.empty() ? JoinPath(cfg.GetString("data_dir"), file) : v;
}

Vocabulary LoadVocabFor(const RunConfig& cfg) {
  if (cfg.Has("data_dir")) return Vocabulary::Load(DataPath(cfg, "vocab", "vocab.txt"));
  return Vocabulary::Load(cfg.GetString("vocab"));
}

// "mono.a.txt" -> "a"; "train.a-b.tsv" -> "a-b"; otherwise the stem.
std::string LangTag(const std::string& path) {
  std::string stem = std::filesystem::path(path).stem().string();
  const size_t dot = stem.find('.');
  return dot == std::string::npos ? stem : stem.substr(dot + 1);
}

std::pair<std::string, std::string> LangPair(const std::string& path) {
  const std::string tag = LangTag(path);
  const size_t dash = tag.find('-');
  if (dash == std::string::npos) return {tag + ".src", tag + ".tgt"};
  return {tag.substr(0, dash), tag.substr(dash + 1)};
}

int OptionalInt(const RunConfig& cfg, const std::string& key, int fallback) {
  return cfg.GetString(key).empty() ? fallback : static_cast<int>(cfg.GetInt(key));
}

ModelConfig ModelFromConfig(const RunConfig& cfg, int vocab_size) {
  ModelConfig m = ModelConfig::Preset(cfg.GetString("model"), vocab_size);
  m.enc_layers = OptionalInt(cfg, "enc_layers", m.enc_layers);
  m.dec_layers = OptionalInt(cfg, "dec_layers", m.dec_layers);
  m.d_model = OptionalInt(cfg, "d_model", m.d_model);
  m.d_ff = OptionalInt(cfg, "d_ff", m.d_ff);
  m.heads = OptionalInt(cfg, "heads", m.heads);
  m.d_kv = OptionalInt(cfg, "d_kv", m.d_kv);
  m.max_len = OptionalInt(cfg, "max_len", m.max_len);
  m.Validate();
  return m;
}

OptimizerConfig OptimizerFromConfig(const RunConfig& cfg) {
  OptimizerConfig o;
  o.base_lr = cfg.GetDouble("lr");
  o.beta1 = cfg.GetDouble("beta1");
  o.beta2 = cfg.GetDouble("beta2");
  o.eps = cfg.GetDouble("eps");
  o.clip_norm = cfg.GetDouble("clip");
  o.warmup_steps = cfg.GetUint("warmup");
  o.total_steps = cfg.GetUint("steps");
  return o;
}

int Threads(const RunConfig& cfg) {
  const int64_t t = cfg.GetInt("threads");
  Require(t >= 1, "threads must be >= 1");
  return static_cast<int>(t);
}

std::optional<Task> CrossTask(const std::string& name) {
  if (name == "none") return std::nullopt;
  const Task t = ParseTask(name);
  Require(t != Task::kSC, "the cross-lingual task cannot be sc");
  return t;
}

// Metrics rows survive a resume: rows up to the resume step are read back
// from the metrics file next to the resumed checkpoint.
std::vector<std::string> PriorMetricRows(const std::string& checkpoint_path, uint64_t upto) {
  std::vector<std::string> rows;
  const std::string path =
      JoinPath(std::filesystem::path(checkpoint_path).parent_path().string(), "metrics.csv");
  if (!FileExists(path)) return rows;
  const auto lines = ReadLines(path);
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const uint64_t step = std::stoull(lines[i].substr(0, lines[i].find(',')));
    if (step <= upto) rows.push_back(lines[i]);
  }
  return rows;
}

std::string MetricsFile(const std::vector<std::string>& rows) {
  std::string out = MetricsCsvHeader();
  for (const auto& r : rows) out += r.ends_with('\n') ? r : r + "\n";
  return out;
}

struct PretrainOutcome {
  Checkpoint checkpoint;
  std::vector<StepMetrics> steps;
};

PretrainOutcome RunPretrain(const RunConfig& cfg) {
  const std::string out_dir = cfg.GetString("out_dir");
  EnsureDirectory(out_dir);
  const Vocabulary vocab = LoadVocabFor(cfg);

  PretrainPlan plan;
  plan.cross_task = CrossTask(cfg.GetString("task"));
  plan.n_groups = cfg.GetUint("n_groups");
  plan.corruption.noise_density = cfg.GetDouble("noise_density");
  plan.corruption.mean_span_len = cfg.GetDouble("mean_span");
  plan.batch_size = cfg.GetUint("batch_size");
  plan.steps = cfg.GetUint("steps");
  plan.seed = cfg.GetUint("seed");
  plan.alpha = cfg.GetDouble("alpha");
  plan.checkpoint_every = cfg.GetUint("checkpoint_every");
  plan.optimizer = OptimizerFromConfig(cfg);
  plan.model = ModelFromConfig(cfg, static_cast<int>(vocab.size()));
  plan.threads = Threads(cfg);
  plan.Validate();

  PretrainData data;
  std::vector<std::string> mono = cfg.GetList("mono");
  if (mono.empty()) {
    mono = {JoinPath(cfg.GetString("data_dir"), "mono.a.txt"),
            JoinPath(cfg.GetString("data_dir"), "mono.b.txt")};
  }
  for (const auto& p : mono) data.monolingual.push_back(LoadMonolingual(p, LangTag(p), vocab));
  if (plan.cross_task) {
    std::vector<std::string> par = cfg.GetList("parallel");
    if (par.empty()) par = {JoinPath(cfg.GetString("data_dir"), "train.a-b.tsv")};
    for (const auto& p : par) data.parallel.push_back(LoadParallel(p, LangPair(p), vocab));
  }

  // What the first step trains on, for inspection.
  {
    std::string dump;
    for (const auto& ex : DrawMonolingualBatch(plan, data, vocab, 0)) dump += ExampleToJson(ex) + "\n";
    if (plan.cross_task) {
      for (const auto& ex : DrawCrossLingualBatch(plan, data, vocab, 0)) dump += ExampleToJson(ex) + "\n";
    }
    WriteFileAtomic(JoinPath(out_dir, "first_batch.jsonl"), dump);
  }

  std::optional<Checkpoint> resume;
  std::vector<std::string> rows;
  if (!cfg.GetString("resume").empty()) {
    resume = Checkpoint::Load(cfg.GetString("resume"));
    rows = PriorMetricRows(cfg.GetString("resume"), resume->optimizer.t);
  }

  PretrainOutcome outcome;
  const uint64_t log_every = cfg.GetUint("log_every");
  TrainCallbacks cb;
  cb.on_step = [&](const StepMetrics& m) {
    rows.push_back(MetricsCsvRow(m));
    outcome.steps.push_back(m);
    if (log_every > 0 && m.step % log_every == 0) {
      std::fprintf(stderr, "pretrain step %llu/%llu loss %.4f (sc %.4f, x %.4f) lr %.3g\n",
                   static_cast<unsigned long long>(m.step),
                   static_cast<unsigned long long>(plan.steps), m.loss_total, m.loss_sc, m.loss_x,
                   m.lr);
    }
  };
  cb.on_checkpoint = [&](const Checkpoint& c) {
    const uint64_t t = c.optimizer.t;
    if (plan.checkpoint_every > 0 && t % plan.checkpoint_every == 0) {
      c.Save(JoinPath(out_dir, "checkpoint-" + std::to_string(t) + ".bin"));
      WriteFileAtomic(JoinPath(out_dir, "metrics.csv"), MetricsFile(rows));
    }
  };
  outcome.checkpoint = Pretrain(plan, data, vocab, resume ? &*resume : nullptr, cb);
  outcome.checkpoint.Save(JoinPath(out_dir, "checkpoint.bin"));
  WriteFileAtomic(JoinPath(out_dir, "metrics.csv"), MetricsFile(rows));
  return outcome;
}

void CmdGenData(const RunConfig& cfg) {
  const std::string out_dir = cfg.GetString("out_dir");
  EnsureDirectory(out_dir);
  CipherSpec spec;
  spec.seed = cfg.GetUint("seed");
  spec.vocab_size = static_cast<int>(cfg.GetInt("vocab_size"));
  spec.n_pairs = cfg.GetUint("n_pairs");
  spec.min_len = static_cast<int>(cfg.GetInt("min_len"));
  spec.max_len = static_cast<int>(cfg.GetInt("max_len"));
  spec.reorder_window = static_cast<int>(cfg.GetInt("reorder_window"));
  const size_t n_mono = cfg.GetUint("n_mono");

  const CipherText train = GenerateCipherText(spec);
  CipherSpec test_spec = spec;
  test_spec.seed = MixSeed(spec.seed, kTestStream, 0);
  test_spec.n_pairs = cfg.GetUint("n_test");
  const CipherText test = GenerateCipherText(test_spec);
  const auto mono_a = GenerateCipherMonolingual(spec, n_mono, false, 2);
  const auto mono_b = GenerateCipherMonolingual(spec, n_mono, true, 3);

  auto lines = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += s + "\n";
    return out;
  };
  auto pairs = [](const CipherText& t) {
    std::string out;
    for (size_t i = 0; i < t.src.size(); ++i) out += t.src[i] + "\t" + t.tgt[i] + "\n";
    return out;
  };

  std::vector<std::string> all = mono_a;
  all.insert(all.end(), mono_b.begin(), mono_b.end());
  all.insert(all.end(), train.src.begin(), train.src.end());
  all.insert(all.end(), train.tgt.begin(), train.tgt.end());
  const int sentinels = static_cast<int>(cfg.GetInt("sentinels"));
  const size_t specials = SpecialTokenStrings(sentinels).size();
  const Vocabulary vocab =
      Vocabulary::BuildFromLines(all, specials + 2 * static_cast<size_t>(spec.vocab_size), sentinels);

  WriteFileAtomic(JoinPath(out_dir, "mono.a.txt"), lines(mono_a));
  WriteFileAtomic(JoinPath(out_dir, "mono.b.txt"), lines(mono_b));
  WriteFileAtomic(JoinPath(out_dir, "train.a-b.tsv"), pairs(train));
  WriteFileAtomic(JoinPath(out_dir, "train.a-b.align"), FormatAlignments(train.gold));
  WriteFileAtomic(JoinPath(out_dir, "test.a-b.tsv"), pairs(test));
  WriteFileAtomic(JoinPath(out_dir, "test.a-b.align"), FormatAlignments(test.gold));
  vocab.Save(JoinPath(out_dir, "vocab.txt"));
}

void CmdCorrupt(const RunConfig& cfg) {
  const Task task = ParseTask(cfg.GetString("task"));
  const std::string input = cfg.GetString("input");
  Require(!input.empty(), "corrupt needs input=<file>");
  const Vocabulary vocab = Vocabulary::Load(cfg.GetString("vocab"));
  CorruptionOptions opts;
  opts.noise_density = cfg.GetDouble("noise_density");
  opts.mean_span_len = cfg.GetDouble("mean_span");
  const size_t n_groups = cfg.GetUint("n_groups");
  const uint64_t seed = cfg.GetUint("seed");
  const uint64_t limit = cfg.GetUint("limit");

  std::vector<std::pair<TokenIds, TokenIds>> items;
  if (task == Task::kSC) {
    for (auto& s : LoadMonolingual(input, LangTag(input), vocab).sentences) {
      items.emplace_back(std::move(s), TokenIds{});
    }
  } else {
    for (auto& p : LoadParallel(input, LangPair(input), vocab).pairs) {
      items.emplace_back(std::move(p.e), std::move(p.f));
    }
  }

  const std::string out = cfg.GetString("out");
  WriteFileAtomic(out + ".config.txt", "# corrupt\n" + cfg.Serialize());
  AtomicWriter writer(out);
  for (size_t i = 0; i < items.size() && (limit == 0 || i < limit); ++i) {
    Rng rng(MixSeed(seed, kCorruptStream, i));
    const TrainingExample ex =
        BuildExample(task, vocab, items[i].first, items[i].second, opts, n_groups, rng);
    writer.stream() << ExampleToJson(ex) << '\n';
  }
  writer.Commit();
}

void CmdPretrain(const RunConfig& cfg) {
  EnsureDirectory(cfg.GetString("out_dir"));
  WriteResolved(cfg, cfg.GetString("out_dir"), "pretrain");
  RunPretrain(cfg);
}

void CmdFinetune(const RunConfig& cfg) {
  const std::string out_dir = cfg.GetString("out_dir");
  EnsureDirectory(out_dir);
  WriteResolved(cfg, out_dir, "finetune");
  Require(!cfg.GetString("checkpoint").empty(), "finetune needs checkpoint=<file>");
  Require(!cfg.GetString("train").empty(), "finetune needs train=<file>");
  const Checkpoint start = Checkpoint::Load(cfg.GetString("checkpoint"));
  const Vocabulary vocab = Vocabulary::Load(cfg.GetString("vocab"));
  const TaskKind kind = ParseTaskKind(cfg.GetString("task_kind"));
  std::vector<TrainingExample> dataset;
  for (const auto& ex : LoadTaskDataset(cfg.GetString("train"), kind, vocab, cfg.GetList("labels"))) {
    dataset.push_back(ex.AsTrainingExample());
  }

  FinetunePlan plan;
  plan.batch_size = cfg.GetUint("batch_size");
  plan.steps = cfg.GetUint("steps");
  plan.seed = cfg.GetUint("seed");
  plan.optimizer = OptimizerFromConfig(cfg);
  plan.checkpoint_every = cfg.GetUint("checkpoint_every");
  plan.resume = cfg.GetBool("resume");
  plan.threads = Threads(cfg);

  std::vector<std::string> rows;
  if (plan.resume) rows = PriorMetricRows(cfg.GetString("checkpoint"), start.optimizer.t);
  const uint64_t log_every = cfg.GetUint("log_every");
  TrainCallbacks cb;
  cb.on_step = [&](const StepMetrics& m) {
    rows.push_back(MetricsCsvRow(m));
    if (log_every > 0 && m.step % log_every == 0) {
      std::fprintf(stderr, "finetune step %llu/%llu loss %.4f lr %.3g\n",
                   static_cast<unsigned long long>(m.step),
                   static_cast<unsigned long long>(plan.steps), m.loss_total, m.lr);
    }
  };
  cb.on_checkpoint = [&](const Checkpoint& c) {
    const uint64_t t = c.optimizer.t;
    if (plan.checkpoint_every > 0 && t % plan.checkpoint_every == 0) {
      c.Save(JoinPath(out_dir, "checkpoint-" + std::to_string(t) + ".bin"));
      WriteFileAtomic(JoinPath(out_dir, "metrics.csv"), MetricsFile(rows));
    }
  };
  const Checkpoint done = Finetune(start, vocab, dataset, plan, cb);
  done.Save(JoinPath(out_dir, "checkpoint.bin"));
  WriteFileAtomic(JoinPath(out_dir, "metrics.csv"), MetricsFile(rows));
}

struct EvalSummary {
  double retrieval_mean = 0.0;  // final layer
  std::optional<double> aer;
};

std::vector<MetricRow> TaskMetrics(const Transformer& model, const Checkpoint& ck,
                                   const Vocabulary& vocab, const RunConfig& cfg) {
  const TaskKind kind = ParseTaskKind(cfg.GetString("task_kind"));
  const std::string path = cfg.GetString("task_data");
  Require(!path.empty(), "task_kind needs task_data=<file>");
  const auto examples = LoadTaskDataset(path, kind, vocab, cfg.GetList("labels"));
  const size_t max_len = cfg.GetUint("max_len");
  const std::string subset = std::filesystem::path(path).stem().string();
  std::vector<MetricRow> rows;
  const double n = static_cast<double>(examples.size());
  switch (kind) {
    case TaskKind::kClassification: {
      std::vector<std::string> pred, gold;
      for (const auto& ex : examples) {
        pred.push_back(DecodedBody(vocab, ConstrainedGreedyDecode(model, ck.params, ex, max_len)));
        gold.push_back(vocab.Decode(vocab.Encode(ex.reference)));
      }
      rows.push_back({"accuracy", subset, Accuracy(pred, gold)});
      break;
    }
    case TaskKind::kQa: {
      double em = 0, f1 = 0;
      for (const auto& ex : examples) {
        const QaScore s = QaScores(
            DecodedBody(vocab, ConstrainedGreedyDecode(model, ck.params, ex, max_len)),
            vocab.Decode(vocab.Encode(ex.reference)));
        em += s.exact_match;
        f1 += s.f1;
      }
      rows.push_back({"qa_em", subset, em / n});
      rows.push_back({"qa_f1", subset, f1 / n});
      break;
    }
    case TaskKind::kNer: {
      std::vector<std::vector<Entity>> pred, gold;
      for (const auto& ex : examples) {
        pred.push_back(
            ParseNerOutput(ConstrainedGreedyDecode(model, ck.params, ex, max_len), ex.source));
        gold.push_back(ex.entities);
      }
      const Prf p = NerF1(pred, gold);
      rows.push_back({"ner_precision", subset, p.precision});
      rows.push_back({"ner_recall", subset, p.recall});
      rows.push_back({"ner_f1", subset, p.f1});
      break;
    }
    case TaskKind::kGeneration: {
      double r1 = 0, r2 = 0, rl = 0;
      for (const auto& ex : examples) {
        const std::string out = DecodedBody(vocab, GreedyDecode(model, ck.params, ex.input, max_len));
        const std::string ref = vocab.Decode(vocab.Encode(ex.reference));
        r1 += RougeN(out, ref, 1).f1;
        r2 += RougeN(out, ref, 2).f1;
        rl += RougeL(out, ref).f1;
      }
      rows.push_back({"rouge1_f1", subset, r1 / n});
      rows.push_back({"rouge2_f1", subset, r2 / n});
      rows.push_back({"rougeL_f1", subset, rl / n});
      break;
    }
  }
  return rows;
}

EvalSummary RunEval(const RunConfig& cfg, const std::string& checkpoint_path) {
  const std::string out_dir = cfg.GetString("out_dir");
  EnsureDirectory(out_dir);
  const Checkpoint ck = Checkpoint::Load(checkpoint_path);
  const Vocabulary vocab = LoadVocabFor(cfg);
  if (ck.vocab_fingerprint != vocab.Fingerprint()) {
    Fail(ErrorKind::kState, "checkpoint was trained with a different vocabulary");
  }
  const Transformer model(ck.model);
  Require(model.Matches(ck.params), "checkpoint parameters do not match its model shape");

  const std::string test_path = DataPath(cfg, "test", "test.a-b.tsv");
  const auto langs = LangPair(test_path);
  const ParallelCorpus test = LoadParallel(test_path, langs, vocab);

  const size_t n_layers = static_cast<size_t>(ck.model.enc_layers) + 1;
  std::vector<std::vector<Eigen::VectorXd>> src(n_layers), tgt(n_layers);
  for (const auto& p : test.pairs) {
    auto a = SentenceRepresentations(model, ck.params, vocab, p.e);
    auto b = SentenceRepresentations(model, ck.params, vocab, p.f);
    for (size_t l = 0; l < n_layers; ++l) {
      src[l].push_back(std::move(a[l]));
      tgt[l].push_back(std::move(b[l]));
    }
  }
  const std::string fwd = langs.first + "-" + langs.second;
  const std::string bwd = langs.second + "-" + langs.first;
  std::vector<RetrievalRow> retrieval;
  std::vector<MetricRow> metrics;
  EvalSummary summary;
  for (size_t l = 0; l < n_layers; ++l) {
    const RetrievalResult r = RetrievalAccuracy(src[l], tgt[l]);
    const int layer = static_cast<int>(l);
    retrieval.push_back({layer, fwd, r.src_to_tgt});
    retrieval.push_back({layer, bwd, r.tgt_to_src});
    retrieval.push_back({layer, "mean", r.mean});
    if (l + 1 == n_layers) {
      metrics.push_back({"retrieval_acc1", fwd, r.src_to_tgt});
      metrics.push_back({"retrieval_acc1", bwd, r.tgt_to_src});
      metrics.push_back({"retrieval_acc1", "mean", r.mean});
      summary.retrieval_mean = r.mean;
    }
  }

  std::string align_path = cfg.GetString("test_align");
  if (align_path.empty() && cfg.GetString("test").empty()) {
    const std::string guess = JoinPath(cfg.GetString("data_dir"), "test.a-b.align");
    if (FileExists(guess)) align_path = guess;
  }
  if (!align_path.empty()) {
    const auto gold = LoadAlignments(align_path);
    if (gold.size() != test.pairs.size()) {
      Fail(ErrorKind::kFormat, "alignment file has " + std::to_string(gold.size()) +
                                   " lines for " + std::to_string(test.pairs.size()) + " pairs");
    }
    const int64_t layer_cfg = cfg.GetInt("align_layer");
    const size_t layer = layer_cfg < 0 ? n_layers - 1 : static_cast<size_t>(layer_cfg);
    Require(layer < n_layers, "align_layer exceeds the encoder depth");
    size_t n_pred = 0, n_sure = 0, hits = 0;
    for (size_t i = 0; i < test.pairs.size(); ++i) {
      const Matrix hs = model.EncoderStates(ck.params, test.pairs[i].e)[layer];
      const Matrix ht = model.EncoderStates(ck.params, test.pairs[i].f)[layer];
      const AlignmentSet pred = MutualArgmaxAlign(TokenSimilarity(hs, ht));
      const AlignmentSet sure(gold[i].begin(), gold[i].end());
      n_pred += pred.size();
      n_sure += sure.size();
      for (const auto& link : pred) hits += sure.count(link);
    }
    // Sure-only gold: |A∩S| + |A∩P| = 2|A∩S|.
    const double denom = static_cast<double>(n_pred + n_sure);
    summary.aer = denom == 0 ? 0.0 : 1.0 - 2.0 * static_cast<double>(hits) / denom;
    metrics.push_back({"aer", fwd, *summary.aer});
  }

  if (cfg.Has("task_kind") && !cfg.GetString("task_kind").empty()) {
    for (auto& r : TaskMetrics(model, ck, vocab, cfg)) metrics.push_back(std::move(r));
  }

  WriteFileAtomic(JoinPath(out_dir, "retrieval.csv"), FormatRetrievalCsv(retrieval));
  WriteFileAtomic(JoinPath(out_dir, "metrics.csv"), FormatMetricCsv(metrics));
  return summary;
}

void CmdEval(const RunConfig& cfg) {
  Require(!cfg.GetString("checkpoint").empty(), "eval needs checkpoint=<file>");
  EnsureDirectory(cfg.GetString("out_dir"));
  WriteResolved(cfg, cfg.GetString("out_dir"), "eval");
  RunEval(cfg, cfg.GetString("checkpoint"));
}

void CmdSweepNoise(const RunConfig& cfg) {
  const auto densities = cfg.GetDoubleList("densities");
  Require(!densities.empty(), "densities is empty");
  for (double d : densities) {
    if (!(d > 0.0 && d <= 1.0)) {
      Fail(ErrorKind::kInvalidArgument, "noise density " + Fmt("%g", d) + " is outside (0, 1]");
    }
  }
  const std::string out_dir = cfg.GetString("out_dir");
  EnsureDirectory(out_dir);
  WriteResolved(cfg, out_dir, "sweep-noise");

  std::string csv = "density,final_loss,retrieval_acc1,aer\n";
  for (double d : densities) {
    RunConfig run = cfg;
    const std::string sub = JoinPath(out_dir, "density-" + Fmt("%g", d));
    run.Set("noise_density", Fmt("%.17g", d));
    run.Set("out_dir", sub);
    run.Set("resume", "");
    const PretrainOutcome trained = RunPretrain(run);
    RunConfig eval_run = run;
    eval_run.Set("out_dir", JoinPath(sub, "eval"));
    const EvalSummary ev = RunEval(eval_run, JoinPath(sub, "checkpoint.bin"));
    const size_t n = trained.steps.size();
    const size_t window = std::min<size_t>(100, n);
    double loss = 0.0;
    for (size_t i = n - window; i < n; ++i) loss += trained.steps[i].loss_total;
    loss = window > 0 ? loss / static_cast<double>(window) : 0.0;
    csv += Fmt("%g", d) + "," + Fmt("%.10g", loss) + "," + Fmt("%.10g", ev.retrieval_mean) + "," +
           (ev.aer ? Fmt("%.10g", *ev.aer) : std::string("")) + "\n";
  }
  WriteFileAtomic(JoinPath(out_dir, "sweep.csv"), csv);
}

}  // namespace

std::vector<std::string> CommandNames() {
  return {"gen-data", "corrupt", "pretrain", "finetune", "eval", "sweep-noise"};
}

const std::vector<KeySpec>& CommandSchema(const std::string& command) {
  const auto& s = Schemas();
  auto it = s.find(command);
  if (it == s.end()) Fail(ErrorKind::kInvalidArgument, "unknown command '" + command + "'");
  return it->second;
}

void RunCommand(const std::string& command, const RunConfig& user) {
  const RunConfig cfg = ResolveConfig(user, CommandSchema(command), command);
  if (command == "gen-data") {
    CmdGenData(cfg);
    WriteResolved(cfg, cfg.GetString("out_dir"), command);
  } else if (command == "corrupt") {
    CmdCorrupt(cfg);
  } else if (command == "pretrain") {
    CmdPretrain(cfg);
  } else if (command == "finetune") {
    CmdFinetune(cfg);
  } else if (command == "eval") {
    CmdEval(cfg);
  } else if (command == "sweep-noise") {
    CmdSweepNoise(cfg);
  }
}

}  // namespace mt6
