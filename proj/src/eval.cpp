#include "mt6/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "mt6/error.hpp"

namespace mt6 {

std::vector<Eigen::VectorXd> SentenceRepresentations(const Transformer& model,
                                                     const ParameterSet& params,
                                                     const Vocabulary& vocab,
                                                     const TokenIds& sentence) {
  const std::vector<Matrix> states = model.EncoderStates(params, sentence);
  std::vector<Eigen::Index> keep;
  for (size_t i = 0; i < sentence.size(); ++i) {
    if (!vocab.IsSpecial(sentence[i])) keep.push_back(static_cast<Eigen::Index>(i));
  }
  if (keep.empty()) Fail(ErrorKind::kInvalidArgument, "sentence has no ordinary tokens to pool");
  std::vector<Eigen::VectorXd> reps;
  reps.reserve(states.size());
  for (const Matrix& h : states) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(h.cols());
    for (Eigen::Index i : keep) sum += h.row(i).transpose();
    reps.push_back(sum / static_cast<double>(keep.size()));
  }
  return reps;
}

namespace {

std::vector<Eigen::VectorXd> Normalized(const std::vector<Eigen::VectorXd>& v) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    const double n = x.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      Fail(ErrorKind::kInvalidArgument, "retrieval needs nonzero finite vectors");
    }
    out.push_back(x / n);
  }
  return out;
}

double DirectionAccuracy(const std::vector<Eigen::VectorXd>& queries,
                         const std::vector<Eigen::VectorXd>& keys) {
  size_t hits = 0;
  for (size_t i = 0; i < queries.size(); ++i) {
    size_t best = 0;
    double best_sim = queries[i].dot(keys[0]);
    for (size_t j = 1; j < keys.size(); ++j) {
      const double s = queries[i].dot(keys[j]);
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

}  // namespace

RetrievalResult RetrievalAccuracy(const std::vector<Eigen::VectorXd>& src,
                                  const std::vector<Eigen::VectorXd>& tgt) {
  Require(src.size() == tgt.size(), "retrieval sets differ in size");
  Require(!src.empty(), "retrieval sets are empty");
  const auto a = Normalized(src);
  const auto b = Normalized(tgt);
  RetrievalResult r;
  r.src_to_tgt = DirectionAccuracy(a, b);
  r.tgt_to_src = DirectionAccuracy(b, a);
  r.mean = 0.5 * (r.src_to_tgt + r.tgt_to_src);
  return r;
}

double TransferGap(double en_score, const std::vector<double>& other_scores) {
  Require(!other_scores.empty(), "transfer gap needs at least one non-English score");
  double sum = 0.0;
  for (double s : other_scores) sum += s;
  return en_score - sum / static_cast<double>(other_scores.size());
}

AlignmentSet MutualArgmaxAlign(const Matrix& sim) {
  if (sim.rows() == 0 || sim.cols() == 0) {
    Fail(ErrorKind::kInvalidArgument, "similarity matrix is empty");
  }
  if (!sim.allFinite()) Fail(ErrorKind::kNumeric, "similarity matrix is not finite");
  std::vector<Eigen::Index> row_best(static_cast<size_t>(sim.rows()));
  std::vector<Eigen::Index> col_best(static_cast<size_t>(sim.cols()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index b = 0;
    for (Eigen::Index j = 1; j < sim.cols(); ++j) {
      if (sim(i, j) > sim(i, b)) b = j;
    }
    row_best[static_cast<size_t>(i)] = b;
  }
  for (Eigen::Index j = 0; j < sim.cols(); ++j) {
    Eigen::Index b = 0;
    for (Eigen::Index i = 1; i < sim.rows(); ++i) {
      if (sim(i, j) > sim(b, j)) b = i;
    }
    col_best[static_cast<size_t>(j)] = b;
  }
  AlignmentSet links;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    const Eigen::Index j = row_best[static_cast<size_t>(i)];
    if (col_best[static_cast<size_t>(j)] == i) links.emplace(static_cast<int>(i), static_cast<int>(j));
  }
  return links;
}

Matrix TokenSimilarity(const Matrix& src_states, const Matrix& tgt_states) {
  Require(src_states.cols() == tgt_states.cols(), "state widths differ");
  Matrix a = src_states;
  Matrix b = tgt_states;
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) /= std::max(a.row(i).norm(), 1e-12);
  for (Eigen::Index i = 0; i < b.rows(); ++i) b.row(i) /= std::max(b.row(i).norm(), 1e-12);
  return a * b.transpose();
}

double Aer(const AlignmentSet& pred, const AlignmentSet& sure, const AlignmentSet& possible) {
  const double denom = static_cast<double>(pred.size() + sure.size());
  if (denom == 0.0) return 0.0;
  size_t with_sure = 0;
  size_t with_possible = 0;
  for (const auto& link : pred) {
    with_sure += sure.count(link);
    with_possible += possible.count(link);
  }
  return 1.0 - static_cast<double>(with_sure + with_possible) / denom;
}

Prf PrfFromCounts(double overlap, double n_pred, double n_gold) {
  Prf r;
  r.precision = n_pred > 0 ? overlap / n_pred : 0.0;
  r.recall = n_gold > 0 ? overlap / n_gold : 0.0;
  const double s = r.precision + r.recall;
  r.f1 = s > 0 ? 2.0 * r.precision * r.recall / s : 0.0;
  return r;
}

size_t LcsLength(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::map<std::vector<std::string>, size_t> NGramCounts(const std::vector<std::string>& t, int n) {
  std::map<std::vector<std::string>, size_t> counts;
  const size_t w = static_cast<size_t>(n);
  for (size_t i = 0; i + w <= t.size(); ++i) {
    ++counts[std::vector<std::string>(t.begin() + static_cast<long>(i),
                                      t.begin() + static_cast<long>(i + w))];
  }
  return counts;
}

}  // namespace

Prf RougeN(const std::string& candidate, const std::string& reference, int n) {
  Require(n >= 1, "ROUGE-N needs n >= 1");
  const auto c = SplitWhitespace(candidate);
  const auto r = SplitWhitespace(reference);
  if (c.empty() || r.empty()) return {};
  const auto cc = NGramCounts(c, n);
  const auto rc = NGramCounts(r, n);
  size_t overlap = 0, n_c = 0, n_r = 0;
  for (const auto& [g, k] : cc) {
    n_c += k;
    auto it = rc.find(g);
    if (it != rc.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : rc) n_r += k;
  return PrfFromCounts(static_cast<double>(overlap), static_cast<double>(n_c),
                       static_cast<double>(n_r));
}

Prf RougeL(const std::string& candidate, const std::string& reference) {
  const auto c = SplitWhitespace(candidate);
  const auto r = SplitWhitespace(reference);
  if (c.empty() || r.empty()) return {};
  return PrfFromCounts(static_cast<double>(LcsLength(c, r)), static_cast<double>(c.size()),
                       static_cast<double>(r.size()));
}

QaScore QaScores(const std::string& pred, const std::string& gold) {
  const auto p = SplitWhitespace(pred);
  const auto g = SplitWhitespace(gold);
  QaScore s;
  s.exact_match = p == g ? 1.0 : 0.0;
  if (p.empty() && g.empty()) {
    s.f1 = 1.0;
    return s;
  }
  std::map<std::string, size_t> gc;
  for (const auto& t : g) ++gc[t];
  size_t common = 0;
  for (const auto& t : p) {
    auto it = gc.find(t);
    if (it != gc.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  s.f1 = PrfFromCounts(static_cast<double>(common), static_cast<double>(p.size()),
                       static_cast<double>(g.size()))
             .f1;
  return s;
}

namespace {

using SpanKey = std::tuple<int, size_t, size_t>;

std::set<SpanKey> SpanKeys(const std::vector<Entity>& ents, bool require_match) {
  std::set<SpanKey> keys;
  for (const Entity& e : ents) {
    if (require_match && !e.matched) continue;
    keys.emplace(static_cast<int>(e.tag), e.start, e.end);
  }
  return keys;
}

}  // namespace

Prf NerF1(const std::vector<std::vector<Entity>>& pred,
          const std::vector<std::vector<Entity>>& gold) {
  Require(pred.size() == gold.size(), "prediction and gold sentence counts differ");
  double overlap = 0, n_pred = 0, n_gold = 0;
  for (size_t s = 0; s < pred.size(); ++s) {
    const auto g = SpanKeys(gold[s], false);
    const auto p = SpanKeys(pred[s], true);
    size_t unmatched = 0;
    for (const Entity& e : pred[s]) unmatched += e.matched ? 0 : 1;
    for (const auto& k : p) overlap += g.count(k);
    n_pred += static_cast<double>(p.size() + unmatched);
    n_gold += static_cast<double>(g.size());
  }
  if (n_pred == 0 && n_gold == 0) return {1.0, 1.0, 1.0};
  return PrfFromCounts(overlap, n_pred, n_gold);
}

Prf NerF1(const std::vector<Entity>& pred, const std::vector<Entity>& gold) {
  return NerF1(std::vector<std::vector<Entity>>{pred}, std::vector<std::vector<Entity>>{gold});
}

double Accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
  Require(preds.size() == golds.size(), "prediction and gold counts differ");
  Require(!preds.empty(), "accuracy over an empty set");
  size_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

namespace {

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string FormatMetricCsv(const std::vector<MetricRow>& rows) {
  std::string out = "metric,subset,value\n";
  for (const auto& r : rows) out += r.metric + "," + r.subset + "," + Num(r.value) + "\n";
  return out;
}

std::string FormatRetrievalCsv(const std::vector<RetrievalRow>& rows) {
  std::string out = "layer,direction,accuracy\n";
  for (const auto& r : rows) {
    out += std::to_string(r.layer) + "," + r.direction + "," + Num(r.accuracy) + "\n";
  }
  return out;
}

}  // namespace mt6
