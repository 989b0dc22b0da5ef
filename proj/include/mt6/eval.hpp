#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mt6/model.hpp"
#include "mt6/tasks.hpp"
#include "mt6/vocab.hpp"

namespace mt6 {

// Mean of the encoder states at non-special positions, one vector per
// encoder layer (index 0 = embeddings, last = final-normed output).
std::vector<Eigen::VectorXd> SentenceRepresentations(const Transformer& model,
                                                     const ParameterSet& params,
                                                     const Vocabulary& vocab,
                                                     const TokenIds& sentence);

struct RetrievalResult {
  double src_to_tgt = 0.0;
  double tgt_to_src = 0.0;
  double mean = 0.0;
};

// Cosine nearest neighbour accuracy@1; src[i] and tgt[i] are translations.
// Ties go to the lowest index.
RetrievalResult RetrievalAccuracy(const std::vector<Eigen::VectorXd>& src,
                                  const std::vector<Eigen::VectorXd>& tgt);

double TransferGap(double en_score, const std::vector<double>& other_scores);

using AlignmentSet = std::set<std::pair<int, int>>;

// Links (i, j) where j is the best column of row i and i the best row of
// column j; ties go to the lowest index.
AlignmentSet MutualArgmaxAlign(const Matrix& sim);

// Cosine similarity between every source and target token state.
Matrix TokenSimilarity(const Matrix& src_states, const Matrix& tgt_states);

// Alignment error rate; 0 when both pred and sure are empty.
double Aer(const AlignmentSet& pred, const AlignmentSet& sure, const AlignmentSet& possible);
inline double Aer(const AlignmentSet& pred, const AlignmentSet& sure) {
  return Aer(pred, sure, sure);
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf PrfFromCounts(double overlap, double n_pred, double n_gold);

size_t LcsLength(const std::vector<std::string>& a, const std::vector<std::string>& b);

// ROUGE over whitespace tokens. Empty candidate or reference gives zeros.
Prf RougeN(const std::string& candidate, const std::string& reference, int n);
Prf RougeL(const std::string& candidate, const std::string& reference);

struct QaScore {
  double exact_match = 0.0;
  double f1 = 0.0;
};

// Whitespace-normalized exact match and token-overlap F1 for one answer.
QaScore QaScores(const std::string& pred, const std::string& gold);

// Exact (tag, start, end) match F1; unmatched predictions count as wrong.
// Counts are summed over sentences before dividing.
Prf NerF1(const std::vector<std::vector<Entity>>& pred, const std::vector<std::vector<Entity>>& gold);
Prf NerF1(const std::vector<Entity>& pred, const std::vector<Entity>& gold);

double Accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& golds);

struct MetricRow {
  std::string metric;
  std::string subset;
  double value = 0.0;
};

struct RetrievalRow {
  int layer = 0;
  std::string direction;
  double accuracy = 0.0;
};

std::string FormatMetricCsv(const std::vector<MetricRow>& rows);
std::string FormatRetrievalCsv(const std::vector<RetrievalRow>& rows);

}  // namespace mt6
