#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mt6/corruption.hpp"
#include "mt6/params.hpp"
#include "mt6/pnat.hpp"
#include "mt6/vocab.hpp"

namespace mt6 {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int enc_layers = 2;
  int dec_layers = 2;
  int d_model = 64;
  int d_ff = 128;
  int heads = 4;
  int d_kv = 0;  // per-head width; 0 means d_model / heads
  int vocab_size = 0;
  int max_len = 128;
  double dropout = 0.0;  // accepted for completeness; only 0 is supported

  void Validate() const;
  int head_dim() const { return d_kv > 0 ? d_kv : d_model / heads; }
  int attn_dim() const { return head_dim() * heads; }

  static ModelConfig Desk(int vocab_size);
  // Reference "small" shape: 8+8 layers, 512/1024, 6 heads of width 64.
  static ModelConfig Small(int vocab_size);
  static ModelConfig Preset(const std::string& name, int vocab_size);

  bool operator==(const ModelConfig&) const = default;
};

namespace detail {
struct EncoderCache;
struct DecoderCache;
}  // namespace detail

// Everything one forward pass produces. encoder_states has enc_layers + 1
// entries: the embedding sum, the residual stream after each inner layer, and
// (last) the normalized encoder output the decoder attends to.
struct ForwardTrace {
  std::vector<Matrix> encoder_states;
  Matrix logits;     // |target| x vocab
  Matrix log_probs;  // log-softmax of logits
  TokenIds decoder_inputs;

  std::shared_ptr<detail::EncoderCache> enc_cache;
  std::shared_ptr<detail::DecoderCache> dec_cache;
};

// Pre-norm encoder-decoder transformer. Token embeddings are shared by the
// encoder input, decoder input and output projection; positions are learned
// absolute tables, one per stack. Attention projections carry no bias.
class Transformer {
 public:
  explicit Transformer(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  ParameterSet InitParams(uint64_t seed) const;
  // Initial standard deviation used for a parameter (0 for norms/biases).
  double InitScale(const std::string& name) const;
  bool Matches(const ParameterSet& params) const;

  // Teacher-forced pass. Decoder position i reads DecoderInputs(target, mask)
  // and attends to decoder positions allowed by mask. position_offset shifts
  // the decoder position table; it is only useful to test harnesses that
  // evaluate a suffix of a target in isolation.
  ForwardTrace Forward(const ParameterSet& params, const TokenIds& input, const TokenIds& target,
                       const AttentionMaskSpec& mask, size_t position_offset = 0) const;

  // Accumulates weight * d(-sum_i log p(target_i))/d(params) into grads and
  // returns the unweighted loss.
  double Backward(const ParameterSet& params, const ForwardTrace& trace, const TokenIds& target,
                  double weight, ParameterSet& grads) const;

  // Encoder-only pass for analysis: all enc_layers + 1 states.
  std::vector<Matrix> EncoderStates(const ParameterSet& params, const TokenIds& input) const;

  // Log-probabilities for the next token after decoder_inputs (causal).
  Eigen::RowVectorXd NextTokenLogProbs(const ParameterSet& params, const Matrix& encoder_output,
                                       const TokenIds& decoder_inputs) const;

 private:
  struct AttnIdx { size_t wq, wk, wv, wo; };
  struct NormIdx { size_t g, b; };
  struct FfnIdx { size_t w1, b1, w2, b2; };
  struct EncLayerIdx { NormIdx ln1; AttnIdx attn; NormIdx ln2; FfnIdx ffn; };
  struct DecLayerIdx { NormIdx ln1; AttnIdx self; NormIdx ln2; AttnIdx cross; NormIdx ln3; FfnIdx ffn; };

  void CheckIds(const TokenIds& ids, const char* what) const;
  void RunEncoder(const ParameterSet& p, const TokenIds& input, detail::EncoderCache* cache,
                  std::vector<Matrix>* states) const;
  Matrix RunDecoder(const ParameterSet& p, const Matrix& enc_out, const TokenIds& dec_in,
                    const AttentionMaskSpec& mask, size_t position_offset,
                    detail::DecoderCache* cache) const;

  ModelConfig cfg_;
  ParameterSet layout_;
  size_t tok_emb_ = 0, enc_pos_ = 0, dec_pos_ = 0;
  std::vector<EncLayerIdx> enc_;
  std::vector<DecLayerIdx> dec_;
  NormIdx enc_final_{}, dec_final_{};
};

// Row-wise log-softmax; rows of exp(result) sum to 1.
Matrix LogSoftmaxRows(const Matrix& logits);

struct LossAndGrads {
  double loss = 0.0;  // mean over the batch of per-example PNAT losses
  ParameterSet grads;
};

// Each example uses its own groups (a single group when empty). Per-example
// gradients are formed independently and summed in example order, so the
// result is bitwise independent of the worker count.
LossAndGrads ComputeLossAndGrads(const Transformer& model, const ParameterSet& params,
                                 const std::vector<TrainingExample>& batch, int threads = 1);

}  // namespace mt6
