#include "mt6/model.hpp"

#include <cmath>
#include <thread>

#include "mt6/error.hpp"
#include "mt6/rng.hpp"

namespace mt6 {

namespace {

constexpr double kNormEps = 1e-6;

using RowVec = Eigen::RowVectorXd;
using ConstMat = Eigen::Map<const Matrix>;
using MutMat = Eigen::Map<Matrix>;
using ConstVec = Eigen::Map<const RowVec>;
using MutVec = Eigen::Map<RowVec>;

ConstMat Mat(const ParameterSet& p, size_t i) {
  const Tensor& t = p.at(i);
  return ConstMat(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                  static_cast<Eigen::Index>(t.shape[1]));
}
MutMat Mat(ParameterSet& p, size_t i) {
  Tensor& t = p.at(i);
  return MutMat(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                static_cast<Eigen::Index>(t.shape[1]));
}
ConstVec Vec(const ParameterSet& p, size_t i) {
  const Tensor& t = p.at(i);
  return ConstVec(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}
MutVec Vec(ParameterSet& p, size_t i) {
  Tensor& t = p.at(i);
  return MutVec(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

}  // namespace

namespace detail {

struct NormCache {
  Matrix xhat;
  Eigen::VectorXd rstd;
};

struct AttnCache {
  Matrix xq, xkv, q, k, v, o;
  std::vector<Matrix> probs;
};

struct FfnCache {
  Matrix x, pre, act;
};

struct EncLayerCache {
  NormCache ln1, ln2;
  AttnCache attn;
  FfnCache ffn;
};

struct DecLayerCache {
  NormCache ln1, ln2, ln3;
  AttnCache self, cross;
  FfnCache ffn;
};

struct EncoderCache {
  TokenIds input;
  std::vector<EncLayerCache> layers;
  NormCache final_norm;
  Matrix output;
};

struct DecoderCache {
  TokenIds dec_in;
  size_t position_offset = 0;
  AttentionMaskSpec mask;
  std::vector<DecLayerCache> layers;
  NormCache final_norm;
  Matrix output;  // normalized decoder states fed to the output projection
};

}  // namespace detail

namespace {

using detail::AttnCache;
using detail::FfnCache;
using detail::NormCache;

Matrix NormForward(const Matrix& x, const ConstVec& gamma, const ConstVec& beta, NormCache* c) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix y(n, d);
  Matrix xhat(n, d);
  Eigen::VectorXd rstd(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const RowVec centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kNormEps);
    rstd(r) = rs;
    xhat.row(r) = centered * rs;
    y.row(r) = xhat.row(r).cwiseProduct(gamma) + beta;
  }
  if (c) {
    c->xhat = std::move(xhat);
    c->rstd = std::move(rstd);
  }
  return y;
}

Matrix NormBackward(const Matrix& dy, const ConstVec& gamma, const NormCache& c, MutVec dgamma,
                    MutVec dbeta) {
  dgamma += dy.cwiseProduct(c.xhat).colwise().sum();
  dbeta += dy.colwise().sum();
  const Eigen::Index n = dy.rows(), d = dy.cols();
  Matrix dx(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const RowVec dxhat = dy.row(r).cwiseProduct(gamma);
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(c.xhat.row(r)).mean();
    dx.row(r) = c.rstd(r) * (dxhat.array() - m1 - c.xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

struct AttnWeights {
  ConstMat wq, wk, wv, wo;
};

// mask == nullptr: every key visible. Otherwise keys [FirstKey(i), i].
Matrix AttnForward(const AttnWeights& w, const Matrix& xq, const Matrix& xkv, int heads,
                   const AttentionMaskSpec* mask, AttnCache* c) {
  const Eigen::Index n = xq.rows(), m = xkv.rows();
  Matrix q = xq * w.wq;
  Matrix k = xkv * w.wk;
  Matrix v = xkv * w.wv;
  const Eigen::Index inner = q.cols();
  const Eigen::Index dh = inner / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix o(n, inner);
  std::vector<Matrix> probs;
  if (c) probs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    const auto vh = v.middleCols(h * dh, dh);
    Matrix p = (qh * kh.transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index lo = 0, hi = m - 1;
      if (mask) {
        lo = static_cast<Eigen::Index>(mask->FirstKey(static_cast<size_t>(i)));
        hi = i;
      }
      double mx = p(i, lo);
      for (Eigen::Index j = lo + 1; j <= hi; ++j) mx = std::max(mx, p(i, j));
      double z = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j < lo || j > hi) {
          p(i, j) = 0.0;
        } else {
          p(i, j) = std::exp(p(i, j) - mx);
          z += p(i, j);
        }
      }
      const double inv = 1.0 / z;
      for (Eigen::Index j = lo; j <= hi; ++j) p(i, j) *= inv;
    }
    o.middleCols(h * dh, dh).noalias() = p * vh;
    if (c) probs.push_back(std::move(p));
  }
  Matrix out = o * w.wo;
  if (c) {
    c->xq = xq;
    c->xkv = xkv;
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
    c->o = std::move(o);
    c->probs = std::move(probs);
  }
  return out;
}

struct AttnGrads {
  MutMat wq, wk, wv, wo;
};

// Returns (d xq, d xkv).
std::pair<Matrix, Matrix> AttnBackward(const AttnWeights& w, const AttnCache& c,
                                       const Matrix& dout, int heads, AttnGrads g) {
  const Eigen::Index d = c.q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  g.wo.noalias() += c.o.transpose() * dout;
  const Matrix d_o = dout * w.wo.transpose();
  Matrix dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[static_cast<size_t>(h)];
    const auto doh = d_o.middleCols(h * dh, dh);
    const Matrix dp = doh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * doh;
    const Eigen::VectorXd rowdot = dp.cwiseProduct(p).rowwise().sum();
    const Matrix ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  g.wq.noalias() += c.xq.transpose() * dq;
  g.wk.noalias() += c.xkv.transpose() * dk;
  g.wv.noalias() += c.xkv.transpose() * dv;
  Matrix dxq = dq * w.wq.transpose();
  Matrix dxkv = dk * w.wk.transpose();
  dxkv.noalias() += dv * w.wv.transpose();
  return {std::move(dxq), std::move(dxkv)};
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double GeluGrad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Matrix FfnForward(const ConstMat& w1, const ConstVec& b1, const ConstMat& w2, const ConstVec& b2,
                  const Matrix& x, FfnCache* c) {
  Matrix pre = x * w1;
  pre.rowwise() += b1;
  Matrix act = pre.unaryExpr([](double v) { return Gelu(v); });
  Matrix out = act * w2;
  out.rowwise() += b2;
  if (c) {
    c->x = x;
    c->pre = std::move(pre);
    c->act = std::move(act);
  }
  return out;
}

Matrix FfnBackward(const ConstMat& w1, const ConstMat& w2, const FfnCache& c, const Matrix& dout,
                   MutMat dw1, MutVec db1, MutMat dw2, MutVec db2) {
  dw2.noalias() += c.act.transpose() * dout;
  db2 += dout.colwise().sum();
  Matrix dact = dout * w2.transpose();
  const Matrix dpre =
      dact.cwiseProduct(c.pre.unaryExpr([](double v) { return GeluGrad(v); }));
  dw1.noalias() += c.x.transpose() * dpre;
  db1 += dpre.colwise().sum();
  return dpre * w1.transpose();
}

}  // namespace

void ModelConfig::Validate() const {
  Require(enc_layers >= 1 && dec_layers >= 1, "layer counts must be >= 1");
  Require(d_model >= 1 && d_ff >= 1 && heads >= 1, "model dimensions must be >= 1");
  Require(d_kv >= 0, "d_kv must be >= 0");
  Require(d_kv > 0 || d_model % heads == 0, "d_model must be divisible by heads");
  Require(vocab_size >= 1, "vocab_size must be >= 1");
  Require(max_len >= 1, "max_len must be >= 1");
  Require(dropout == 0.0, "dropout is not supported (must be 0)");
}

ModelConfig ModelConfig::Desk(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::Small(int vocab_size) {
  ModelConfig c;
  c.enc_layers = 8;
  c.dec_layers = 8;
  c.d_model = 512;
  c.d_ff = 1024;
  c.heads = 6;
  c.d_kv = 64;
  c.max_len = 512;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::Preset(const std::string& name, int vocab_size) {
  if (name == "desk") return Desk(vocab_size);
  if (name == "small") return Small(vocab_size);
  Fail(ErrorKind::kInvalidArgument, "unknown model preset '" + name + "'");
}

Transformer::Transformer(ModelConfig cfg) : cfg_(cfg) {
  cfg_.Validate();
  const size_t d = static_cast<size_t>(cfg_.d_model);
  const size_t ff = static_cast<size_t>(cfg_.d_ff);
  const size_t inner = static_cast<size_t>(cfg_.attn_dim());
  ParameterSet& p = layout_;
  tok_emb_ = p.Add("embed.token", {static_cast<size_t>(cfg_.vocab_size), d});
  enc_pos_ = p.Add("embed.enc_pos", {static_cast<size_t>(cfg_.max_len), d});
  dec_pos_ = p.Add("embed.dec_pos", {static_cast<size_t>(cfg_.max_len), d});
  auto norm = [&](const std::string& prefix) {
    return NormIdx{p.Add(prefix + ".g", {d}, 1.0), p.Add(prefix + ".b", {d})};
  };
  auto attn = [&](const std::string& prefix) {
    return AttnIdx{p.Add(prefix + ".wq", {d, inner}), p.Add(prefix + ".wk", {d, inner}),
                   p.Add(prefix + ".wv", {d, inner}), p.Add(prefix + ".wo", {inner, d})};
  };
  auto ffn = [&](const std::string& prefix) {
    return FfnIdx{p.Add(prefix + ".w1", {d, ff}), p.Add(prefix + ".b1", {ff}),
                  p.Add(prefix + ".w2", {ff, d}), p.Add(prefix + ".b2", {d})};
  };
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    const std::string pre = "enc." + std::to_string(l);
    EncLayerIdx e;
    e.ln1 = norm(pre + ".ln1");
    e.attn = attn(pre + ".attn");
    e.ln2 = norm(pre + ".ln2");
    e.ffn = ffn(pre + ".ffn");
    enc_.push_back(e);
  }
  enc_final_ = norm("enc.final_norm");
  for (int l = 0; l < cfg_.dec_layers; ++l) {
    const std::string pre = "dec." + std::to_string(l);
    DecLayerIdx e;
    e.ln1 = norm(pre + ".ln1");
    e.self = attn(pre + ".self");
    e.ln2 = norm(pre + ".ln2");
    e.cross = attn(pre + ".cross");
    e.ln3 = norm(pre + ".ln3");
    e.ffn = ffn(pre + ".ffn");
    dec_.push_back(e);
  }
  dec_final_ = norm("dec.final_norm");
}

double Transformer::InitScale(const std::string& name) const {
  const double d = cfg_.d_model;
  const auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  if (name.rfind("embed.", 0) == 0) return 1.0 / std::sqrt(d);
  if (ends_with(".wq") || ends_with(".wk") || ends_with(".wv") || ends_with(".w1")) {
    return 1.0 / std::sqrt(d);
  }
  if (ends_with(".wo")) return 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim()));
  if (ends_with(".w2")) return 1.0 / std::sqrt(static_cast<double>(cfg_.d_ff));
  return 0.0;
}

ParameterSet Transformer::InitParams(uint64_t seed) const {
  ParameterSet p = layout_;
  Rng rng(MixSeed(seed, 0x696e6974, 0));
  for (auto& t : p) {
    const double scale = InitScale(t.name);
    if (scale == 0.0) continue;  // norms keep 1/0, biases 0
    for (double& x : t.data) x = scale * rng.Normal();
  }
  return p;
}

bool Transformer::Matches(const ParameterSet& params) const { return layout_.SameLayout(params); }

void Transformer::CheckIds(const TokenIds& ids, const char* what) const {
  for (TokenId id : ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      Fail(ErrorKind::kInvalidArgument, std::string(what) + " token id " + std::to_string(id) +
                                            " outside vocabulary of " +
                                            std::to_string(cfg_.vocab_size));
    }
  }
}

void Transformer::RunEncoder(const ParameterSet& p, const TokenIds& input,
                             detail::EncoderCache* cache, std::vector<Matrix>* states) const {
  Require(!input.empty(), "empty encoder input");
  Require(input.size() <= static_cast<size_t>(cfg_.max_len), "encoder input longer than max_len");
  CheckIds(input, "encoder");
  const Eigen::Index n = static_cast<Eigen::Index>(input.size());
  const ConstMat emb = Mat(p, tok_emb_);
  const ConstMat pos = Mat(p, enc_pos_);
  Matrix x(n, cfg_.d_model);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = emb.row(input[static_cast<size_t>(i)]) + pos.row(i);
  if (states) states->push_back(x);
  if (cache) {
    cache->input = input;
    cache->layers.resize(enc_.size());
  }
  for (size_t l = 0; l < enc_.size(); ++l) {
    const EncLayerIdx& L = enc_[l];
    detail::EncLayerCache* c = cache ? &cache->layers[l] : nullptr;
    const Matrix n1 = NormForward(x, Vec(p, L.ln1.g), Vec(p, L.ln1.b), c ? &c->ln1 : nullptr);
    const AttnWeights w{Mat(p, L.attn.wq), Mat(p, L.attn.wk), Mat(p, L.attn.wv), Mat(p, L.attn.wo)};
    x += AttnForward(w, n1, n1, cfg_.heads, nullptr, c ? &c->attn : nullptr);
    const Matrix n2 = NormForward(x, Vec(p, L.ln2.g), Vec(p, L.ln2.b), c ? &c->ln2 : nullptr);
    x += FfnForward(Mat(p, L.ffn.w1), Vec(p, L.ffn.b1), Mat(p, L.ffn.w2), Vec(p, L.ffn.b2), n2,
                    c ? &c->ffn : nullptr);
    if (states && l + 1 < enc_.size()) states->push_back(x);
  }
  Matrix out = NormForward(x, Vec(p, enc_final_.g), Vec(p, enc_final_.b),
                           cache ? &cache->final_norm : nullptr);
  if (states) states->push_back(out);
  if (cache) cache->output = std::move(out);
}

Matrix Transformer::RunDecoder(const ParameterSet& p, const Matrix& enc_out, const TokenIds& dec_in,
                               const AttentionMaskSpec& mask, size_t position_offset,
                               detail::DecoderCache* cache) const {
  Require(!dec_in.empty(), "empty decoder input");
  Require(mask.size() == dec_in.size(), "mask size differs from decoder length");
  Require(position_offset + dec_in.size() <= static_cast<size_t>(cfg_.max_len),
          "decoder input longer than max_len");
  const Eigen::Index t = static_cast<Eigen::Index>(dec_in.size());
  const ConstMat emb = Mat(p, tok_emb_);
  const ConstMat pos = Mat(p, dec_pos_);
  Matrix y(t, cfg_.d_model);
  for (Eigen::Index i = 0; i < t; ++i) {
    y.row(i) = emb.row(dec_in[static_cast<size_t>(i)]) +
               pos.row(static_cast<Eigen::Index>(position_offset) + i);
  }
  if (cache) {
    cache->dec_in = dec_in;
    cache->position_offset = position_offset;
    cache->mask = mask;
    cache->layers.resize(dec_.size());
  }
  for (size_t l = 0; l < dec_.size(); ++l) {
    const DecLayerIdx& L = dec_[l];
    detail::DecLayerCache* c = cache ? &cache->layers[l] : nullptr;
    const Matrix n1 = NormForward(y, Vec(p, L.ln1.g), Vec(p, L.ln1.b), c ? &c->ln1 : nullptr);
    const AttnWeights ws{Mat(p, L.self.wq), Mat(p, L.self.wk), Mat(p, L.self.wv), Mat(p, L.self.wo)};
    y += AttnForward(ws, n1, n1, cfg_.heads, &mask, c ? &c->self : nullptr);
    const Matrix n2 = NormForward(y, Vec(p, L.ln2.g), Vec(p, L.ln2.b), c ? &c->ln2 : nullptr);
    const AttnWeights wc{Mat(p, L.cross.wq), Mat(p, L.cross.wk), Mat(p, L.cross.wv),
                         Mat(p, L.cross.wo)};
    y += AttnForward(wc, n2, enc_out, cfg_.heads, nullptr, c ? &c->cross : nullptr);
    const Matrix n3 = NormForward(y, Vec(p, L.ln3.g), Vec(p, L.ln3.b), c ? &c->ln3 : nullptr);
    y += FfnForward(Mat(p, L.ffn.w1), Vec(p, L.ffn.b1), Mat(p, L.ffn.w2), Vec(p, L.ffn.b2), n3,
                    c ? &c->ffn : nullptr);
  }
  Matrix out = NormForward(y, Vec(p, dec_final_.g), Vec(p, dec_final_.b),
                           cache ? &cache->final_norm : nullptr);
  Matrix logits = out * emb.transpose();
  if (cache) cache->output = std::move(out);
  return logits;
}

Matrix LogSoftmaxRows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

ForwardTrace Transformer::Forward(const ParameterSet& params, const TokenIds& input,
                                  const TokenIds& target, const AttentionMaskSpec& mask,
                                  size_t position_offset) const {
  Require(Matches(params), "parameter set does not match the model configuration");
  Require(!target.empty(), "empty target");
  CheckIds(target, "target");
  ForwardTrace trace;
  trace.enc_cache = std::make_shared<detail::EncoderCache>();
  trace.dec_cache = std::make_shared<detail::DecoderCache>();
  RunEncoder(params, input, trace.enc_cache.get(), &trace.encoder_states);
  trace.decoder_inputs = DecoderInputs(target, mask);
  trace.logits = RunDecoder(params, trace.enc_cache->output, trace.decoder_inputs, mask,
                            position_offset, trace.dec_cache.get());
  trace.log_probs = LogSoftmaxRows(trace.logits);
  return trace;
}

double Transformer::Backward(const ParameterSet& p, const ForwardTrace& trace,
                             const TokenIds& target, double weight, ParameterSet& g) const {
  Require(g.SameLayout(layout_), "gradient buffer does not match the model");
  const detail::EncoderCache& ec = *trace.enc_cache;
  const detail::DecoderCache& dc = *trace.dec_cache;
  const Eigen::Index t = trace.log_probs.rows();
  Require(static_cast<size_t>(t) == target.size(), "trace and target lengths differ");

  double loss = 0.0;
  Matrix dlogits = trace.log_probs.array().exp().matrix();
  for (Eigen::Index i = 0; i < t; ++i) {
    const Eigen::Index y = target[static_cast<size_t>(i)];
    loss -= trace.log_probs(i, y);
    dlogits(i, y) -= 1.0;
  }
  dlogits *= weight;

  const ConstMat emb = Mat(p, tok_emb_);
  MutMat demb = Mat(g, tok_emb_);
  demb.noalias() += dlogits.transpose() * dc.output;
  Matrix dy = dlogits * emb;
  dy = NormBackward(dy, Vec(p, dec_final_.g), dc.final_norm, Vec(g, dec_final_.g),
                    Vec(g, dec_final_.b));

  Matrix denc = Matrix::Zero(ec.output.rows(), ec.output.cols());
  for (size_t l = dec_.size(); l-- > 0;) {
    const DecLayerIdx& L = dec_[l];
    const detail::DecLayerCache& c = dc.layers[l];
    {
      const Matrix dn3 = FfnBackward(Mat(p, L.ffn.w1), Mat(p, L.ffn.w2), c.ffn, dy,
                                     Mat(g, L.ffn.w1), Vec(g, L.ffn.b1), Mat(g, L.ffn.w2),
                                     Vec(g, L.ffn.b2));
      dy += NormBackward(dn3, Vec(p, L.ln3.g), c.ln3, Vec(g, L.ln3.g), Vec(g, L.ln3.b));
    }
    {
      const AttnWeights w{Mat(p, L.cross.wq), Mat(p, L.cross.wk), Mat(p, L.cross.wv),
                          Mat(p, L.cross.wo)};
      auto [dq, dkv] = AttnBackward(
          w, c.cross, dy, cfg_.heads,
          AttnGrads{Mat(g, L.cross.wq), Mat(g, L.cross.wk), Mat(g, L.cross.wv), Mat(g, L.cross.wo)});
      denc += dkv;
      dy += NormBackward(dq, Vec(p, L.ln2.g), c.ln2, Vec(g, L.ln2.g), Vec(g, L.ln2.b));
    }
    {
      const AttnWeights w{Mat(p, L.self.wq), Mat(p, L.self.wk), Mat(p, L.self.wv),
                          Mat(p, L.self.wo)};
      auto [dq, dkv] = AttnBackward(
          w, c.self, dy, cfg_.heads,
          AttnGrads{Mat(g, L.self.wq), Mat(g, L.self.wk), Mat(g, L.self.wv), Mat(g, L.self.wo)});
      dq += dkv;
      dy += NormBackward(dq, Vec(p, L.ln1.g), c.ln1, Vec(g, L.ln1.g), Vec(g, L.ln1.b));
    }
  }
  MutMat ddec_pos = Mat(g, dec_pos_);
  for (Eigen::Index i = 0; i < t; ++i) {
    demb.row(dc.dec_in[static_cast<size_t>(i)]) += dy.row(i);
    ddec_pos.row(static_cast<Eigen::Index>(dc.position_offset) + i) += dy.row(i);
  }

  Matrix dx = NormBackward(denc, Vec(p, enc_final_.g), ec.final_norm, Vec(g, enc_final_.g),
                           Vec(g, enc_final_.b));
  for (size_t l = enc_.size(); l-- > 0;) {
    const EncLayerIdx& L = enc_[l];
    const detail::EncLayerCache& c = ec.layers[l];
    const Matrix dn2 = FfnBackward(Mat(p, L.ffn.w1), Mat(p, L.ffn.w2), c.ffn, dx, Mat(g, L.ffn.w1),
                                   Vec(g, L.ffn.b1), Mat(g, L.ffn.w2), Vec(g, L.ffn.b2));
    dx += NormBackward(dn2, Vec(p, L.ln2.g), c.ln2, Vec(g, L.ln2.g), Vec(g, L.ln2.b));
    const AttnWeights w{Mat(p, L.attn.wq), Mat(p, L.attn.wk), Mat(p, L.attn.wv), Mat(p, L.attn.wo)};
    auto [dq, dkv] = AttnBackward(
        w, c.attn, dx, cfg_.heads,
        AttnGrads{Mat(g, L.attn.wq), Mat(g, L.attn.wk), Mat(g, L.attn.wv), Mat(g, L.attn.wo)});
    dq += dkv;
    dx += NormBackward(dq, Vec(p, L.ln1.g), c.ln1, Vec(g, L.ln1.g), Vec(g, L.ln1.b));
  }
  MutMat denc_pos = Mat(g, enc_pos_);
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    demb.row(ec.input[static_cast<size_t>(i)]) += dx.row(i);
    denc_pos.row(i) += dx.row(i);
  }
  return loss;
}

std::vector<Matrix> Transformer::EncoderStates(const ParameterSet& params,
                                               const TokenIds& input) const {
  Require(Matches(params), "parameter set does not match the model configuration");
  std::vector<Matrix> states;
  RunEncoder(params, input, nullptr, &states);
  return states;
}

Eigen::RowVectorXd Transformer::NextTokenLogProbs(const ParameterSet& params,
                                                  const Matrix& encoder_output,
                                                  const TokenIds& decoder_inputs) const {
  CheckIds(decoder_inputs, "decoder");
  const Matrix logits =
      RunDecoder(params, encoder_output, decoder_inputs,
                 AttentionMaskSpec::Causal(decoder_inputs.size()), 0, nullptr);
  const Matrix last = logits.bottomRows(1);
  return LogSoftmaxRows(last).row(0);
}

LossAndGrads ComputeLossAndGrads(const Transformer& model, const ParameterSet& params,
                                 const std::vector<TrainingExample>& batch, int threads) {
  Require(!batch.empty(), "empty batch");
  const size_t n = batch.size();
  const double weight = 1.0 / static_cast<double>(n);
  const size_t workers = static_cast<size_t>(std::max(1, threads));

  LossAndGrads out;
  out.grads = params.ZerosLike();
  std::vector<ParameterSet> scratch(std::min(workers, n), out.grads);
  std::vector<double> losses(n, 0.0);

  auto run_one = [&](size_t idx, ParameterSet& g) {
    const TrainingExample& ex = batch[idx];
    const GroupPartition part =
        ex.groups.ranges.empty() ? SingleGroup(ex.target.size()) : ex.groups;
    const AttentionMaskSpec mask = BuildDecoderMask(part, ex.target.size());
    g.SetZero();
    const ForwardTrace trace = model.Forward(params, ex.input, ex.target, mask);
    losses[idx] = model.Backward(params, trace, ex.target, weight, g);
  };

  for (size_t wave = 0; wave < n; wave += scratch.size()) {
    const size_t count = std::min(scratch.size(), n - wave);
    if (count == 1) {
      run_one(wave, scratch[0]);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(count);
      for (size_t w = 1; w < count; ++w) {
        pool.emplace_back([&, w] {
          try {
            run_one(wave + w, scratch[w]);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      try {
        run_one(wave, scratch[0]);
      } catch (...) {
        errors[0] = std::current_exception();
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (size_t w = 0; w < count; ++w) out.grads.Accumulate(scratch[w]);
  }

  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(losses[i])) {
      Fail(ErrorKind::kNumeric, "non-finite loss " + std::to_string(losses[i]) +
                                    " for batch example " + std::to_string(i) + " (task " +
                                    TaskName(batch[i].task) + ", target length " +
                                    std::to_string(batch[i].target.size()) + ")");
    }
    total += losses[i];
  }
  out.loss = total * weight;
  return out;
}

}  // namespace mt6
