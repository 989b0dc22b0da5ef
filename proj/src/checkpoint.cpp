#include "mt6/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mt6/error.hpp"
#include "mt6/io.hpp"

namespace mt6 {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'T', '6', 'C', 'K', 'P', 'T', '\n'};

class Writer {
 public:
  template <typename T>
  void Pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void Str(const std::string& s) {
    Pod<uint32_t>(static_cast<uint32_t>(s.size()));
    out_ += s;
  }
  void Raw(const void* p, size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T Pod() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string Str() {
    const uint32_t n = Pod<uint32_t>();
    Need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void Raw(void* p, size_t n) {
    Need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool AtEnd() const { return pos_ == in_.size(); }

 private:
  void Need(size_t n) const {
    if (in_.size() - pos_ < n) Fail(ErrorKind::kFormat, "truncated checkpoint");
  }
  const std::string& in_;
  size_t pos_ = 0;
};

std::string Exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void WriteArrays(Writer& w, const std::string& prefix, const ParameterSet& set) {
  for (const Tensor& t : set) {
    w.Str(prefix + t.name);
    w.Pod<uint32_t>(static_cast<uint32_t>(t.shape.size()));
    for (size_t d : t.shape) w.Pod<uint64_t>(d);
    w.Raw(t.data.data(), t.data.size() * sizeof(double));
  }
}

const std::string& Get(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) Fail(ErrorKind::kFormat, "checkpoint lacks '" + key + "'");
  return it->second;
}

}  // namespace

std::string Checkpoint::Serialize() const {
  std::map<std::string, std::string> meta = extra;
  meta["model.enc_layers"] = std::to_string(model.enc_layers);
  meta["model.dec_layers"] = std::to_string(model.dec_layers);
  meta["model.d_model"] = std::to_string(model.d_model);
  meta["model.d_ff"] = std::to_string(model.d_ff);
  meta["model.heads"] = std::to_string(model.heads);
  meta["model.d_kv"] = std::to_string(model.d_kv);
  meta["model.vocab_size"] = std::to_string(model.vocab_size);
  meta["model.max_len"] = std::to_string(model.max_len);
  meta["vocab.fingerprint"] = Hex(vocab_fingerprint);
  meta["phase"] = phase;
  meta["opt.t"] = std::to_string(optimizer.t);
  meta["opt.base_lr"] = Exact(optimizer.hp.base_lr);
  meta["opt.beta1"] = Exact(optimizer.hp.beta1);
  meta["opt.beta2"] = Exact(optimizer.hp.beta2);
  meta["opt.eps"] = Exact(optimizer.hp.eps);
  meta["opt.clip_norm"] = Exact(optimizer.hp.clip_norm);
  meta["opt.warmup_steps"] = std::to_string(optimizer.hp.warmup_steps);
  meta["opt.total_steps"] = std::to_string(optimizer.hp.total_steps);

  Writer w;
  w.Raw(kMagic, sizeof(kMagic));
  w.Pod<uint32_t>(kVersion);
  w.Pod<uint32_t>(static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.Str(k);
    w.Str(v);
  }
  const bool has_moments = optimizer.m.size() > 0;
  w.Pod<uint32_t>(static_cast<uint32_t>(params.size() * (has_moments ? 3 : 1)));
  WriteArrays(w, "param/", params);
  if (has_moments) {
    WriteArrays(w, "adam.m/", optimizer.m);
    WriteArrays(w, "adam.v/", optimizer.v);
  }
  return w.Take();
}

Checkpoint Checkpoint::Deserialize(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.Raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) Fail(ErrorKind::kFormat, "not a checkpoint");
  const uint32_t version = r.Pod<uint32_t>();
  if (version != kVersion) {
    Fail(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, std::string> meta;
  const uint32_t n_meta = r.Pod<uint32_t>();
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.Str();
    meta[k] = r.Str();
  }
  Checkpoint c;
  try {
    c.model.enc_layers = std::stoi(Get(meta, "model.enc_layers"));
    c.model.dec_layers = std::stoi(Get(meta, "model.dec_layers"));
    c.model.d_model = std::stoi(Get(meta, "model.d_model"));
    c.model.d_ff = std::stoi(Get(meta, "model.d_ff"));
    c.model.heads = std::stoi(Get(meta, "model.heads"));
    c.model.d_kv = std::stoi(Get(meta, "model.d_kv"));
    c.model.vocab_size = std::stoi(Get(meta, "model.vocab_size"));
    c.model.max_len = std::stoi(Get(meta, "model.max_len"));
    c.vocab_fingerprint = std::stoull(Get(meta, "vocab.fingerprint"), nullptr, 16);
    c.phase = Get(meta, "phase");
    c.optimizer.t = std::stoull(Get(meta, "opt.t"));
    c.optimizer.hp.base_lr = std::stod(Get(meta, "opt.base_lr"));
    c.optimizer.hp.beta1 = std::stod(Get(meta, "opt.beta1"));
    c.optimizer.hp.beta2 = std::stod(Get(meta, "opt.beta2"));
    c.optimizer.hp.eps = std::stod(Get(meta, "opt.eps"));
    c.optimizer.hp.clip_norm = std::stod(Get(meta, "opt.clip_norm"));
    c.optimizer.hp.warmup_steps = std::stoull(Get(meta, "opt.warmup_steps"));
    c.optimizer.hp.total_steps = std::stoull(Get(meta, "opt.total_steps"));
  } catch (const std::logic_error&) {
    Fail(ErrorKind::kFormat, "malformed checkpoint metadata");
  }
  for (const auto& [k, v] : meta) {
    if (k.rfind("model.", 0) != 0 && k.rfind("opt.", 0) != 0 && k != "phase" &&
        k != "vocab.fingerprint") {
      c.extra[k] = v;
    }
  }

  const uint32_t n_arrays = r.Pod<uint32_t>();
  for (uint32_t i = 0; i < n_arrays; ++i) {
    const std::string name = r.Str();
    const uint32_t ndim = r.Pod<uint32_t>();
    std::vector<size_t> shape(ndim);
    size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<size_t>(r.Pod<uint64_t>());
      count *= d;
    }
    ParameterSet* dst = nullptr;
    std::string local;
    if (name.rfind("param/", 0) == 0) {
      dst = &c.params;
      local = name.substr(6);
    } else if (name.rfind("adam.m/", 0) == 0) {
      dst = &c.optimizer.m;
      local = name.substr(7);
    } else if (name.rfind("adam.v/", 0) == 0) {
      dst = &c.optimizer.v;
      local = name.substr(7);
    } else {
      Fail(ErrorKind::kFormat, "unknown checkpoint array '" + name + "'");
    }
    const size_t idx = dst->Add(local, shape);
    Tensor& t = dst->at(idx);
    if (t.data.size() != count) Fail(ErrorKind::kFormat, "bad array shape for " + name);
    r.Raw(t.data.data(), count * sizeof(double));
  }
  if (!r.AtEnd()) Fail(ErrorKind::kFormat, "trailing bytes after checkpoint");
  c.model.Validate();
  return c;
}

void Checkpoint::Save(const std::string& path) const { WriteFileAtomic(path, Serialize()); }

Checkpoint Checkpoint::Load(const std::string& path) { return Deserialize(ReadFile(path)); }

}  // namespace mt6
