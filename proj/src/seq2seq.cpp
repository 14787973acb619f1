#include "uaul/seq2seq.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "uaul/kernels.hpp"
#include "uaul/rng.hpp"

namespace uaul::model {

void ModelDims::validate() const {
  if (vocab < corpus::special::count) throw std::invalid_argument("model: vocabulary too small");
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw std::invalid_argument("model: d_model must be a positive multiple of heads");
  }
  if (layers == 0 || ff == 0) throw std::invalid_argument("model: layers and ff must be positive");
}

int argmax(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return static_cast<int>(best);
}

int VocabDistribution::argmax() const { return model::argmax(probs); }

bool VocabDistribution::valid(double tol) const {
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    s += p;
  }
  return std::abs(s - 1.0) <= tol;
}

// ---------------------------------------------------------------------------

ModelParams::ModelParams(const ModelDims& dims) : dims_(dims) {
  dims_.validate();
  const std::size_t d = dims.d_model, f = dims.ff;
  auto ln = [&](const std::string& p, std::size_t& g, std::size_t& b) {
    g = add(p + ".ln_g", 1, d);
    b = add(p + ".ln_b", 1, d);
  };
  layout_.embed = add("embed", dims.vocab, d);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    EncoderLayer e{};
    ln(p + ".self", e.ln1_g, e.ln1_b);
    e.wq = add(p + ".self.wq", d, d);
    e.wk = add(p + ".self.wk", d, d);
    e.wv = add(p + ".self.wv", d, d);
    e.wo = add(p + ".self.wo", d, d);
    ln(p + ".ffn", e.ln2_g, e.ln2_b);
    e.w1 = add(p + ".ffn.w1", d, f);
    e.b1 = add(p + ".ffn.b1", 1, f);
    e.w2 = add(p + ".ffn.w2", f, d);
    e.b2 = add(p + ".ffn.b2", 1, d);
    layout_.encoder.push_back(e);
  }
  ln("enc.final", layout_.enc_ln_g, layout_.enc_ln_b);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    DecoderLayer e{};
    ln(p + ".self", e.ln1_g, e.ln1_b);
    e.wq = add(p + ".self.wq", d, d);
    e.wk = add(p + ".self.wk", d, d);
    e.wv = add(p + ".self.wv", d, d);
    e.wo = add(p + ".self.wo", d, d);
    ln(p + ".cross", e.ln2_g, e.ln2_b);
    e.cq = add(p + ".cross.wq", d, d);
    e.ck = add(p + ".cross.wk", d, d);
    e.cv = add(p + ".cross.wv", d, d);
    e.co = add(p + ".cross.wo", d, d);
    ln(p + ".ffn", e.ln3_g, e.ln3_b);
    e.w1 = add(p + ".ffn.w1", d, f);
    e.b1 = add(p + ".ffn.b1", 1, f);
    e.w2 = add(p + ".ffn.w2", f, d);
    e.b2 = add(p + ".ffn.b2", 1, d);
    layout_.decoder.push_back(e);
  }
  ln("dec.final", layout_.dec_ln_g, layout_.dec_ln_b);
  layout_.head = add("lm_head", d, dims.vocab);
}

std::size_t ModelParams::add(std::string name, std::size_t rows, std::size_t cols) {
  names_.push_back(std::move(name));
  tensors_.emplace_back(rows, cols);
  return tensors_.size() - 1;
}

ModelParams ModelParams::initialize(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p(dims);
  Rng rng(derive_seed(seed, {0x1417}));
  for (std::size_t i = 0; i < p.tensors_.size(); ++i) {
    Tensor& t = p.tensors_[i];
    const std::string& n = p.names_[i];
    if (n.ends_with(".ln_g")) {
      t.fill(1.0);
    } else if (n.ends_with(".ln_b") || n.ends_with(".b1") || n.ends_with(".b2")) {
      t.fill(0.0);
    } else if (n == "embed") {
      for (double& x : t.values()) x = rng.normal();
    } else {
      const double sd = 1.0 / std::sqrt(static_cast<double>(t.rows()));
      for (double& x : t.values()) x = sd * rng.normal();
    }
  }
  return p;
}

ModelParams ModelParams::from_tensors(const ModelDims& dims, std::vector<std::string> names,
                                      std::vector<Tensor> tensors) {
  ModelParams p(dims);
  if (names != p.names_ || tensors.size() != p.tensors_.size()) {
    throw std::invalid_argument("model: parameter names do not match the architecture");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!tensors[i].same_shape(p.tensors_[i])) {
      throw std::invalid_argument("model: parameter " + names[i] + " has shape " +
                                  tensors[i].shape_string() + ", expected " +
                                  p.tensors_[i].shape_string());
    }
  }
  p.tensors_ = std::move(tensors);
  return p;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ParamGrads ModelParams::zeros_like() const {
  ParamGrads g;
  g.reserve(tensors_.size());
  for (const auto& t : tensors_) g.emplace_back(t.rows(), t.cols());
  return g;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_)
    for (double x : t.values())
      if (!std::isfinite(x)) return false;
  return true;
}

BoundParams bind(ad::Tape& tape, const ModelParams& params, ParamGrads* grads) {
  if (grads != nullptr && grads->size() != params.size()) {
    throw std::invalid_argument("bind: gradient buffer count differs from parameter count");
  }
  BoundParams b;
  b.vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    b.vars.push_back(tape.param(params[i], grads != nullptr ? &(*grads)[i] : nullptr));
  }
  return b;
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  Tensor pe(length, d_model);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d_model) pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
  return pe;
}

namespace {

void check_ids(std::span<const int> ids, std::size_t vocab, const char* what) {
  if (ids.empty()) throw std::invalid_argument(std::string(what) + " is empty");
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range(std::string(what) + ": token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(vocab));
    }
}

ad::Var ffn(ad::Tape& t, const BoundParams& b, ad::Var x, std::size_t w1, std::size_t b1,
            std::size_t w2, std::size_t b2) {
  ad::Var h = ad::relu(t, ad::add_row(t, ad::matmul(t, x, b[w1]), b[b1]));
  return ad::add_row(t, ad::matmul(t, h, b[w2]), b[b2]);
}

}  // namespace

ad::Var encode_decode(ad::Tape& t, const ModelParams& params, const BoundParams& b,
                      std::span<const int> source, std::span<const int> decoder_input) {
  const auto& dims = params.dims();
  const auto& L = params.layout();
  check_ids(source, dims.vocab, "source");
  check_ids(decoder_input, dims.vocab, "decoder input");

  ad::Var x = ad::add_const(t, ad::embed(t, b[L.embed], source),
                            positional_encoding(source.size(), dims.d_model));
  for (const auto& e : L.encoder) {
    ad::Var a = ad::layer_norm(t, x, b[e.ln1_g], b[e.ln1_b]);
    ad::Var o = ad::attention(t, ad::matmul(t, a, b[e.wq]), ad::matmul(t, a, b[e.wk]),
                              ad::matmul(t, a, b[e.wv]), dims.heads, false);
    x = ad::add(t, x, ad::matmul(t, o, b[e.wo]));
    a = ad::layer_norm(t, x, b[e.ln2_g], b[e.ln2_b]);
    x = ad::add(t, x, ffn(t, b, a, e.w1, e.b1, e.w2, e.b2));
  }
  const ad::Var memory = ad::layer_norm(t, x, b[L.enc_ln_g], b[L.enc_ln_b]);

  ad::Var y = ad::add_const(t, ad::embed(t, b[L.embed], decoder_input),
                            positional_encoding(decoder_input.size(), dims.d_model));
  for (const auto& e : L.decoder) {
    ad::Var a = ad::layer_norm(t, y, b[e.ln1_g], b[e.ln1_b]);
    ad::Var o = ad::attention(t, ad::matmul(t, a, b[e.wq]), ad::matmul(t, a, b[e.wk]),
                              ad::matmul(t, a, b[e.wv]), dims.heads, true);
    y = ad::add(t, y, ad::matmul(t, o, b[e.wo]));
    a = ad::layer_norm(t, y, b[e.ln2_g], b[e.ln2_b]);
    o = ad::attention(t, ad::matmul(t, a, b[e.cq]), ad::matmul(t, memory, b[e.ck]),
                      ad::matmul(t, memory, b[e.cv]), dims.heads, false);
    y = ad::add(t, y, ad::matmul(t, o, b[e.co]));
    a = ad::layer_norm(t, y, b[e.ln3_g], b[e.ln3_b]);
    y = ad::add(t, y, ffn(t, b, a, e.w1, e.b1, e.w2, e.b2));
  }
  return ad::layer_norm(t, y, b[L.dec_ln_g], b[L.dec_ln_b]);
}

VocabDistribution lm_head(const ModelParams& params, std::span<const double> hidden) {
  const Tensor& w = params.head();
  if (hidden.size() != w.rows()) throw std::invalid_argument("lm_head: hidden size");
  Tensor h(1, hidden.size(), std::vector<double>(hidden.begin(), hidden.end()));
  Tensor z;
  kernels::gemm_nn(h, w, z);
  kernels::softmax_inplace(z.row(0));
  return VocabDistribution{std::move(z.values())};
}

// ---------------------------------------------------------------------------
// Inference path. Mirrors encode_decode operation by operation.

namespace {

Tensor row_tensor(std::span<const double> v) {
  return Tensor(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& g, const Tensor& b) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    kernels::layer_norm_row(x.row(r), g.row(0), b.row(0), out.row(r), 1e-5);
  return out;
}

Tensor mm(const Tensor& a, const Tensor& b) {
  Tensor c;
  kernels::gemm_nn(a, b, c);
  return c;
}

void add_into(Tensor& x, const Tensor& y) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

Tensor ffn_rows(const ModelParams& p, const Tensor& a, std::size_t w1, std::size_t b1,
                std::size_t w2, std::size_t b2) {
  Tensor h = mm(a, p[w1]);
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) h(r, c) += p[b1][c];
  for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
  Tensor o = mm(h, p[w2]);
  for (std::size_t r = 0; r < o.rows(); ++r)
    for (std::size_t c = 0; c < o.cols(); ++c) o(r, c) += p[b2][c];
  return o;
}

void append_row(Tensor& t, const Tensor& row) {
  std::vector<double> v = std::move(t.values());
  v.insert(v.end(), row.values().begin(), row.values().end());
  t = Tensor(t.rows() + 1, row.cols(), std::move(v));
}

}  // namespace

IncrementalDecoder::IncrementalDecoder(const ModelParams& params, std::span<const int> source)
    : params_(params) {
  const auto& dims = params.dims();
  const auto& L = params.layout();
  check_ids(source, dims.vocab, "source");
  const Tensor& emb = params[L.embed];
  Tensor x(source.size(), dims.d_model);
  for (std::size_t r = 0; r < source.size(); ++r) {
    const auto e = emb.row(static_cast<std::size_t>(source[r]));
    std::copy(e.begin(), e.end(), x.row(r).begin());
  }
  add_into(x, positional_encoding(source.size(), dims.d_model));
  for (const auto& e : L.encoder) {
    Tensor a = layer_norm_rows(x, params[e.ln1_g], params[e.ln1_b]);
    const Tensor q = mm(a, params[e.wq]), k = mm(a, params[e.wk]), v = mm(a, params[e.wv]);
    Tensor o(x.rows(), dims.d_model);
    for (std::size_t r = 0; r < x.rows(); ++r)
      kernels::attention_row(q.row(r), k, v, k.rows(), dims.heads, o.row(r));
    add_into(x, mm(o, params[e.wo]));
    a = layer_norm_rows(x, params[e.ln2_g], params[e.ln2_b]);
    add_into(x, ffn_rows(params, a, e.w1, e.b1, e.w2, e.b2));
  }
  memory_ = layer_norm_rows(x, params[L.enc_ln_g], params[L.enc_ln_b]);
  for (const auto& e : L.decoder) {
    cross_k_.push_back(mm(memory_, params[e.ck]));
    cross_v_.push_back(mm(memory_, params[e.cv]));
    self_k_.emplace_back(0, dims.d_model);
    self_v_.emplace_back(0, dims.d_model);
  }
}

std::vector<double> IncrementalDecoder::step(int token) {
  const auto& dims = params_.dims();
  const auto& L = params_.layout();
  if (token < 0 || static_cast<std::size_t>(token) >= dims.vocab) {
    throw std::out_of_range("decoder token id " + std::to_string(token) + " outside vocabulary");
  }
  Tensor y = row_tensor(params_[L.embed].row(static_cast<std::size_t>(token)));
  const Tensor pe = positional_encoding(pos_ + 1, dims.d_model);
  for (std::size_t c = 0; c < dims.d_model; ++c) y[c] += pe(pos_, c);
  Tensor o(1, dims.d_model);
  for (std::size_t l = 0; l < L.decoder.size(); ++l) {
    const auto& e = L.decoder[l];
    Tensor a = layer_norm_rows(y, params_[e.ln1_g], params_[e.ln1_b]);
    const Tensor q = mm(a, params_[e.wq]);
    append_row(self_k_[l], mm(a, params_[e.wk]));
    append_row(self_v_[l], mm(a, params_[e.wv]));
    kernels::attention_row(q.row(0), self_k_[l], self_v_[l], self_k_[l].rows(), dims.heads,
                           o.row(0));
    add_into(y, mm(o, params_[e.wo]));
    a = layer_norm_rows(y, params_[e.ln2_g], params_[e.ln2_b]);
    const Tensor cq = mm(a, params_[e.cq]);
    kernels::attention_row(cq.row(0), cross_k_[l], cross_v_[l], cross_k_[l].rows(), dims.heads,
                           o.row(0));
    add_into(y, mm(o, params_[e.co]));
    a = layer_norm_rows(y, params_[e.ln3_g], params_[e.ln3_b]);
    add_into(y, ffn_rows(params_, a, e.w1, e.b1, e.w2, e.b2));
  }
  ++pos_;
  Tensor h = layer_norm_rows(y, params_[L.dec_ln_g], params_[L.dec_ln_b]);
  return std::move(h.values());
}

std::vector<int> greedy_decode(const ModelParams& params, std::span<const int> source,
                               std::size_t max_len) {
  IncrementalDecoder dec(params, source);
  std::vector<int> out;
  int token = corpus::special::bos;
  Tensor logits;
  while (out.size() < max_len) {
    const Tensor h = row_tensor(dec.step(token));
    kernels::gemm_nn(h, params.head(), logits);
    token = argmax(logits.row(0));
    if (token == corpus::special::eos) break;
    out.push_back(token);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'U', 'A', 'U', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::uint64_t limit) {
  const auto n = get<std::uint64_t>(in);
  if (n > limit) throw CheckpointError("checkpoint string length out of range");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw CheckpointError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& dims = ckpt.params.dims();
  if (dims.vocab != ckpt.vocab.size()) {
    throw CheckpointError("checkpoint: model vocabulary size differs from vocabulary");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  for (std::size_t v : {dims.vocab, dims.d_model, dims.heads, dims.layers, dims.ff})
    put<std::uint64_t>(out, v);
  put<std::uint64_t>(out, ckpt.vocab.hash());
  put<std::uint64_t>(out, ckpt.vocab.size());
  for (const auto& t : ckpt.vocab.tokens()) put_string(out, t);
  put_string(out, ckpt.config_text);
  put<std::uint64_t>(out, ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const Tensor& t = ckpt.params[i];
    put_string(out, ckpt.params.name(i));
    put<std::uint64_t>(out, t.rows());
    put<std::uint64_t>(out, t.cols());
    for (double x : t.values()) put<double>(out, x);
  }
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelDims dims;
  dims.vocab = get<std::uint64_t>(in);
  dims.d_model = get<std::uint64_t>(in);
  dims.heads = get<std::uint64_t>(in);
  dims.layers = get<std::uint64_t>(in);
  dims.ff = get<std::uint64_t>(in);
  const auto hash = get<std::uint64_t>(in);
  const auto vocab_n = get<std::uint64_t>(in);
  if (vocab_n != dims.vocab) throw CheckpointError("checkpoint vocabulary size mismatch");
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < vocab_n; ++i) tokens.push_back(get_string(in, 1 << 16));
  corpus::Vocabulary vocab(std::move(tokens));
  if (vocab.hash() != hash) throw CheckpointError("checkpoint vocabulary hash mismatch");
  std::string config = get_string(in, 1 << 20);
  const auto count = get<std::uint64_t>(in);
  if (count > 4096) throw CheckpointError("checkpoint tensor count out of range");
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    names.push_back(get_string(in, 256));
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (rows * cols > (1ULL << 28)) throw CheckpointError("checkpoint tensor too large");
    std::vector<double> data(rows * cols);
    for (double& x : data) x = get<double>(in);
    tensors.emplace_back(rows, cols, std::move(data));
  }
  try {
    return Checkpoint{ModelParams::from_tensors(dims, std::move(names), std::move(tensors)),
                      std::move(vocab), std::move(config)};
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace uaul::model
