#pragma once

// Minimal pre-norm transformer encoder-decoder.
//
// The decoder's final layer-normalized state h_t is exposed as-is; the only
// stochastic component in the whole model is the dropout applied to h_t by
// the uncertainty sampler before the language-model head W (d x V, no bias,
// not tied to the embeddings).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uaul/autograd.hpp"
#include "uaul/corpus.hpp"
#include "uaul/tensor.hpp"

namespace uaul::model {

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t d_model = 64;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t ff = 128;

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Probability vector over the vocabulary at one decoding step.
struct VocabDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  /// Lowest id among the maxima.
  int argmax() const;
  /// Entries in [0,1] summing to 1 within `tol`.
  bool valid(double tol = 1e-6) const;
};

/// Lowest index among the maxima of a score vector.
int argmax(std::span<const double> scores);

using ParamGrads = std::vector<Tensor>;

class ModelParams {
 public:
  struct EncoderLayer {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
    friend bool operator==(const EncoderLayer&, const EncoderLayer&) = default;
  };
  struct DecoderLayer {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo;
    std::size_t ln2_g, ln2_b, cq, ck, cv, co;
    std::size_t ln3_g, ln3_b, w1, b1, w2, b2;
    friend bool operator==(const DecoderLayer&, const DecoderLayer&) = default;
  };
  struct Layout {
    std::size_t embed = 0;
    std::vector<EncoderLayer> encoder;
    std::size_t enc_ln_g = 0, enc_ln_b = 0;
    std::vector<DecoderLayer> decoder;
    std::size_t dec_ln_g = 0, dec_ln_b = 0;
    std::size_t head = 0;
    friend bool operator==(const Layout&, const Layout&) = default;
  };

  ModelParams() = default;
  /// Random initialization, deterministic in `seed`.
  static ModelParams initialize(const ModelDims& dims, std::uint64_t seed);
  /// Rebuilds from named tensors (checkpoint loading); validates shapes.
  static ModelParams from_tensors(const ModelDims& dims, std::vector<std::string> names,
                                  std::vector<Tensor> tensors);

  const ModelDims& dims() const { return dims_; }
  const Layout& layout() const { return layout_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  const Tensor& head() const { return tensors_[layout_.head]; }

  ParamGrads zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  explicit ModelParams(const ModelDims& dims);
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);

  ModelDims dims_;
  Layout layout_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// One tape variable per parameter tensor, in layout order.
struct BoundParams {
  std::vector<ad::Var> vars;
  ad::Var operator[](std::size_t i) const { return vars[i]; }
};

/// Registers every parameter on the tape. With `grads` null the parameters
/// are constants (no gradient flows).
BoundParams bind(ad::Tape& tape, const ModelParams& params, ParamGrads* grads);

/// Sinusoidal position table, rows = positions.
Tensor positional_encoding(std::size_t length, std::size_t d_model);

/// Teacher-forced forward pass. `decoder_input` starts with <s>; returns the
/// n x d matrix of final decoder states, row t depending only on the source
/// and decoder_input[0..t].
ad::Var encode_decode(ad::Tape& tape, const ModelParams& params, const BoundParams& bound,
                      std::span<const int> source, std::span<const int> decoder_input);

/// softmax(W^T h).
VocabDistribution lm_head(const ModelParams& params, std::span<const double> hidden);

/// Dropout-free autoregressive decoder with key/value caching. Produces the
/// same hidden states as encode_decode on the same prefix.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ModelParams& params, std::span<const int> source);
  /// Feeds the next decoder input token, returns its final hidden state.
  std::vector<double> step(int token);
  std::size_t position() const { return pos_; }

 private:
  const ModelParams& params_;
  Tensor memory_;
  std::vector<Tensor> cross_k_, cross_v_;
  std::vector<Tensor> self_k_, self_v_;
  std::size_t pos_ = 0;
};

/// Greedy decoding from <s> until </s> (excluded from the result) or
/// `max_len` generated tokens.
std::vector<int> greedy_decode(const ModelParams& params, std::span<const int> source,
                               std::size_t max_len);

// ---------------------------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  corpus::Vocabulary vocab;
  /// Training configuration in the flat key = value format.
  std::string config_text;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary little-endian container: magic "UAULCKPT", version, dims,
/// vocabulary hash and tokens, config text, then named tensors.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace uaul::model
