#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "uaul/objectives.hpp"
#include "uaul/seq2seq.hpp"
#include "uaul/template_codec.hpp"

namespace uaul {

enum class Objective {
  mle,   // vanilla teacher-forced cross entropy, no sampling
  uaul,  // MC dropout + likelihood / MUL / ME (see flags)
};

/// Every tunable of a training run.
struct UaulConfig {
  Objective objective = Objective::uaul;
  sampling::UncertaintyConfig uncertainty;  // k, dropout
  objectives::MulConfig mul;                // alpha, margin
  bool use_mul = true;
  bool use_me = true;
  bool use_mc = true;
  bool use_ul = false;
  bool me_normalize = false;
  objectives::NegativeStrategy strategy = objectives::NegativeStrategy::uncertainty;
  std::size_t top_k = 3;
  double top_p = 0.9;

  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::size_t max_steps = 0;  // 0: no limit
  std::uint64_t seed = 1;
  int threads = 0;  // 0: OpenMP default

  codec::TemplateKind templ = codec::TemplateKind::special_symbols();
  model::ModelDims dims;  // vocab is filled in from the training data
  std::size_t max_decode_len = 64;

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
  objectives::HeadObjective head_objective() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Keys accepted by the flat config format, in serialization order.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value. Throws ConfigError for unknown keys
/// or malformed values.
void set_config_value(UaulConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const UaulConfig& cfg, std::string_view key);

/// "key = value" lines; '#' starts a comment; blank lines ignored.
UaulConfig parse_config(std::string_view text, UaulConfig base = {});
UaulConfig load_config(const std::string& path, UaulConfig base = {});
/// Every key, one per line, in config_keys() order.
std::string format_config(const UaulConfig& cfg);

std::string strategy_string(const UaulConfig& cfg);

}  // namespace uaul
