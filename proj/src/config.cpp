#include "uaul/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace uaul {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("config key '" + std::string(key) + "': '" + s + "' is not a number");
  }
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("config key '" + std::string(key) + "': '" + s +
                      "' is not a non-negative integer");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': '" + s + "' is not a boolean");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

void UaulConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (uncertainty.k < 1) fail("k must be at least 1");
  if (!(uncertainty.dropout >= 0.0 && uncertainty.dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(mul.alpha > 0.0)) fail("alpha must be positive");
  if (!std::isfinite(mul.margin)) fail("margin must be finite");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("beta1/beta2 in [0,1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(clip_norm >= 0.0)) fail("clip_norm must be non-negative");
  if (epochs < 1) fail("epochs must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (max_decode_len < 1) fail("max_decode_len must be at least 1");
  if (dims.d_model == 0 || dims.heads == 0 || dims.d_model % dims.heads != 0) {
    fail("d_model must be a positive multiple of heads");
  }
  if (dims.layers < 1 || dims.ff < 1) fail("layers and ff must be positive");
  if (strategy != objectives::NegativeStrategy::uncertainty && use_mc) {
    fail("negative_strategy topk/topp requires use_mc = false");
  }
  if (strategy == objectives::NegativeStrategy::top_k && top_k < 1) fail("top-k needs k >= 1");
  if (strategy == objectives::NegativeStrategy::top_p && !(top_p > 0.0 && top_p <= 1.0)) {
    fail("top-p needs p in (0, 1]");
  }
  if (use_mul && use_ul) fail("use_mul and use_ul are mutually exclusive");
}

objectives::HeadObjective UaulConfig::head_objective() const {
  objectives::HeadObjective h;
  h.uncertainty = uncertainty;
  h.use_mc = use_mc;
  h.strategy = strategy;
  h.top_k = top_k;
  h.top_p = top_p;
  h.mul = mul;
  h.use_mul = use_mul;
  h.use_me = use_me;
  h.use_ul = use_ul;
  h.me_normalize_by_k = me_normalize;
  return h;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "objective", "k",        "dropout",   "alpha",          "margin",     "use_mul",
      "use_me",    "use_mc",   "use_ul",    "me_normalize",   "negative_strategy",
      "lr",        "beta1",    "beta2",     "adam_eps",       "clip_norm",  "epochs",
      "batch_size", "max_steps", "seed",    "threads",        "template",   "order",
      "d_model",   "heads",    "layers",    "ff",             "max_decode_len"};
  return keys;
}

std::string strategy_string(const UaulConfig& cfg) {
  switch (cfg.strategy) {
    case objectives::NegativeStrategy::uncertainty: return "mc";
    case objectives::NegativeStrategy::top_k: return "topk:" + std::to_string(cfg.top_k);
    case objectives::NegativeStrategy::top_p: return "topp:" + fmt(cfg.top_p);
  }
  return "mc";
}

void set_config_value(UaulConfig& c, std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  if (key == "objective") {
    if (v == "uaul") c.objective = Objective::uaul;
    else if (v == "mle") c.objective = Objective::mle;
    else throw ConfigError("config key 'objective': expected uaul or mle, got '" + v + "'");
  } else if (key == "k") {
    c.uncertainty.k = to_uint(key, v);
  } else if (key == "dropout") {
    c.uncertainty.dropout = to_double(key, v);
  } else if (key == "alpha") {
    c.mul.alpha = to_double(key, v);
  } else if (key == "margin") {
    c.mul.margin = to_double(key, v);
  } else if (key == "use_mul") {
    c.use_mul = to_bool(key, v);
  } else if (key == "use_me") {
    c.use_me = to_bool(key, v);
  } else if (key == "use_mc") {
    c.use_mc = to_bool(key, v);
  } else if (key == "use_ul") {
    c.use_ul = to_bool(key, v);
  } else if (key == "me_normalize") {
    c.me_normalize = to_bool(key, v);
  } else if (key == "negative_strategy") {
    if (v == "mc") {
      c.strategy = objectives::NegativeStrategy::uncertainty;
    } else if (v.rfind("topk:", 0) == 0) {
      c.strategy = objectives::NegativeStrategy::top_k;
      c.top_k = to_uint(key, v.substr(5));
    } else if (v.rfind("topp:", 0) == 0) {
      c.strategy = objectives::NegativeStrategy::top_p;
      c.top_p = to_double(key, v.substr(5));
    } else {
      throw ConfigError("config key 'negative_strategy': expected mc, topk:<k> or topp:<p>, got '" +
                        v + "'");
    }
  } else if (key == "lr") {
    c.lr = to_double(key, v);
  } else if (key == "beta1") {
    c.beta1 = to_double(key, v);
  } else if (key == "beta2") {
    c.beta2 = to_double(key, v);
  } else if (key == "adam_eps") {
    c.adam_eps = to_double(key, v);
  } else if (key == "clip_norm") {
    c.clip_norm = to_double(key, v);
  } else if (key == "epochs") {
    c.epochs = to_uint(key, v);
  } else if (key == "batch_size") {
    c.batch_size = to_uint(key, v);
  } else if (key == "max_steps") {
    c.max_steps = to_uint(key, v);
  } else if (key == "seed") {
    c.seed = to_uint(key, v);
  } else if (key == "threads") {
    c.threads = static_cast<int>(to_uint(key, v));
  } else if (key == "template") {
    const auto variant = codec::variant_from_name(v);
    if (!variant) {
      throw ConfigError("config key 'template': expected paraphrase, special or gas, got '" + v +
                        "'");
    }
    c.templ.variant = *variant;
  } else if (key == "order") {
    try {
      c.templ.order = codec::parse_slot_order(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config key 'order': ") + e.what());
    }
  } else if (key == "d_model") {
    c.dims.d_model = to_uint(key, v);
  } else if (key == "heads") {
    c.dims.heads = to_uint(key, v);
  } else if (key == "layers") {
    c.dims.layers = to_uint(key, v);
  } else if (key == "ff") {
    c.dims.ff = to_uint(key, v);
  } else if (key == "max_decode_len") {
    c.max_decode_len = to_uint(key, v);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

std::string get_config_value(const UaulConfig& c, std::string_view key) {
  if (key == "objective") return c.objective == Objective::uaul ? "uaul" : "mle";
  if (key == "k") return std::to_string(c.uncertainty.k);
  if (key == "dropout") return fmt(c.uncertainty.dropout);
  if (key == "alpha") return fmt(c.mul.alpha);
  if (key == "margin") return fmt(c.mul.margin);
  if (key == "use_mul") return fmt(c.use_mul);
  if (key == "use_me") return fmt(c.use_me);
  if (key == "use_mc") return fmt(c.use_mc);
  if (key == "use_ul") return fmt(c.use_ul);
  if (key == "me_normalize") return fmt(c.me_normalize);
  if (key == "negative_strategy") return strategy_string(c);
  if (key == "lr") return fmt(c.lr);
  if (key == "beta1") return fmt(c.beta1);
  if (key == "beta2") return fmt(c.beta2);
  if (key == "adam_eps") return fmt(c.adam_eps);
  if (key == "clip_norm") return fmt(c.clip_norm);
  if (key == "epochs") return std::to_string(c.epochs);
  if (key == "batch_size") return std::to_string(c.batch_size);
  if (key == "max_steps") return std::to_string(c.max_steps);
  if (key == "seed") return std::to_string(c.seed);
  if (key == "threads") return std::to_string(c.threads);
  if (key == "template") return std::string(codec::variant_name(c.templ.variant));
  if (key == "order") return codec::format_slot_order(c.templ.order);
  if (key == "d_model") return std::to_string(c.dims.d_model);
  if (key == "heads") return std::to_string(c.dims.heads);
  if (key == "layers") return std::to_string(c.dims.layers);
  if (key == "ff") return std::to_string(c.dims.ff);
  if (key == "max_decode_len") return std::to_string(c.max_decode_len);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

UaulConfig parse_config(std::string_view text, UaulConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

UaulConfig load_config(const std::string& path, UaulConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string format_config(const UaulConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k + " = " + get_config_value(cfg, k) + "\n";
  return out;
}

}  // namespace uaul
