#include "uaul/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uaul/rng.hpp"

namespace uaul::corpus {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using codec::Sentiment;

constexpr std::string_view kReserved[] = {"<pad>", "<s>",  "</s>", "<unk>", "[SSEP]",
                                          "[AT]",  "[OT]", "[AC]", "[SP]"};
constexpr std::string_view kTemplateWords[] = {"great", "ok", "bad", "it", "null",
                                               "because", "is", "(", ")", ","};

codec::Term read_term(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw CorpusError(std::string("quad is missing field '") + key + "'", line);
  const auto& v = j.at(key);
  if (!v.is_string()) throw CorpusError(std::string("field '") + key + "' must be a string", line);
  const auto s = v.get<std::string>();
  if (s == codec::kImplicitOpinion) return std::nullopt;
  if (codec::normalize_space(s).empty()) {
    throw CorpusError(std::string("field '") + key + "' is empty", line);
  }
  return s;
}

AspectQuad read_quad(const json& j, std::size_t line) {
  if (!j.is_object()) throw CorpusError("quad must be an object", line);
  for (const auto& [key, _] : j.items()) {
    if (key != "at" && key != "ot" && key != "ac" && key != "sp") {
      throw CorpusError("unknown quad field '" + key + "'", line);
    }
  }
  AspectQuad q;
  q.aspect = read_term(j, "at", line);
  q.opinion = read_term(j, "ot", line);
  if (!j.contains("ac")) throw CorpusError("quad is missing field 'ac'", line);
  if (!j.at("ac").is_string()) throw CorpusError("field 'ac' must be a string", line);
  q.category = j.at("ac").get<std::string>();
  if (!j.contains("sp")) throw CorpusError("quad is missing field 'sp'", line);
  if (!j.at("sp").is_string()) throw CorpusError("field 'sp' must be a string", line);
  const auto sp_text = j.at("sp").get<std::string>();
  const auto sp = codec::sentiment_from_name(sp_text);
  if (!sp) {
    throw CorpusError("invalid sp value '" + sp_text + "' (expected positive, neutral or negative)",
                      line);
  }
  q.sentiment = *sp;
  try {
    codec::validate(q);
  } catch (const codec::CodecError& e) {
    throw CorpusError(e.what(), line);
  }
  return q;
}

std::string lower(std::string_view s) { return codec::to_lower(s); }

bool is_reserved_marker(std::string_view tok) {
  for (int i = special::ssep; i < special::count; ++i)
    if (tok == kReserved[i]) return true;
  return false;
}

}  // namespace

Counts count(std::span<const Example> examples) {
  Counts c;
  c.sentences = examples.size();
  for (const auto& e : examples) c.quads += e.quads.size();
  return c;
}

std::vector<Example> read(std::istream& in, FileKind kind) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (codec::normalize_space(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw CorpusError("record must be a JSON object", lineno);
    for (const auto& [key, _] : j.items()) {
      if (key != "sentence" && key != "quads") {
        throw CorpusError("unknown field '" + key + "'", lineno);
      }
    }
    if (!j.contains("sentence")) throw CorpusError("missing field 'sentence'", lineno);
    if (!j.contains("quads")) throw CorpusError("missing field 'quads'", lineno);
    if (!j.at("sentence").is_string()) throw CorpusError("'sentence' must be a string", lineno);
    if (!j.at("quads").is_array()) throw CorpusError("'quads' must be an array", lineno);
    Example ex;
    ex.sentence = j.at("sentence").get<std::string>();
    if (codec::normalize_space(ex.sentence).empty()) throw CorpusError("empty sentence", lineno);
    for (const auto& q : j.at("quads")) ex.quads.push_back(read_quad(q, lineno));
    if (kind == FileKind::training && ex.quads.empty()) {
      throw CorpusError("training example has no quads", lineno);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> load(const std::filesystem::path& path, FileKind kind) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open dataset file '" + path.string() + "'", 0);
  return read(in, kind);
}

std::string to_json_line(const Example& example) {
  ordered_json j;
  j["sentence"] = example.sentence;
  j["quads"] = ordered_json::array();
  for (const auto& q : example.quads) {
    ordered_json jq;
    jq["at"] = q.aspect ? *q.aspect : std::string(codec::kImplicitOpinion);
    jq["ot"] = q.opinion ? *q.opinion : std::string(codec::kImplicitOpinion);
    jq["ac"] = q.category;
    jq["sp"] = std::string(codec::sentiment_name(q.sentiment));
    j["quads"].push_back(std::move(jq));
  }
  return j.dump();
}

void write(std::ostream& out, std::span<const Example> examples) {
  for (const auto& e : examples) out << to_json_line(e) << '\n';
}

void save(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write dataset file '" + path.string() + "'", 0);
  write(out, examples);
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (auto t : kReserved) add(std::string(t));
  for (auto t : kTemplateWords) add(std::string(t));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.size() < special::count) throw CorpusError("vocabulary misses reserved tokens", 0);
  for (int i = 0; i < special::count; ++i) {
    if (tokens[static_cast<std::size_t>(i)] != kReserved[i]) {
      throw CorpusError("vocabulary reserved token " + std::to_string(i) + " is '" +
                            tokens[static_cast<std::size_t>(i)] + "'",
                        0);
    }
  }
  for (auto& t : tokens) {
    if (index_.contains(t)) throw CorpusError("duplicate vocabulary token '" + t + "'", 0);
    add(t);
  }
}

void Vocabulary::add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const Example> train) {
  Vocabulary v;
  std::set<std::string> words;
  for (const auto& e : train) {
    for (const auto& t : split_tokens(e.sentence)) words.insert(lower(t));
    const auto target = codec::render(e.quads, codec::TemplateKind::paraphrase());
    for (const auto& t : split_tokens(target)) words.insert(lower(t));
  }
  for (const auto& w : words) v.add(w);
  return v;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? special::unk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else if (ch == '(' || ch == ')' || ch == ',') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur += ch;
    }
  }
  flush();
  return out;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : split_tokens(text)) ids.push_back(is_reserved_marker(t) ? id(t) : id(lower(t)));
  return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i == special::eos) break;
    if (i == special::pad || i == special::bos) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

// ---------------------------------------------------------------------------

Inventory Inventory::standard() {
  Inventory inv;
  auto asp = [&](std::string text, std::string cat, bool plural = false) {
    inv.aspects.push_back({std::move(text), std::move(cat), plural});
  };
  asp("food", "food#quality");
  asp("foods", "food#quality", true);
  asp("pizza", "food#quality");
  asp("pizzas", "food#quality", true);
  asp("sushi", "food#quality");
  asp("pasta", "food#quality");
  asp("dessert", "food#quality");
  asp("desserts", "food#quality", true);
  asp("fried rice", "food#quality");
  asp("steak", "food#quality");
  asp("noodles", "food#quality", true);
  asp("portions", "food#style_options", true);
  asp("menu", "food#style_options");
  asp("dishes", "food#style_options", true);
  asp("wine", "drinks#quality");
  asp("wines", "drinks#quality", true);
  asp("coffee", "drinks#quality");
  asp("cocktails", "drinks#quality", true);
  asp("wine list", "drinks#style_options");
  asp("service", "service#general");
  asp("staff", "service#general");
  asp("waiter", "service#general");
  asp("waiters", "service#general", true);
  asp("waitress", "service#general");
  asp("manager", "service#general");
  asp("ambience", "ambience#general");
  asp("atmosphere", "ambience#general");
  asp("decor", "ambience#general");
  asp("music", "ambience#general");
  asp("place", "restaurant#general");
  asp("restaurant", "restaurant#general");
  asp("prices", "restaurant#prices", true);
  asp("bill", "restaurant#prices");
  asp("location", "location#general");
  asp("view", "location#general");
  asp("screen", "display#quality");
  asp("display", "display#quality");
  asp("keyboard", "keyboard#design_features");
  asp("battery life", "battery#operation_performance");
  asp("laptop", "laptop#general");
  asp("speakers", "multimedia_devices#quality", true);

  auto op = [&](std::string text, Sentiment s) { inv.opinions.push_back({std::move(text), s}); };
  for (const char* w : {"excellent", "great", "good", "wonderful", "amazing", "delicious", "tasty",
                        "friendly", "attentive", "fresh", "perfect", "lovely", "fantastic", "cozy",
                        "fast", "superb", "nice", "awesome", "bright", "sharp"})
    op(w, Sentiment::positive);
  for (const char* w : {"ok", "okay", "average", "decent", "fine", "acceptable", "standard",
                        "ordinary", "passable", "reasonable"})
    op(w, Sentiment::neutral);
  for (const char* w : {"bad", "terrible", "awful", "rude", "slow", "cold", "bland", "overpriced",
                        "noisy", "dirty", "horrible", "poor", "greasy", "stale", "dim", "dull",
                        "disappointing", "mediocre", "not good", "too salty"})
    op(w, Sentiment::negative);

  inv.implicit_opinions = {
      {"had a dead pixel", Sentiment::negative},
      {"broke after a week", Sentiment::negative},
      {"came out late", Sentiment::negative},
      {"was worth every penny", Sentiment::positive},
      {"made our day", Sentiment::positive},
      {"deserves a visit", Sentiment::positive},
  };
  inv.determiners = {"", "the", "our", "their", "this"};
  inv.adverbs = {"", "really", "very", "quite", "pretty"};
  inv.connectives = {"and", "but"};
  return inv;
}

namespace {

struct Clause {
  std::string text;
  AspectQuad quad;
};

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

std::string phrase(std::initializer_list<std::string_view> parts) {
  std::string out;
  for (auto p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

Clause make_clause(Rng& rng, const SyntheticSpec& spec) {
  const auto& inv = spec.inventory;
  const double u = rng.uniform();
  const auto det = pick(rng, inv.determiners);
  const auto adv = pick(rng, inv.adverbs);
  if (u < spec.implicit_aspect_rate && !inv.opinions.empty()) {
    const auto& o = pick(rng, inv.opinions);
    return {phrase({"it", "was", adv, o.text}),
            AspectQuad{std::nullopt, o.text, inv.implicit_aspect_category, o.sentiment}};
  }
  const auto& a = pick(rng, inv.aspects);
  if (u < spec.implicit_aspect_rate + spec.implicit_opinion_rate && !inv.implicit_opinions.empty()) {
    const auto& io = pick(rng, inv.implicit_opinions);
    return {phrase({det, a.text, io.phrase}),
            AspectQuad{a.text, std::nullopt, a.category, io.sentiment}};
  }
  const auto& o = pick(rng, inv.opinions);
  return {phrase({det, a.text, a.plural ? "were" : "was", adv, o.text}),
          AspectQuad{a.text, o.text, a.category, o.sentiment}};
}

}  // namespace

CorpusSplit generate_synthetic(const SyntheticSpec& spec) {
  if (spec.train == 0 || spec.dev == 0 || spec.test == 0) {
    throw CorpusError("synthetic split sizes must be positive", 0);
  }
  const auto& inv = spec.inventory;
  if (inv.aspects.empty() || inv.opinions.empty() || inv.determiners.empty() ||
      inv.adverbs.empty() || inv.connectives.empty() || spec.max_clauses == 0) {
    throw CorpusError("synthetic grammar inventory is empty", 0);
  }
  const std::size_t total = spec.train + spec.dev + spec.test;
  const std::size_t max_attempts = 50 * total + 1000;
  Rng rng(derive_seed(spec.seed, {0x5e17}));
  std::set<std::string> seen;
  std::vector<Example> all;
  all.reserve(total);
  std::size_t attempts = 0;
  while (all.size() < total) {
    if (++attempts > max_attempts) {
      throw CorpusError("synthetic grammar inventory too small: produced " +
                            std::to_string(all.size()) + " distinct sentences of " +
                            std::to_string(total) + " requested",
                        0);
    }
    // 1 clause: 45%, 2: 40%, 3+: remainder, truncated to max_clauses.
    const double u = rng.uniform();
    std::size_t clauses = u < 0.45 ? 1 : (u < 0.85 ? 2 : 3);
    clauses = std::min(clauses, spec.max_clauses);
    Example ex;
    std::set<std::string> aspects_used;
    bool ok = true;
    for (std::size_t c = 0; c < clauses; ++c) {
      Clause cl = make_clause(rng, spec);
      const std::string key = cl.quad.aspect ? *cl.quad.aspect : std::string("it");
      if (!aspects_used.insert(key).second) {
        ok = false;
        break;
      }
      if (c > 0) ex.sentence += " " + pick(rng, inv.connectives) + " ";
      ex.sentence += cl.text;
      ex.quads.push_back(std::move(cl.quad));
    }
    if (!ok || !seen.insert(ex.sentence).second) continue;
    all.push_back(std::move(ex));
  }
  CorpusSplit split;
  split.train.assign(all.begin(), all.begin() + static_cast<long>(spec.train));
  split.dev.assign(all.begin() + static_cast<long>(spec.train),
                   all.begin() + static_cast<long>(spec.train + spec.dev));
  split.test.assign(all.begin() + static_cast<long>(spec.train + spec.dev), all.end());
  return split;
}

}  // namespace uaul::corpus
