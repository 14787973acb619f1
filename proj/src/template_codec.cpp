#include "uaul/template_codec.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace uaul::codec {
namespace {

constexpr std::array<Slot, 4> kSlots{Slot::aspect, Slot::opinion, Slot::category,
                                     Slot::sentiment};

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join(const std::vector<std::string>& toks, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += toks[i];
  }
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

bool is_marker(std::string_view tok) {
  if (tok == kSsep) return true;
  return std::any_of(kSlots.begin(), kSlots.end(), [&](Slot s) { return tok == slot_marker(s); });
}

std::optional<Slot> marker_slot(std::string_view tok) {
  for (Slot s : kSlots)
    if (tok == slot_marker(s)) return s;
  return std::nullopt;
}

void check_term(const Term& term, const char* field) {
  if (!term) return;
  const auto toks = split_ws(*term);
  if (toks.empty()) throw CodecError(std::string(field) + " is explicit but empty", field, 0);
  std::size_t pos = 0;
  for (const auto& t : toks) {
    pos = term->find(t, pos);
    if (is_marker(t)) {
      throw CodecError(std::string(field) + " contains reserved marker " + t + " at position " +
                           std::to_string(pos),
                       field, pos);
    }
  }
}

// Inverse projection shared by all templates.
std::optional<AspectQuad> from_surface(const QuadSurface& s, std::string& error) {
  AspectQuad q;
  if (s.aspect.empty()) {
    error = "empty aspect term";
    return std::nullopt;
  }
  if (s.opinion.empty()) {
    error = "empty opinion term";
    return std::nullopt;
  }
  q.aspect = iequals(s.aspect, kImplicitAspect) ? Term{} : Term{s.aspect};
  q.opinion = iequals(s.opinion, kImplicitOpinion) ? Term{} : Term{s.opinion};
  const auto ac = split_ws(s.category);
  if (ac.size() != 2) {
    error = "aspect category '" + s.category + "' is not two words";
    return std::nullopt;
  }
  q.category = ac[0] + "#" + ac[1];
  const auto sp = sentiment_from_word(s.sentiment);
  if (!sp) {
    error = "unknown sentiment word '" + s.sentiment + "'";
    return std::nullopt;
  }
  q.sentiment = *sp;
  return q;
}

std::optional<QuadSurface> split_paraphrase(const std::vector<std::string>& toks,
                                            std::string& error) {
  const auto because = std::find_if(toks.begin(), toks.end(),
                                    [](const std::string& t) { return iequals(t, "because"); });
  if (because == toks.end()) {
    error = "missing 'because'";
    return std::nullopt;
  }
  const auto b = static_cast<std::size_t>(because - toks.begin());
  // Head "x_ac is x_sp": first "is". Tail "x_at is x_ot": last "is".
  std::size_t head_is = b;
  for (std::size_t i = 0; i < b; ++i)
    if (iequals(toks[i], "is")) {
      head_is = i;
      break;
    }
  if (head_is == b) {
    error = "missing 'is' before 'because'";
    return std::nullopt;
  }
  std::size_t tail_is = toks.size();
  for (std::size_t i = toks.size(); i-- > b + 1;)
    if (iequals(toks[i], "is")) {
      tail_is = i;
      break;
    }
  if (tail_is == toks.size()) {
    error = "missing 'is' after 'because'";
    return std::nullopt;
  }
  QuadSurface s;
  s.category = join(toks, 0, head_is);
  s.sentiment = join(toks, head_is + 1, b);
  s.aspect = join(toks, b + 1, tail_is);
  s.opinion = join(toks, tail_is + 1, toks.size());
  if (s.category.empty() || s.sentiment.empty()) {
    error = "incomplete head clause";
    return std::nullopt;
  }
  return s;
}

std::optional<QuadSurface> split_special(const std::vector<std::string>& toks,
                                         const std::array<Slot, 4>& order, std::string& error) {
  std::array<std::string, 4> values;
  std::size_t i = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (i >= toks.size()) {
      error = "missing marker " + std::string(slot_marker(order[k]));
      return std::nullopt;
    }
    const auto slot = marker_slot(toks[i]);
    if (!slot || *slot != order[k]) {
      error = "expected marker " + std::string(slot_marker(order[k])) + " but found '" + toks[i] +
              "'";
      return std::nullopt;
    }
    std::size_t j = ++i;
    while (j < toks.size() && !is_marker(toks[j])) ++j;
    if (j == i) {
      error = "empty value after " + std::string(slot_marker(order[k]));
      return std::nullopt;
    }
    values[static_cast<std::size_t>(order[k])] = join(toks, i, j);
    i = j;
  }
  if (i != toks.size()) {
    error = "unexpected trailing marker '" + toks[i] + "'";
    return std::nullopt;
  }
  return QuadSurface{values[0], values[1], values[2], values[3]};
}

std::optional<QuadSurface> split_gas(const std::vector<std::string>& toks, std::string& error) {
  // Rebuild "(a, b, c, d)" regardless of spacing around the punctuation.
  std::string s;
  for (const auto& t : toks) {
    if (!s.empty() && s.back() != '(' && t.front() != ',' && t.front() != ')') s += ' ';
    s += t;
  }
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') {
    error = "tuple is not parenthesized";
    return std::nullopt;
  }
  std::vector<std::string> parts;
  std::string cur;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] == ',') {
      parts.push_back(normalize_space(cur));
      cur.clear();
    } else {
      cur += s[i];
    }
  }
  parts.push_back(normalize_space(cur));
  if (parts.size() != 4) {
    error = "tuple has " + std::to_string(parts.size()) + " elements, expected 4";
    return std::nullopt;
  }
  return QuadSurface{parts[0], parts[1], parts[2], parts[3]};
}

}  // namespace

std::string_view sentiment_name(Sentiment s) {
  switch (s) {
    case Sentiment::positive: return "positive";
    case Sentiment::neutral: return "neutral";
    case Sentiment::negative: return "negative";
  }
  return "neutral";
}

std::optional<Sentiment> sentiment_from_name(std::string_view name) {
  if (name == "positive") return Sentiment::positive;
  if (name == "neutral") return Sentiment::neutral;
  if (name == "negative") return Sentiment::negative;
  return std::nullopt;
}

std::string_view sentiment_word(Sentiment s) {
  switch (s) {
    case Sentiment::positive: return "great";
    case Sentiment::neutral: return "ok";
    case Sentiment::negative: return "bad";
  }
  return "ok";
}

std::optional<Sentiment> sentiment_from_word(std::string_view word) {
  if (iequals(word, "great")) return Sentiment::positive;
  if (iequals(word, "ok")) return Sentiment::neutral;
  if (iequals(word, "bad")) return Sentiment::negative;
  return std::nullopt;
}

std::string_view slot_marker(Slot s) {
  switch (s) {
    case Slot::aspect: return "[AT]";
    case Slot::opinion: return "[OT]";
    case Slot::category: return "[AC]";
    case Slot::sentiment: return "[SP]";
  }
  return "";
}

std::string_view variant_name(TemplateVariant v) {
  switch (v) {
    case TemplateVariant::paraphrase: return "paraphrase";
    case TemplateVariant::special_symbols: return "special";
    case TemplateVariant::gas: return "gas";
  }
  return "";
}

std::optional<TemplateVariant> variant_from_name(std::string_view name) {
  if (name == "paraphrase") return TemplateVariant::paraphrase;
  if (name == "special" || name == "special_symbols") return TemplateVariant::special_symbols;
  if (name == "gas") return TemplateVariant::gas;
  return std::nullopt;
}

std::array<Slot, 4> parse_slot_order(std::string_view text) {
  std::array<Slot, 4> out{};
  std::array<bool, 4> seen{};
  std::size_t n = 0;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = normalize_space(item);
    std::optional<Slot> slot;
    for (Slot s : kSlots) {
      const auto m = slot_marker(s);
      if (iequals(item, m.substr(1, 2)) || item == m) slot = s;
    }
    if (!slot || n >= 4 || seen[static_cast<std::size_t>(*slot)]) {
      throw std::invalid_argument("invalid slot order '" + std::string(text) +
                                  "': expected a permutation of AT,OT,AC,SP");
    }
    seen[static_cast<std::size_t>(*slot)] = true;
    out[n++] = *slot;
  }
  if (n != 4) {
    throw std::invalid_argument("invalid slot order '" + std::string(text) +
                                "': expected a permutation of AT,OT,AC,SP");
  }
  return out;
}

std::string format_slot_order(const std::array<Slot, 4>& order) {
  std::string out;
  for (Slot s : order) {
    if (!out.empty()) out += ',';
    out += slot_marker(s).substr(1, 2);
  }
  return out;
}

void validate(const AspectQuad& quad) {
  check_term(quad.aspect, "aspect");
  check_term(quad.opinion, "opinion");
  const auto& ac = quad.category;
  const auto hash = ac.find('#');
  if (hash == std::string::npos) {
    throw CodecError("aspect category '" + ac + "' has no '#' separator", "category", ac.size());
  }
  if (ac.find('#', hash + 1) != std::string::npos) {
    throw CodecError("aspect category '" + ac + "' has more than one '#' (second at position " +
                         std::to_string(ac.find('#', hash + 1)) + ")",
                     "category", ac.find('#', hash + 1));
  }
  if (hash == 0 || hash + 1 == ac.size()) {
    throw CodecError("aspect category '" + ac + "' has an empty half around position " +
                         std::to_string(hash),
                     "category", hash);
  }
  const auto ws = ac.find_first_of(" \t\r\n");
  if (ws != std::string::npos) {
    throw CodecError("aspect category '" + ac + "' contains whitespace at position " +
                         std::to_string(ws),
                     "category", ws);
  }
}

QuadSurface project(const AspectQuad& quad) {
  validate(quad);
  QuadSurface s;
  s.aspect = quad.aspect ? normalize_space(*quad.aspect) : std::string(kImplicitAspect);
  s.opinion = quad.opinion ? normalize_space(*quad.opinion) : std::string(kImplicitOpinion);
  s.category = quad.category;
  std::replace(s.category.begin(), s.category.end(), '#', ' ');
  s.sentiment = std::string(sentiment_word(quad.sentiment));
  return s;
}

std::string render(const std::vector<AspectQuad>& quads, const TemplateKind& kind) {
  std::string out;
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const QuadSurface s = project(quads[i]);
    if (i > 0) out += " [SSEP] ";
    switch (kind.variant) {
      case TemplateVariant::paraphrase:
        out += s.category + " is " + s.sentiment + " because " + s.aspect + " is " + s.opinion;
        break;
      case TemplateVariant::special_symbols:
        for (std::size_t k = 0; k < kind.order.size(); ++k) {
          if (k > 0) out += ' ';
          out += slot_marker(kind.order[k]);
          out += ' ';
          switch (kind.order[k]) {
            case Slot::aspect: out += s.aspect; break;
            case Slot::opinion: out += s.opinion; break;
            case Slot::category: out += s.category; break;
            case Slot::sentiment: out += s.sentiment; break;
          }
        }
        break;
      case TemplateVariant::gas:
        out += "(" + s.aspect + ", " + s.opinion + ", " + s.category + ", " + s.sentiment + ")";
        break;
    }
  }
  return out;
}

ParseResult parse(std::string_view text, const TemplateKind& kind) {
  ParseResult result;
  const auto toks = split_ws(text);
  if (toks.empty()) return result;
  std::vector<std::vector<std::string>> chunks(1);
  for (const auto& t : toks) {
    if (t == kSsep) {
      chunks.emplace_back();
    } else {
      chunks.back().push_back(t);
    }
  }
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const auto& chunk = chunks[c];
    const std::string chunk_text = join(chunk, 0, chunk.size());
    if (chunk.empty()) {
      result.diagnostics.push_back({c, chunk_text, "empty chunk"});
      continue;
    }
    std::string error;
    std::optional<QuadSurface> surface;
    switch (kind.variant) {
      case TemplateVariant::paraphrase: surface = split_paraphrase(chunk, error); break;
      case TemplateVariant::special_symbols: surface = split_special(chunk, kind.order, error); break;
      case TemplateVariant::gas: surface = split_gas(chunk, error); break;
    }
    std::optional<AspectQuad> quad;
    if (surface) quad = from_surface(*surface, error);
    if (quad) {
      result.quads.push_back(std::move(*quad));
    } else {
      result.diagnostics.push_back({c, chunk_text, error});
    }
  }
  return result;
}

std::string normalize_space(std::string_view text) {
  const auto toks = split_ws(text);
  return join(toks, 0, toks.size());
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace uaul::codec
