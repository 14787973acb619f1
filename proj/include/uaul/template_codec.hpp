#pragma once

// Conversion between aspect sentiment quadruplets and templated target text.
//
// Three template families are supported:
//   paraphrase       "x_ac is x_sp because x_at is x_ot"
//   special symbols  "[AT] x_at [OT] x_ot [AC] x_ac [SP] x_sp" (any slot order)
//   gas              "(x_at, x_ot, x_ac, x_sp)"
// Multiple quads are joined with " [SSEP] ". Implicit aspect terms surface as
// "it", implicit opinion terms as "NULL", and polarities as great/ok/bad.

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uaul::codec {

enum class Sentiment { positive, neutral, negative };

/// Aspect or opinion term; std::nullopt means implicit.
using Term = std::optional<std::string>;

struct AspectQuad {
  Term aspect;           // at
  Term opinion;          // ot
  std::string category;  // ac, "entity#attribute"
  Sentiment sentiment = Sentiment::neutral;

  friend bool operator==(const AspectQuad&, const AspectQuad&) = default;
};

struct QuadSurface {
  std::string aspect;
  std::string opinion;
  std::string category;
  std::string sentiment;

  friend bool operator==(const QuadSurface&, const QuadSurface&) = default;
};

enum class Slot { aspect, opinion, category, sentiment };
enum class TemplateVariant { paraphrase, special_symbols, gas };

struct TemplateKind {
  TemplateVariant variant = TemplateVariant::paraphrase;
  /// Slot order; only consulted by special_symbols.
  std::array<Slot, 4> order{Slot::aspect, Slot::opinion, Slot::category, Slot::sentiment};

  static TemplateKind paraphrase() { return {TemplateVariant::paraphrase, {}}; }
  static TemplateKind special_symbols(std::array<Slot, 4> order = {Slot::aspect, Slot::opinion,
                                                                   Slot::category, Slot::sentiment}) {
    return {TemplateVariant::special_symbols, order};
  }
  static TemplateKind gas() { return {TemplateVariant::gas, {}}; }

  friend bool operator==(const TemplateKind&, const TemplateKind&) = default;
};

/// Malformed quad handed to the renderer. `position` is the character offset
/// inside the offending field (the field length when something is missing).
class CodecError : public std::runtime_error {
 public:
  CodecError(const std::string& what, std::string field, std::size_t position)
      : std::runtime_error(what), field_(std::move(field)), position_(position) {}
  const std::string& field() const { return field_; }
  std::size_t position() const { return position_; }

 private:
  std::string field_;
  std::size_t position_;
};

struct ParseDiagnostic {
  std::size_t chunk_index = 0;
  std::string chunk;
  std::string message;
};

struct ParseResult {
  std::vector<AspectQuad> quads;
  std::vector<ParseDiagnostic> diagnostics;
};

inline constexpr std::string_view kSsep = "[SSEP]";
inline constexpr std::string_view kImplicitAspect = "it";
inline constexpr std::string_view kImplicitOpinion = "NULL";

std::string_view sentiment_name(Sentiment s);  // positive / neutral / negative
std::optional<Sentiment> sentiment_from_name(std::string_view name);
std::string_view sentiment_word(Sentiment s);  // great / ok / bad
std::optional<Sentiment> sentiment_from_word(std::string_view word);

std::string_view slot_marker(Slot s);  // [AT] [OT] [AC] [SP]
std::string_view variant_name(TemplateVariant v);
/// Accepts "paraphrase", "special" / "special_symbols", "gas".
std::optional<TemplateVariant> variant_from_name(std::string_view name);
/// Parses "AT,OT,AC,SP"-style orders; throws std::invalid_argument.
std::array<Slot, 4> parse_slot_order(std::string_view text);
std::string format_slot_order(const std::array<Slot, 4>& order);

/// Throws CodecError when the quad breaks an AspectQuad invariant.
void validate(const AspectQuad& quad);

QuadSurface project(const AspectQuad& quad);
std::string render(const std::vector<AspectQuad>& quads, const TemplateKind& kind);
/// Total: never throws, every failure becomes a diagnostic.
ParseResult parse(std::string_view text, const TemplateKind& kind);

/// Collapses runs of whitespace to single spaces and trims both ends.
std::string normalize_space(std::string_view text);
std::string to_lower(std::string_view text);

}  // namespace uaul::codec
