#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "uaul/template_codec.hpp"

namespace uaul::corpus {

using codec::AspectQuad;

struct Example {
  std::string sentence;
  std::vector<AspectQuad> quads;

  friend bool operator==(const Example&, const Example&) = default;
};

struct CorpusSplit {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

struct Counts {
  std::size_t sentences = 0;
  std::size_t quads = 0;
};
Counts count(std::span<const Example> examples);

/// Load/validation failure. `line` is 1-based, 0 when not tied to a line.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class FileKind {
  training,    // every example carries at least one quad
  prediction,  // quads may be empty
};

/// JSON-lines reader. Each line:
///   {"sentence": "...", "quads": [{"at": "...", "ot": "...", "ac": "e#a", "sp": "positive"}]}
/// "NULL" for at/ot means implicit. Unknown fields are rejected.
std::vector<Example> load(const std::filesystem::path& path, FileKind kind = FileKind::training);
std::vector<Example> read(std::istream& in, FileKind kind = FileKind::training);
void save(const std::filesystem::path& path, std::span<const Example> examples);
void write(std::ostream& out, std::span<const Example> examples);
/// One JSON object (no trailing newline) for a single example.
std::string to_json_line(const Example& example);

// ---------------------------------------------------------------------------
// Vocabulary and tokenization

namespace special {
inline constexpr int pad = 0;
inline constexpr int bos = 1;
inline constexpr int eos = 2;
inline constexpr int unk = 3;
inline constexpr int ssep = 4;
inline constexpr int at = 5;
inline constexpr int ot = 6;
inline constexpr int ac = 7;
inline constexpr int sp = 8;
inline constexpr int count = 9;
}  // namespace special

/// Token <-> id bijection. Reserved tokens take ids 0..8 in the order
/// <pad> <s> </s> <unk> [SSEP] [AT] [OT] [AC] [SP].
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Reserved tokens, template surface words, then every lower-cased token of
  /// the training sentences and their rendered targets in sorted order.
  static Vocabulary build(std::span<const Example> train);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;  // exact lookup, <unk> if absent
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// FNV-1a over the token list, used to pair checkpoints with vocabularies.
  std::uint64_t hash() const;

  /// Whitespace split with "(", ")" and "," isolated; markers matched
  /// case-sensitively, everything else looked up lower-cased; OOV -> <unk>.
  std::vector<int> tokenize(std::string_view text) const;
  /// Joins tokens with spaces, dropping <pad>/<s> and stopping at </s>.
  std::string detokenize(std::span<const int> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// The raw token strings tokenize() would look up (before lower-casing).
std::vector<std::string> split_tokens(std::string_view text);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct AspectEntry {
  std::string text;
  std::string category;
  bool plural = false;
};

struct OpinionEntry {
  std::string text;
  codec::Sentiment sentiment;
};

/// Predicate phrase with no explicit opinion term, e.g. "had a dead pixel".
struct ImplicitOpinionEntry {
  std::string phrase;
  codec::Sentiment sentiment;
};

struct Inventory {
  std::vector<AspectEntry> aspects;
  std::vector<OpinionEntry> opinions;
  std::vector<ImplicitOpinionEntry> implicit_opinions;
  std::vector<std::string> determiners;  // "" allowed
  std::vector<std::string> adverbs;      // "" allowed
  std::vector<std::string> connectives;
  std::string implicit_aspect_category = "restaurant#general";

  /// Restaurant/laptop inventory with near-synonym opinions (excellent/great)
  /// and singular/plural aspects (food/foods).
  static Inventory standard();
};

struct SyntheticSpec {
  std::size_t train = 800;
  std::size_t dev = 200;
  std::size_t test = 200;
  std::uint64_t seed = 7;
  std::size_t max_clauses = 3;
  double implicit_aspect_rate = 0.08;
  double implicit_opinion_rate = 0.08;
  Inventory inventory = Inventory::standard();
};

/// Sentences follow "<det> <aspect> was|were <adv> <opinion> [and|but ...]".
/// Gold quads are read off the grammar, so they always match the surface text.
/// Splits are disjoint by sentence. Throws CorpusError when the inventory
/// cannot produce enough distinct sentences.
CorpusSplit generate_synthetic(const SyntheticSpec& spec);

}  // namespace uaul::corpus
