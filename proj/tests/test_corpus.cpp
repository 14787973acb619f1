#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <sstream>

#include "uaul/corpus.hpp"

using namespace uaul;
using namespace uaul::corpus;

namespace {
const char* kIntro =
    R"({"sentence": "Service was good and food was wonderful", "quads": [)"
    R"({"at": "Service", "ot": "good", "ac": "service#general", "sp": "positive"}, )"
    R"({"at": "food", "ot": "wonderful", "ac": "food#quality", "sp": "positive"}]})";

std::vector<Example> read_text(const std::string& text, FileKind kind = FileKind::training) {
  std::istringstream in(text);
  return read(in, kind);
}

std::size_t error_line(const std::string& text) {
  try {
    read_text(text);
  } catch (const CorpusError& e) {
    return e.line();
  }
  return 0;
}
}  // namespace

TEST_CASE("loading the introduction example") {
  const auto ex = read_text(std::string(kIntro) + "\n");
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].quads.size() == 2);
  CHECK(ex[0].quads[0].aspect == "Service");
  CHECK(ex[0].quads[1].category == "food#quality");
  const auto c = count(ex);
  CHECK(c.sentences == 1);
  CHECK(c.quads == 2);
}

TEST_CASE("empty input") {
  CHECK(read_text("").empty());
  CHECK(read_text("\n\n").empty());
  CHECK(count(std::vector<Example>{}).quads == 0);
}

TEST_CASE("errors name the line") {
  const std::string good = std::string(kIntro) + "\n";
  CHECK(error_line(good + R"({"sentence": "x", "quads": [{"at": "x", "ot": "y", "ac": "a#b", "sp": "positiv"}]})") == 2);
  CHECK(error_line(R"({"sentence": "x", "quads": [{"at": "x", "ot": "y", "ac": "a#b"}]})") == 1);
  CHECK(error_line(R"({"sentence": "x"})") == 1);
  CHECK(error_line(R"({"sentence": "x", "quads": [], "extra": 1})") == 1);
  CHECK(error_line(good + good + "{not json") == 3);
  CHECK(error_line(R"({"sentence": "x", "quads": [{"at": "x", "ot": "y", "ac": "ab", "sp": "positive"}]})") == 1);
  // Training data must carry quads; predictions may be empty.
  CHECK(error_line(R"({"sentence": "x", "quads": []})") == 1);
  CHECK(read_text(R"({"sentence": "x", "quads": []})", FileKind::prediction).size() == 1);
  try {
    read_text(R"({"sentence": "x", "quads": [{"at": "x", "ot": "y", "ac": "a#b", "sp": "positiv"}]})");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("positiv") != std::string::npos);
  }
}

TEST_CASE("NULL terms are implicit and survive a write/read cycle") {
  const auto ex = read_text(
      R"({"sentence": "it had a dead pixel", "quads": [{"at": "NULL", "ot": "NULL", "ac": "laptop#general", "sp": "negative"}]})");
  REQUIRE(ex.size() == 1);
  CHECK(!ex[0].quads[0].aspect);
  CHECK(!ex[0].quads[0].opinion);
  std::ostringstream out;
  write(out, ex);
  CHECK(read_text(out.str()) == ex);
  CHECK(to_json_line(ex[0]) ==
        R"({"sentence":"it had a dead pixel","quads":[{"at":"NULL","ot":"NULL","ac":"laptop#general","sp":"negative"}]})");
}

TEST_CASE("vocabulary and tokenization") {
  const auto ex = read_text(kIntro);
  const auto vocab = Vocabulary::build(ex);
  CHECK(vocab.token(special::pad) == "<pad>");
  CHECK(vocab.token(special::ssep) == "[SSEP]");
  CHECK(vocab.token(special::sp) == "[SP]");
  const auto ids = vocab.tokenize("food was wonderful");
  CHECK(ids == std::vector<int>{vocab.id("food"), vocab.id("was"), vocab.id("wonderful")});
  CHECK(vocab.tokenize("").empty());
  CHECK(vocab.tokenize("zeppelin") == std::vector<int>{special::unk});
  CHECK(vocab.tokenize("SERVICE") == std::vector<int>{vocab.id("service")});
  CHECK(vocab.tokenize("[AT] (food, x)") ==
        std::vector<int>{special::at, vocab.id("("), vocab.id("food"), vocab.id(","), special::unk,
                         vocab.id(")")});
  CHECK(vocab.detokenize(std::vector<int>{special::bos, vocab.id("food"), special::eos, vocab.id("was")}) ==
        "food");
  CHECK(Vocabulary::build(ex) == vocab);
  CHECK(Vocabulary::build(ex).hash() == vocab.hash());
}

TEST_CASE("synthetic corpus") {
  SyntheticSpec spec;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.train.size() == 800);
  CHECK(a.dev.size() == 200);
  CHECK(a.test.size() == 200);
  std::ostringstream sa, sb;
  write(sa, a.train);
  write(sa, a.dev);
  write(sa, a.test);
  write(sb, b.train);
  write(sb, b.dev);
  write(sb, b.test);
  CHECK(sa.str() == sb.str());

  spec.seed = 8;
  CHECK(generate_synthetic(spec).train != a.train);

  std::set<std::string> sentences;
  bool implicit_at = false, implicit_ot = false;
  for (const auto* part : {&a.train, &a.dev, &a.test})
    for (const auto& ex : *part) {
      CHECK(sentences.insert(ex.sentence).second);
      REQUIRE(!ex.quads.empty());
      for (const auto& q : ex.quads) {
        // Gold terms are read off the surface; opinions are never paraphrased.
        if (q.aspect) CHECK(ex.sentence.find(*q.aspect) != std::string::npos);
        if (q.opinion) CHECK(ex.sentence.find(*q.opinion) != std::string::npos);
        implicit_at |= !q.aspect;
        implicit_ot |= !q.opinion;
      }
    }
  CHECK(implicit_at);
  CHECK(implicit_ot);

  const auto vocab = Vocabulary::build(a.train);
  CHECK(vocab.size() > 100);
  CHECK(vocab.size() < 400);
}

TEST_CASE("an inventory that cannot fill the request is reported") {
  SyntheticSpec spec;
  spec.inventory.aspects.resize(1);
  spec.inventory.opinions.resize(1);
  spec.inventory.implicit_opinions.clear();
  spec.inventory.adverbs = {""};
  spec.inventory.determiners = {""};
  CHECK_THROWS_AS(generate_synthetic(spec), CorpusError);
}
