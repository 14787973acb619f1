#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "json.hpp"
#include "uaul/cli.hpp"

namespace fs = std::filesystem;
using uaul::cli::dispatch;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("uaul_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const char* kIntro =
    R"({"sentence": "Service was good and food was wonderful", "quads": [)"
    R"({"at": "Service", "ot": "good", "ac": "service#general", "sp": "positive"}, )"
    R"({"at": "food", "ot": "wonderful", "ac": "food#quality", "sp": "positive"}]})";

}  // namespace

TEST_CASE("encode, decode and score the introduction example") {
  TempDir dir;
  std::ofstream(dir / "intro.jsonl") << kIntro << "\n";

  auto r = run({"encode", "--input", dir / "intro.jsonl", "--template", "paraphrase", "--output",
                dir / "targets.txt"});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "targets.txt") ==
        "service general is great because Service is good [SSEP] food quality is great because "
        "food is wonderful\n");

  r = run({"decode", "--input", dir / "targets.txt", "--template", "paraphrase"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["quads"] == nlohmann::json::parse(kIntro)["quads"]);
  CHECK(j["diagnostics"].empty());

  r = run({"score", "--pred", dir / "intro.jsonl", "--gold", dir / "intro.jsonl"});
  CHECK(r.code == 0);
  CHECK(r.out.find("f1        1.0000") != std::string::npos);
}

TEST_CASE("encode/decode is the identity for every template") {
  TempDir dir;
  REQUIRE(run({"gen-data", "--out-dir", dir.path.string(), "--train-size", "30", "--dev-size", "5",
               "--test-size", "5", "--seed", "9"})
              .code == 0);
  for (std::vector<std::string> kind : {std::vector<std::string>{"--template", "paraphrase"},
                                        {"--template", "gas"},
                                        {"--template", "special", "--order", "SP,AT,AC,OT"}}) {
    std::vector<std::string> enc{"encode", "--input", dir / "train.jsonl", "--output", dir / "t.txt"};
    enc.insert(enc.end(), kind.begin(), kind.end());
    REQUIRE(run(enc).code == 0);
    std::vector<std::string> dec{"decode", "--input", dir / "t.txt"};
    dec.insert(dec.end(), kind.begin(), kind.end());
    const auto r = run(dec);
    REQUIRE(r.code == 0);
    std::istringstream decoded(r.out);
    std::ifstream gold(dir / "train.jsonl");
    std::string dl, gl;
    std::size_t n = 0;
    while (std::getline(decoded, dl) && std::getline(gold, gl)) {
      CHECK(nlohmann::json::parse(dl)["quads"] == nlohmann::json::parse(gl)["quads"]);
      ++n;
    }
    CHECK(n == 30);
  }
}

TEST_CASE("errors get distinct messages and exit codes") {
  TempDir dir;
  std::ofstream(dir / "intro.jsonl") << kIntro << "\n";
  std::ofstream(dir / "bad.jsonl") << R"({"sentence": "x", "quads": [{"at": "a", "ot": "b", "ac": "c#d", "sp": "positiv"}]})"
                                   << "\n";
  std::ofstream(dir / "bad.cfg") << "k = 0\n";
  std::ofstream(dir / "unknown.cfg") << "kay = 3\n";

  auto r = run({"frobnicate"});
  CHECK(r.code == uaul::cli::kUsage);
  CHECK(r.err.find("unknown subcommand") != std::string::npos);

  r = run({"score", "--pred", dir / "intro.jsonl", "--gold", dir / "intro.jsonl", "--nope"});
  CHECK(r.code == uaul::cli::kUsage);
  CHECK(r.err.find("--nope") != std::string::npos);

  r = run({"score", "--pred", dir / "missing.jsonl", "--gold", dir / "intro.jsonl"});
  CHECK(r.code == uaul::cli::kMissingFile);
  CHECK(r.err.find("missing.jsonl") != std::string::npos);

  r = run({"score", "--pred", dir / "intro.jsonl", "--gold", dir / "bad.jsonl"});
  CHECK(r.code == uaul::cli::kDataError);
  CHECK(r.err.find("line 1") != std::string::npos);

  r = run({"train", "--train", dir / "intro.jsonl", "--checkpoint", dir / "m.ckpt", "--config",
           dir / "bad.cfg"});
  CHECK(r.code == uaul::cli::kConfigError);
  CHECK(r.err.find("k must be at least 1") != std::string::npos);

  r = run({"train", "--train", dir / "intro.jsonl", "--checkpoint", dir / "m.ckpt", "--config",
           dir / "unknown.cfg"});
  CHECK(r.code == uaul::cli::kConfigError);
  CHECK(r.err.find("kay") != std::string::npos);

  r = run({"train", "--train", dir / "intro.jsonl", "--checkpoint", dir / "m.ckpt",
           "--negative_strategy", "topk:3"});
  CHECK(r.code == uaul::cli::kConfigError);

  r = run({"eval", "--checkpoint", dir / "intro.jsonl", "--data", dir / "intro.jsonl"});
  CHECK(r.code == uaul::cli::kDataError);

  r = run({"encode", "--input", dir / "intro.jsonl", "--template", "fancy"});
  CHECK(r.code == uaul::cli::kConfigError);

  r = run({"ablate", "--train", dir / "intro.jsonl", "--dev", dir / "intro.jsonl", "--test",
           dir / "intro.jsonl", "--seeds", "1,x"});
  CHECK(r.code == uaul::cli::kUsage);
}

TEST_CASE("train, eval and inspect with flags overriding the config file") {
  TempDir dir;
  REQUIRE(run({"gen-data", "--out-dir", dir.path.string(), "--train-size", "24", "--dev-size",
               "6", "--test-size", "6"})
              .code == 0);
  std::ofstream(dir / "exp.cfg") << "epochs = 5\nd_model = 16\nff = 16\nlayers = 1\nk = 3\n";
  const std::vector<std::string> train{"train", "--train", dir / "train.jsonl", "--dev",
                                       dir / "dev.jsonl", "--checkpoint", dir / "m.ckpt",
                                       "--config", dir / "exp.cfg", "--epochs", "2", "--seed", "4"};
  const auto a = run(train);
  REQUIRE(a.code == 0);
  std::size_t lines = 0;
  for (char c : a.out) lines += c == '\n';
  CHECK(lines == 2);

  const auto e = run({"eval", "--checkpoint", dir / "m.ckpt", "--data", dir / "test.jsonl",
                      "--json", "--predictions", dir / "pred.jsonl"});
  REQUIRE(e.code == 0);
  CHECK(nlohmann::json::parse(e.out).contains("f1"));
  CHECK(fs::exists(dir / "pred.jsonl"));

  auto in = run({"inspect-negatives", "--checkpoint", dir / "m.ckpt", "--data", dir / "test.jsonl",
                 "--limit", "2"});
  REQUIRE(in.code == 0);
  std::istringstream dump(in.out);
  std::string line;
  std::size_t n = 0;
  while (std::getline(dump, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["distributions_per_step"] == 3);
    for (const auto& s : j["steps"]) CHECK(s["positives"].size() == 3);
    ++n;
  }
  CHECK(n == 2);

  in = run({"inspect-negatives", "--checkpoint", dir / "m.ckpt", "--data", dir / "test.jsonl",
            "--limit", "1", "--use_mc", "false"});
  REQUIRE(in.code == 0);
  const auto j = nlohmann::json::parse(in.out);
  CHECK(j["distributions_per_step"] == 1);
  for (const auto& s : j["steps"]) {
    CHECK(s["positives"].size() == 1);
    CHECK(s["negatives"].size() <= 1);
  }
}
