#include "uaul/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "uaul/config.hpp"
#include "uaul/corpus.hpp"
#include "uaul/evaluator.hpp"
#include "uaul/rng.hpp"
#include "uaul/seq2seq.hpp"
#include "uaul/template_codec.hpp"
#include "uaul/trainer.hpp"

namespace uaul::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class MissingFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw MissingFile(what + " '" + path + "' does not exist");
}

std::vector<corpus::Example> load_examples(const std::string& path, const std::string& what,
                                           corpus::FileKind kind = corpus::FileKind::training) {
  require_file(path, what);
  try {
    return corpus::load(path, kind);
  } catch (const corpus::CorpusError& e) {
    throw DataError(what + " '" + path + "': " + e.what());
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  require_file(path, "input file");
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Writes to `path`, or to `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw MissingFile("cannot open output file '" + path + "'");
      os_ = file_.get();
    }
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

model::Checkpoint load_ckpt(const std::string& path) {
  require_file(path, "checkpoint");
  try {
    return model::load_checkpoint(path);
  } catch (const model::CheckpointError& e) {
    throw DataError(e.what());
  }
}

// Every UaulConfig key as a flag of the same name; --config supplies the base
// and explicitly given flags win. seed is global and lives on the root app.
struct ConfigFlags {
  std::string path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "flat key = value config file");
    for (const auto& key : config_keys()) {
      if (key == "seed") continue;
      options.emplace_back(key, app->add_option("--" + key, values[key], "config key " + key));
    }
  }

  UaulConfig resolve(UaulConfig base, const CLI::Option* seed_opt, std::uint64_t seed) const {
    if (!path.empty()) {
      require_file(path, "config file");
      base = load_config(path, base);
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) set_config_value(base, key, values.at(key));
    if (seed_opt->count() > 0) base.seed = seed;
    base.validate();
    return base;
  }
};

ordered_json quads_json(const std::vector<codec::AspectQuad>& quads) {
  return ordered_json::parse(corpus::to_json_line(corpus::Example{"", quads}))["quads"];
}

struct Splits {
  std::string train, dev, test;
  void attach(CLI::App* app) {
    app->add_option("--train", train, "training JSON lines")->required();
    app->add_option("--dev", dev, "development JSON lines")->required();
    app->add_option("--test", test, "test JSON lines")->required();
  }
  corpus::CorpusSplit load() const {
    return {load_examples(train, "training file"), load_examples(dev, "dev file"),
            load_examples(test, "test file")};
  }
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--seeds", "'" + item + "' is not a seed");
    }
  }
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "empty seed list");
  return seeds;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"uncertainty-aware unlikelihood training for quad prediction"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::uint64_t seed = 0;
  const CLI::Option* seed_opt = app.add_option("--seed", seed, "random seed for every command");

  std::function<void()> action;

  // train ------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  struct {
    std::string train, dev, checkpoint, metrics, final_checkpoint;
    ConfigFlags cfg;
  } tr;
  train_cmd->add_option("--train", tr.train, "training JSON lines")->required();
  train_cmd->add_option("--dev", tr.dev, "development JSON lines");
  train_cmd->add_option("--checkpoint", tr.checkpoint, "best-dev checkpoint path")->required();
  train_cmd->add_option("--final-checkpoint", tr.final_checkpoint, "last-epoch checkpoint path");
  train_cmd->add_option("--metrics", tr.metrics, "per-epoch JSON lines (default stdout)");
  tr.cfg.attach(train_cmd);
  train_cmd->callback([&] {
    action = [&] {
      const auto cfg = tr.cfg.resolve({}, seed_opt, seed);
      const auto train_set = load_examples(tr.train, "training file");
      const auto dev_set =
          tr.dev.empty() ? std::vector<corpus::Example>{} : load_examples(tr.dev, "dev file");
      Sink metrics(tr.metrics, out);
      const auto res = train::train(cfg, train_set, dev_set, &*metrics);
      model::save_checkpoint(tr.checkpoint, {res.params, res.vocab, format_config(cfg)});
      if (!tr.final_checkpoint.empty()) {
        model::save_checkpoint(tr.final_checkpoint,
                               {res.final_params, res.vocab, format_config(cfg)});
      }
      err << "trained " << res.report.epochs.size() << " epochs in " << res.report.wall_seconds
          << " s; best epoch " << res.report.best_epoch << " (dev f1 " << res.report.best_dev_f1
          << ")\n";
    };
  });

  // eval -------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "decode a dataset with a checkpoint and score it");
  struct {
    std::string checkpoint, data, predictions;
    bool json = false;
  } ev;
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data, "gold JSON lines")->required();
  eval_cmd->add_option("--predictions", ev.predictions, "write predictions as JSON lines");
  eval_cmd->add_flag("--json", ev.json, "machine-readable report");
  eval_cmd->callback([&] {
    action = [&] {
      const auto ckpt = load_ckpt(ev.checkpoint);
      const auto cfg = parse_config(ckpt.config_text);
      const auto data = load_examples(ev.data, "data file");
      const auto preds =
          eval::predict(ckpt.params, ckpt.vocab, data, cfg.templ, cfg.max_decode_len);
      eval::QuadLists p, g;
      std::vector<std::size_t> bad;
      for (std::size_t i = 0; i < data.size(); ++i) {
        p.push_back(preds[i].quads);
        g.push_back(data[i].quads);
        bad.push_back(preds[i].diagnostics.size());
      }
      const auto report = eval::score(p, g, bad);
      if (!ev.predictions.empty()) {
        Sink sink(ev.predictions, out);
        for (std::size_t i = 0; i < data.size(); ++i)
          *sink << corpus::to_json_line({data[i].sentence, preds[i].quads}) << '\n';
      }
      out << (ev.json ? eval::report_json(report) + "\n" : eval::format_report(report));
    };
  });

  // encode / decode --------------------------------------------------------
  struct {
    std::string input, output, templ = "paraphrase", order = "AT,OT,AC,SP";
  } cd;
  auto template_kind = [&] {
    UaulConfig c;
    set_config_value(c, "template", cd.templ);
    set_config_value(c, "order", cd.order);
    return c.templ;
  };
  auto* encode_cmd = app.add_subcommand("encode", "render gold quads as target text");
  auto* decode_cmd = app.add_subcommand("decode", "parse target text back into quads");
  for (auto* cmd : {encode_cmd, decode_cmd}) {
    cmd->add_option("--input", cd.input)->required();
    cmd->add_option("--output", cd.output, "default stdout");
    cmd->add_option("--template", cd.templ, "paraphrase | special | gas");
    cmd->add_option("--order", cd.order, "slot order for the special template");
  }
  encode_cmd->callback([&] {
    action = [&] {
      const auto kind = template_kind();
      const auto data = load_examples(cd.input, "input file");
      Sink sink(cd.output, out);
      for (std::size_t i = 0; i < data.size(); ++i) {
        try {
          *sink << codec::render(data[i].quads, kind) << '\n';
        } catch (const codec::CodecError& e) {
          throw DataError("example " + std::to_string(i + 1) + ", field " + e.field() + ": " +
                          e.what());
        }
      }
    };
  });
  decode_cmd->callback([&] {
    action = [&] {
      const auto kind = template_kind();
      const auto lines = read_lines(cd.input);
      Sink sink(cd.output, out);
      std::size_t problems = 0;
      for (const auto& line : lines) {
        const auto res = codec::parse(line, kind);
        ordered_json j;
        j["target"] = line;
        j["quads"] = quads_json(res.quads);
        j["diagnostics"] = ordered_json::array();
        for (const auto& d : res.diagnostics) {
          j["diagnostics"].push_back(
              {{"chunk_index", d.chunk_index}, {"chunk", d.chunk}, {"message", d.message}});
        }
        problems += res.diagnostics.size();
        *sink << j.dump() << '\n';
      }
      if (problems > 0) err << problems << " chunk(s) could not be parsed\n";
    };
  });

  // score ------------------------------------------------------------------
  auto* score_cmd = app.add_subcommand("score", "exact-quad precision/recall/F1");
  struct {
    std::string pred, gold;
    bool json = false;
  } sc;
  score_cmd->add_option("--pred", sc.pred, "predicted JSON lines")->required();
  score_cmd->add_option("--gold", sc.gold, "gold JSON lines")->required();
  score_cmd->add_flag("--json", sc.json, "machine-readable report");
  score_cmd->callback([&] {
    action = [&] {
      const auto pred = load_examples(sc.pred, "prediction file", corpus::FileKind::prediction);
      const auto gold = load_examples(sc.gold, "gold file");
      eval::QuadLists p, g;
      for (const auto& e : pred) p.push_back(e.quads);
      for (const auto& e : gold) g.push_back(e.quads);
      if (p.size() != g.size()) {
        throw DataError("prediction file has " + std::to_string(p.size()) +
                        " examples, gold file has " + std::to_string(g.size()));
      }
      const auto report = eval::score(p, g);
      out << (sc.json ? eval::report_json(report) + "\n" : eval::format_report(report));
    };
  });

  // gen-data ---------------------------------------------------------------
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic train/dev/test corpus");
  corpus::SyntheticSpec spec;
  std::string out_dir;
  gen_cmd->add_option("--out-dir", out_dir)->required();
  gen_cmd->add_option("--train-size", spec.train);
  gen_cmd->add_option("--dev-size", spec.dev);
  gen_cmd->add_option("--test-size", spec.test);
  gen_cmd->add_option("--max-clauses", spec.max_clauses);
  gen_cmd->callback([&] {
    action = [&] {
      if (seed_opt->count() > 0) spec.seed = seed;
      const auto split = corpus::generate_synthetic(spec);
      fs::create_directories(out_dir);
      const fs::path dir(out_dir);
      corpus::save(dir / "train.jsonl", split.train);
      corpus::save(dir / "dev.jsonl", split.dev);
      corpus::save(dir / "test.jsonl", split.test);
      for (const auto& [name, part] : {std::pair{"train", &split.train}, std::pair{"dev", &split.dev},
                                       std::pair{"test", &split.test}}) {
        const auto c = corpus::count(*part);
        out << name << ": " << c.sentences << " sentences, " << c.quads << " quads\n";
      }
    };
  });

  // ablate -----------------------------------------------------------------
  auto* ablate_cmd = app.add_subcommand("ablate", "train the six ablation variants");
  struct {
    Splits data;
    std::string seeds, json;
    ConfigFlags cfg;
  } ab;
  ab.data.attach(ablate_cmd);
  ablate_cmd->add_option("--seeds", ab.seeds, "comma-separated (default: 5 seeds from --seed)");
  ablate_cmd->add_option("--json", ab.json, "write the full results as JSON");
  ab.cfg.attach(ablate_cmd);
  ablate_cmd->callback([&] {
    action = [&] {
      const auto cfg = ab.cfg.resolve({}, seed_opt, seed);
      std::vector<std::uint64_t> seeds;
      if (ab.seeds.empty()) {
        for (std::uint64_t i = 0; i < 5; ++i) seeds.push_back(cfg.seed + i);
      } else {
        seeds = parse_seed_list(ab.seeds);
      }
      const auto results = train::run_ablation_suite(ab.data.load(), cfg, seeds, &err);
      out << train::format_ablation(results);
      if (!ab.json.empty()) *Sink(ab.json, out) << train::ablation_json(results) << '\n';
    };
  });

  // low-resource -----------------------------------------------------------
  auto* low_cmd = app.add_subcommand("low-resource", "baseline vs UAUL on nested subsets");
  struct {
    Splits data;
    std::vector<double> ratios;
    std::string json;
    ConfigFlags cfg;
  } lr;
  lr.data.attach(low_cmd);
  low_cmd->add_option("--ratios", lr.ratios, "training fractions (default 0.10 .. 0.50)")
      ->delimiter(',');
  low_cmd->add_option("--json", lr.json, "write the table as JSON");
  lr.cfg.attach(low_cmd);
  low_cmd->callback([&] {
    action = [&] {
      const auto cfg = lr.cfg.resolve({}, seed_opt, seed);
      const auto ratios = lr.ratios.empty() ? eval::standard_ratios() : lr.ratios;
      const auto rows = eval::low_resource_run(lr.data.load(), ratios, cfg, &err);
      out << eval::format_low_resource(rows);
      if (!lr.json.empty()) *Sink(lr.json, out) << eval::low_resource_json(rows) << '\n';
    };
  });

  // inspect-negatives ------------------------------------------------------
  auto* inspect_cmd =
      app.add_subcommand("inspect-negatives", "dump positive/negative samples per timestep");
  struct {
    std::string checkpoint, data, output;
    std::size_t limit = 0;
    ConfigFlags cfg;
  } in;
  inspect_cmd->add_option("--checkpoint", in.checkpoint)->required();
  inspect_cmd->add_option("--data", in.data, "gold JSON lines")->required();
  inspect_cmd->add_option("--output", in.output, "default stdout");
  inspect_cmd->add_option("--limit", in.limit, "first N examples only (0: all)");
  in.cfg.attach(inspect_cmd);
  inspect_cmd->callback([&] {
    action = [&] {
      const auto ckpt = load_ckpt(in.checkpoint);
      auto cfg = in.cfg.resolve(parse_config(ckpt.config_text), seed_opt, seed);
      cfg.objective = Objective::uaul;
      const auto data = load_examples(in.data, "data file");
      const std::size_t n = in.limit == 0 ? data.size() : std::min(in.limit, data.size());
      Sink sink(in.output, out);
      for (std::size_t i = 0; i < n; ++i) {
        const auto ex = train::encode_example(data[i], ckpt.vocab, cfg.templ);
        const auto res = train::example_step(ckpt.params, ex, cfg,
                                             derive_seed(cfg.seed, {0x1E, i}), nullptr);
        ordered_json j;
        j["example"] = i;
        j["sentence"] = data[i].sentence;
        j["distributions_per_step"] = res.distributions_per_step;
        j["steps"] = ordered_json::array();
        for (std::size_t t = 0; t < res.samples.size(); ++t) {
          const auto& s = res.samples[t];
          ordered_json js;
          js["t"] = t;
          js["gold"] = ckpt.vocab.token(ex.targets[t]);
          js["positives"] = s.positives;
          js["negatives"] = ordered_json::array();
          for (const auto& neg : s.negatives) {
            js["negatives"].push_back({{"token", ckpt.vocab.token(neg.token)},
                                       {"prob", neg.prob},
                                       {"source", neg.source}});
          }
          j["steps"].push_back(std::move(js));
        }
        *sink << j.dump() << '\n';
      }
    };
  });

  if (!args.empty() && !args.front().starts_with("-") &&
      app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "usage error: unknown subcommand '" << args.front() << "'\n";
    return kUsage;
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    action();
    return kOk;
  } catch (const MissingFile& e) {
    err << "missing file: " << e.what() << '\n';
    return kMissingFile;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const train::TrainingDiverged& e) {
    err << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace uaul::cli
