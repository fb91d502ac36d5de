// Command-line front end: decode, optimize, oracle, train-ngram.
//
// stdout carries only data (JSON lines, LF endings); diagnostics go to
// stderr; outcomes are reported through exit codes:
//   0  success (for decode: at least one top-tier sequence)
//   1  configuration or input error
//   2  oracle enumeration refused or aborted on its size cap
//   3  decode finished but produced no top-tier sequence

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "treedec/config.hpp"
#include "treedec/oracle.hpp"
#include "treedec/optimizer.hpp"
#include "treedec/runner.hpp"

namespace {

using treedec::RunConfig;

struct CommonArgs {
  std::string config_path;
  std::string prompt;
  std::string output;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool output_given = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Configuration file (JSON)")
      ->required();
  cmd->add_option("--prompt", args.prompt,
                  "Prompt as whitespace-separated vocabulary tokens");
  cmd->add_option("--seed", args.seed, "Seed override")
      ->each([&args](const std::string&) { args.seed_given = true; });
  cmd->add_option("--output", args.output, "Output path (default stdout)")
      ->each([&args](const std::string&) { args.output_given = true; });
}

/** Opens the output sink: the given path, or stdout when empty. */
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) {
        throw treedec::LoadError("cannot open output file '" + path + "'");
      }
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

RunConfig load_and_override(const CommonArgs& args) {
  RunConfig config = treedec::load_config(args.config_path);
  if (args.seed_given) config.seed = args.seed;
  if (args.output_given) config.output = args.output;
  return config;
}

// ============================================================================
// decode
// ============================================================================

int run_decode(const CommonArgs& args) {
  RunConfig config = load_and_override(args);
  std::vector<treedec::TokenId> prompt =
      config.lm->vocab().encode(args.prompt);

  treedec::DecodeResult result = treedec::run(
      *config.lm, treedec::composed_constraint(config), config.decoder,
      config.termination, config.aggregation, config.seed, prompt);

  Sink sink(config.output);
  for (const nlohmann::json& record : treedec::to_json_records(result)) {
    sink.stream() << record.dump() << "\n";
  }

  for (const treedec::DecodeEntry& entry : result.entries) {
    if (entry.status == "complete") return 0;
  }
  std::cerr << "no sequence satisfied every constraint (termination: "
            << result.termination_reason << ")\n";
  return 3;
}

// ============================================================================
// optimize
// ============================================================================

int run_optimize(const CommonArgs& args, std::size_t parallel) {
  RunConfig config = load_and_override(args);
  if (!config.optimize) {
    throw treedec::ConfigError("missing key 'optimize' (required by the "
                               "optimize command)");
  }
  const treedec::OptimizeConfig& opt = *config.optimize;

  treedec::OptimizerEnv env;
  env.lm = config.lm;
  env.catalogue = opt.catalogue;
  env.termination = config.termination;
  env.aggregation = config.aggregation;
  env.objective = opt.objective;

  treedec::OptimizeResult result =
      treedec::optimize(env, opt.space, opt.suite, opt.strategy, opt.max_iters,
                        config.seed, parallel);

  // --output redirects the trial log; the best-config document keeps its
  // configured destination.
  std::string trial_log = args.output_given ? args.output : opt.trial_log;
  {
    Sink sink(trial_log);
    for (const treedec::Trial& trial : result.history) {
      sink.stream() << treedec::trial_to_json(trial).dump() << "\n";
    }
  }
  {
    Sink sink(opt.best_out);
    sink.stream() << treedec::trial_to_json(result.best).dump() << "\n";
  }
  std::cerr << "evaluated " << result.history.size()
            << " configuration(s); best objective " << result.best.objective
            << "\n";
  return 0;
}

// ============================================================================
// oracle
// ============================================================================

constexpr double kUpfrontCap = 1e7;

int run_oracle(const CommonArgs& args, std::size_t max_len_flag) {
  RunConfig config = load_and_override(args);
  const treedec::Vocabulary& vocab = config.lm->vocab();
  std::vector<treedec::TokenId> prompt = vocab.encode(args.prompt);
  std::size_t max_len =
      max_len_flag > 0 ? max_len_flag : config.termination.max_seq_len;

  double upfront = std::pow(static_cast<double>(vocab.size()),
                            static_cast<double>(max_len));
  if (upfront > kUpfrontCap) {
    std::cerr << "error: enumerating length-" << max_len << " sequences over "
              << vocab.size() << " tokens spans about " << upfront
              << " prefixes, over the cap of " << kUpfrontCap << "\n";
    return 2;
  }

  treedec::SequenceDistribution dist;
  try {
    dist = treedec::enumerate_constrained(
        *config.lm, treedec::composed_constraint(config), max_len, prompt);
  } catch (const treedec::CapExceeded& e) {
    std::cerr << "error: " << e.what() << " (estimated " << e.estimate
              << " prefixes)\n";
    return 2;
  }

  auto ranked = treedec::exact_top_k(dist, dist.masses.size());
  Sink sink(config.output);
  std::size_t rank = 1;
  for (const auto& [seq, prob] : ranked) {
    std::vector<std::string> tokens;
    tokens.reserve(seq.size());
    for (treedec::TokenId t : seq) tokens.push_back(vocab.token(t));
    nlohmann::json record{{"rank", rank++},
                          {"tokens", tokens},
                          {"text", vocab.decode(seq)},
                          {"probability", prob},
                          {"score", dist.masses.at(seq)},
                          {"status", "complete"},
                          {"termination_reason", "exact_enumeration"},
                          {"expansions", dist.lm_queries},
                          {"elapsed_ms", 0},
                          {"seed", config.seed}};
    sink.stream() << record.dump() << "\n";
  }
  std::cerr << "retained mass " << dist.retained_mass << ", lost mass "
            << dist.lost_mass << ", " << dist.masses.size() << " sequence(s)\n";
  return 0;
}

// ============================================================================
// train-ngram
// ============================================================================

int run_train_ngram(const std::string& corpus, std::size_t order,
                    double smoothing_k, const std::string& eos,
                    const std::string& out_path) {
  if (order < 1) {
    std::cerr << "error: --order must be >= 1\n";
    return 1;
  }
  auto model = treedec::NgramLm::train_from_file(corpus, order, smoothing_k, eos);
  model->save(out_path);
  std::cerr << "trained order-" << order << " model over "
            << model->vocab().size() << " tokens -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained decoding over explicit search trees"};
  app.require_subcommand(1);

  CommonArgs decode_args;
  CLI::App* decode_cmd =
      app.add_subcommand("decode", "Run one constrained decode");
  add_common(decode_cmd, decode_args);

  CommonArgs optimize_args;
  std::size_t parallel = 1;
  CLI::App* optimize_cmd = app.add_subcommand(
      "optimize", "Search decoder configurations against a task suite");
  add_common(optimize_cmd, optimize_args);
  optimize_cmd->add_option("--parallel", parallel, "Worker threads")
      ->check(CLI::PositiveNumber);

  CommonArgs oracle_args;
  std::size_t max_len = 0;
  CLI::App* oracle_cmd = app.add_subcommand(
      "oracle", "Enumerate the exact constrained distribution");
  add_common(oracle_cmd, oracle_args);
  oracle_cmd->add_option("--max-len", max_len,
                         "Sequence length cap (default: termination policy)");

  std::string corpus, eos = "</s>", model_out;
  std::size_t order = 0;
  double smoothing_k = 1.0;
  CLI::App* train_cmd =
      app.add_subcommand("train-ngram", "Train an n-gram model from a corpus");
  train_cmd->add_option("--corpus", corpus, "One token sequence per line")
      ->required();
  train_cmd->add_option("--order", order, "N-gram order")->required();
  train_cmd->add_option("--smoothing-k", smoothing_k, "Add-k smoothing");
  train_cmd->add_option("--eos", eos, "End-of-sequence token string");
  train_cmd->add_option("--out", model_out, "Model output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(decode_cmd)) return run_decode(decode_args);
    if (app.got_subcommand(optimize_cmd)) {
      return run_optimize(optimize_args, parallel);
    }
    if (app.got_subcommand(oracle_cmd)) {
      return run_oracle(oracle_args, max_len);
    }
    return run_train_ngram(corpus, order, smoothing_k, eos, model_out);
  } catch (const treedec::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
