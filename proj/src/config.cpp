#include "treedec/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace treedec {

namespace {

// ============================================================================
// Strict object reader
// ============================================================================

/** Wraps one JSON object; every key must be consumed exactly once and
 *  carry the expected type, otherwise a ConfigError names its path. */
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw ConfigError("'" + path_ + "' must be a JSON object");
    }
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const nlohmann::json* find(const std::string& key) {
    used_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  const nlohmann::json& at(const std::string& key) {
    const nlohmann::json* value = find(key);
    if (!value) throw ConfigError("missing key '" + key_path(key) + "'");
    return *value;
  }

  std::string get_string(const std::string& key) {
    const nlohmann::json& v = at(key);
    if (!v.is_string()) bad(key, "must be a string");
    return v.get<std::string>();
  }

  std::string get_string_or(const std::string& key, std::string fallback) {
    return has(key) ? get_string(key) : std::move(fallback);
  }

  bool get_bool_or(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const nlohmann::json& v = at(key);
    if (!v.is_boolean()) bad(key, "must be a boolean");
    return v.get<bool>();
  }

  std::uint64_t get_u64(const std::string& key) {
    const nlohmann::json& v = at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    // Accept integers that merely parsed as signed, as long as they fit.
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    bad(key, "must be a nonnegative integer");
  }

  std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) {
    return has(key) ? get_u64(key) : fallback;
  }

  std::int64_t get_i64(const std::string& key) {
    const nlohmann::json& v = at(key);
    if (!v.is_number_integer()) bad(key, "must be an integer");
    return v.get<std::int64_t>();
  }

  double get_double(const std::string& key) {
    const nlohmann::json& v = at(key);
    if (!v.is_number()) bad(key, "must be a number");
    return v.get<double>();
  }

  double get_double_or(const std::string& key, double fallback) {
    return has(key) ? get_double(key) : fallback;
  }

  std::vector<std::string> get_string_list(const std::string& key) {
    const nlohmann::json& v = at(key);
    if (!v.is_array()) bad(key, "must be an array of strings");
    std::vector<std::string> out;
    for (const nlohmann::json& item : v) {
      if (!item.is_string()) bad(key, "must be an array of strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }

  [[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw ConfigError("'" + key_path(key) + "' " + why);
  }

  /** Call after reading every expected key. */
  void done() {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!used_.count(it.key())) {
        throw ConfigError("unknown configuration key '" + key_path(it.key()) +
                          "'");
      }
    }
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename Fn>
auto rethrow_as(const std::string& key_path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("'" + key_path + "': " + e.what());
  }
}

// ============================================================================
// Section parsers
// ============================================================================

LmPtr parse_lm(const nlohmann::json& doc, nlohmann::json& canonical) {
  ObjectReader reader(doc, "lm");
  std::string kind = reader.get_string("kind");
  canonical["kind"] = kind;
  LmPtr lm;
  if (kind == "uniform") {
    std::vector<std::string> tokens = reader.get_string_list("vocab");
    std::string eos = reader.get_string("eos");
    canonical["vocab"] = tokens;
    canonical["eos"] = eos;
    lm = rethrow_as("lm.vocab", [&] {
      return std::make_shared<UniformLm>(
          Vocabulary::with_eos_token(std::move(tokens), eos));
    });
  } else if (kind == "lookup") {
    std::string path = reader.get_string("path");
    canonical["path"] = path;
    lm = rethrow_as("lm.path", [&] { return LookupLm::load(path); });
  } else if (kind == "ngram") {
    std::string path = reader.get_string("path");
    canonical["path"] = path;
    std::shared_ptr<NgramLm> model =
        rethrow_as("lm.path", [&] { return NgramLm::load(path); });
    if (reader.has("order")) {
      std::uint64_t order = reader.get_u64("order");
      if (order != model->order()) {
        reader.bad("order", "does not match the model file (which has order " +
                                std::to_string(model->order()) + ")");
      }
      canonical["order"] = order;
    }
    if (reader.has("smoothing_k")) {
      double k = reader.get_double("smoothing_k");
      if (k != model->smoothing()) {
        reader.bad("smoothing_k", "does not match the model file");
      }
      canonical["smoothing_k"] = k;
    }
    lm = model;
  } else {
    reader.bad("kind", "unknown language model kind '" + kind + "'");
  }
  reader.done();
  return lm;
}

ConstraintPtr parse_constraint(const nlohmann::json& doc,
                               const std::string& path,
                               const Vocabulary& vocab,
                               nlohmann::json& canonical) {
  ObjectReader reader(doc, path);
  std::string kind = reader.get_string("kind");
  canonical["kind"] = kind;
  ConstraintPtr built;
  if (kind == "cfg_prefix") {
    std::shared_ptr<const Grammar> grammar;
    if (reader.has("grammar_text")) {
      std::string text = reader.get_string("grammar_text");
      canonical["grammar_text"] = text;
      grammar = rethrow_as(reader.key_path("grammar_text"),
                           [&] { return Grammar::parse(text); });
      if (reader.has("grammar")) {
        reader.bad("grammar", "cannot be combined with grammar_text");
      }
    } else {
      std::string file = reader.get_string("grammar");
      canonical["grammar"] = file;
      grammar = rethrow_as(reader.key_path("grammar"),
                           [&] { return Grammar::load(file); });
    }
    built = rethrow_as(reader.key_path("grammar"), [&] {
      return std::make_shared<CfgPrefixConstraint>(std::move(grammar), vocab);
    });
  } else if (kind == "lexical_forbid") {
    std::vector<std::string> forbidden = reader.get_string_list("forbidden");
    canonical["forbidden"] = forbidden;
    built = rethrow_as(reader.key_path("forbidden"), [&] {
      return std::make_shared<LexicalForbidConstraint>(std::move(forbidden),
                                                       vocab);
    });
  } else if (kind == "structural_prefix") {
    std::vector<std::string> required = reader.get_string_list("required");
    std::vector<std::string> after;
    if (reader.has("forbidden_after")) {
      after = reader.get_string_list("forbidden_after");
    }
    canonical["required"] = required;
    canonical["forbidden_after"] = after;
    built = rethrow_as(reader.key_path("required"), [&] {
      return std::make_shared<StructuralPrefixConstraint>(
          std::move(required), std::move(after), vocab);
    });
  } else if (kind == "completion_predicate") {
    std::int64_t target = reader.get_i64("target");
    canonical["target"] = target;
    built = std::make_shared<CompletionPredicateConstraint>(target, vocab);
  } else if (kind == "max_length") {
    std::uint64_t cap = reader.get_u64("max_tokens");
    canonical["max_tokens"] = cap;
    built = std::make_shared<MaxLengthConstraint>(
        static_cast<std::size_t>(cap));
  } else {
    reader.bad("kind", "unknown constraint kind '" + kind + "'");
  }
  reader.done();
  return built;
}

DecoderParams parse_decoder(const nlohmann::json& doc, const Vocabulary& vocab,
                            nlohmann::json& canonical) {
  ObjectReader reader(doc, "decoder");
  DecoderParams params;
  std::string kind = reader.get_string_or("kind", "beam_search");
  params.kind = rethrow_as(reader.key_path("kind"),
                           [&] { return decoder_kind_from_string(kind); });
  canonical["kind"] = kind;

  std::uint64_t k = reader.get_u64_or("k", 5);
  if (k < 1) reader.bad("k", "must be >= 1");
  params.k = static_cast<std::size_t>(k);
  canonical["k"] = k;

  if (reader.has("j")) {
    if (params.kind != DecoderKind::Asap) {
      reader.bad("j", "only the asap decoder takes an expansion width; " +
                          kind + " fixes its own");
    }
    std::uint64_t j = reader.get_u64("j");
    params.j = static_cast<std::size_t>(j);
    canonical["j"] = j;
  }

  std::string default_mode = to_string(effective_mode(params));
  std::string mode = reader.get_string_or("mode", default_mode);
  params.mode = rethrow_as(reader.key_path("mode"),
                           [&] { return expand_mode_from_string(mode); });
  canonical["mode"] = mode;

  params.puct_c = reader.get_double_or("puct_c", params.puct_c);
  if (params.puct_c < 0.0) reader.bad("puct_c", "must be >= 0");
  canonical["puct_c"] = params.puct_c;

  params.ess_threshold =
      reader.get_double_or("ess_threshold", params.ess_threshold);
  if (params.ess_threshold < 0.0 || params.ess_threshold > 1.0) {
    reader.bad("ess_threshold", "must lie in [0, 1]");
  }
  canonical["ess_threshold"] = params.ess_threshold;

  std::uint64_t rollout_cap =
      reader.get_u64_or("rollout_max_len", params.rollout_max_len);
  if (rollout_cap < 1) reader.bad("rollout_max_len", "must be >= 1");
  params.rollout_max_len = static_cast<std::size_t>(rollout_cap);
  canonical["rollout_max_len"] = rollout_cap;

  std::vector<std::string> allow;
  if (reader.has("allow_list")) allow = reader.get_string_list("allow_list");
  canonical["allow_list"] = allow;
  for (const std::string& token : allow) {
    params.allow_list.push_back(rethrow_as(
        reader.key_path("allow_list"), [&] { return vocab.id_of(token); }));
  }

  reader.done();
  return params;
}

TerminationPolicy parse_termination(const nlohmann::json& doc,
                                    nlohmann::json& canonical) {
  ObjectReader reader(doc, "termination");
  TerminationPolicy policy;
  std::uint64_t min_complete =
      reader.get_u64_or("min_complete", policy.min_complete);
  if (min_complete < 1) reader.bad("min_complete", "must be >= 1");
  policy.min_complete = static_cast<std::size_t>(min_complete);

  std::uint64_t max_nodes = reader.get_u64_or("max_nodes", policy.max_nodes);
  if (max_nodes < 1) reader.bad("max_nodes", "must be >= 1");
  policy.max_nodes = static_cast<std::size_t>(max_nodes);

  std::uint64_t max_seq_len =
      reader.get_u64_or("max_seq_len", policy.max_seq_len);
  if (max_seq_len < 1) reader.bad("max_seq_len", "must be >= 1");
  policy.max_seq_len = static_cast<std::size_t>(max_seq_len);

  canonical["min_complete"] = min_complete;
  canonical["max_nodes"] = max_nodes;
  canonical["max_seq_len"] = max_seq_len;

  if (reader.has("time_limit_ms")) {
    std::int64_t limit = reader.get_i64("time_limit_ms");
    if (limit < 0) reader.bad("time_limit_ms", "must be >= 0");
    policy.time_limit_ms = limit;
    canonical["time_limit_ms"] = limit;
  }
  if (reader.has("max_expansions")) {
    policy.max_expansions = reader.get_u64("max_expansions");
    canonical["max_expansions"] = *policy.max_expansions;
  }
  if (reader.has("max_steps")) {
    policy.max_steps = reader.get_u64("max_steps");
    canonical["max_steps"] = *policy.max_steps;
  }
  reader.done();
  return policy;
}

OptimizeConfig parse_optimize(const nlohmann::json& doc,
                              const Vocabulary& vocab,
                              nlohmann::json& canonical) {
  ObjectReader reader(doc, "optimize");
  OptimizeConfig out;

  std::string strategy = reader.get_string_or("strategy", "grid");
  out.strategy = rethrow_as(reader.key_path("strategy"), [&] {
    return proposal_strategy_from_string(strategy);
  });
  canonical["strategy"] = strategy;

  std::string objective = reader.get_string_or("objective", "top1");
  out.objective = rethrow_as(reader.key_path("objective"), [&] {
    return objective_kind_from_string(objective);
  });
  canonical["objective"] = objective;

  // Catalogue before space: power-set subsets need the names.
  nlohmann::json catalogue_doc = nlohmann::json::object();
  std::vector<std::string> names;
  if (const nlohmann::json* cat = reader.find("catalogue")) {
    ObjectReader cat_reader(*cat, "optimize.catalogue");
    for (auto it = cat->begin(); it != cat->end(); ++it) {
      nlohmann::json entry = nlohmann::json::object();
      out.catalogue[it.key()] = parse_constraint(
          cat_reader.at(it.key()), "optimize.catalogue." + it.key(), vocab,
          entry);
      catalogue_doc[it.key()] = std::move(entry);
      names.push_back(it.key());
    }
    cat_reader.done();
  }
  canonical["catalogue"] = std::move(catalogue_doc);

  {
    ObjectReader space_reader(reader.at("space"), "optimize.space");
    nlohmann::json space_doc = nlohmann::json::object();
    std::vector<std::string> kind_names = space_reader.get_string_list("kinds");
    for (const std::string& kind : kind_names) {
      out.space.kinds.push_back(rethrow_as(
          space_reader.key_path("kinds"),
          [&] { return decoder_kind_from_string(kind); }));
    }
    space_doc["kinds"] = kind_names;

    out.space.k_min = static_cast<std::size_t>(space_reader.get_u64_or("k_min", 1));
    out.space.k_max = static_cast<std::size_t>(
        space_reader.get_u64_or("k_max", out.space.k_min));
    out.space.j_min = static_cast<std::size_t>(space_reader.get_u64_or("j_min", 0));
    out.space.j_max = static_cast<std::size_t>(
        space_reader.get_u64_or("j_max", out.space.j_min));
    space_doc["k_min"] = out.space.k_min;
    space_doc["k_max"] = out.space.k_max;
    space_doc["j_min"] = out.space.j_min;
    space_doc["j_max"] = out.space.j_max;

    if (const nlohmann::json* subsets = space_reader.find("subsets")) {
      if (subsets->is_string()) {
        if (subsets->get<std::string>() != "power_set") {
          space_reader.bad("subsets",
                           "must be \"power_set\" or an array of name arrays");
        }
        out.space.constraint_subsets = rethrow_as(
            space_reader.key_path("subsets"), [&] { return power_set(names); });
        space_doc["subsets"] = "power_set";
      } else if (subsets->is_array()) {
        out.space.constraint_subsets.clear();
        for (const nlohmann::json& subset : *subsets) {
          if (!subset.is_array()) {
            space_reader.bad("subsets", "must be an array of name arrays");
          }
          std::vector<std::string> members;
          for (const nlohmann::json& name : subset) {
            if (!name.is_string()) {
              space_reader.bad("subsets", "must be an array of name arrays");
            }
            members.push_back(name.get<std::string>());
            if (!out.catalogue.count(members.back())) {
              space_reader.bad("subsets", "references unknown constraint '" +
                                              members.back() + "'");
            }
          }
          out.space.constraint_subsets.push_back(std::move(members));
        }
        space_doc["subsets"] = *subsets;
      } else {
        space_reader.bad("subsets",
                         "must be \"power_set\" or an array of name arrays");
      }
    } else {
      space_doc["subsets"] = nlohmann::json::array({nlohmann::json::array()});
    }

    if (space_reader.has("task_time_limit_ms")) {
      std::int64_t limit = space_reader.get_i64("task_time_limit_ms");
      if (limit < 0) space_reader.bad("task_time_limit_ms", "must be >= 0");
      out.space.task_time_limit_ms = limit;
      space_doc["task_time_limit_ms"] = limit;
    }
    if (space_reader.has("task_expansion_cap")) {
      out.space.task_expansion_cap = space_reader.get_u64("task_expansion_cap");
      space_doc["task_expansion_cap"] = *out.space.task_expansion_cap;
    }
    space_reader.done();
    rethrow_as("optimize.space", [&] { validate_space(out.space); return 0; });
    canonical["space"] = std::move(space_doc);
  }

  {
    const nlohmann::json& tasks = reader.at("tasks");
    if (!tasks.is_array() || tasks.empty()) {
      reader.bad("tasks", "must be a nonempty array");
    }
    nlohmann::json tasks_doc = nlohmann::json::array();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      std::string task_path = "optimize.tasks[" + std::to_string(i) + "]";
      ObjectReader task_reader(tasks[i], task_path);
      Task task;
      nlohmann::json task_doc = nlohmann::json::object();

      std::string prompt = task_reader.get_string_or("prompt", "");
      task.prompt = rethrow_as(task_reader.key_path("prompt"),
                               [&] { return vocab.encode(prompt); });
      task_doc["prompt"] = prompt;

      if (task_reader.has("grammar") || task_reader.has("grammar_text")) {
        nlohmann::json entry = nlohmann::json::object();
        entry["kind"] = "cfg_prefix";
        if (task_reader.has("grammar_text")) {
          entry["grammar_text"] = task_reader.get_string("grammar_text");
          task_doc["grammar_text"] = entry["grammar_text"];
        } else {
          entry["grammar"] = task_reader.get_string("grammar");
          task_doc["grammar"] = entry["grammar"];
        }
        nlohmann::json ignored = nlohmann::json::object();
        task.task_constraint =
            parse_constraint(entry, task_path, vocab, ignored);
      }

      task.public_target = task_reader.get_i64("public_target");
      task.holdout_target = task_reader.get_i64("holdout_target");
      task_doc["public_target"] = task.public_target;
      task_doc["holdout_target"] = task.holdout_target;
      task_reader.done();
      out.suite.tasks.push_back(std::move(task));
      tasks_doc.push_back(std::move(task_doc));
    }
    canonical["tasks"] = std::move(tasks_doc);
  }

  if (reader.has("max_iters")) {
    std::uint64_t iters = reader.get_u64("max_iters");
    if (iters < 1) reader.bad("max_iters", "must be >= 1");
    out.max_iters = static_cast<std::size_t>(iters);
  } else if (out.strategy == ProposalStrategy::Grid) {
    out.max_iters = static_cast<std::size_t>(grid_size(out.space));
  } else {
    reader.bad("max_iters", "required for random search");
  }
  canonical["max_iters"] = out.max_iters;

  out.trial_log = reader.get_string_or("trial_log", "");
  out.best_out = reader.get_string_or("best_out", "");
  if (!out.trial_log.empty()) canonical["trial_log"] = out.trial_log;
  if (!out.best_out.empty()) canonical["best_out"] = out.best_out;

  reader.done();
  return out;
}

}  // namespace

// ============================================================================
// Entry points
// ============================================================================

ConstraintPtr composed_constraint(const RunConfig& config) {
  if (config.constraints.empty()) return nullptr;
  if (config.constraints.size() == 1) return config.constraints.front();
  return compose_product(config.constraints);
}

RunConfig parse_config(const nlohmann::json& doc) {
  ObjectReader reader(doc, "");
  RunConfig config;
  config.canonical = nlohmann::json::object();

  config.seed = reader.get_u64_or("seed", 0);
  config.canonical["seed"] = config.seed;

  {
    nlohmann::json lm_doc = nlohmann::json::object();
    config.lm = parse_lm(reader.at("lm"), lm_doc);
    config.canonical["lm"] = std::move(lm_doc);
  }
  const Vocabulary& vocab = config.lm->vocab();

  {
    nlohmann::json decoder_doc = nlohmann::json::object();
    if (const nlohmann::json* decoder = reader.find("decoder")) {
      config.decoder = parse_decoder(*decoder, vocab, decoder_doc);
    } else {
      config.decoder =
          parse_decoder(nlohmann::json::object(), vocab, decoder_doc);
    }
    config.canonical["decoder"] = std::move(decoder_doc);
  }

  {
    nlohmann::json list_doc = nlohmann::json::array();
    if (const nlohmann::json* constraints = reader.find("constraints")) {
      if (!constraints->is_array()) {
        reader.bad("constraints", "must be an array");
      }
      for (std::size_t i = 0; i < constraints->size(); ++i) {
        nlohmann::json entry_doc = nlohmann::json::object();
        config.constraints.push_back(parse_constraint(
            (*constraints)[i], "constraints[" + std::to_string(i) + "]", vocab,
            entry_doc));
        list_doc.push_back(std::move(entry_doc));
      }
    }
    config.canonical["constraints"] = std::move(list_doc);
  }

  {
    nlohmann::json term_doc = nlohmann::json::object();
    const nlohmann::json* term = reader.find("termination");
    config.termination = parse_termination(
        term ? *term : nlohmann::json::object(), term_doc);
    config.canonical["termination"] = std::move(term_doc);
  }

  {
    nlohmann::json agg_doc = nlohmann::json::object();
    if (const nlohmann::json* agg = reader.find("aggregation")) {
      ObjectReader agg_reader(*agg, "aggregation");
      std::uint64_t top_n =
          agg_reader.get_u64_or("top_n", config.aggregation.top_n);
      if (top_n < 1) agg_reader.bad("top_n", "must be >= 1");
      config.aggregation.top_n = static_cast<std::size_t>(top_n);
      agg_reader.done();
    }
    agg_doc["top_n"] = config.aggregation.top_n;
    config.canonical["aggregation"] = std::move(agg_doc);
  }

  {
    nlohmann::json cache_doc = nlohmann::json::object();
    if (const nlohmann::json* cache = reader.find("cache")) {
      ObjectReader cache_reader(*cache, "cache");
      config.decoder.cache.use_lm_state = cache_reader.get_bool_or(
          "use_lm_state", config.decoder.cache.use_lm_state);
      config.decoder.cache.prune =
          cache_reader.get_bool_or("prune", config.decoder.cache.prune);
      cache_reader.done();
    }
    cache_doc["use_lm_state"] = config.decoder.cache.use_lm_state;
    cache_doc["prune"] = config.decoder.cache.prune;
    config.canonical["cache"] = std::move(cache_doc);
  }

  config.output = reader.get_string_or("output", "");
  if (!config.output.empty()) config.canonical["output"] = config.output;

  if (const nlohmann::json* optimize = reader.find("optimize")) {
    nlohmann::json opt_doc = nlohmann::json::object();
    config.optimize = parse_optimize(*optimize, vocab, opt_doc);
    config.canonical["optimize"] = std::move(opt_doc);
  }

  reader.done();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return parse_config(doc);
}

}  // namespace treedec
