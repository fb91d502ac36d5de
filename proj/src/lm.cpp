#include "treedec/lm.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace treedec {

using nlohmann::json;

void LanguageModel::check_tokens(std::span<const TokenId> tokens) const {
  for (TokenId t : tokens) {
    if (t >= vocab().size()) {
      throw InputError("prefix token id " + std::to_string(t) + " out of range");
    }
  }
}

std::vector<LmResult> LanguageModel::batch_next(
    const std::vector<std::vector<TokenId>>& prefixes) const {
  std::vector<LmResult> out;
  out.reserve(prefixes.size());
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    try {
      out.push_back(next(prefixes[i]));
    } catch (const Error& e) {
      throw InputError("batch element " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

// ============================================================================
// Uniform
// ============================================================================

LmResult UniformLm::next_impl(std::span<const TokenId> tokens,
                         const LmState* /*state*/) const {
  check_tokens(tokens);
  const double p = 1.0 / static_cast<double>(vocab_.size());
  return {TokenDistribution(vocab_.size(), p), LmState{}};
}

// ============================================================================
// Lookup table
// ============================================================================

namespace {

std::string join_tokens(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string key;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) key += ' ';
    key += vocab.token(ids[i]);
  }
  return key;
}

}  // namespace

LookupLm::LookupLm(
    Vocabulary vocab,
    std::vector<std::pair<std::vector<TokenId>, TokenDistribution>> rows,
    TokenDistribution default_row)
    : vocab_(std::move(vocab)), default_row_(std::move(default_row)) {
  validate_distribution(default_row_, vocab_.size(), 1e-6, "default row");
  for (auto& [ctx, dist] : rows) {
    std::string key = join_tokens(vocab_, ctx);
    validate_distribution(dist, vocab_.size(), 1e-6, "row '" + key + "'");
    if (!rows_.emplace(std::move(key), std::move(dist)).second) {
      throw InputError("duplicate lookup row for context '" +
                       join_tokens(vocab_, ctx) + "'");
    }
  }
}

std::string LookupLm::key_for(std::span<const TokenId> tokens) const {
  return join_tokens(vocab_, tokens);
}

LmResult LookupLm::next_impl(std::span<const TokenId> tokens,
                        const LmState* state) const {
  check_tokens(tokens);
  // The cached state holds the parent prefix, so the current key is the
  // cached key extended by the final token.
  std::string key;
  if (state && !tokens.empty()) {
    key = join_tokens(vocab_, state->context);
    if (!key.empty()) key += ' ';
    key += vocab_.token(tokens.back());
  } else {
    key = key_for(tokens);
  }
  auto it = rows_.find(key);
  const TokenDistribution& row = it == rows_.end() ? default_row_ : it->second;
  return {row, LmState{std::vector<TokenId>(tokens.begin(), tokens.end())}};
}

std::shared_ptr<LookupLm> LookupLm::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open lookup model: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), path);
}

std::shared_ptr<LookupLm> LookupLm::from_json_text(const std::string& text,
                                                   const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw LoadError(origin + ": invalid JSON: " + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("vocab") || !doc.contains("eos") ||
        !doc.contains("rows") || !doc.contains("default")) {
      throw LoadError(origin + ": expected keys vocab, eos, rows, default");
    }
    Vocabulary vocab = Vocabulary::with_eos_token(
        doc["vocab"].get<std::vector<std::string>>(),
        doc["eos"].get<std::string>());
    std::vector<std::pair<std::vector<TokenId>, TokenDistribution>> rows;
    for (auto& [key, value] : doc["rows"].items()) {
      std::vector<TokenId> ctx;
      std::istringstream ctx_in(key);
      std::string tok;
      while (ctx_in >> tok) {
        if (!vocab.contains(tok)) {
          throw LoadError(origin + ": row context '" + key +
                          "' uses unknown token '" + tok + "'");
        }
        ctx.push_back(vocab.id_of(tok));
      }
      rows.emplace_back(std::move(ctx), value.get<TokenDistribution>());
    }
    auto def = doc["default"].get<TokenDistribution>();
    return std::make_shared<LookupLm>(std::move(vocab), std::move(rows),
                                      std::move(def));
  } catch (const json::exception& e) {
    throw LoadError(origin + ": " + e.what());
  } catch (const InputError& e) {
    throw LoadError(origin + ": " + e.what());
  }
}

// ============================================================================
// N-gram
// ============================================================================

NgramLm::NgramLm(Vocabulary vocab, std::size_t order, double smoothing_k)
    : vocab_(std::move(vocab)), order_(order), smoothing_k_(smoothing_k) {
  if (order_ < 1) throw InputError("n-gram order must be >= 1");
  if (!(smoothing_k_ > 0.0)) throw InputError("smoothing k must be > 0");
}

std::shared_ptr<NgramLm> NgramLm::train(
    const std::vector<std::vector<std::string>>& corpus, std::size_t order,
    double smoothing_k, const std::string& eos_token) {
  if (order < 1) throw InputError("n-gram order must be >= 1");
  if (!(smoothing_k > 0.0)) throw InputError("smoothing k must be > 0");
  if (corpus.empty()) throw InputError("empty corpus");

  std::vector<std::string> distinct;
  for (const auto& line : corpus) {
    for (const auto& tok : line) {
      if (tok == eos_token) {
        throw InputError("corpus token collides with eos token '" + eos_token + "'");
      }
      distinct.push_back(tok);
    }
  }
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.empty()) throw InputError("corpus contains no tokens");
  distinct.push_back(eos_token);
  const std::size_t eos_index = distinct.size() - 1;
  Vocabulary vocab(std::move(distinct), eos_index);

  auto lm = std::shared_ptr<NgramLm>(new NgramLm(vocab, order, smoothing_k));
  for (const auto& line : corpus) {
    std::vector<TokenId> ids;
    ids.reserve(line.size());
    for (const auto& tok : line) ids.push_back(vocab.id_of(tok));
    // Position 0 counts toward the empty-context row; no implicit eos is
    // appended, so eos mass at query time comes from smoothing alone.
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::size_t ctx_len = std::min(order - 1, i);
      std::span<const TokenId> ctx(ids.data() + (i - ctx_len), ctx_len);
      auto& row = lm->counts_[join_tokens(vocab, ctx)];
      row.resize(vocab.size(), 0);
      row[ids[i]] += 1;
    }
  }
  return lm;
}

std::shared_ptr<NgramLm> NgramLm::train_from_file(const std::string& path,
                                                  std::size_t order,
                                                  double smoothing_k,
                                                  const std::string& eos_token) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open corpus: " + path);
  std::vector<std::vector<std::string>> corpus;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (!toks.empty()) corpus.push_back(std::move(toks));
  }
  if (corpus.empty()) throw InputError("empty corpus: " + path);
  return train(corpus, order, smoothing_k, eos_token);
}

std::string NgramLm::context_key(std::span<const TokenId> tokens) const {
  std::size_t ctx_len = std::min(order_ - 1, tokens.size());
  std::span<const TokenId> ctx = tokens.subspan(tokens.size() - ctx_len);
  return join_tokens(vocab_, ctx);
}

LmResult NgramLm::next_impl(std::span<const TokenId> tokens,
                       const LmState* state) const {
  check_tokens(tokens);
  // The cached state carries the parent's trailing (order - 1) tokens;
  // extending it by the final token and trimming reproduces context_key().
  std::string key;
  if (state && !tokens.empty()) {
    std::vector<TokenId> ctx = state->context;
    ctx.push_back(tokens.back());
    if (ctx.size() > order_ - 1) {
      ctx.erase(ctx.begin(), ctx.end() - (order_ - 1));
    }
    key = join_tokens(vocab_, ctx);
  } else {
    key = context_key(tokens);
  }
  const std::vector<std::uint64_t>* row = nullptr;
  auto it = counts_.find(key);
  if (it != counts_.end()) row = &it->second;

  std::uint64_t total = 0;
  if (row) {
    for (std::uint64_t c : *row) total += c;
  }
  const double denom =
      static_cast<double>(total) + smoothing_k_ * static_cast<double>(vocab_.size());
  TokenDistribution dist(vocab_.size(), 0.0);
  for (std::size_t t = 0; t < vocab_.size(); ++t) {
    double count = row ? static_cast<double>((*row)[t]) : 0.0;
    dist[t] = (count + smoothing_k_) / denom;
  }

  std::size_t ctx_len = std::min(order_ - 1, tokens.size());
  LmState next_state{std::vector<TokenId>(tokens.end() - ctx_len, tokens.end())};
  return {std::move(dist), std::move(next_state)};
}

std::string NgramLm::serialize() const {
  json doc;
  doc["type"] = "ngram_model";
  doc["order"] = order_;
  doc["smoothing_k"] = smoothing_k_;
  doc["vocab"] = vocab_.tokens();
  doc["eos"] = vocab_.token(vocab_.eos());
  // std::map orders keys so serialization is byte-stable across retrains.
  std::map<std::string, json> rows;
  for (const auto& [key, row] : counts_) {
    std::map<std::string, std::uint64_t> entry;
    for (std::size_t t = 0; t < row.size(); ++t) {
      if (row[t] > 0) entry[vocab_.token(static_cast<TokenId>(t))] = row[t];
    }
    rows[key] = entry;
  }
  doc["counts"] = rows;
  return doc.dump(2) + "\n";
}

void NgramLm::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write model: " + path);
  out << serialize();
}

std::shared_ptr<NgramLm> NgramLm::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open n-gram model: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw LoadError(path + ": invalid JSON: " + e.what());
  }
  try {
    if (doc.value("type", "") != "ngram_model") {
      throw LoadError(path + ": not an n-gram model file");
    }
    Vocabulary vocab = Vocabulary::with_eos_token(
        doc.at("vocab").get<std::vector<std::string>>(),
        doc.at("eos").get<std::string>());
    auto lm = std::shared_ptr<NgramLm>(new NgramLm(
        vocab, doc.at("order").get<std::size_t>(),
        doc.at("smoothing_k").get<double>()));
    for (auto& [key, entry] : doc.at("counts").items()) {
      auto& row = lm->counts_[key];
      row.resize(vocab.size(), 0);
      for (auto& [tok, count] : entry.items()) {
        row[vocab.id_of(tok)] = count.get<std::uint64_t>();
      }
    }
    return lm;
  } catch (const json::exception& e) {
    throw LoadError(path + ": " + e.what());
  } catch (const InputError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

}  // namespace treedec
