#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "itsgw/core/types.hpp"

namespace itsgw::text {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kClsId = 2;
inline constexpr std::size_t kSepId = 3;
inline constexpr std::size_t kNumSpecial = 4;
inline constexpr std::string_view kSpecialTokens[kNumSpecial] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
inline constexpr std::string_view kContinuation = "##";
inline constexpr std::size_t kDefaultMaxLen = 64;

inline bool is_special_token(std::string_view tok) {
  return std::find(std::begin(kSpecialTokens), std::end(kSpecialTokens), tok) != std::end(kSpecialTokens);
}

// ---------------------------------------------------------------------------
// Record serialization

/// Shortest rendering with at most six significant digits.
inline std::string format_numeric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

inline std::string serialize_record(const SensorRecord& record) {
  if (record.fields.empty()) fail(errc::empty_schema, "cannot serialize a record without fields");
  if (record.values.size() != record.fields.size()) fail(errc::schema_mismatch, "values do not match fields");
  std::string out;
  for (std::size_t i = 0; i < record.fields.size(); ++i) {
    if (i) out += " [SEP] ";
    std::string name = record.fields[i].name;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out += name;
    out += " is ";
    const auto& v = record.values[i];
    out += std::holds_alternative<double>(v) ? format_numeric(std::get<double>(v)) : std::get<std::string>(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  for (const auto& w : split_whitespace(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

namespace detail {

enum class CharClass { word, digit, other };

inline CharClass char_class(char ch) {
  const auto c = static_cast<unsigned char>(ch);
  if (std::isdigit(c)) return CharClass::digit;
  if (std::isalpha(c) || c == '_' || c >= 0x80) return CharClass::word;
  return CharClass::other;
}

}  // namespace detail

/// Splits a word at character-class boundaries (letters, digits, and each
/// punctuation character on its own). Non-initial pieces carry "##".
inline std::vector<std::string> word_pieces(std::string_view word) {
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto cls = detail::char_class(word[i]);
    std::size_t j = i + 1;
    if (cls != detail::CharClass::other)
      while (j < word.size() && detail::char_class(word[j]) == cls) ++j;
    std::string piece = i == 0 ? std::string() : std::string(kContinuation);
    piece.append(word.substr(i, j - i));
    pieces.push_back(std::move(piece));
    i = j;
  }
  return pieces;
}

class Vocab {
 public:
  Vocab() {
    for (auto tok : kSpecialTokens) add(std::string(tok));
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < kNumSpecial) fail(errc::invalid_argument, "vocab must start with the four special tokens");
    for (std::size_t i = 0; i < kNumSpecial; ++i)
      if (tokens[i] != kSpecialTokens[i]) fail(errc::invalid_argument, "vocab line " + std::to_string(i + 1) + " must be " + std::string(kSpecialTokens[i]));
    Vocab v;
    for (std::size_t i = kNumSpecial; i < tokens.size(); ++i) {
      if (tokens[i].empty() || v.contains(tokens[i])) fail(errc::invalid_argument, "empty or duplicate vocab token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
  std::optional<std::size_t> find(const std::string& tok) const {
    auto it = ids_.find(tok);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t id(const std::string& tok) const { return find(tok).value_or(kUnkId); }
  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) fail(errc::unknown_id, "id " + std::to_string(id) + " outside vocab of " + std::to_string(tokens_.size()));
    return tokens_[id];
  }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::size_t min_frequency = 1;

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::io_error, "cannot write vocab to " + path);
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) fail(errc::io_error, "write failed for " + path);
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::io_error, "cannot read vocab from " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return from_tokens(tokens);
  }

 private:
  friend Vocab build_vocab(const std::vector<std::string>&, std::size_t, std::size_t);

  void add(std::string tok) {
    ids_.emplace(tok, tokens_.size());
    tokens_.push_back(std::move(tok));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Counts whitespace words plus their class-boundary pieces (for words that
/// split), keeps tokens seen at least `min_frequency` times, and assigns ids by
/// descending count with lexicographic tie-break.
inline Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_frequency, std::size_t max_size) {
  if (max_size <= kNumSpecial) fail(errc::invalid_argument, "max_size must exceed the four special tokens");
  std::map<std::string, std::size_t> counts;
  std::size_t words_seen = 0;
  for (const auto& line : corpus) {
    for (const auto& word : split_whitespace(line)) {
      ++words_seen;
      if (!is_special_token(word)) ++counts[word];
      auto pieces = word_pieces(word);
      if (pieces.size() > 1)
        for (auto& p : pieces) ++counts[p];
    }
  }
  if (words_seen == 0) fail(errc::empty_corpus, "corpus contains no words");

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= std::max<std::size_t>(min_frequency, 1) && !is_special_token(tok)) ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  v.min_frequency = min_frequency;
  for (auto& [tok, n] : ranked) {
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Encoding

struct EncodedText {
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;

  std::size_t length() const noexcept { return ids.size(); }
  bool operator==(const EncodedText&) const = default;
};

/// Greedy longest-match of one word against the vocabulary. A word with an
/// unmatchable remainder becomes a single UNK.
inline std::vector<std::size_t> tokenize_word(const std::string& word, const Vocab& vocab) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start < word.size()) {
    std::optional<std::size_t> match;
    std::size_t end = word.size();
    for (; end > start; --end) {
      std::string candidate = start == 0 ? std::string() : std::string(kContinuation);
      candidate.append(word, start, end - start);
      auto id = vocab.find(candidate);
      if (id && *id >= kNumSpecial) {
        match = id;
        break;
      }
    }
    if (!match) return {kUnkId};
    out.push_back(*match);
    start = end;
  }
  return out;
}

inline std::vector<std::size_t> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<std::size_t> body;
  for (const auto& word : split_whitespace(text)) {
    auto ids = tokenize_word(word, vocab);
    body.insert(body.end(), ids.begin(), ids.end());
  }
  return body;
}

inline EncodedText encode(std::string_view text, const Vocab& vocab, std::size_t max_len = kDefaultMaxLen) {
  if (max_len < 4) fail(errc::invalid_argument, "max_len must be at least 4");
  auto body = tokenize(text, vocab);
  if (body.size() > max_len - 2) body.resize(max_len - 2);
  EncodedText enc{std::vector<std::size_t>(max_len, kPadId), std::vector<std::uint8_t>(max_len, 0)};
  enc.ids[0] = kClsId;
  std::copy(body.begin(), body.end(), enc.ids.begin() + 1);
  enc.ids[body.size() + 1] = kSepId;
  for (std::size_t i = 0; i < body.size() + 2; ++i) enc.mask[i] = 1;
  return enc;
}

inline std::string decode(std::span<const std::size_t> ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == kPadId || id == kClsId || id == kSepId) continue;
    if (id != kUnkId && tok.starts_with(kContinuation) && !out.empty()) {
      out.append(tok, kContinuation.size());
      continue;
    }
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

inline std::string decode(const EncodedText& enc, const Vocab& vocab) { return decode(enc.ids, vocab); }

}  // namespace itsgw::text
