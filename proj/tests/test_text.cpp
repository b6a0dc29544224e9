#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "itsgw/text/tokenizer.hpp"

using namespace itsgw;
using namespace itsgw::text;

namespace {

SensorRecord record(std::vector<std::pair<std::string, double>> kv) {
  SensorRecord r;
  for (auto& [k, v] : kv) {
    r.fields.push_back({k, FieldKind::numeric});
    r.values.emplace_back(v);
  }
  return r;
}

Vocab speed_vocab() { return build_vocab({"speed is 42"}, 1, 100); }

// Independent counting oracle: words, plus class-boundary pieces of words that split.
std::vector<std::string> oracle_vocab(const std::vector<std::string>& corpus, std::size_t min_freq, std::size_t max_size) {
  std::unordered_map<std::string, std::size_t> counts;
  auto cls = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) ? 1 : (std::isalpha(static_cast<unsigned char>(c)) || c == '_') ? 0 : 2; };
  for (const auto& line : corpus) {
    std::istringstream in(line);
    std::string w;
    while (in >> w) {
      if (w != "[PAD]" && w != "[UNK]" && w != "[CLS]" && w != "[SEP]") counts[w]++;
      std::vector<std::string> pieces;
      for (std::size_t i = 0; i < w.size();) {
        std::size_t j = i + 1;
        if (cls(w[i]) != 2)
          while (j < w.size() && cls(w[j]) == cls(w[i])) ++j;
        pieces.push_back((i ? "##" : "") + w.substr(i, j - i));
        i = j;
      }
      if (pieces.size() > 1)
        for (auto& p : pieces) counts[p]++;
    }
  }
  std::vector<std::pair<std::size_t, std::string>> items;
  for (auto& [tok, n] : counts)
    if (n >= min_freq && tok != "[PAD]" && tok != "[UNK]" && tok != "[CLS]" && tok != "[SEP]") items.emplace_back(n, tok);
  std::sort(items.begin(), items.end(), [](auto& a, auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::string> out{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  for (auto& [n, tok] : items)
    if (out.size() < max_size) out.push_back(tok);
  return out;
}

}  // namespace

TEST(SerializeRecord, Fixtures) {
  EXPECT_EQ(serialize_record(record({{"speed_kph", 42.5}, {"tire_pressure_psi", 32.1}})),
            "speed_kph is 42.5 [SEP] tire_pressure_psi is 32.1");
  EXPECT_EQ(serialize_record(record({{"engine_torque_nm", 3.14159265}})), "engine_torque_nm is 3.14159");
  EXPECT_EQ(serialize_record(record({{"Speed_KPH", 60.0}})), "speed_kph is 60");
  try {
    serialize_record(SensorRecord{});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::empty_schema);
  }
}

TEST(SerializeRecord, CategoricalValuesKeepCase) {
  SensorRecord r{{{"gear", FieldKind::categorical}}, {std::string("Drive")}, std::nullopt};
  EXPECT_EQ(serialize_record(r), "gear is Drive");
}

TEST(BuildVocab, OrderingRule) {
  const Vocab v = speed_vocab();
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(v.id("42"), 4u);
  EXPECT_EQ(v.id("is"), 5u);
  EXPECT_EQ(v.id("speed"), 6u);
  EXPECT_EQ(v.token(0), "[PAD]");
  EXPECT_EQ(v.token(3), "[SEP]");
}

TEST(BuildVocab, MinFrequencyCutoff) {
  const Vocab v = build_vocab({"speed is fast", "torque is high"}, 2, 100);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "is"}));
}

TEST(BuildVocab, CountsPiecesOfMixedWords) {
  const Vocab v = build_vocab({"speed_kph is 42.5 [SEP] x is 42"}, 1, 100);
  EXPECT_TRUE(v.contains("42.5"));
  EXPECT_TRUE(v.contains("##."));
  EXPECT_TRUE(v.contains("##5"));
  EXPECT_TRUE(v.contains("["));
  EXPECT_TRUE(v.contains("##SEP"));
  // "42" is counted once as a word and once as a piece, tying with "is"
  EXPECT_EQ(v.id("42"), 4u);
  EXPECT_EQ(v.id("is"), 5u);
}

TEST(BuildVocab, MatchesCountingOracleOnSyntheticCorpus) {
  std::mt19937 rng(17);
  const std::vector<std::string> words{"speed", "is", "42", "3.5", "torque", "[SEP]", "brake_temp", "-7", "a1b2", "fault", "x"};
  std::vector<std::string> corpus;
  std::size_t produced = 0;
  while (produced < 1000) {
    std::string line;
    const std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n && produced < 1000; ++i, ++produced) line += words[rng() % words.size()] + std::to_string(rng() % 7) + " ";
    corpus.push_back(line);
  }
  for (std::size_t min_freq : {1, 3, 20}) {
    for (std::size_t max_size : {10, 40, 1000}) {
      EXPECT_EQ(build_vocab(corpus, min_freq, max_size).tokens(), oracle_vocab(corpus, min_freq, max_size))
          << min_freq << "/" << max_size;
    }
  }
}

TEST(BuildVocab, OrderIndependent) {
  std::vector<std::string> corpus{"b a c", "a 1.5 b", "zz 2 a", "c c c"};
  const Vocab base = build_vocab(corpus, 1, 50);
  std::mt19937 rng(5);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(corpus.begin(), corpus.end(), rng);
    EXPECT_EQ(build_vocab(corpus, 1, 50), base);
  }
}

TEST(BuildVocab, Errors) {
  EXPECT_THROW(build_vocab({"a"}, 1, 4), error);
  try {
    build_vocab({"", "   "}, 1, 10);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::empty_corpus);
  }
}

TEST(Encode, SpeedExample) {
  const auto enc = encode("speed is 42", speed_vocab(), 8);
  EXPECT_EQ(enc.ids, (std::vector<std::size_t>{2, 6, 5, 4, 3, 0, 0, 0}));
  EXPECT_EQ(enc.mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0}));
}

TEST(Encode, UnknownWordBecomesUnk) {
  const auto enc = encode("speed is slow", speed_vocab(), 8);
  EXPECT_EQ(enc.ids[3], kUnkId);
}

TEST(Encode, TruncatesBody) {
  std::string text;
  for (int i = 0; i < 100; ++i) text += "is ";
  const auto enc = encode(text, speed_vocab(), 16);
  ASSERT_EQ(enc.ids.size(), 16u);
  EXPECT_EQ(std::count(enc.ids.begin(), enc.ids.end(), 5u), 14);
  EXPECT_EQ(enc.ids[15], kSepId);
}

TEST(Encode, GreedyLongestMatchUsesContinuationPieces) {
  const Vocab v = Vocab::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "42", "4", "##2", "##.", "##5", "##.5"});
  EXPECT_EQ(tokenize("42.5", v), (std::vector<std::size_t>{4, 9}));
  EXPECT_EQ(tokenize("4.5", v), (std::vector<std::size_t>{5, 9}));
  EXPECT_EQ(tokenize("42x", v), (std::vector<std::size_t>{kUnkId}));
}

TEST(Encode, LiteralSeparatorInTextIsNotASpecialToken) {
  const Vocab v = build_vocab({"a is 1 [SEP] b is 2"}, 1, 100);
  const auto enc = encode("a is 1 [SEP] b is 2", v, 32);
  EXPECT_EQ(std::count(enc.ids.begin(), enc.ids.end(), kSepId), 1);
  EXPECT_EQ(decode(enc, v), "a is 1 [SEP] b is 2");
}

TEST(Decode, RoundTripAndUnk) {
  const Vocab v = speed_vocab();
  EXPECT_EQ(decode(encode("speed is 42", v, 8), v), "speed is 42");
  EXPECT_EQ(decode(encode("speed is slow", v, 8), v), "speed is [UNK]");
  const std::vector<std::size_t> bad{2, 99, 3};
  try {
    decode(bad, v);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::unknown_id);
  }
}

TEST(Decode, RandomInVocabSentencesRoundTrip) {
  const std::vector<std::string> words{"speed_kph", "is", "42.5", "[SEP]", "tire_pressure_psi", "31", "-3.25", "fault", "x9y"};
  std::vector<std::string> corpus;
  for (auto& w : words) corpus.push_back(w);
  const Vocab v = build_vocab(corpus, 1, 1000);
  std::mt19937 rng(0);
  for (int seed = 0; seed < 100; ++seed) {
    std::string sentence;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) sentence += (i ? "  " : " ") + words[rng() % words.size()];
    EXPECT_EQ(decode(encode(sentence, v, 64), v), normalize_whitespace(sentence));
  }
}

TEST(Vocab, FileRoundTripAndValidation) {
  const auto path = std::filesystem::temp_directory_path() / "itsgw_vocab_test.txt";
  const Vocab v = build_vocab({"speed is 42.5 [SEP] torque is 3"}, 1, 100);
  v.save(path.string());
  EXPECT_EQ(Vocab::load(path.string()), v);
  EXPECT_THROW(Vocab::from_tokens({"[PAD]", "[CLS]", "[UNK]", "[SEP]"}), error);
  std::filesystem::remove(path);
}
