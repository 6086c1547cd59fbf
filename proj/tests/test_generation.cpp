#include <gtest/gtest.h>

#include <cmath>

#include "charforge/generation.hpp"
#include "test_support.hpp"

namespace cf = charforge;

namespace {

cf::ModelConfig config(std::size_t v) {
  cf::ModelConfig c;
  c.vocab_size = v;
  c.hidden_size = 8;
  c.num_lstm_layers = 2;
  c.seq_len = 4;
  return c;
}

}  // namespace

// --- sampling --------------------------------------------------------------

TEST(SampleIndex, PointMassAlwaysWins) {
  const std::vector<double> p{0.0, 1.0, 0.0};
  cf::Rng rng(1);
  for (double tau : {0.01, 0.5, 1.0, 5.0}) {
    for (int i = 0; i < 200; ++i) EXPECT_EQ(cf::sample_index(p, tau, rng), 1u);
  }
}

TEST(SampleIndex, ChiSquareAtUnitTemperature) {
  const std::vector<double> p{0.2, 0.3, 0.5};
  cf::Rng rng(2024);
  std::vector<std::size_t> counts(3, 0);
  for (int i = 0; i < 100000; ++i) ++counts[cf::sample_index(p, 1.0, rng)];
  const double stat = cf::testing::chi_square(counts, p);
  EXPECT_GT(cf::testing::chi_square_p_value_df2(stat), 0.001) << stat;
}

TEST(SampleIndex, TinyTemperatureIsArgmax) {
  const std::vector<double> p{0.2, 0.3, 0.5};
  cf::Rng rng(5);
  std::size_t hits = 0;
  for (int i = 0; i < 10000; ++i) hits += cf::sample_index(p, 1e-4, rng) == 2 ? 1 : 0;
  EXPECT_GE(static_cast<double>(hits) / 10000.0, 0.999);
}

TEST(SampleIndex, RejectsBadInput) {
  cf::Rng rng(1);
  const std::vector<double> p{0.5, 0.5};
  EXPECT_THROW((void)cf::sample_index(p, 0.0, rng), cf::ArgumentError);
  EXPECT_THROW((void)cf::sample_index(p, -1.0, rng), cf::ArgumentError);
  const std::vector<double> bad{0.5, 0.7};
  EXPECT_THROW((void)cf::sample_index(bad, 1.0, rng), cf::ArgumentError);
  EXPECT_THROW((void)cf::sample_index(std::vector<double>{}, 1.0, rng), cf::ArgumentError);
}

TEST(Temper, PreservesArgmaxAndSharpens) {
  const std::vector<double> p{0.1, 0.6, 0.3};
  for (double tau : {0.1, 0.5, 1.0, 2.0, 10.0}) {
    const auto q = cf::temper<double>(p, tau);
    EXPECT_EQ(cf::argmax<double>(q), 1u);
    double s = 0;
    for (double v : q) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_GT(cf::temper<double>(p, 0.5)[1], 0.6);
  EXPECT_LT(cf::temper<double>(p, 2.0)[1], 0.6);
  const auto same = cf::temper<double>(p, 1.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(same[k], p[k], 1e-12);
}

TEST(Temper, ZeroEntriesStayZero) {
  const std::vector<double> p{0.0, 0.4, 0.6};
  for (double tau : {0.1, 1.0, 100.0}) EXPECT_EQ(cf::temper<double>(p, tau)[0], 0.0);
}

TEST(Temper, ApproachesUniformAtHighTemperature) {
  const std::vector<double> p{0.1, 0.6, 0.3};
  const auto q = cf::temper<double>(p, 1e6);
  for (double v : q) EXPECT_NEAR(v, 1.0 / 3.0, 1e-5);
}

// --- generate --------------------------------------------------------------

TEST(Generate, LengthAndVocabulary) {
  const auto vocab = cf::build_vocabulary("abcdé fg");
  const auto p = cf::init_params<float>(config(vocab.size()), 3);
  const auto out = cf::generate(p, vocab, {"ab", 400, 0.8, 7});
  const auto cps = cf::utf8::decode(out);
  EXPECT_EQ(cps.size(), 400u);
  for (char32_t c : cps) EXPECT_TRUE(vocab.contains(c));
}

TEST(Generate, SameSeedSameText) {
  const auto vocab = cf::build_vocabulary("hello world");
  const auto p = cf::init_params<float>(config(vocab.size()), 3);
  const cf::GenerationRequest req{"he", 100, 0.5, 11};
  EXPECT_EQ(cf::generate(p, vocab, req), cf::generate(p, vocab, req));
  auto other = req;
  other.rng_seed = 12;
  EXPECT_NE(cf::generate(p, vocab, req), cf::generate(p, vocab, other));
}

TEST(Generate, ReplaysOneUniformPerCharacter) {
  const auto vocab = cf::build_vocabulary("abcdef");
  const auto p = cf::init_params<double>(config(vocab.size()), 4);
  const cf::GenerationRequest req{"abc", 50, 0.9, 123};
  const std::string out = cf::generate(p, vocab, req);

  cf::Rng rng(123);
  auto state = cf::LstmState<double>::zeros(p.config);
  std::vector<double> probs;
  for (char c : std::string("abc")) probs = cf::step(p, state, vocab.index_of(static_cast<char32_t>(c)));
  std::string replay;
  for (int n = 0; n < 50; ++n) {
    const auto tempered = cf::temper<double>(probs, 0.9);
    const double u = rng.uniform();
    double cum = 0;
    std::size_t k = 0;
    for (; k + 1 < tempered.size(); ++k) {
      cum += tempered[k];
      if (u < cum) break;
    }
    cf::utf8::append(replay, vocab.char_of(static_cast<std::int32_t>(k)));
    probs = cf::step(p, state, static_cast<std::int32_t>(k));
  }
  EXPECT_EQ(out, replay);
}

TEST(Generate, UnknownSeedCharacterIsNamed) {
  const auto vocab = cf::build_vocabulary("abc");
  const auto p = cf::init_params<float>(config(vocab.size()), 3);
  try {
    (void)cf::generate(p, vocab, {"abz", 10, 0.5, 1});
    FAIL();
  } catch (const cf::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'z'"), std::string::npos) << e.what();
  }
}

TEST(Generate, InvalidRequests) {
  const auto vocab = cf::build_vocabulary("abc");
  const auto p = cf::init_params<float>(config(vocab.size()), 3);
  EXPECT_THROW((void)cf::generate(p, vocab, {"a", 0, 0.5, 1}), cf::ArgumentError);
  EXPECT_THROW((void)cf::generate(p, vocab, {"a", 5, 0.0, 1}), cf::ArgumentError);
  EXPECT_THROW((void)cf::generate(p, vocab, {"", 5, 0.5, 1}), cf::ArgumentError);
}

// --- repetition rate -------------------------------------------------------

TEST(RepetitionRate, Cases) {
  EXPECT_NEAR(cf::repetition_rate("aaaa", 2), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(cf::repetition_rate("abcd", 2), 0.0);
  EXPECT_EQ(cf::repetition_rate("ab", 4), 0.0);
  EXPECT_NEAR(cf::repetition_rate("abab", 2), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(cf::repetition_rate("ééé", 1), 2.0 / 3.0, 1e-15);
  EXPECT_THROW((void)cf::repetition_rate("abc", 0), cf::ArgumentError);
}

TEST(RepetitionRate, WithinUnitInterval) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 100; ++t) {
    std::string s;
    for (std::size_t i = gen() % 50; i > 0; --i) s.push_back(static_cast<char>('a' + gen() % 3));
    const double r = cf::repetition_rate(s, 1 + gen() % 4);
    EXPECT_GE(r, 0.0);
    EXPECT_LT(r, 1.0);
  }
}
