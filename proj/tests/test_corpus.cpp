#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tfca/corpus.hpp"

using namespace tfca;

TEST_CASE("encode_text determinism and structure") {
  TextCond a = encode_text({3}, 64, 42, 16);
  CHECK(a.words.shape == Shape{1, 64});
  // single-token caption: sentence equals the word row
  for (int i = 0; i < 64; ++i)
    CHECK(a.sentence[i] == doctest::Approx(a.words[i]).epsilon(1e-6));

  TextCond b = encode_text({3}, 64, 42, 16);
  CHECK(*a.words.data == *b.words.data);
  CHECK(*a.sentence.data == *b.sentence.data);

  TextCond multi = encode_text({1, 5, 9}, 64, 42, 16);
  for (int r = 0; r < 3; ++r) {
    double norm = 0.0;
    for (int c = 0; c < 64; ++c) {
      float v = multi.words[r * 64 + c];
      norm += static_cast<double>(v) * v;
    }
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
  }

  CHECK_THROWS_AS(encode_text({}, 64, 42, 16), std::invalid_argument);
  CHECK_THROWS_AS(encode_text({16}, 64, 42, 16), std::invalid_argument);
}

TEST_CASE("disjoint token sets give near-orthogonal sentences") {
  int ok = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    TextCond a = encode_text({0, 1}, 64, seed, 16);
    TextCond b = encode_text({7, 9}, 64, seed, 16);
    double dot = 0.0;
    for (int i = 0; i < 64; ++i) dot += static_cast<double>(a.sentence[i]) * b.sentence[i];
    if (std::abs(dot) < 0.5) ++ok;
  }
  CHECK(ok >= 99);
}

TEST_CASE("render_mel cases") {
  Tensor silent = render_mel({}, 16, 16, 0.0f, 1);
  for (float v : *silent.data) CHECK(v == 0.0f);

  SynthEvent e{0, 8, 16, 0, 32, 1.0f};
  Tensor mel = render_mel({e}, 64, 64, 0.0f, 1);
  // interior of the rectangle is full amplitude, outside exactly zero
  CHECK(mel[(10 * 64 + 10)] == 1.0f);
  CHECK(mel[(9 * 64 + 1)] == 1.0f);
  CHECK(mel[(7 * 64 + 10)] == 0.0f);
  CHECK(mel[(20 * 64 + 40)] == 0.0f);
  // border ring is attenuated, not empty
  CHECK(mel[(8 * 64 + 10)] > 0.0f);
  CHECK(mel[(8 * 64 + 10)] < 1.0f);

  SynthEvent bad{0, 8, 4, 0, 32, 1.0f};
  CHECK_THROWS_AS(render_mel({bad}, 64, 64, 0.0f, 1), std::invalid_argument);
}

TEST_CASE("band energy dominates noise") {
  SynthEvent e{0, 8, 16, 0, 32, 1.0f};
  Tensor mel = render_mel({e}, 64, 64, 0.05f, 7);
  double inside = 0.0, outside = 0.0;
  long n_in = 0, n_out = 0;
  for (int f = 0; f < 64; ++f)
    for (int t = 0; t < 64; ++t) {
      bool in = f >= 8 && f < 16 && t < 32;
      float v = mel[f * 64 + t];
      (in ? inside : outside) += v;
      (in ? n_in : n_out) += 1;
    }
  CHECK((inside / n_in) / (outside / n_out) > 10.0);
}

TEST_CASE("sample_batch reproducibility and bounds") {
  CorpusConfig corpus = make_corpus(16, 64, 64, 5);
  PairBatch a = sample_batch(corpus, 4, 77);
  PairBatch b = sample_batch(corpus, 4, 77);
  for (int i = 0; i < 4; ++i) {
    CHECK(*a.mels[static_cast<size_t>(i)].data == *b.mels[static_cast<size_t>(i)].data);
    CHECK(*a.noises[static_cast<size_t>(i)].data == *b.noises[static_cast<size_t>(i)].data);
    CHECK(a.conds[static_cast<size_t>(i)].token_ids == b.conds[static_cast<size_t>(i)].token_ids);
    int len = static_cast<int>(a.conds[static_cast<size_t>(i)].token_ids.size());
    CHECK(len >= 1);
    CHECK(len <= 4);
    // drawn without replacement
    for (int x = 0; x < len; ++x)
      for (int y = x + 1; y < len; ++y)
        CHECK(a.conds[static_cast<size_t>(i)].token_ids[static_cast<size_t>(x)] !=
              a.conds[static_cast<size_t>(i)].token_ids[static_cast<size_t>(y)]);
  }
  CHECK_THROWS_AS(sample_batch(corpus, 1, 77), std::invalid_argument);

  for (uint64_t seed = 0; seed < 50; ++seed) {
    PairBatch batch = sample_batch(corpus, 2, seed);
    for (const auto& mel : batch.mels)
      for (float v : *mel.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
  }
}

TEST_CASE("alignment energy is positive for real pairs") {
  for (uint64_t cs = 1; cs <= 3; ++cs) {
    CorpusConfig corpus = make_corpus(16, 64, 64, cs);
    for (uint64_t bs = 0; bs < 5; ++bs) {
      SampleOptions opt;
      opt.noise_level = 0.1f;
      PairBatch batch = sample_batch(corpus, 4, bs, opt);
      for (int i = 0; i < 4; ++i)
        for (int tok : batch.conds[static_cast<size_t>(i)].token_ids) {
          INFO("corpus ", cs, " batch ", bs, " sample ", i, " token ", tok);
          CHECK(alignment_energy(batch.mels[static_cast<size_t>(i)], corpus, tok) > 0.0f);
        }
    }
  }
}

TEST_CASE("corpus config persists through JSON") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "tfca_corpus_test";
  fs::create_directories(dir);
  CorpusConfig c = make_corpus(8, 32, 48, 99);
  std::string path = (dir / "corpus.json").string();
  save_corpus(path, c);
  CorpusConfig d = load_corpus(path);
  CHECK(d.vocab_size == c.vocab_size);
  CHECK(d.F == c.F);
  CHECK(d.T == c.T);
  CHECK(d.seed == c.seed);
  REQUIRE(d.events.size() == c.events.size());
  for (size_t i = 0; i < c.events.size(); ++i) {
    CHECK(d.events[i].f_lo == c.events[i].f_lo);
    CHECK(d.events[i].f_hi == c.events[i].f_hi);
    CHECK(d.events[i].onset == c.events[i].onset);
    CHECK(d.events[i].offset == c.events[i].offset);
    CHECK(d.events[i].amplitude == doctest::Approx(c.events[i].amplitude));
  }
  // serialization is byte-stable
  CHECK(corpus_json(c) == corpus_json(d));
  CHECK_THROWS_AS(make_corpus(1, 64, 64, 0), std::invalid_argument);
  fs::remove_all(dir);
}
