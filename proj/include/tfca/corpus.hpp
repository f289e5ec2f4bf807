#pragma once

// Deterministic stand-ins for a pretrained text encoder and a real audio
// corpus: hash-seeded unit-norm text features, and a synthetic corpus where
// each vocabulary token owns a fixed time-frequency rectangle. Everything
// here is a pure function of its arguments.

#include <cstdint>
#include <string>
#include <vector>

#include "tfca/tensor.hpp"

namespace tfca {

struct TextCond {
  Tensor words;              // [T_words, C_c], unit-norm rows
  Tensor sentence;           // [1, C_c], unit-norm
  std::vector<int> token_ids;
};

struct SynthEvent {
  int token_id = 0;
  int f_lo = 0, f_hi = 0;    // [f_lo, f_hi) mel bins
  int onset = 0, offset = 0; // [onset, offset) time steps
  float amplitude = 1.0f;
};

struct CorpusConfig {
  int vocab_size = 16;
  int F = 64;
  int T = 64;
  uint64_t seed = 0;
  std::vector<SynthEvent> events;  // one rectangle per token
};

CorpusConfig make_corpus(int vocab_size, int F, int T, uint64_t seed);
void save_corpus(const std::string& path, const CorpusConfig& c);
CorpusConfig load_corpus(const std::string& path);
std::string corpus_json(const CorpusConfig& c);

// Word rows are seeded by (seed, token_id); the sentence vector is the
// unit-normalized mean of the word rows.
TextCond encode_text(const std::vector<int>& token_ids, int c_c, uint64_t seed, int vocab_size);

// Sum of event rectangles (half-weight border cells) plus Gaussian noise,
// clipped to [0,1].
Tensor render_mel(const std::vector<SynthEvent>& events, int F, int T, float noise_level,
                  uint64_t seed);

struct PairBatch {
  std::vector<Tensor> mels;    // each [F,T,1]
  std::vector<TextCond> conds;
  std::vector<Tensor> noises;  // each [1, C_z]
};

struct SampleOptions {
  int c_c = 64;
  int c_z = 32;
  float noise_level = 0.05f;
  int max_tokens = 4;
};

// N caption/mel pairs, captions of 1..max_tokens tokens drawn without
// replacement. Reproducible given (corpus, n, seed).
PairBatch sample_batch(const CorpusConfig& corpus, int n, uint64_t seed,
                       const SampleOptions& opt = {});

// Mean mel energy inside the token's rectangle minus mean energy outside.
float alignment_energy(const Tensor& mel, const CorpusConfig& corpus, int token_id);

}  // namespace tfca
