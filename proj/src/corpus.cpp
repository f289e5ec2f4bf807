#include "tfca/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace tfca {

using ordered_json = nlohmann::ordered_json;

CorpusConfig make_corpus(int vocab_size, int F, int T, uint64_t seed) {
  if (vocab_size < 2) throw std::invalid_argument("make_corpus: vocab size must be >= 2");
  if (F < 4 || T < 4) throw std::invalid_argument("make_corpus: grid too small");
  CorpusConfig c;
  c.vocab_size = vocab_size;
  c.F = F;
  c.T = T;
  c.seed = seed;
  for (int tok = 0; tok < vocab_size; ++tok) {
    Rng rng(mix_seed(seed, 0x100 + static_cast<uint64_t>(tok)));
    SynthEvent e;
    e.token_id = tok;
    int min_fw = std::max(2, F / 8), max_fw = std::max(min_fw + 1, F / 4);
    int min_tw = std::max(2, T / 6), max_tw = std::max(min_tw + 1, T / 2);
    int fw = min_fw + rng.uniform_int(max_fw - min_fw + 1);
    int tw = min_tw + rng.uniform_int(max_tw - min_tw + 1);
    e.f_lo = rng.uniform_int(F - fw + 1);
    e.f_hi = e.f_lo + fw;
    e.onset = rng.uniform_int(T - tw + 1);
    e.offset = e.onset + tw;
    e.amplitude = rng.uniform(0.7f, 1.0f);
    c.events.push_back(e);
  }
  return c;
}

std::string corpus_json(const CorpusConfig& c) {
  ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["F"] = c.F;
  j["T"] = c.T;
  j["seed"] = c.seed;
  j["events"] = ordered_json::array();
  for (const auto& e : c.events) {
    ordered_json je;
    je["token_id"] = e.token_id;
    je["f_lo"] = e.f_lo;
    je["f_hi"] = e.f_hi;
    je["onset"] = e.onset;
    je["offset"] = e.offset;
    je["amplitude"] = e.amplitude;
    j["events"].push_back(je);
  }
  return j.dump(2) + "\n";
}

void save_corpus(const std::string& path, const CorpusConfig& c) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << corpus_json(c);
  if (!f) throw std::runtime_error("write failed: " + path);
}

CorpusConfig load_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open corpus: " + path);
  ordered_json j;
  f >> j;
  CorpusConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.F = j.at("F").get<int>();
  c.T = j.at("T").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  for (const auto& je : j.at("events")) {
    SynthEvent e;
    e.token_id = je.at("token_id").get<int>();
    e.f_lo = je.at("f_lo").get<int>();
    e.f_hi = je.at("f_hi").get<int>();
    e.onset = je.at("onset").get<int>();
    e.offset = je.at("offset").get<int>();
    e.amplitude = je.at("amplitude").get<float>();
    if (e.f_lo < 0 || e.f_lo >= e.f_hi || e.f_hi > c.F || e.onset < 0 || e.onset >= e.offset ||
        e.offset > c.T)
      throw std::runtime_error("corpus event out of bounds in " + path);
    c.events.push_back(e);
  }
  return c;
}

TextCond encode_text(const std::vector<int>& token_ids, int c_c, uint64_t seed, int vocab_size) {
  if (token_ids.empty()) throw std::invalid_argument("encode_text: empty token list");
  for (int t : token_ids)
    if (t < 0 || t >= vocab_size)
      throw std::invalid_argument("encode_text: token " + std::to_string(t) +
                                  " out of vocabulary (size " + std::to_string(vocab_size) + ")");
  int n = static_cast<int>(token_ids.size());
  Tensor words = Tensor::zeros({n, c_c});
  std::vector<float> mean(static_cast<size_t>(c_c), 0.0f);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, 0x9000 + static_cast<uint64_t>(token_ids[static_cast<size_t>(i)])));
    float sq = 0.0f;
    float* row = words.data->data() + static_cast<long>(i) * c_c;
    for (int j = 0; j < c_c; ++j) {
      row[j] = rng.normal();
      sq += row[j] * row[j];
    }
    float inv = 1.0f / std::sqrt(sq);
    for (int j = 0; j < c_c; ++j) {
      row[j] *= inv;
      mean[static_cast<size_t>(j)] += row[j] / static_cast<float>(n);
    }
  }
  float sq = 0.0f;
  for (float v : mean) sq += v * v;
  float inv = sq > 0.0f ? 1.0f / std::sqrt(sq) : 1.0f;
  Tensor sentence = Tensor::zeros({1, c_c});
  for (int j = 0; j < c_c; ++j) (*sentence.data)[static_cast<size_t>(j)] = mean[static_cast<size_t>(j)] * inv;
  TextCond cond;
  cond.words = words;
  cond.sentence = sentence;
  cond.token_ids = token_ids;
  return cond;
}

Tensor render_mel(const std::vector<SynthEvent>& events, int F, int T, float noise_level,
                  uint64_t seed) {
  for (const auto& e : events)
    if (e.f_lo < 0 || e.f_lo >= e.f_hi || e.f_hi > F || e.onset < 0 || e.onset >= e.offset ||
        e.offset > T)
      throw std::invalid_argument("render_mel: event out of bounds");
  Tensor mel = Tensor::zeros({F, T, 1});
  float* m = mel.data->data();
  for (const auto& e : events) {
    for (int f = e.f_lo; f < e.f_hi; ++f) {
      // half-weight ring at the rectangle border, full amplitude inside
      float wf = std::min(f - e.f_lo, e.f_hi - 1 - f) >= 1 ? 1.0f : 0.5f;
      for (int t = e.onset; t < e.offset; ++t) {
        float wt = std::min(t - e.onset, e.offset - 1 - t) >= 1 ? 1.0f : 0.5f;
        m[static_cast<long>(f) * T + t] += e.amplitude * wf * wt;
      }
    }
  }
  if (noise_level > 0.0f) {
    Rng rng(mix_seed(seed, 0xA11D10));
    for (int i = 0; i < F * T; ++i) m[i] += rng.normal() * noise_level;
  }
  for (int i = 0; i < F * T; ++i) m[i] = std::clamp(m[i], 0.0f, 1.0f);
  return mel;
}

PairBatch sample_batch(const CorpusConfig& corpus, int n, uint64_t seed,
                       const SampleOptions& opt) {
  if (n < 2) throw std::invalid_argument("sample_batch: batch size must be >= 2");
  PairBatch batch;
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, 0xB000 + static_cast<uint64_t>(i)));
    int max_len = std::min(opt.max_tokens, corpus.vocab_size);
    int len = 1 + rng.uniform_int(max_len);
    // partial Fisher-Yates draw without replacement
    std::vector<int> pool(static_cast<size_t>(corpus.vocab_size));
    for (int t = 0; t < corpus.vocab_size; ++t) pool[static_cast<size_t>(t)] = t;
    std::vector<int> tokens;
    for (int k = 0; k < len; ++k) {
      int pick = k + rng.uniform_int(corpus.vocab_size - k);
      std::swap(pool[static_cast<size_t>(k)], pool[static_cast<size_t>(pick)]);
      tokens.push_back(pool[static_cast<size_t>(k)]);
    }
    std::vector<SynthEvent> events;
    for (int t : tokens) events.push_back(corpus.events[static_cast<size_t>(t)]);
    batch.mels.push_back(render_mel(events, corpus.F, corpus.T, opt.noise_level,
                                    rng.next_u64()));
    batch.conds.push_back(encode_text(tokens, opt.c_c, corpus.seed, corpus.vocab_size));
    Tensor z = Tensor::zeros({1, opt.c_z});
    for (int j = 0; j < opt.c_z; ++j) (*z.data)[static_cast<size_t>(j)] = rng.normal();
    batch.noises.push_back(z);
  }
  return batch;
}

float alignment_energy(const Tensor& mel, const CorpusConfig& corpus, int token_id) {
  if (token_id < 0 || token_id >= corpus.vocab_size)
    throw std::invalid_argument("alignment_energy: token out of vocabulary");
  if (mel.shape[0] != corpus.F || mel.shape[1] != corpus.T)
    throw std::invalid_argument("alignment_energy: mel shape " + shape_str(mel.shape) +
                                " does not match corpus grid");
  const SynthEvent& e = corpus.events[static_cast<size_t>(token_id)];
  const float* m = mel.ptr();
  double inside = 0.0, outside = 0.0;
  long n_in = 0, n_out = 0;
  for (int f = 0; f < corpus.F; ++f)
    for (int t = 0; t < corpus.T; ++t) {
      bool in = f >= e.f_lo && f < e.f_hi && t >= e.onset && t < e.offset;
      float v = m[static_cast<long>(f) * corpus.T + t];
      if (in) {
        inside += v;
        ++n_in;
      } else {
        outside += v;
        ++n_out;
      }
    }
  double mi = n_in > 0 ? inside / static_cast<double>(n_in) : 0.0;
  double mo = n_out > 0 ? outside / static_cast<double>(n_out) : 0.0;
  return static_cast<float>(mi - mo);
}

}  // namespace tfca
