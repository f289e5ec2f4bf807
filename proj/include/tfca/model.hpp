#pragma once

// Generator and discriminator assembled from the single-double-triple
// attention scheme: per-stage attention sets shrink from
// {self,word,sentence} to {sentence} along the generator and grow in the
// opposite order along the discriminator. The discriminator exposes three
// taps: local features from the first stage, a pooled global feature, and
// a sentence-conditioned logit head.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tfca/attention.hpp"
#include "tfca/corpus.hpp"
#include "tfca/tensor.hpp"

namespace tfca {

enum class Attn { Self, Word, Sentence };

struct StageSpec {
  int f = 0, t = 0;            // output resolution
  int channels = 0;
  std::vector<Attn> attention; // applied in order sentence -> word -> self
};

struct ModelConfig {
  int F = 64, T = 64;
  int c_z = 32, c_c = 64;
  int g_stem_channels = 32;
  std::array<int, 3> g_channels{24, 16, 8};
  std::array<int, 3> d_channels{12, 20, 28};
  int c_g = 64;      // global feature width
  int c_embed = 64;  // shared contrastive space
  // "" keeps the single-double-triple scheme; "self"/"word"/"sentence"
  // forces that one mechanism at every stage; "none" strips attention.
  std::string attention_override;
};

struct StageBlock {
  StageSpec spec;
  ParamPtr conv_w, conv_b;
  int stride = 1;      // discriminator downsampling
  int up_factor = 1;   // generator upsampling
  std::optional<MultiTfcaParams> sentence_attn;
  std::optional<MultiTfcaParams> word_attn;
  std::optional<SelfTfcaParams> self_attn;
};

struct Generator {
  ModelConfig cfg;
  int f0 = 0, t0 = 0;          // stem resolution (F/8, T/8)
  ParamPtr stem_w, stem_b;     // [c_z+c_c, f0*t0*C0]
  std::vector<StageBlock> stages;
  ParamPtr head_w, head_b;     // conv to one channel, sigmoid squash
};

struct Discriminator {
  ModelConfig cfg;
  std::vector<StageBlock> stages;
  ParamPtr g_proj_w, g_proj_b;  // pooled final stage -> c_g
  ParamPtr d3_s_w, d3_s_b;      // sentence -> c_g
  ParamPtr d3_out_w, d3_out_b;  // [g, s_proj] -> logit
  // contrastive projection heads, updated on discriminator steps
  ParamPtr head_g_w, head_g_b;  // c_g -> c_embed
  ParamPtr head_s_w, head_s_b;  // c_c -> c_embed
  ParamPtr head_l_w, head_l_b;  // C_l -> c_embed
  ParamPtr head_w_w, head_w_b;  // c_c -> c_embed
};

Generator make_generator(const ModelConfig& cfg, Rng& rng);
Discriminator make_discriminator(const ModelConfig& cfg, Rng& rng);

std::vector<ParamPtr> generator_params(const Generator& g);
std::vector<ParamPtr> discriminator_params(const Discriminator& d);
long count_params(const std::vector<ParamPtr>& params);

// One attention map captured during a forward pass, for offline dumps.
struct AttnDump {
  std::string stage;  // e.g. "g1"
  std::string attn;   // "self" | "word" | "sentence"
  std::string kind;   // "f2t" | "t2f" | "c2f" | "c2t" | "fused_self" | "fused_multi"
  Tensor map;
};

// Single forward pass, deterministic given (z, cond, params). Output is an
// [F,T,1] grid squashed to (0,1).
Tensor generate(const Tensor& z, const TextCond& cond, const Generator& g, Tape* tape,
                std::vector<AttnDump>* dumps = nullptr);

struct DiscOut {
  Tensor logit;   // [1,1]
  Tensor local;   // [R, C_l], flattened first-stage positions
  Tensor global;  // [1, c_g]
};

DiscOut discriminate(const Tensor& mel, const TextCond& cond, const Discriminator& d, Tape* tape,
                     std::vector<AttnDump>* dumps = nullptr);

// Parameter blobs as one TSR file per name inside dir.
void save_params(const std::string& dir, const std::vector<ParamPtr>& params);
void load_params(const std::string& dir, const std::vector<ParamPtr>& params);

}  // namespace tfca
