#include "tfca/model.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace tfca {

namespace {

ParamPtr gauss_param(const std::string& name, Shape shape, Rng& rng, float stddev = 0.02f) {
  int n = shape_numel(shape);
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal() * stddev;
  return std::make_shared<Param>(name, std::move(shape), std::move(v));
}

ParamPtr zero_param(const std::string& name, Shape shape) {
  int n = shape_numel(shape);
  return std::make_shared<Param>(name, std::move(shape),
                                 std::vector<float>(static_cast<size_t>(n), 0.0f));
}

Tensor bind(const ParamPtr& p, Tape* tape) { return tape ? tape->watch(p) : p->constant(); }

std::vector<Attn> stage_attention(const ModelConfig& cfg, int stage, bool generator) {
  if (!cfg.attention_override.empty()) {
    if (cfg.attention_override == "none") return {};
    if (cfg.attention_override == "self") return {Attn::Self};
    if (cfg.attention_override == "word") return {Attn::Word};
    if (cfg.attention_override == "sentence") return {Attn::Sentence};
    throw std::invalid_argument("unknown attention override: " + cfg.attention_override);
  }
  // generator: triple -> double -> single; discriminator reversed
  int level = generator ? 3 - stage : stage + 1;
  switch (level) {
    case 1: return {Attn::Sentence};
    case 2: return {Attn::Word, Attn::Sentence};
    default: return {Attn::Self, Attn::Word, Attn::Sentence};
  }
}

StageBlock make_stage(const std::string& prefix, const StageSpec& spec, int in_channels,
                      int c_c, bool generator, Rng& rng) {
  StageBlock b;
  b.spec = spec;
  b.conv_w = gauss_param(prefix + ".conv.w", {3, 3, in_channels, spec.channels}, rng);
  b.conv_b = zero_param(prefix + ".conv.b", {1, 1, spec.channels});
  b.stride = generator ? 1 : 2;
  b.up_factor = generator ? 2 : 1;
  int c_h = hidden_channels(spec.channels);
  for (Attn a : spec.attention) {
    switch (a) {
      case Attn::Sentence:
        b.sentence_attn = make_multi_tfca_params(prefix + ".sent", spec.channels, c_c, c_h, rng);
        break;
      case Attn::Word:
        b.word_attn = make_multi_tfca_params(prefix + ".word", spec.channels, c_c, c_h, rng);
        break;
      case Attn::Self:
        b.self_attn = make_self_tfca_params(prefix + ".self", spec.channels, c_h, rng);
        break;
    }
  }
  return b;
}

void collect_stage(const StageBlock& b, std::vector<ParamPtr>& out) {
  out.push_back(b.conv_w);
  out.push_back(b.conv_b);
  if (b.sentence_attn) collect_params(*b.sentence_attn, out);
  if (b.word_attn) collect_params(*b.word_attn, out);
  if (b.self_attn) collect_params(*b.self_attn, out);
}

// conv -> nonlinearity -> attention blocks in order sentence -> word -> self
Tensor run_stage(const StageBlock& b, Tensor x, const TextCond& cond, bool generator,
                 Tape* tape, const std::string& label, std::vector<AttnDump>* dumps) {
  if (b.up_factor > 1) x = upsample_nearest(x, b.up_factor);
  x = add(conv2d(x, bind(b.conv_w, tape), b.stride), bind(b.conv_b, tape));
  x = generator ? relu(x) : leaky_relu(x, 0.2f);
  if (b.sentence_attn) {
    MultiTfcaOut o = multi_tfca(x, cond.sentence, *b.sentence_attn, tape);
    if (dumps) {
      dumps->push_back({label, "sentence", "c2f", detach(o.w_c2f)});
      dumps->push_back({label, "sentence", "c2t", detach(o.w_c2t)});
      dumps->push_back({label, "sentence", "fused_multi", detach(o.fused)});
    }
    x = o.out;
  }
  if (b.word_attn) {
    MultiTfcaOut o = multi_tfca(x, cond.words, *b.word_attn, tape);
    if (dumps) {
      dumps->push_back({label, "word", "c2f", detach(o.w_c2f)});
      dumps->push_back({label, "word", "c2t", detach(o.w_c2t)});
      dumps->push_back({label, "word", "fused_multi", detach(o.fused)});
    }
    x = o.out;
  }
  if (b.self_attn) {
    SelfTfcaOut o = self_tfca(x, *b.self_attn, tape);
    if (dumps) {
      dumps->push_back({label, "self", "f2t", detach(o.w_f2t)});
      dumps->push_back({label, "self", "t2f", detach(o.w_t2f)});
      dumps->push_back({label, "self", "fused_self", detach(o.fused)});
    }
    x = o.out;
  }
  return x;
}

}  // namespace

Generator make_generator(const ModelConfig& cfg, Rng& rng) {
  if (cfg.F % 8 != 0 || cfg.T % 8 != 0)
    throw std::invalid_argument("generator grid must be divisible by 8, got " +
                                std::to_string(cfg.F) + "x" + std::to_string(cfg.T));
  Generator g;
  g.cfg = cfg;
  g.f0 = cfg.F / 8;
  g.t0 = cfg.T / 8;
  int stem_out = g.f0 * g.t0 * cfg.g_stem_channels;
  g.stem_w = gauss_param("g.stem.w", {cfg.c_z + cfg.c_c, stem_out}, rng);
  g.stem_b = zero_param("g.stem.b", {1, stem_out});
  int in_c = cfg.g_stem_channels;
  for (int s = 0; s < 3; ++s) {
    StageSpec spec;
    spec.f = g.f0 * (2 << s);
    spec.t = g.t0 * (2 << s);
    spec.channels = cfg.g_channels[static_cast<size_t>(s)];
    spec.attention = stage_attention(cfg, s, true);
    g.stages.push_back(make_stage("g.stage" + std::to_string(s), spec, in_c, cfg.c_c, true, rng));
    in_c = spec.channels;
  }
  g.head_w = gauss_param("g.head.w", {3, 3, in_c, 1}, rng);
  // start near the corpus' dark background instead of sigmoid(0) = 0.5 gray,
  // so early updates go into structure rather than a global brightness shift
  g.head_b = std::make_shared<Param>("g.head.b", Shape{1, 1, 1}, std::vector<float>{-2.2f});
  return g;
}

Discriminator make_discriminator(const ModelConfig& cfg, Rng& rng) {
  if (cfg.F % 8 != 0 || cfg.T % 8 != 0)
    throw std::invalid_argument("discriminator grid must be divisible by 8");
  Discriminator d;
  d.cfg = cfg;
  int in_c = 1;
  for (int s = 0; s < 3; ++s) {
    StageSpec spec;
    spec.f = cfg.F >> (s + 1);
    spec.t = cfg.T >> (s + 1);
    spec.channels = cfg.d_channels[static_cast<size_t>(s)];
    spec.attention = stage_attention(cfg, s, false);
    d.stages.push_back(make_stage("d.stage" + std::to_string(s), spec, in_c, cfg.c_c, false, rng));
    in_c = spec.channels;
  }
  d.g_proj_w = gauss_param("d.g_proj.w", {in_c, cfg.c_g}, rng);
  d.g_proj_b = zero_param("d.g_proj.b", {1, cfg.c_g});
  d.d3_s_w = gauss_param("d.d3.s.w", {cfg.c_c, cfg.c_g}, rng);
  d.d3_s_b = zero_param("d.d3.s.b", {1, cfg.c_g});
  d.d3_out_w = gauss_param("d.d3.out.w", {2 * cfg.c_g, 1}, rng);
  d.d3_out_b = zero_param("d.d3.out.b", {1, 1});
  d.head_g_w = gauss_param("d.head_g.w", {cfg.c_g, cfg.c_embed}, rng);
  d.head_g_b = zero_param("d.head_g.b", {1, cfg.c_embed});
  d.head_s_w = gauss_param("d.head_s.w", {cfg.c_c, cfg.c_embed}, rng);
  d.head_s_b = zero_param("d.head_s.b", {1, cfg.c_embed});
  d.head_l_w = gauss_param("d.head_l.w", {cfg.d_channels[0], cfg.c_embed}, rng);
  d.head_l_b = zero_param("d.head_l.b", {1, cfg.c_embed});
  d.head_w_w = gauss_param("d.head_w.w", {cfg.c_c, cfg.c_embed}, rng);
  d.head_w_b = zero_param("d.head_w.b", {1, cfg.c_embed});
  return d;
}

std::vector<ParamPtr> generator_params(const Generator& g) {
  std::vector<ParamPtr> out{g.stem_w, g.stem_b};
  for (const auto& s : g.stages) collect_stage(s, out);
  out.push_back(g.head_w);
  out.push_back(g.head_b);
  return out;
}

std::vector<ParamPtr> discriminator_params(const Discriminator& d) {
  std::vector<ParamPtr> out;
  for (const auto& s : d.stages) collect_stage(s, out);
  out.insert(out.end(), {d.g_proj_w, d.g_proj_b, d.d3_s_w, d.d3_s_b, d.d3_out_w, d.d3_out_b,
                         d.head_g_w, d.head_g_b, d.head_s_w, d.head_s_b, d.head_l_w, d.head_l_b,
                         d.head_w_w, d.head_w_b});
  return out;
}

long count_params(const std::vector<ParamPtr>& params) {
  long n = 0;
  for (const auto& p : params) n += p->numel();
  return n;
}

Tensor generate(const Tensor& z, const TextCond& cond, const Generator& g, Tape* tape,
                std::vector<AttnDump>* dumps) {
  if (z.rank() != 2 || z.shape[0] != 1 || z.shape[1] != g.cfg.c_z)
    throw std::invalid_argument("generate: noise shape " + shape_str(z.shape) +
                                " does not match config c_z=" + std::to_string(g.cfg.c_z));
  if (cond.sentence.shape[1] != g.cfg.c_c)
    throw std::invalid_argument("generate: condition width " + shape_str(cond.sentence.shape) +
                                " does not match config c_c=" + std::to_string(g.cfg.c_c));
  Tensor h = concat({z, cond.sentence}, 1);
  h = add(matmul(h, bind(g.stem_w, tape)), bind(g.stem_b, tape));
  h = reshape(h, {g.f0, g.t0, g.cfg.g_stem_channels});
  for (size_t s = 0; s < g.stages.size(); ++s)
    h = run_stage(g.stages[s], h, cond, true, tape, "g" + std::to_string(s), dumps);
  h = add(conv2d(h, bind(g.head_w, tape), 1), bind(g.head_b, tape));
  return sigmoid(h);
}

DiscOut discriminate(const Tensor& mel, const TextCond& cond, const Discriminator& d, Tape* tape,
                     std::vector<AttnDump>* dumps) {
  if (mel.rank() != 3 || mel.shape[0] != d.cfg.F || mel.shape[1] != d.cfg.T || mel.shape[2] != 1)
    throw std::invalid_argument("discriminate: mel shape " + shape_str(mel.shape) +
                                " does not match config " + std::to_string(d.cfg.F) + "x" +
                                std::to_string(d.cfg.T) + "x1");
  DiscOut out;
  Tensor h = mel;
  for (size_t s = 0; s < d.stages.size(); ++s) {
    h = run_stage(d.stages[s], h, cond, false, tape, "d" + std::to_string(s), dumps);
    if (s == 0)
      out.local = reshape(h, {h.shape[0] * h.shape[1], h.shape[2]});
  }
  Tensor pooled = reshape(mean_axis(mean_axis(h, 0), 0), {1, h.shape[2]});
  out.global = add(matmul(pooled, bind(d.g_proj_w, tape)), bind(d.g_proj_b, tape));
  Tensor s_proj = add(matmul(cond.sentence, bind(d.d3_s_w, tape)), bind(d.d3_s_b, tape));
  Tensor cat = concat({out.global, s_proj}, 1);
  out.logit = add(matmul(cat, bind(d.d3_out_w, tape)), bind(d.d3_out_b, tape));
  return out;
}

void save_params(const std::string& dir, const std::vector<ParamPtr>& params) {
  std::filesystem::create_directories(dir);
  for (const auto& p : params) save_tsr(dir + "/" + p->name + ".tsr", p->constant());
}

void load_params(const std::string& dir, const std::vector<ParamPtr>& params) {
  for (const auto& p : params) {
    Tensor t = load_tsr(dir + "/" + p->name + ".tsr");
    if (t.shape != p->shape)
      throw std::runtime_error("checkpoint shape mismatch for " + p->name + ": " +
                               shape_str(t.shape) + " vs " + shape_str(p->shape));
    *p->value = *t.data;
  }
}

}  // namespace tfca
