#include "tfca/trainer.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <queue>
#include <thread>

#include "json.hpp"

namespace tfca {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---- config ----

TrainConfig train_config_from_json(const std::string& json_text) {
  ordered_json j = ordered_json::parse(json_text);
  TrainConfig c;
  c.corpus_path = j.value("corpus", c.corpus_path);
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.d_steps_per_g = j.value("d_steps_per_g", c.d_steps_per_g);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_g_steps = j.value("total_g_steps", c.total_g_steps);
  c.seed = j.value("seed", c.seed);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.contrastive.tau = j.value("tau", c.contrastive.tau);
  c.contrastive.gamma1 = j.value("gamma1", c.contrastive.gamma1);
  c.contrastive.gamma2 = j.value("gamma2", c.contrastive.gamma2);
  c.contrastive.gamma3 = j.value("gamma3", c.contrastive.gamma3);
  c.contrastive.w_g2s = j.value("w_g2s", c.contrastive.w_g2s);
  c.contrastive.w_l2w = j.value("w_l2w", c.contrastive.w_l2w);
  c.contrastive.w_f2r = j.value("w_f2r", c.contrastive.w_f2r);
  c.contrastive.w_occ = j.value("w_occ", c.contrastive.w_occ);
  c.model.F = j.value("F", c.model.F);
  c.model.T = j.value("T", c.model.T);
  c.model.c_z = j.value("c_z", c.model.c_z);
  c.model.c_c = j.value("c_c", c.model.c_c);
  c.model.g_stem_channels = j.value("g_stem_channels", c.model.g_stem_channels);
  if (j.contains("g_channels"))
    for (int i = 0; i < 3; ++i) c.model.g_channels[static_cast<size_t>(i)] = j["g_channels"].at(static_cast<size_t>(i)).get<int>();
  if (j.contains("d_channels"))
    for (int i = 0; i < 3; ++i) c.model.d_channels[static_cast<size_t>(i)] = j["d_channels"].at(static_cast<size_t>(i)).get<int>();
  c.model.c_g = j.value("c_g", c.model.c_g);
  c.model.c_embed = j.value("c_embed", c.model.c_embed);
  c.model.attention_override = j.value("attention_override", c.model.attention_override);
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
  c.log_path = j.value("log_path", c.log_path);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.prefetch_batches = j.value("prefetch_batches", c.prefetch_batches);
  c.probe_count = j.value("probe_count", c.probe_count);
  if (c.lr_g <= 0.0f || c.lr_d <= 0.0f) throw std::invalid_argument("learning rates must be positive");
  if (c.d_steps_per_g < 1) throw std::invalid_argument("d_steps_per_g must be >= 1");
  return c;
}

std::string train_config_json(const TrainConfig& c) {
  ordered_json j;
  j["corpus"] = c.corpus_path;
  j["lr_g"] = c.lr_g;
  j["lr_d"] = c.lr_d;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["d_steps_per_g"] = c.d_steps_per_g;
  j["batch_size"] = c.batch_size;
  j["total_g_steps"] = c.total_g_steps;
  j["seed"] = c.seed;
  j["noise_level"] = c.noise_level;
  j["tau"] = c.contrastive.tau;
  j["gamma1"] = c.contrastive.gamma1;
  j["gamma2"] = c.contrastive.gamma2;
  j["gamma3"] = c.contrastive.gamma3;
  j["w_g2s"] = c.contrastive.w_g2s;
  j["w_l2w"] = c.contrastive.w_l2w;
  j["w_f2r"] = c.contrastive.w_f2r;
  j["w_occ"] = c.contrastive.w_occ;
  j["F"] = c.model.F;
  j["T"] = c.model.T;
  j["c_z"] = c.model.c_z;
  j["c_c"] = c.model.c_c;
  j["g_stem_channels"] = c.model.g_stem_channels;
  j["g_channels"] = c.model.g_channels;
  j["d_channels"] = c.model.d_channels;
  j["c_g"] = c.model.c_g;
  j["c_embed"] = c.model.c_embed;
  j["attention_override"] = c.model.attention_override;
  j["checkpoint_dir"] = c.checkpoint_dir;
  j["log_path"] = c.log_path;
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["prefetch_batches"] = c.prefetch_batches;
  j["probe_count"] = c.probe_count;
  return j.dump(2) + "\n";
}

uint64_t config_hash(const TrainConfig& c) {
  TrainConfig h = c;
  h.checkpoint_dir.clear();
  h.log_path.clear();
  h.total_g_steps = 0;
  h.checkpoint_interval = 0;
  h.prefetch_batches = false;
  std::string s = train_config_json(h);
  uint64_t hash = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : s) {
    hash ^= ch;
    hash *= 1099511628211ull;
  }
  return hash;
}

// ---- state ----

TrainState init_train_state(const TrainConfig& cfg) {
  TrainState st;
  st.cfg = cfg;
  st.corpus = load_corpus(cfg.corpus_path);
  if (st.corpus.F != cfg.model.F || st.corpus.T != cfg.model.T)
    throw std::invalid_argument("corpus grid " + std::to_string(st.corpus.F) + "x" +
                                std::to_string(st.corpus.T) + " does not match model config " +
                                std::to_string(cfg.model.F) + "x" + std::to_string(cfg.model.T));
  if (cfg.batch_size < 2 &&
      (cfg.contrastive.w_g2s != 0.0f || cfg.contrastive.w_l2w != 0.0f ||
       cfg.contrastive.w_f2r != 0.0f || cfg.contrastive.w_occ != 0.0f))
    throw std::invalid_argument("batch_size must be >= 2 while contrastive losses are active");
  Rng g_rng(mix_seed(cfg.seed, 0x61));
  Rng d_rng(mix_seed(cfg.seed, 0xD1));
  st.gen = make_generator(cfg.model, g_rng);
  st.disc = make_discriminator(cfg.model, d_rng);
  st.g_params = generator_params(st.gen);
  st.d_params = discriminator_params(st.disc);
  for (const auto& p : st.g_params)
    st.moments[p->name] = AdamMoments{std::vector<float>(static_cast<size_t>(p->numel()), 0.0f),
                                      std::vector<float>(static_cast<size_t>(p->numel()), 0.0f)};
  for (const auto& p : st.d_params)
    st.moments[p->name] = AdamMoments{std::vector<float>(static_cast<size_t>(p->numel()), 0.0f),
                                      std::vector<float>(static_cast<size_t>(p->numel()), 0.0f)};
  st.rng = Rng(mix_seed(cfg.seed, 0x2042));
  return st;
}

// ---- adam ----

void adam_step(const std::vector<ParamPtr>& params,
               const std::vector<std::vector<float>>& grads,
               std::unordered_map<std::string, AdamMoments>& moments, float lr, float beta1,
               float beta2, float eps, long t) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads differ");
  float bc1 = 1.0f - std::pow(beta1, static_cast<float>(t));
  float bc2 = 1.0f - std::pow(beta2, static_cast<float>(t));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    const auto& g = grads[pi];
    if (g.size() != p.value->size())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + p.name);
    auto& mom = moments.at(p.name);
    for (size_t i = 0; i < g.size(); ++i) {
      mom.m[i] = beta1 * mom.m[i] + (1.0f - beta1) * g[i];
      mom.v[i] = beta2 * mom.v[i] + (1.0f - beta2) * g[i] * g[i];
      float m_hat = mom.m[i] / bc1;
      float v_hat = mom.v[i] / bc2;
      (*p.value)[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

// ---- features ----

namespace {

Tensor bind(const ParamPtr& p, Tape* tape) { return tape ? tape->watch(p) : p->constant(); }

Tensor project_rows(const Tensor& x, const ParamPtr& w, const ParamPtr& b, Tape* tape) {
  return l2_normalize(add(matmul(x, bind(w, tape)), bind(b, tape)), 1);
}

std::vector<Tensor> draw_noise(Rng& rng, int n, int c_z) {
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor z = Tensor::zeros({1, c_z});
    for (int j = 0; j < c_z; ++j) (*z.data)[static_cast<size_t>(j)] = rng.normal();
    out.push_back(z);
  }
  return out;
}

BatchFeatures detach_features(const BatchFeatures& f) {
  BatchFeatures out;
  out.real_logits = detach(f.real_logits);
  out.fake_logits = detach(f.fake_logits);
  out.g_real = detach(f.g_real);
  out.g_fake = detach(f.g_fake);
  out.s_embed = detach(f.s_embed);
  for (const auto& t : f.l_real) out.l_real.push_back(detach(t));
  for (const auto& t : f.l_fake) out.l_fake.push_back(detach(t));
  for (const auto& t : f.w_embed) out.w_embed.push_back(detach(t));
  return out;
}

void check_finite_terms(const LossTerms& t, long step) {
  const std::pair<const char*, double> named[] = {
      {"adv", t.adv}, {"g2s", t.g2s}, {"l2w", t.l2w}, {"f2r", t.f2r}, {"occ", t.occ}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw TrainAbort(step, name);
  if (!std::isfinite(t.total)) throw TrainAbort(step, "total");
}

}  // namespace

BatchFeatures extract_features(const std::vector<Tensor>& real_mels,
                               const std::vector<Tensor>& fake_mels,
                               const std::vector<TextCond>& conds, const Discriminator& d,
                               Tape* d_tape) {
  size_t n = real_mels.size();
  if (fake_mels.size() != n || conds.size() != n)
    throw std::invalid_argument("extract_features: batch sizes differ");
  BatchFeatures f;
  std::vector<Tensor> real_logits, fake_logits, g_real, g_fake, s_rows;
  for (size_t i = 0; i < n; ++i) {
    DiscOut real_out = discriminate(real_mels[i], conds[i], d, d_tape);
    DiscOut fake_out = discriminate(fake_mels[i], conds[i], d, d_tape);
    real_logits.push_back(real_out.logit);
    fake_logits.push_back(fake_out.logit);
    g_real.push_back(project_rows(real_out.global, d.head_g_w, d.head_g_b, d_tape));
    g_fake.push_back(project_rows(fake_out.global, d.head_g_w, d.head_g_b, d_tape));
    s_rows.push_back(project_rows(conds[i].sentence, d.head_s_w, d.head_s_b, d_tape));
    f.l_real.push_back(project_rows(real_out.local, d.head_l_w, d.head_l_b, d_tape));
    f.l_fake.push_back(project_rows(fake_out.local, d.head_l_w, d.head_l_b, d_tape));
    f.w_embed.push_back(project_rows(conds[i].words, d.head_w_w, d.head_w_b, d_tape));
  }
  f.real_logits = concat(real_logits, 0);  // [N,1]
  f.fake_logits = concat(fake_logits, 0);
  f.g_real = concat(g_real, 0);            // [N,c_embed]
  f.g_fake = concat(g_fake, 0);
  f.s_embed = concat(s_rows, 0);
  return f;
}

// ---- train step ----

std::vector<LossReport> train_step(TrainState& state, const PairBatch& batch) {
  const TrainConfig& cfg = state.cfg;
  int n = static_cast<int>(batch.mels.size());
  std::vector<LossReport> reports;

  for (int k = 0; k < cfg.d_steps_per_g; ++k) {
    // fresh fakes, generator frozen
    std::vector<Tensor> z = draw_noise(state.rng, n, cfg.model.c_z);
    std::vector<Tensor> fakes;
    fakes.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      fakes.push_back(generate(z[static_cast<size_t>(i)], batch.conds[static_cast<size_t>(i)],
                               state.gen, nullptr));
    Tape tape;
    BatchFeatures feats = extract_features(batch.mels, fakes, batch.conds, state.disc, &tape);
    ComposedLoss d_loss = compose_d_losses(feats, cfg.contrastive);
    check_finite_terms(d_loss.terms, state.g_steps);
    ComposedLoss g_view = compose_g_losses(detach_features(feats), cfg.contrastive);
    tape.backward(d_loss.total);
    std::vector<std::vector<float>> grads;
    grads.reserve(state.d_params.size());
    for (const auto& p : state.d_params) grads.push_back(tape.grad_of(*p));
    ++state.d_steps;
    adam_step(state.d_params, grads, state.moments, cfg.lr_d, cfg.beta1, cfg.beta2, 1e-8f,
              state.d_steps);
    LossReport r;
    r.step = state.g_steps;
    r.phase = 'd';
    r.d = d_loss.terms;
    r.g = g_view.terms;
    reports.push_back(r);
  }

  {
    // generator update, discriminator frozen
    std::vector<Tensor> z = draw_noise(state.rng, n, cfg.model.c_z);
    Tape tape;
    std::vector<Tensor> fakes;
    fakes.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      fakes.push_back(generate(z[static_cast<size_t>(i)], batch.conds[static_cast<size_t>(i)],
                               state.gen, &tape));
    BatchFeatures feats = extract_features(batch.mels, fakes, batch.conds, state.disc, nullptr);
    ComposedLoss g_loss = compose_g_losses(feats, cfg.contrastive);
    check_finite_terms(g_loss.terms, state.g_steps);
    ComposedLoss d_view = compose_d_losses(detach_features(feats), cfg.contrastive);
    tape.backward(g_loss.total);
    std::vector<std::vector<float>> grads;
    grads.reserve(state.g_params.size());
    for (const auto& p : state.g_params) grads.push_back(tape.grad_of(*p));
    ++state.g_steps;
    adam_step(state.g_params, grads, state.moments, cfg.lr_g, cfg.beta1, cfg.beta2, 1e-8f,
              state.g_steps);
    LossReport r;
    r.step = state.g_steps - 1;
    r.phase = 'g';
    r.d = d_view.terms;
    r.g = g_loss.terms;
    reports.push_back(r);
  }
  return reports;
}

// ---- probes ----

double probe_alignment(const TrainState& state) {
  const TrainConfig& cfg = state.cfg;
  double sum = 0.0;
  for (int i = 0; i < cfg.probe_count; ++i) {
    int token = i % state.corpus.vocab_size;
    TextCond cond = encode_text({token}, cfg.model.c_c, state.corpus.seed, state.corpus.vocab_size);
    Rng z_rng(mix_seed(cfg.seed, 0xBE0 + static_cast<uint64_t>(i)));
    Tensor z = Tensor::zeros({1, cfg.model.c_z});
    for (int j = 0; j < cfg.model.c_z; ++j) (*z.data)[static_cast<size_t>(j)] = z_rng.normal();
    Tensor mel = generate(z, cond, state.gen, nullptr);
    sum += alignment_energy(mel, state.corpus, token);
  }
  return sum / static_cast<double>(cfg.probe_count);
}

// ---- checkpointing ----

static std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::string& dir, const TrainState& state) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["config_hash"] = hash_hex(config_hash(state.cfg));
  manifest["step"] = state.g_steps;
  manifest["d_steps"] = state.d_steps;
  manifest["rng_state"] = std::to_string(state.rng.state());
  ordered_json names = ordered_json::array();
  auto dump_side = [&](const std::vector<ParamPtr>& params) {
    for (const auto& p : params) {
      names.push_back(p->name);
      save_tsr(dir + "/" + p->name + ".tsr", p->constant());
      const auto& mom = state.moments.at(p->name);
      save_tsr(dir + "/" + p->name + ".m.tsr", Tensor::from(p->shape, mom.m));
      save_tsr(dir + "/" + p->name + ".v.tsr", Tensor::from(p->shape, mom.v));
    }
  };
  dump_side(state.g_params);
  dump_side(state.d_params);
  manifest["params"] = names;
  manifest["config"] = ordered_json::parse(train_config_json(state.cfg));
  std::ofstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

TrainConfig load_checkpoint_config(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("cannot open checkpoint manifest: " + dir + "/manifest.json");
  ordered_json manifest;
  f >> manifest;
  return train_config_from_json(manifest.at("config").dump());
}

void load_checkpoint(const std::string& dir, TrainState& state) {
  std::ifstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("cannot open checkpoint manifest: " + dir + "/manifest.json");
  ordered_json manifest;
  f >> manifest;
  std::string expect = hash_hex(config_hash(state.cfg));
  std::string got = manifest.at("config_hash").get<std::string>();
  if (expect != got)
    throw std::runtime_error("checkpoint config hash " + got + " does not match current config " +
                             expect);
  state.g_steps = manifest.at("step").get<long>();
  state.d_steps = manifest.at("d_steps").get<long>();
  state.rng.set_state(std::stoull(manifest.at("rng_state").get<std::string>()));
  auto load_side = [&](const std::vector<ParamPtr>& params) {
    for (const auto& p : params) {
      Tensor t = load_tsr(dir + "/" + p->name + ".tsr");
      if (t.shape != p->shape)
        throw std::runtime_error("checkpoint shape mismatch for " + p->name);
      *p->value = *t.data;
      auto& mom = state.moments.at(p->name);
      mom.m = *load_tsr(dir + "/" + p->name + ".m.tsr").data;
      mom.v = *load_tsr(dir + "/" + p->name + ".v.tsr").data;
    }
  };
  load_side(state.g_params);
  load_side(state.d_params);
}

// ---- batch prefetch ----
// Single producer, single consumer, bounded. Batches are keyed by step
// index so the consumer always sees them in generation order and never a
// partially built one (handoff is by value under the lock).

namespace {

class BatchQueue {
 public:
  BatchQueue(const CorpusConfig& corpus, const TrainConfig& cfg, long first_step, long last_step)
      : corpus_(corpus), cfg_(cfg), next_(first_step), last_(last_step) {
    worker_ = std::thread([this] { run(); });
  }

  ~BatchQueue() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  PairBatch pop(long step) {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [&] { return !queue_.empty() && queue_.front().first == step; });
    PairBatch b = std::move(queue_.front().second);
    queue_.pop();
    cv_.notify_all();
    return b;
  }

 private:
  void run() {
    for (long s = next_; s < last_; ++s) {
      PairBatch b = make_train_batch(corpus_, cfg_, s);
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return queue_.size() < kCapacity || stop_; });
      if (stop_) return;
      queue_.emplace(s, std::move(b));
      cv_.notify_all();
    }
  }

 public:
  static PairBatch make_train_batch(const CorpusConfig& corpus, const TrainConfig& cfg,
                                    long step) {
    SampleOptions opt;
    opt.c_c = cfg.model.c_c;
    opt.c_z = cfg.model.c_z;
    opt.noise_level = cfg.noise_level;
    return sample_batch(corpus, cfg.batch_size,
                        mix_seed(cfg.seed ^ 0xBA7C4ull, static_cast<uint64_t>(step)), opt);
  }

 private:
  static constexpr size_t kCapacity = 4;
  CorpusConfig corpus_;
  TrainConfig cfg_;
  long next_, last_;
  std::queue<std::pair<long, PairBatch>> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::thread worker_;
};

std::string checkpoint_path(const TrainConfig& cfg, long step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06ld", step);
  return cfg.checkpoint_dir + "/" + buf;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::string& resume_dir) {
  TrainState state = init_train_state(cfg);
  bool resuming = !resume_dir.empty();
  if (resuming) load_checkpoint(resume_dir, state);

  fs::create_directories(cfg.checkpoint_dir);
  if (!cfg.log_path.empty()) {
    fs::path log_parent = fs::path(cfg.log_path).parent_path();
    if (!log_parent.empty()) fs::create_directories(log_parent);
  }
  std::ofstream log(cfg.log_path, resuming ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open training log: " + cfg.log_path);

  TrainResult result;
  auto record_probe = [&](long step) {
    double a = probe_alignment(state);
    result.history.push_back({step, a});
    ordered_json j;
    j["step"] = step;
    j["probe_alignment"] = a;
    log << j.dump() << "\n";
    log.flush();
  };

  if (!resuming) record_probe(0);

  std::unique_ptr<BatchQueue> queue;
  if (cfg.prefetch_batches && state.g_steps < cfg.total_g_steps)
    queue = std::make_unique<BatchQueue>(state.corpus, cfg, state.g_steps, cfg.total_g_steps);

  while (state.g_steps < cfg.total_g_steps) {
    long step = state.g_steps;
    PairBatch batch = queue ? queue->pop(step)
                            : BatchQueue::make_train_batch(state.corpus, cfg, step);
    std::vector<LossReport> reports = train_step(state, batch);
    for (const auto& r : reports) log << loss_report_json(r) << "\n";
    log.flush();
    bool at_interval = cfg.checkpoint_interval > 0 && state.g_steps % cfg.checkpoint_interval == 0;
    bool at_end = state.g_steps == cfg.total_g_steps;
    if (at_interval || at_end) {
      std::string dir = checkpoint_path(cfg, state.g_steps);
      save_checkpoint(dir, state);
      result.final_checkpoint = dir;
      record_probe(state.g_steps);
    }
  }
  if (result.final_checkpoint.empty()) {
    std::string dir = checkpoint_path(cfg, state.g_steps);
    save_checkpoint(dir, state);
    result.final_checkpoint = dir;
    record_probe(state.g_steps);
  }
  result.g_steps = state.g_steps;
  result.d_steps = state.d_steps;
  return result;
}

}  // namespace tfca
