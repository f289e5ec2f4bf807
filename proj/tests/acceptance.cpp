// Acceptance suite: one pass/fail line per criterion, exit 0 only if all
// hold. The training-oracle and ablation criteria run full desk-scale
// training loops, so a complete run takes tens of minutes on one core.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "tfca/gradcheck.hpp"
#include "tfca/metrics.hpp"
#include "tfca/trainer.hpp"

using namespace tfca;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %-28s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double minutes_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

fs::path workdir() {
  fs::path p = fs::temp_directory_path() / "tfca_acceptance";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// ---- criterion: gradient suite ----

void check_gradient_suite() {
  auto t0 = Clock::now();
  bool all = true;
  std::string worst;
  double worst_err = 0.0;
  for (const auto& row : grad_check_scope("all", 7)) {
    if (!row.pass) all = false;
    if (row.err > worst_err) {
      worst_err = row.err;
      worst = row.name;
    }
  }
  double mins = minutes_since(t0);
  bool in_time = mins < 5.0;
  std::ostringstream d;
  d << "worst " << worst << " err " << worst_err << ", " << mins << " min";
  report("gradient-suite", all && in_time, d.str());
}

// ---- criterion: attention algebra ----

void check_attention_algebra() {
  bool ok = true;
  std::ostringstream d;
  const int F = 6, T = 8, C = 4, Cc = 5;

  double max_row_dev = 0.0, max_fused_dev = 0.0, max_oracle_dev = 0.0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Tensor x = Tensor::randn({F, T, C}, rng);
    Tensor cond = Tensor::randn({3, Cc}, rng);
    Rng prng(seed * 101);
    SelfTfcaParams sp = make_self_tfca_params("a.self", C, hidden_channels(C), prng);
    MultiTfcaParams mp = make_multi_tfca_params("a.multi", C, Cc, hidden_channels(C), prng);
    for (auto& v : *sp.v->value) v = prng.normal() * 0.3f;
    for (auto& v : *mp.v->value) v = prng.normal() * 0.3f;

    SelfTfcaOut s = self_tfca(x, sp, nullptr);
    MultiTfcaOut m = multi_tfca(x, cond, mp, nullptr);

    auto row_dev = [&](const Tensor& map) {
      int rows = map.shape[0], cols = map.shape[1];
      double dev = 0.0;
      for (int r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) sum += map[r * cols + c];
        dev = std::max(dev, std::abs(sum - 1.0));
      }
      return dev;
    };
    for (const Tensor* map : {&s.w_f2t, &s.w_t2f, &m.w_c2f, &m.w_c2t})
      max_row_dev = std::max(max_row_dev, row_dev(*map));

    double self_sum = 0.0, multi_sum = 0.0;
    for (float v : *s.fused.data) self_sum += v;
    for (float v : *m.fused.data) multi_sum += v;
    max_fused_dev = std::max(max_fused_dev, std::abs(self_sum - (F + T)));
    max_fused_dev = std::max(max_fused_dev, std::abs(multi_sum - 3.0));

    oracle::SelfResult so = oracle::self_tfca(x, sp);
    oracle::MultiResult mo = oracle::multi_tfca(x, cond, mp);
    for (int i = 0; i < s.out.numel(); ++i)
      max_oracle_dev = std::max(max_oracle_dev,
                                std::abs(s.out[i] - so.out[static_cast<size_t>(i)]));
    for (int i = 0; i < m.out.numel(); ++i)
      max_oracle_dev = std::max(max_oracle_dev,
                                std::abs(m.out[i] - mo.out[static_cast<size_t>(i)]));
  }
  ok = max_row_dev < 1e-5 && max_fused_dev < 1e-3 && max_oracle_dev < 1e-5;
  d << "row dev " << max_row_dev << ", fused dev " << max_fused_dev << ", oracle dev "
    << max_oracle_dev;
  report("attention-algebra", ok, d.str());
}

// ---- criterion: loss closed forms ----

void check_loss_closed_forms() {
  auto logits = [](std::initializer_list<float> v) {
    return Tensor::from({static_cast<int>(v.size()), 1}, v);
  };
  bool ok = true;
  std::ostringstream d;

  ok &= std::abs(hinge_d(logits({1, 1}), logits({-1, -1})).scalar()) < 1e-5;
  ok &= std::abs(hinge_d(logits({2, 2}), logits({-2, -2})).scalar()) < 1e-5;  // saturated
  ok &= std::abs(hinge_d(logits({0, 0}), logits({0, 0})).scalar() - 2.0) < 1e-5;

  Tensor same = Tensor::full({4, 8}, 0.5f);
  ok &= std::abs(g2s_loss(same, same, 0.1f).scalar() - std::log(4.0)) < 1e-5;

  Tensor ortho = Tensor::zeros({2, 4});
  (*ortho.data)[0] = 1.0f;
  (*ortho.data)[5] = 1.0f;
  ok &= std::abs(g2s_loss(ortho, ortho, 0.1f).scalar() - std::log(1.0 + std::exp(-10.0))) < 1e-5;

  Tensor one = Tensor::full({1, 4}, 0.5f);
  ok &= std::abs(occ_loss(one, one, 0.1f).scalar()) < 1e-5;

  Rng rng(61);
  Tensor w = l2_normalize(Tensor::randn({1, 4}, rng), 1);
  Tensor c = l2_normalize(Tensor::randn({1, 4}, rng), 1);
  double dot = 0.0;
  for (int i = 0; i < 4; ++i) dot += static_cast<double>(w[i]) * c[i];
  ok &= std::abs(l2w_score(w, c, 5.0f).scalar() - dot) < 1e-5;

  // f2r leaves the real side without any gradient, exactly
  auto gf = std::make_shared<Param>("gf", Shape{2, 4}, std::vector<float>(8, 0.5f));
  auto gr = std::make_shared<Param>("gr", Shape{2, 4}, std::vector<float>(8, 0.25f));
  Tape tape;
  Tensor loss = f2r_loss(l2_normalize(tape.watch(gf), 1), l2_normalize(tape.watch(gr), 1), 0.1f);
  tape.backward(loss);
  for (float g : tape.grad_of(*gr)) ok &= g == 0.0f;

  // and through the full generator phase, every discriminator parameter
  // stays at exactly zero gradient
  {
    ModelConfig mc;
    mc.F = 8;
    mc.T = 8;
    mc.c_z = 4;
    mc.c_c = 8;
    mc.g_stem_channels = 4;
    mc.g_channels = {4, 4, 4};
    mc.d_channels = {4, 4, 4};
    mc.c_g = 8;
    mc.c_embed = 8;
    Rng rg(91), rd(92);
    Generator gen = make_generator(mc, rg);
    Discriminator disc = make_discriminator(mc, rd);
    CorpusConfig corpus = make_corpus(4, 8, 8, 93);
    SampleOptions opt;
    opt.c_c = mc.c_c;
    opt.c_z = mc.c_z;
    PairBatch batch = sample_batch(corpus, 2, 94, opt);
    Tape t2;
    std::vector<Tensor> fakes;
    for (int i = 0; i < 2; ++i)
      fakes.push_back(generate(batch.noises[static_cast<size_t>(i)],
                               batch.conds[static_cast<size_t>(i)], gen, &t2));
    BatchFeatures feats = extract_features(batch.mels, fakes, batch.conds, disc, nullptr);
    ContrastiveConfig cc;
    cc.w_g2s = cc.w_l2w = cc.w_occ = 0.0f;
    ComposedLoss gl = compose_g_losses(feats, cc);
    t2.backward(gl.total);
    for (const auto& p : discriminator_params(disc))
      for (float g : t2.grad_of(*p)) ok &= g == 0.0f;
  }

  report("loss-closed-forms", ok, ok ? "all anchors hit" : "an anchor missed its value");
}

// ---- criterion: training oracle (and material for later criteria) ----

struct SmokeArtifacts {
  TrainConfig cfg;
  TrainResult result;
  bool completed = false;
  double mins = 0.0;
};

SmokeArtifacts run_smoke(const std::string& tag, const nlohmann::json& overrides) {
  fs::path dir = workdir() / tag;
  fs::remove_all(dir);
  fs::create_directories(dir);
  CorpusConfig corpus = make_corpus(16, 64, 64, 42);
  save_corpus((dir / "corpus.json").string(), corpus);

  SmokeArtifacts a;
  a.cfg.corpus_path = (dir / "corpus.json").string();
  a.cfg.batch_size = 8;
  a.cfg.seed = 1;
  a.cfg.total_g_steps = 500;
  a.cfg.checkpoint_interval = 100;
  a.cfg.checkpoint_dir = (dir / "ckpt").string();
  a.cfg.log_path = (dir / "train.jsonl").string();
  for (auto& [k, v] : overrides.items()) {
    if (k == "w_g2s") a.cfg.contrastive.w_g2s = v.get<float>();
    if (k == "w_l2w") a.cfg.contrastive.w_l2w = v.get<float>();
    if (k == "w_f2r") a.cfg.contrastive.w_f2r = v.get<float>();
    if (k == "w_occ") a.cfg.contrastive.w_occ = v.get<float>();
    if (k == "attention_override") a.cfg.model.attention_override = v.get<std::string>();
  }
  auto t0 = Clock::now();
  try {
    a.result = train(a.cfg);
    a.completed = true;
  } catch (const std::exception& e) {
    std::printf("  smoke %s aborted: %s\n", tag.c_str(), e.what());
  }
  a.mins = minutes_since(t0);
  return a;
}

SmokeArtifacts check_training_oracle() {
  SmokeArtifacts a = run_smoke("smoke", {});
  bool ok = a.completed;
  std::ostringstream d;
  if (a.completed) {
    bool in_time = a.mins < 30.0;
    bool ratio = a.result.d_steps == 2 * a.result.g_steps && a.result.g_steps == 500;
    double first = a.result.history.front().alignment;
    double last = a.result.history.back().alignment;
    bool improved = a.result.history.front().step == 0 && last > first;

    // early-stability proxy over the first 100 generator steps
    bool stable = true;
    std::ifstream log(a.cfg.log_path);
    std::string line;
    while (std::getline(log, line)) {
      if (line.find("d_total") == std::string::npos) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      if (j["step"].get<long>() >= 100) continue;
      double adv_d = j["adv_d"].get<double>();
      if (!std::isfinite(adv_d) || adv_d < 0.0 || adv_d > 4.0) stable = false;
    }

    ok = in_time && ratio && improved && stable;
    d << a.mins << " min, d:g " << a.result.d_steps << ":" << a.result.g_steps << ", alignment "
      << first << " -> " << last << (stable ? "" : ", hinge band violated");
  } else {
    d << "run aborted";
  }
  report("training-oracle", ok, d.str());
  return a;
}

// ---- criterion: single pass + footprint ----

void check_single_pass_footprint() {
  bool ok = true;
  std::ostringstream d;

  ModelConfig desk;
  Rng rg(71), rd(72);
  Generator gen = make_generator(desk, rg);
  Discriminator disc = make_discriminator(desk, rd);
  long params = count_params(generator_params(gen)) + count_params(discriminator_params(disc));
  ok &= params < 1000000;

  // a single forward records the same op count whatever the inputs: there
  // is no iteration knob to turn
  CorpusConfig corpus = make_corpus(16, 64, 64, 42);
  TextCond cond_a = encode_text({1}, desk.c_c, corpus.seed, 16);
  TextCond cond_b = encode_text({2, 7, 9}, desk.c_c, corpus.seed, 16);
  Rng zr(73);
  Tensor z1 = Tensor::randn({1, desk.c_z}, zr);
  Tensor z2 = Tensor::randn({1, desk.c_z}, zr);
  Tape t1, t2;
  generate(z1, cond_a, gen, &t1);
  generate(z2, cond_a, gen, &t2);
  ok &= t1.num_nodes() == t2.num_nodes();

  std::vector<TextCond> probes = {cond_a, cond_b};
  TimingReport timing = timing_report(gen, probes, 10);
  ok &= timing.median_ms < 1000.0;

  d << params << " params, " << timing.median_ms << " ms median forward, " << t1.num_nodes()
    << " ops";
  report("single-pass-footprint", ok, d.str());
}

// ---- criterion: metrics formulas ----

void check_metrics_formulas() {
  bool ok = true;
  Rng rng(81);
  Tensor feats = Tensor::randn({120, 8}, rng);
  FeatureSet fs_a{feats, "real", "stub"};
  ok &= std::abs(frechet_distance(fs_a, fs_a)) < 1e-6;
  ok &= std::abs(frechet_from_moments({0.0}, {1.0}, {1.0}, {1.0}, 1) - 1.0) < 1e-9;

  const int k = 6;
  Tensor onehots = Tensor::zeros({k, k});
  for (int i = 0; i < k; ++i) (*onehots.data)[static_cast<size_t>(i * k + i)] = 1.0f;
  ok &= std::abs(inception_score(onehots) - k) < 1e-6;
  ok &= std::abs(inception_score(Tensor::full({5, k}, 1.0f / k)) - 1.0) < 1e-9;

  Tensor p = softmax_axis(Tensor::randn({4, k}, rng), 1);
  ok &= std::abs(kl_metric(p, p)) < 1e-9;
  Tensor onehot = Tensor::zeros({1, k});
  (*onehot.data)[2] = 1.0f;
  ok &= std::abs(kl_metric(onehot, Tensor::full({1, k}, 1.0f / k)) - std::log(k)) < 1e-6;

  report("metrics-formulas", ok, ok ? "all anchors hit" : "an anchor missed its value");
}

// ---- criterion: determinism / persistence ----

void check_determinism_persistence() {
  bool ok = true;
  std::ostringstream d;
  fs::path dir = workdir() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  CorpusConfig corpus = make_corpus(4, 8, 8, 17);
  save_corpus((dir / "corpus.json").string(), corpus);
  TrainConfig cfg;
  cfg.corpus_path = (dir / "corpus.json").string();
  cfg.model.F = 8;
  cfg.model.T = 8;
  cfg.model.c_z = 4;
  cfg.model.c_c = 8;
  cfg.model.g_stem_channels = 4;
  cfg.model.g_channels = {4, 4, 4};
  cfg.model.d_channels = {4, 4, 4};
  cfg.model.c_g = 8;
  cfg.model.c_embed = 8;
  cfg.batch_size = 2;
  cfg.total_g_steps = 6;
  cfg.checkpoint_interval = 3;
  cfg.probe_count = 2;
  cfg.seed = 9;

  // uninterrupted
  cfg.checkpoint_dir = (dir / "full").string();
  cfg.log_path = (dir / "full.jsonl").string();
  train(cfg);

  // interrupted + resumed
  TrainConfig half = cfg;
  half.total_g_steps = 3;
  half.checkpoint_dir = (dir / "half").string();
  half.log_path = (dir / "half.jsonl").string();
  train(half);
  TrainConfig rest = cfg;
  rest.checkpoint_dir = (dir / "rest").string();
  rest.log_path = (dir / "rest.jsonl").string();
  train(rest, (dir / "half" / "step_000003").string());

  for (const auto& entry : fs::directory_iterator(dir / "full" / "step_000006")) {
    fs::path other = dir / "rest" / "step_000006" / entry.path().filename();
    if (entry.path().filename() == "manifest.json") {
      // the manifest embeds run-local paths (checkpoint dir, log path);
      // the training state fields must still agree exactly
      nlohmann::json a = nlohmann::json::parse(slurp(entry.path()));
      nlohmann::json b = nlohmann::json::parse(slurp(other));
      for (const char* key : {"config_hash", "step", "d_steps", "rng_state", "params"})
        if (a.at(key) != b.at(key)) {
          ok = false;
          d << "resume manifest mismatch in " << key << "; ";
        }
      continue;
    }
    if (slurp(entry.path()) != slurp(other)) {
      ok = false;
      d << "resume mismatch in " << entry.path().filename().string() << "; ";
    }
  }

  // byte-identical artifacts from the CLI under a fixed seed
  std::string cli = TFCA_CLI_PATH;
  auto sh = [](const std::string& cmd) { return std::system(cmd.c_str()); };
  fs::remove_all(dir / "m1");
  fs::remove_all(dir / "m2");
  int rc = sh(cli + " make-corpus --out " + (dir / "m1").string() + " --seed 5 > /dev/null");
  rc |= sh(cli + " make-corpus --out " + (dir / "m2").string() + " --seed 5 > /dev/null");
  ok &= rc == 0;
  ok &= slurp(dir / "m1" / "corpus.json") == slurp(dir / "m2" / "corpus.json");

  std::string ckpt = (dir / "full" / "step_000006").string();
  rc = sh(cli + " generate --ckpt " + ckpt + " --caption tok1 --n 2 --seed 3 --out " +
          (dir / "g1").string() + " > /dev/null");
  rc |= sh(cli + " generate --ckpt " + ckpt + " --caption tok1 --n 2 --seed 3 --out " +
           (dir / "g2").string() + " > /dev/null");
  ok &= rc == 0;
  for (const auto& entry : fs::directory_iterator(dir / "g1"))
    ok &= slurp(entry.path()) == slurp(dir / "g2" / entry.path().filename());

  rc = sh(cli + " inspect-attention --ckpt " + ckpt + " --caption \"tok1 tok3\" --seed 3 --out " +
          (dir / "i1").string() + " > /dev/null");
  rc |= sh(cli + " inspect-attention --ckpt " + ckpt + " --caption \"tok1 tok3\" --seed 3 --out " +
           (dir / "i2").string() + " > /dev/null");
  ok &= rc == 0;
  for (const auto& entry : fs::directory_iterator(dir / "i1"))
    ok &= slurp(entry.path()) == slurp(dir / "i2" / entry.path().filename());

  report("determinism-persistence", ok, ok ? "resume and artifacts bit-identical" : d.str());
}

// ---- criterion: ablation harness parity ----

void check_ablation_parity() {
  struct Toggle {
    const char* tag;
    nlohmann::json overrides;
  };
  const Toggle toggles[] = {
      {"no_g2s", {{"w_g2s", 0.0f}}},
      {"no_l2w", {{"w_l2w", 0.0f}}},
      {"no_f2r", {{"w_f2r", 0.0f}}},
      {"no_occ", {{"w_occ", 0.0f}}},
      {"attn_self", {{"attention_override", "self"}}},
      {"attn_word", {{"attention_override", "word"}}},
      {"attn_sentence", {{"attention_override", "sentence"}}},
  };
  bool ok = true;
  std::ostringstream d;
  for (const auto& t : toggles) {
    SmokeArtifacts a = run_smoke(std::string("ablation_") + t.tag, t.overrides);
    ok &= a.completed;
    d << t.tag << (a.completed ? " ok(" : " FAILED(") << a.mins << "m) ";
  }
  report("ablation-parity", ok, d.str());
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  check_gradient_suite();
  check_attention_algebra();
  check_loss_closed_forms();
  check_metrics_formulas();
  check_training_oracle();
  check_single_pass_footprint();
  check_determinism_persistence();
  check_ablation_parity();
  std::printf("acceptance total: %.1f min, %d failure(s)\n", minutes_since(t0), g_failures);
  return g_failures == 0 ? 0 : 1;
}
