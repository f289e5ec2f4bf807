// Batch command-line surface: make-corpus, train, generate, eval,
// grad-check, inspect-attention. Exit codes: 0 success, 2 usage/validation,
// 3 numeric failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "tfca/corpus.hpp"
#include "tfca/gradcheck.hpp"
#include "tfca/metrics.hpp"
#include "tfca/trainer.hpp"

namespace fs = std::filesystem;
using namespace tfca;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TrainConfig config_from_flags(const std::string& config_path, bool seed_set, uint64_t seed) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = train_config_from_json(read_file(config_path));
  if (seed_set) cfg.seed = seed;
  return cfg;
}

std::vector<int> parse_caption(const std::string& caption, int vocab_size) {
  std::vector<int> tokens;
  std::stringstream ss(caption);
  std::string word;
  while (ss >> word) {
    bool ok = word.rfind("tok", 0) == 0 && word.size() > 3;
    int id = -1;
    if (ok) {
      try {
        size_t used = 0;
        id = std::stoi(word.substr(3), &used);
        ok = used == word.size() - 3;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok || id < 0 || id >= vocab_size) {
      std::string vocab = "tok0..tok" + std::to_string(vocab_size - 1);
      throw UsageError("unknown token '" + word + "'; vocabulary is " + vocab);
    }
    tokens.push_back(id);
  }
  if (tokens.empty()) throw UsageError("empty caption");
  return tokens;
}

// Loads a checkpoint into a fresh TrainState built from its own manifest.
TrainState state_from_checkpoint(const std::string& ckpt_dir) {
  TrainConfig cfg = load_checkpoint_config(ckpt_dir);
  TrainState state = init_train_state(cfg);
  load_checkpoint(ckpt_dir, state);
  return state;
}

int cmd_make_corpus(const std::string& out_dir, int vocab, int f, int t, uint64_t seed) {
  if (vocab < 2) throw UsageError("vocab size must be >= 2, got " + std::to_string(vocab));
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw UsageError("cannot create output directory " + out_dir + ": " + ec.message());
  CorpusConfig corpus = make_corpus(vocab, f, t, seed);
  std::string path = out_dir + "/corpus.json";
  save_corpus(path, corpus);
  std::cout << path << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& resume, bool seed_set,
              uint64_t seed) {
  if (config_path.empty()) throw UsageError("train requires --config");
  TrainConfig cfg = config_from_flags(config_path, seed_set, seed);
  TrainResult result = train(cfg, resume);
  std::cout << "trained " << result.g_steps << " generator steps (" << result.d_steps
            << " discriminator steps); final checkpoint " << result.final_checkpoint << "\n";
  for (const auto& p : result.history)
    std::cout << "probe step " << p.step << ": alignment " << p.alignment << "\n";
  return kExitOk;
}

int cmd_generate(const std::string& ckpt, const std::string& caption, int n,
                 const std::string& out_dir, bool seed_set, uint64_t seed) {
  TrainState state = state_from_checkpoint(ckpt);
  uint64_t base_seed = seed_set ? seed : state.cfg.seed;
  std::vector<int> tokens = parse_caption(caption, state.corpus.vocab_size);
  TextCond cond =
      encode_text(tokens, state.cfg.model.c_c, state.corpus.seed, state.corpus.vocab_size);
  fs::create_directories(out_dir);
  std::string tag = hex64(fnv1a(caption));
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(base_seed, 0x6E0 + static_cast<uint64_t>(i)));
    Tensor z = Tensor::randn({1, state.cfg.model.c_z}, rng);
    auto t0 = std::chrono::steady_clock::now();
    Tensor mel = generate(z, cond, state.gen, nullptr);
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    std::string path = out_dir + "/" + tag + "_" + std::to_string(i) + ".tsr";
    save_tsr(path, mel);
    std::printf("%s  %.2f ms\n", path.c_str(), ms);
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& corpus_path, int n, bool seed_set,
             uint64_t seed, const std::string& out_file, bool real_real) {
  TrainState state = state_from_checkpoint(ckpt);
  CorpusConfig corpus = corpus_path.empty() ? state.corpus : load_corpus(corpus_path);
  uint64_t base_seed = seed_set ? seed : state.cfg.seed;
  const ModelConfig& mc = state.cfg.model;
  const int feat_dim = 32;
  if (n < feat_dim + 1)
    std::cerr << "warning: n=" << n << " <= feature dim " << feat_dim
              << "; covariance regularized with 1e-6 I\n";

  SampleOptions opt;
  opt.c_c = mc.c_c;
  opt.c_z = mc.c_z;
  opt.noise_level = state.cfg.noise_level;
  StubEmbedder embedder(corpus.F, corpus.T, feat_dim, corpus.seed);
  StubClassifier classifier(corpus.F, corpus.T, corpus.vocab_size, corpus.seed);

  std::vector<Tensor> real_mels, gen_mels;
  double align_sum = 0.0;
  long align_n = 0;
  PairBatch batch = sample_batch(corpus, std::max(2, n), mix_seed(base_seed, 0xEA1), opt);
  if (real_real) {
    PairBatch second = sample_batch(corpus, std::max(2, n), mix_seed(base_seed, 0xEA2), opt);
    real_mels = batch.mels;
    gen_mels = second.mels;
    for (int i = 0; i < static_cast<int>(gen_mels.size()); ++i)
      for (int tok : second.conds[static_cast<size_t>(i)].token_ids) {
        align_sum += alignment_energy(gen_mels[static_cast<size_t>(i)], corpus, tok);
        ++align_n;
      }
  } else {
    real_mels = batch.mels;
    for (int i = 0; i < static_cast<int>(batch.mels.size()); ++i) {
      Rng zr(mix_seed(base_seed, 0xE60 + static_cast<uint64_t>(i)));
      Tensor z = Tensor::randn({1, mc.c_z}, zr);
      Tensor mel = generate(z, batch.conds[static_cast<size_t>(i)], state.gen, nullptr);
      gen_mels.push_back(mel);
      for (int tok : batch.conds[static_cast<size_t>(i)].token_ids) {
        align_sum += alignment_energy(mel, corpus, tok);
        ++align_n;
      }
    }
  }

  FeatureSet real_set = embedder.embed_all(real_mels, "real");
  FeatureSet gen_set = embedder.embed_all(gen_mels, "generated");
  double fd = frechet_distance(real_set, gen_set);
  Tensor real_probs = classifier.probs_all(real_mels);
  Tensor gen_probs = classifier.probs_all(gen_mels);
  double is_v = inception_score(gen_probs);
  double kl_v = kl_metric(real_probs, gen_probs);

  std::vector<TextCond> probes;
  for (int i = 0; i < 4; ++i)
    probes.push_back(encode_text({i % corpus.vocab_size}, mc.c_c, corpus.seed, corpus.vocab_size));
  TimingReport timing = timing_report(state.gen, probes, 10);

  ordered_json j;
  j["fd_stub"] = fd;
  j["is_stub"] = is_v;
  j["kl_stub"] = kl_v;
  j["alignment_energy"] = align_n > 0 ? align_sum / static_cast<double>(align_n) : 0.0;
  j["mean_ms"] = timing.mean_ms;
  j["params"] = count_params(generator_params(state.gen)) +
                count_params(discriminator_params(state.disc));
  std::string text = j.dump(2);
  std::cout << text << "\n";
  if (!out_file.empty()) {
    std::ofstream f(out_file);
    if (!f) throw UsageError("cannot write " + out_file);
    f << text << "\n";
  }
  return kExitOk;
}

int cmd_grad_check(const std::string& scope, uint64_t seed) {
  std::vector<CheckRow> rows = grad_check_scope(scope, seed);
  bool all_pass = true;
  std::printf("%-32s %12s %10s  %s\n", "op", "max_rel_err", "tol", "status");
  for (const auto& r : rows) {
    std::printf("%-32s %12.3e %10.0e  %s\n", r.name.c_str(), r.err, r.tol,
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? kExitOk : kExitNumeric;
}

int cmd_inspect_attention(const std::string& ckpt, const std::string& caption,
                          const std::string& out_dir, bool seed_set, uint64_t seed) {
  TrainState state = state_from_checkpoint(ckpt);
  uint64_t base_seed = seed_set ? seed : state.cfg.seed;
  std::vector<int> tokens = parse_caption(caption, state.corpus.vocab_size);
  TextCond cond =
      encode_text(tokens, state.cfg.model.c_c, state.corpus.seed, state.corpus.vocab_size);
  Rng rng(mix_seed(base_seed, 0x1A7));
  Tensor z = Tensor::randn({1, state.cfg.model.c_z}, rng);
  std::vector<AttnDump> dumps;
  Tensor mel = generate(z, cond, state.gen, nullptr, &dumps);
  (void)mel;
  fs::create_directories(out_dir);
  for (const auto& d : dumps) {
    // re-verify row-stochasticity of the softmax-normalized kinds
    if (d.kind == "f2t" || d.kind == "t2f" || d.kind == "c2f" || d.kind == "c2t") {
      int rows = d.map.shape[0], cols = d.map.shape[1];
      for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += d.map.ptr()[static_cast<long>(r) * cols + c];
        if (std::abs(s - 1.0) > 1e-5) {
          std::cerr << "row-sum invariant violated in " << d.stage << " " << d.attn << " "
                    << d.kind << ": " << s << "\n";
          return kExitNumeric;
        }
      }
    }
    std::string path = out_dir + "/" + d.stage + "_" + d.attn + "_" + d.kind + ".tsr";
    save_tsr(path, d.map);
    std::cout << path << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-to-audio GAN testbed with time-frequency cross-attention"};
  app.require_subcommand(1);

  std::string config_path, resume, ckpt, caption, out_path, corpus_path, scope = "all";
  uint64_t seed = 0;
  int vocab = 16, grid_f = 64, grid_t = 64, n_samples = 4, n_eval = 256;
  bool real_real = false;

  auto* make_cmd = app.add_subcommand("make-corpus", "write a synthetic corpus config");
  make_cmd->add_option("--out", out_path, "output directory")->required();
  make_cmd->add_option("--vocab", vocab, "vocabulary size");
  make_cmd->add_option("--F", grid_f, "mel bins");
  make_cmd->add_option("--T", grid_t, "time steps");
  auto* mc_seed = make_cmd->add_option("--seed", seed, "corpus seed");
  make_cmd->add_option("--config", config_path, "train config supplying defaults");

  auto* train_cmd = app.add_subcommand("train", "run the training loop");
  train_cmd->add_option("--config", config_path, "train config JSON")->required();
  train_cmd->add_option("--resume", resume, "checkpoint directory to continue from");
  auto* tr_seed = train_cmd->add_option("--seed", seed, "override config seed");

  auto* gen_cmd = app.add_subcommand("generate", "sample mels from a checkpoint");
  gen_cmd->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  gen_cmd->add_option("--caption", caption, "space-separated tokens, e.g. \"tok3 tok7\"")
      ->required();
  gen_cmd->add_option("--n", n_samples, "number of samples");
  gen_cmd->add_option("--out", out_path, "output directory")->required();
  auto* gen_seed = gen_cmd->add_option("--seed", seed, "sampling seed");
  gen_cmd->add_option("--config", config_path, "unused override hook");

  auto* eval_cmd = app.add_subcommand("eval", "stub-metric evaluation of a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  eval_cmd->add_option("--corpus", corpus_path, "corpus JSON (defaults to the checkpoint's)");
  eval_cmd->add_option("--n", n_eval, "sample count");
  eval_cmd->add_option("--out", out_path, "also write the JSON here");
  eval_cmd->add_flag("--real-real", real_real, "compare two real splits (noise-floor sanity)");
  auto* ev_seed = eval_cmd->add_option("--seed", seed, "sampling seed");
  eval_cmd->add_option("--config", config_path, "unused override hook");

  auto* check_cmd = app.add_subcommand("grad-check", "finite-difference gradient suites");
  check_cmd->add_option("--scope", scope, "tensor|attention|losses|end2end|all");
  auto* ck_seed = check_cmd->add_option("--seed", seed, "suite seed");
  check_cmd->add_option("--config", config_path, "unused override hook");

  auto* insp_cmd = app.add_subcommand("inspect-attention", "dump attention maps as TSR files");
  insp_cmd->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  insp_cmd->add_option("--caption", caption, "caption tokens")->required();
  insp_cmd->add_option("--out", out_path, "output directory")->required();
  auto* in_seed = insp_cmd->add_option("--seed", seed, "noise seed");
  insp_cmd->add_option("--config", config_path, "unused override hook");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (make_cmd->parsed()) {
      if (!config_path.empty()) {
        TrainConfig cfg = train_config_from_json(read_file(config_path));
        if (make_cmd->count("--F") == 0) grid_f = cfg.model.F;
        if (make_cmd->count("--T") == 0) grid_t = cfg.model.T;
        if (mc_seed->count() == 0) seed = cfg.seed;
      }
      return cmd_make_corpus(out_path, vocab, grid_f, grid_t, seed);
    }
    if (train_cmd->parsed()) return cmd_train(config_path, resume, tr_seed->count() > 0, seed);
    if (gen_cmd->parsed())
      return cmd_generate(ckpt, caption, n_samples, out_path, gen_seed->count() > 0, seed);
    if (eval_cmd->parsed())
      return cmd_eval(ckpt, corpus_path, n_eval, ev_seed->count() > 0, seed, out_path, real_real);
    if (check_cmd->parsed()) return cmd_grad_check(scope, ck_seed->count() > 0 ? seed : 0);
    if (insp_cmd->parsed())
      return cmd_inspect_attention(ckpt, caption, out_path, in_seed->count() > 0, seed);
  } catch (const TrainAbort& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
