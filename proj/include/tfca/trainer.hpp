#pragma once

// Adversarial training loop: two discriminator updates per generator
// update at split learning rates, Adam with bias correction, fail-fast NaN
// policy, and bit-exact checkpoint/resume.

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tfca/corpus.hpp"
#include "tfca/losses.hpp"
#include "tfca/model.hpp"

namespace tfca {

struct TrainConfig {
  std::string corpus_path = "corpus.json";
  float lr_g = 0.0001f;
  float lr_d = 0.0004f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  int d_steps_per_g = 2;
  int batch_size = 8;
  int total_g_steps = 500;
  uint64_t seed = 1;
  float noise_level = 0.05f;
  ContrastiveConfig contrastive;
  ModelConfig model;
  std::string checkpoint_dir = "checkpoints";
  std::string log_path = "train_log.jsonl";
  int checkpoint_interval = 100;
  bool prefetch_batches = true;
  int probe_count = 32;
};

TrainConfig train_config_from_json(const std::string& json_text);
std::string train_config_json(const TrainConfig& c);
// Hash of the trajectory-relevant fields (geometry, optimizer, losses,
// seed); paths and total step count stay out so runs can be extended.
uint64_t config_hash(const TrainConfig& c);

// Fail-fast diagnostic for a non-finite loss term.
class TrainAbort : public std::runtime_error {
 public:
  TrainAbort(long at_step, std::string at_term)
      : std::runtime_error("non-finite loss term '" + at_term + "' at step " +
                           std::to_string(at_step)),
        step(at_step),
        term(std::move(at_term)) {}
  long step;
  std::string term;
};

struct AdamMoments {
  std::vector<float> m, v;
};

struct TrainState {
  TrainConfig cfg;
  CorpusConfig corpus;
  Generator gen;
  Discriminator disc;
  std::vector<ParamPtr> g_params, d_params;
  std::unordered_map<std::string, AdamMoments> moments;
  long d_steps = 0;
  long g_steps = 0;
  Rng rng{1};
};

TrainState init_train_state(const TrainConfig& cfg);

// Standard bias-corrected Adam, applied in place. t is the 1-based update
// count of the parameter group.
void adam_step(const std::vector<ParamPtr>& params,
               const std::vector<std::vector<float>>& grads,
               std::unordered_map<std::string, AdamMoments>& moments, float lr, float beta1,
               float beta2, float eps, long t);

// Runs the discriminator on real and fake mels and projects every
// contrastive feature into the shared embedding space (unit-norm rows).
// When d_tape is set the discriminator and head parameters are watched on
// it; fake mels may independently carry generator gradients.
BatchFeatures extract_features(const std::vector<Tensor>& real_mels,
                               const std::vector<Tensor>& fake_mels,
                               const std::vector<TextCond>& conds, const Discriminator& d,
                               Tape* d_tape);

// d_steps_per_g discriminator updates (fresh noise each, generator frozen)
// followed by one generator update (discriminator frozen). One report per
// update. Throws TrainAbort on a non-finite loss term.
std::vector<LossReport> train_step(TrainState& state, const PairBatch& batch);

// Mean alignment energy of generated mels over the fixed probe captions.
double probe_alignment(const TrainState& state);

void save_checkpoint(const std::string& dir, const TrainState& state);
void load_checkpoint(const std::string& dir, TrainState& state);
TrainConfig load_checkpoint_config(const std::string& dir);

struct ProbeMetric {
  long step = 0;
  double alignment = 0.0;
};

struct TrainResult {
  std::vector<ProbeMetric> history;
  std::string final_checkpoint;
  long g_steps = 0;
  long d_steps = 0;
};

// Full run to cfg.total_g_steps; resume_dir continues a checkpoint
// bit-exactly. Writes the JSON-lines log and periodic checkpoints.
TrainResult train(const TrainConfig& cfg, const std::string& resume_dir = "");

}  // namespace tfca
