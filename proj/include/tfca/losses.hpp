#pragma once

// Training objectives: hinge adversarial losses plus four InfoNCE-style
// contrastive terms. The discriminator optimizes hinge + {g2s, l2w, occ} on
// real samples; the generator optimizes hinge + {g2s, l2w, f2r, occ} on
// generated samples. Gradients of the fake-to-real term never reach
// discriminator parameters: its real-side features are detached and the
// discriminator is frozen during generator updates.

#include <string>
#include <vector>

#include "tfca/tensor.hpp"

namespace tfca {

struct ContrastiveConfig {
  float tau = 0.1f;
  float gamma1 = 5.0f, gamma2 = 5.0f, gamma3 = 50.0f;
  float w_g2s = 1.0f, w_l2w = 1.0f, w_f2r = 1.0f, w_occ = 1.0f;
};

// -(1/N) sum min(0,-1+real) - (1/N) sum min(0,-1-fake)
Tensor hinge_d(const Tensor& real_logits, const Tensor& fake_logits);
// -(1/N) sum fake
Tensor hinge_g(const Tensor& fake_logits);

// InfoNCE between rows of g [N,C] and s [N,C]; rows must be unit-norm.
Tensor g2s_loss(const Tensor& g, const Tensor& s, float tau);

struct L2wAttentionOut {
  Tensor alpha;    // [T_w, R], rows sum to 1
  Tensor context;  // [T_w, C]
};
L2wAttentionOut l2w_attention(const Tensor& w, const Tensor& l, float gamma1);
// Smooth maximum over per-word similarities, scalar.
Tensor l2w_score(const Tensor& w, const Tensor& c, float gamma2);
// InfoNCE over cross scores S(l_i, w_k), negatives are other captions.
Tensor l2w_loss(const std::vector<Tensor>& locals, const std::vector<Tensor>& words,
                float gamma1, float gamma2, float gamma3);

// Pairs fake i with real i against the other reals; the real side is
// detached inside.
Tensor f2r_loss(const Tensor& g_fake, const Tensor& g_real, float tau);

// Pulls each sample toward its sentence feature while pushing all samples
// apart; negatives are the other samples.
Tensor occ_loss(const Tensor& g, const Tensor& s, float tau);

// Head-projected, unit-norm features of one batch forward pass.
struct BatchFeatures {
  Tensor real_logits, fake_logits;     // [N,1]
  Tensor g_real, g_fake;               // [N, c_embed]
  Tensor s_embed;                      // [N, c_embed]
  std::vector<Tensor> l_real, l_fake;  // per sample [R, c_embed]
  std::vector<Tensor> w_embed;         // per sample [T_w, c_embed]
};

struct LossTerms {
  double adv = 0, g2s = 0, l2w = 0, f2r = 0, occ = 0;
  double total = 0;
};

struct ComposedLoss {
  Tensor total;     // scalar, differentiable
  LossTerms terms;  // total == adv + weighted contrastive sum
};

// Four terms on real samples.
ComposedLoss compose_d_losses(const BatchFeatures& f, const ContrastiveConfig& cfg);
// Five terms on generated samples.
ComposedLoss compose_g_losses(const BatchFeatures& f, const ContrastiveConfig& cfg);

// One training-log record. The per-term columns hold the side being
// optimized in this update; both totals are always true weighted sums of
// their own side's terms.
struct LossReport {
  long step = 0;
  char phase = 'd';
  LossTerms d, g;
};

// {"step","d_total","g_total","adv_d","adv_g","g2s","l2w","f2r","occ"}
std::string loss_report_json(const LossReport& r);

}  // namespace tfca
