#include "tfca/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace tfca {

namespace {

void check_logits(const Tensor& t, const char* name) {
  if (t.numel() < 1) throw std::invalid_argument(std::string(name) + ": empty logits");
}

void check_pair(const Tensor& a, const Tensor& b, const char* name) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape != b.shape)
    throw std::invalid_argument(std::string(name) + ": expected matching [N,C] matrices, got " +
                                shape_str(a.shape) + " and " + shape_str(b.shape));
}

// -(1/N) sum_i (row_logit[i,i] - logsumexp_j row_logit[i,j])
Tensor info_nce_diag(const Tensor& logits) {
  int n = logits.shape[0];
  Tensor diag = sum_axis(mul(logits, Tensor::eye(n)), 1);  // [N]
  Tensor lse = logsumexp_axis(logits, 1);                  // [N]
  return mean_all(sub(lse, diag));
}

}  // namespace

Tensor hinge_d(const Tensor& real_logits, const Tensor& fake_logits) {
  check_logits(real_logits, "hinge_d");
  check_logits(fake_logits, "hinge_d");
  // -mean(min(0,-1+r)) = mean(relu(1-r)), -mean(min(0,-1-f)) = mean(relu(1+f))
  Tensor real_term = mean_all(relu(add_scalar(scale(real_logits, -1.0f), 1.0f)));
  Tensor fake_term = mean_all(relu(add_scalar(fake_logits, 1.0f)));
  return add(real_term, fake_term);
}

Tensor hinge_g(const Tensor& fake_logits) {
  check_logits(fake_logits, "hinge_g");
  return scale(mean_all(fake_logits), -1.0f);
}

Tensor g2s_loss(const Tensor& g, const Tensor& s, float tau) {
  check_pair(g, s, "g2s_loss");
  if (g.shape[0] < 2) throw std::invalid_argument("g2s_loss: needs at least 2 samples");
  if (tau <= 0.0f) throw std::invalid_argument("g2s_loss: tau must be positive");
  Tensor sims = scale(matmul(g, transpose(s)), 1.0f / tau);  // [N,N]
  return info_nce_diag(sims);
}

L2wAttentionOut l2w_attention(const Tensor& w, const Tensor& l, float gamma1) {
  if (w.rank() != 2 || l.rank() != 2 || w.shape[1] != l.shape[1])
    throw std::invalid_argument("l2w_attention: channel mismatch " + shape_str(w.shape) +
                                " vs " + shape_str(l.shape));
  L2wAttentionOut out;
  out.alpha = softmax_axis(scale(matmul(w, transpose(l)), gamma1), 1);  // [T_w, R]
  out.context = matmul(out.alpha, l);                                   // [T_w, C]
  return out;
}

Tensor l2w_score(const Tensor& w, const Tensor& c, float gamma2) {
  if (w.shape != c.shape)
    throw std::invalid_argument("l2w_score: shape mismatch " + shape_str(w.shape) + " vs " +
                                shape_str(c.shape));
  Tensor dots = sum_axis(mul(w, c), 1);  // [T_w]
  return scale(logsumexp_axis(scale(dots, gamma2), 0), 1.0f / gamma2);
}

Tensor l2w_loss(const std::vector<Tensor>& locals, const std::vector<Tensor>& words,
                float gamma1, float gamma2, float gamma3) {
  if (locals.empty() || locals.size() != words.size())
    throw std::invalid_argument("l2w_loss: batch sizes differ");
  int n = static_cast<int>(locals.size());
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<Tensor> entries;
    entries.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
      L2wAttentionOut att = l2w_attention(words[static_cast<size_t>(k)], locals[static_cast<size_t>(i)], gamma1);
      entries.push_back(reshape(l2w_score(words[static_cast<size_t>(k)], att.context, gamma2), {1}));
    }
    rows.push_back(concat(entries, 0));  // [N]
  }
  Tensor scores = stack_rows(rows);      // [N,N], scores[i][k] = S(l_i, w_k)
  return info_nce_diag(scale(scores, gamma3));
}

Tensor f2r_loss(const Tensor& g_fake, const Tensor& g_real, float tau) {
  check_pair(g_fake, g_real, "f2r_loss");
  if (g_fake.shape[0] < 2) throw std::invalid_argument("f2r_loss: needs at least 2 samples");
  Tensor sims = scale(matmul(g_fake, transpose(detach(g_real))), 1.0f / tau);
  return info_nce_diag(sims);
}

Tensor occ_loss(const Tensor& g, const Tensor& s, float tau) {
  check_pair(g, s, "occ_loss");
  int n = g.shape[0];
  Tensor eye = Tensor::eye(n);
  Tensor off_diag = add_scalar(scale(eye, -1.0f), 1.0f);
  Tensor gg = scale(matmul(g, transpose(g)), 1.0f / tau);
  Tensor gs = scale(matmul(g, transpose(s)), 1.0f / tau);
  // row i holds g_i.s_i on the diagonal and g_i.g_k off it
  Tensor m = add(mul(gg, off_diag), mul(gs, eye));
  return info_nce_diag(m);
}

namespace {

double term_value(const Tensor& t) { return static_cast<double>(t.scalar()); }

}  // namespace

ComposedLoss compose_d_losses(const BatchFeatures& f, const ContrastiveConfig& cfg) {
  ComposedLoss out;
  Tensor total = hinge_d(f.real_logits, f.fake_logits);
  out.terms.adv = term_value(total);
  if (cfg.w_g2s != 0.0f) {
    Tensor t = g2s_loss(f.g_real, f.s_embed, cfg.tau);
    out.terms.g2s = term_value(t);
    total = add(total, scale(t, cfg.w_g2s));
  }
  if (cfg.w_l2w != 0.0f) {
    Tensor t = l2w_loss(f.l_real, f.w_embed, cfg.gamma1, cfg.gamma2, cfg.gamma3);
    out.terms.l2w = term_value(t);
    total = add(total, scale(t, cfg.w_l2w));
  }
  if (cfg.w_occ != 0.0f) {
    Tensor t = occ_loss(f.g_real, f.s_embed, cfg.tau);
    out.terms.occ = term_value(t);
    total = add(total, scale(t, cfg.w_occ));
  }
  out.total = total;
  out.terms.total = term_value(total);
  return out;
}

ComposedLoss compose_g_losses(const BatchFeatures& f, const ContrastiveConfig& cfg) {
  ComposedLoss out;
  Tensor total = hinge_g(f.fake_logits);
  out.terms.adv = term_value(total);
  if (cfg.w_g2s != 0.0f) {
    Tensor t = g2s_loss(f.g_fake, f.s_embed, cfg.tau);
    out.terms.g2s = term_value(t);
    total = add(total, scale(t, cfg.w_g2s));
  }
  if (cfg.w_l2w != 0.0f) {
    Tensor t = l2w_loss(f.l_fake, f.w_embed, cfg.gamma1, cfg.gamma2, cfg.gamma3);
    out.terms.l2w = term_value(t);
    total = add(total, scale(t, cfg.w_l2w));
  }
  if (cfg.w_f2r != 0.0f) {
    Tensor t = f2r_loss(f.g_fake, f.g_real, cfg.tau);
    out.terms.f2r = term_value(t);
    total = add(total, scale(t, cfg.w_f2r));
  }
  if (cfg.w_occ != 0.0f) {
    Tensor t = occ_loss(f.g_fake, f.s_embed, cfg.tau);
    out.terms.occ = term_value(t);
    total = add(total, scale(t, cfg.w_occ));
  }
  out.total = total;
  out.terms.total = term_value(total);
  return out;
}

std::string loss_report_json(const LossReport& r) {
  const LossTerms& side = r.phase == 'd' ? r.d : r.g;
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["d_total"] = r.d.total;
  j["g_total"] = r.g.total;
  j["adv_d"] = r.d.adv;
  j["adv_g"] = r.g.adv;
  j["g2s"] = side.g2s;
  j["l2w"] = side.l2w;
  j["f2r"] = r.g.f2r;
  j["occ"] = side.occ;
  return j.dump();
}

}  // namespace tfca
