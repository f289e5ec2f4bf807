#include <cmath>

#include "doctest.h"
#include "tfca/gradcheck.hpp"
#include "tfca/losses.hpp"
#include "tfca/model.hpp"
#include "tfca/trainer.hpp"

using namespace tfca;

namespace {

Tensor logits(std::initializer_list<float> v) {
  return Tensor::from({static_cast<int>(v.size()), 1}, v);
}

// n mutually orthogonal unit rows
Tensor orthonormal_rows(int n, int c) {
  Tensor m = Tensor::zeros({n, c});
  for (int i = 0; i < n; ++i) (*m.data)[static_cast<size_t>(i * c + i)] = 1.0f;
  return m;
}

Tensor random_unit_rows(int n, int c, uint64_t seed) {
  Rng rng(seed);
  return l2_normalize(Tensor::randn({n, c}, rng), 1);
}

}  // namespace

TEST_CASE("hinge_d closed forms") {
  CHECK(hinge_d(logits({1, 1}), logits({-1, -1})).scalar() == doctest::Approx(0.0));
  CHECK(hinge_d(logits({0, 0}), logits({0, 0})).scalar() == doctest::Approx(2.0));
  CHECK(hinge_d(logits({2, 2}), logits({-2, -2})).scalar() == doctest::Approx(0.0));
}

TEST_CASE("hinge_g closed forms and gradient") {
  CHECK(hinge_g(logits({0, 0})).scalar() == doctest::Approx(0.0));
  CHECK(hinge_g(logits({1, 3})).scalar() == doctest::Approx(-2.0));

  auto p = std::make_shared<Param>("fake", Shape{4, 1}, std::vector<float>{0.3f, -0.2f, 1.1f, 0.5f});
  Tape tape;
  Tensor loss = hinge_g(tape.watch(p));
  tape.backward(loss);
  for (float g : tape.grad_of(*p)) CHECK(g == doctest::Approx(-0.25).epsilon(1e-6));
}

TEST_CASE("g2s closed forms") {
  // total similarity symmetry: every row identical
  Tensor same = Tensor::full({4, 8}, 0.5f);
  CHECK(g2s_loss(same, same, 0.1f).scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-5));

  // two orthogonal matched pairs at tau = 0.1
  Tensor g = orthonormal_rows(2, 4);
  double expect = std::log(1.0 + std::exp(-10.0));
  CHECK(std::abs(g2s_loss(g, g, 0.1f).scalar() - expect) < 1e-5);

  CHECK_THROWS_AS(g2s_loss(orthonormal_rows(1, 4), orthonormal_rows(1, 4), 0.1f),
                  std::invalid_argument);
}

TEST_CASE("g2s decreases as the matched similarity rises") {
  const int n = 3, c = 4;
  Tensor s = orthonormal_rows(n, c);
  double prev = 1e9;
  for (float match : {0.2f, 0.5f, 0.9f}) {
    Tensor g = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
      (*g.data)[static_cast<size_t>(i * c + i)] = match;
      (*g.data)[static_cast<size_t>(i * c + ((i + 1) % c))] = std::sqrt(1.0f - match * match);
    }
    double loss = g2s_loss(g, s, 0.5f).scalar();
    CHECK(loss < prev);
    prev = loss;
  }
}

TEST_CASE("temperature monotonicity") {
  const int n = 3, c = 4;
  Tensor s = orthonormal_rows(n, c);
  Tensor g = Tensor::zeros({n, c});
  for (int i = 0; i < n; ++i) {
    (*g.data)[static_cast<size_t>(i * c + i)] = 0.8f;
    (*g.data)[static_cast<size_t>(i * c + ((i + 1) % c))] = 0.6f;
  }
  double l1 = g2s_loss(g, s, 1.0f).scalar();
  double l05 = g2s_loss(g, s, 0.5f).scalar();
  double l01 = g2s_loss(g, s, 0.1f).scalar();
  CHECK(l05 < l1);
  CHECK(l01 < l05);
}

TEST_CASE("l2w attention") {
  // single local feature: every word's context is that feature
  Tensor w = random_unit_rows(3, 4, 1);
  Tensor l1 = random_unit_rows(1, 4, 2);
  L2wAttentionOut att = l2w_attention(w, l1, 5.0f);
  for (int i = 0; i < 3; ++i) {
    CHECK(att.alpha[i] == doctest::Approx(1.0));
    for (int c = 0; c < 4; ++c)
      CHECK(att.context[i * 4 + c] == doctest::Approx(l1[c]).epsilon(1e-6));
  }

  // sharpening: aligned local feature takes all the weight
  Tensor w1 = Tensor::from({1, 2}, {1.0f, 0.0f});
  Tensor l2 = Tensor::from({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  L2wAttentionOut sharp = l2w_attention(w1, l2, 60.0f);
  CHECK(sharp.alpha[0] == doctest::Approx(1.0).epsilon(1e-5));

  // rows sum to one
  Tensor wr = random_unit_rows(3, 4, 3);
  Tensor lr = random_unit_rows(5, 4, 4);
  L2wAttentionOut rand_att = l2w_attention(wr, lr, 5.0f);
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) s += rand_att.alpha[i * 5 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("l2w score") {
  Tensor w = random_unit_rows(1, 4, 5);
  Tensor c = random_unit_rows(1, 4, 6);
  double dot = 0.0;
  for (int i = 0; i < 4; ++i) dot += static_cast<double>(w[i]) * c[i];
  CHECK(l2w_score(w, c, 5.0f).scalar() == doctest::Approx(dot).epsilon(1e-5));

  // equal terms: a + ln(T)/gamma2
  const float a = 0.4f;
  Tensor we = Tensor::zeros({3, 2});
  Tensor ce = Tensor::zeros({3, 2});
  for (int i = 0; i < 3; ++i) {
    (*we.data)[static_cast<size_t>(i * 2)] = 1.0f;
    (*ce.data)[static_cast<size_t>(i * 2)] = a;
  }
  CHECK(l2w_score(we, ce, 5.0f).scalar() ==
        doctest::Approx(a + std::log(3.0) / 5.0).epsilon(1e-5));

  // never below the max term
  Tensor wr = random_unit_rows(4, 6, 7);
  Tensor cr = random_unit_rows(4, 6, 8);
  double mx = -1e30;
  for (int t = 0; t < 4; ++t) {
    double d = 0.0;
    for (int i = 0; i < 6; ++i) d += static_cast<double>(wr[t * 6 + i]) * cr[t * 6 + i];
    mx = std::max(mx, d);
  }
  CHECK(l2w_score(wr, cr, 5.0f).scalar() >= mx - 1e-6);
}

TEST_CASE("l2w loss") {
  std::vector<Tensor> l1 = {random_unit_rows(5, 4, 9)};
  std::vector<Tensor> w1 = {random_unit_rows(2, 4, 10)};
  CHECK(l2w_loss(l1, w1, 5.0f, 5.0f, 50.0f).scalar() == doctest::Approx(0.0));

  // identical captions and locals: all pairwise scores equal -> ln N
  std::vector<Tensor> l_same(3, random_unit_rows(5, 4, 11));
  std::vector<Tensor> w_same(3, random_unit_rows(2, 4, 12));
  CHECK(l2w_loss(l_same, w_same, 5.0f, 5.0f, 50.0f).scalar() ==
        doctest::Approx(std::log(3.0)).epsilon(1e-4));

  // matched captions aligned with their own locals, orthogonal to others
  const int n = 3, c = 6;
  std::vector<Tensor> locals, words;
  for (int i = 0; i < n; ++i) {
    Tensor l = Tensor::zeros({2, c});
    (*l.data)[static_cast<size_t>(0 * c + 2 * i)] = 1.0f;
    (*l.data)[static_cast<size_t>(1 * c + 2 * i + 1)] = 1.0f;
    locals.push_back(l);
    Tensor w = Tensor::zeros({2, c});
    (*w.data)[static_cast<size_t>(0 * c + 2 * i)] = 1.0f;
    (*w.data)[static_cast<size_t>(1 * c + 2 * i + 1)] = 1.0f;
    words.push_back(w);
  }
  CHECK(l2w_loss(locals, words, 5.0f, 5.0f, 50.0f).scalar() < 0.1);
}

TEST_CASE("f2r closed forms") {
  for (int n : {2, 4}) {
    Tensor g = orthonormal_rows(n, n);
    double expect = std::log(1.0 + (n - 1) * std::exp(-10.0));
    CHECK(std::abs(f2r_loss(g, g, 0.1f).scalar() - expect) < 1e-5);
  }
  Tensor same = Tensor::full({4, 8}, 0.25f);
  CHECK(f2r_loss(same, same, 0.1f).scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-5));
}

TEST_CASE("f2r sends no gradient into the real side or the discriminator") {
  // direct stop-gradient contract on the loss itself
  Rng prng(20);
  std::vector<float> gfv(8), grv(8);
  for (auto& v : gfv) v = prng.normal();
  for (auto& v : grv) v = prng.normal();
  auto gf = std::make_shared<Param>("gf", Shape{2, 4}, gfv);
  auto gr = std::make_shared<Param>("gr", Shape{2, 4}, grv);
  Tape tape;
  Tensor loss = f2r_loss(l2_normalize(tape.watch(gf), 1), l2_normalize(tape.watch(gr), 1), 0.5f);
  tape.backward(loss);
  bool fake_nonzero = false;
  for (float g : tape.grad_of(*gf)) fake_nonzero = fake_nonzero || g != 0.0f;
  CHECK(fake_nonzero);
  for (float g : tape.grad_of(*gr)) CHECK(g == 0.0f);

  // full pipeline: generator phase with only f2r active leaves every
  // discriminator parameter without gradient
  ModelConfig cfg;
  cfg.F = 8;
  cfg.T = 8;
  cfg.c_z = 4;
  cfg.c_c = 8;
  cfg.g_stem_channels = 4;
  cfg.g_channels = {4, 4, 4};
  cfg.d_channels = {4, 4, 4};
  cfg.c_g = 8;
  cfg.c_embed = 8;
  Rng rg(21), rd(22);
  Generator gen = make_generator(cfg, rg);
  Discriminator disc = make_discriminator(cfg, rd);
  CorpusConfig corpus = make_corpus(4, 8, 8, 23);
  SampleOptions opt;
  opt.c_c = cfg.c_c;
  opt.c_z = cfg.c_z;
  PairBatch batch = sample_batch(corpus, 2, 24, opt);

  Tape t2;
  std::vector<Tensor> fakes;
  for (int i = 0; i < 2; ++i)
    fakes.push_back(generate(batch.noises[static_cast<size_t>(i)],
                             batch.conds[static_cast<size_t>(i)], gen, &t2));
  BatchFeatures feats = extract_features(batch.mels, fakes, batch.conds, disc, nullptr);
  ContrastiveConfig cc;
  cc.w_g2s = 0.0f;
  cc.w_l2w = 0.0f;
  cc.w_occ = 0.0f;
  ComposedLoss gl = compose_g_losses(feats, cc);
  t2.backward(gl.total);
  for (const auto& p : discriminator_params(disc))
    for (float g : t2.grad_of(*p)) CHECK(g == 0.0f);
  bool any_gen_grad = false;
  for (const auto& p : generator_params(gen))
    for (float g : t2.grad_of(*p)) any_gen_grad = any_gen_grad || g != 0.0f;
  CHECK(any_gen_grad);
}

TEST_CASE("occ closed forms and monotonicity") {
  Tensor one = Tensor::full({1, 4}, 0.5f);
  CHECK(occ_loss(one, one, 0.1f).scalar() == doctest::Approx(0.0));

  Tensor g = orthonormal_rows(4, 4);
  double expect = std::log((std::exp(10.0) + 3.0) / std::exp(10.0));
  CHECK(std::abs(occ_loss(g, g, 0.1f).scalar() - expect) < 1e-5);

  // raising a cross-sample similarity raises the loss
  const int n = 3, c = 4;
  Tensor s = orthonormal_rows(n, c);
  double prev = -1e9;
  for (float cross : {0.0f, 0.3f, 0.6f}) {
    Tensor gm = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
      (*gm.data)[static_cast<size_t>(i * c + i)] = std::sqrt(1.0f - cross * cross);
      (*gm.data)[static_cast<size_t>(i * c + 3)] = cross;
    }
    double loss = occ_loss(gm, s, 0.5f).scalar();
    CHECK(loss > prev);
    prev = loss;
  }
}

TEST_CASE("uniform-symmetry value of every InfoNCE-style loss is ln N") {
  const int n = 5;
  Tensor same = Tensor::full({n, 6}, 1.0f / std::sqrt(6.0f));
  double ln_n = std::log(static_cast<double>(n));
  CHECK(g2s_loss(same, same, 0.1f).scalar() == doctest::Approx(ln_n).epsilon(1e-5));
  CHECK(f2r_loss(same, same, 0.1f).scalar() == doctest::Approx(ln_n).epsilon(1e-5));
  CHECK(occ_loss(same, same, 0.1f).scalar() == doctest::Approx(ln_n).epsilon(1e-5));
  std::vector<Tensor> l(n, random_unit_rows(4, 6, 31));
  std::vector<Tensor> w(n, random_unit_rows(2, 6, 32));
  CHECK(l2w_loss(l, w, 5.0f, 5.0f, 50.0f).scalar() == doctest::Approx(ln_n).epsilon(1e-4));
}

TEST_CASE("losses are invariant under a common batch permutation") {
  const int n = 4, c = 6;
  Tensor g = random_unit_rows(n, c, 41);
  Tensor s = random_unit_rows(n, c, 42);
  auto permute = [&](const Tensor& m) {
    // rotate rows by one
    Tensor out = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        (*out.data)[static_cast<size_t>(((i + 1) % n) * c + j)] = m[i * c + j];
    return out;
  };
  CHECK(g2s_loss(g, s, 0.1f).scalar() ==
        doctest::Approx(g2s_loss(permute(g), permute(s), 0.1f).scalar()).epsilon(1e-5));
  CHECK(occ_loss(g, s, 0.1f).scalar() ==
        doctest::Approx(occ_loss(permute(g), permute(s), 0.1f).scalar()).epsilon(1e-5));
  CHECK(f2r_loss(g, s, 0.1f).scalar() ==
        doctest::Approx(f2r_loss(permute(g), permute(s), 0.1f).scalar()).epsilon(1e-5));
}

TEST_CASE("composed losses") {
  const int n = 3, c = 8, r = 6, tw = 2;
  BatchFeatures f;
  Rng rng(51);
  f.real_logits = Tensor::randn({n, 1}, rng);
  f.fake_logits = Tensor::randn({n, 1}, rng);
  f.g_real = random_unit_rows(n, c, 52);
  f.g_fake = random_unit_rows(n, c, 53);
  f.s_embed = random_unit_rows(n, c, 54);
  for (int i = 0; i < n; ++i) {
    f.l_real.push_back(random_unit_rows(r, c, 55 + static_cast<uint64_t>(i)));
    f.l_fake.push_back(random_unit_rows(r, c, 65 + static_cast<uint64_t>(i)));
    f.w_embed.push_back(random_unit_rows(tw, c, 75 + static_cast<uint64_t>(i)));
  }

  ContrastiveConfig off;
  off.w_g2s = off.w_l2w = off.w_f2r = off.w_occ = 0.0f;
  ComposedLoss d_off = compose_d_losses(f, off);
  CHECK(d_off.terms.total ==
        doctest::Approx(hinge_d(f.real_logits, f.fake_logits).scalar()).epsilon(1e-6));
  ComposedLoss g_off = compose_g_losses(f, off);
  CHECK(g_off.terms.total == doctest::Approx(hinge_g(f.fake_logits).scalar()).epsilon(1e-6));

  ContrastiveConfig cc;  // defaults: all weights one
  ComposedLoss dl = compose_d_losses(f, cc);
  CHECK(dl.terms.total ==
        doctest::Approx(dl.terms.adv + dl.terms.g2s + dl.terms.l2w + dl.terms.occ).epsilon(1e-6));
  // the discriminator objective carries exactly four terms
  CHECK(dl.terms.f2r == 0.0);

  ComposedLoss gl = compose_g_losses(f, cc);
  CHECK(gl.terms.total == doctest::Approx(gl.terms.adv + gl.terms.g2s + gl.terms.l2w +
                                          gl.terms.f2r + gl.terms.occ)
                              .epsilon(1e-6));
  CHECK(gl.terms.f2r != 0.0);
}

TEST_CASE("loss report serializes with the fixed key set") {
  LossReport r;
  r.step = 12;
  r.phase = 'g';
  r.d.total = 1.5;
  r.g.total = 2.5;
  std::string line = loss_report_json(r);
  for (const char* key : {"\"step\"", "\"d_total\"", "\"g_total\"", "\"adv_d\"", "\"adv_g\"",
                          "\"g2s\"", "\"l2w\"", "\"f2r\"", "\"occ\""})
    CHECK(line.find(key) != std::string::npos);
  CHECK(line.find("phase") == std::string::npos);
}

TEST_CASE("loss gradients match finite differences") {
  for (uint64_t seed : {1ull, 9ull, 27ull}) {
    for (const auto& row : grad_check_losses(seed)) {
      INFO(row.name, " seed ", seed, " err ", row.err);
      CHECK(row.pass);
    }
  }
}
