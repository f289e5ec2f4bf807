#include <cmath>

#include "doctest.h"
#include "tfca/metrics.hpp"

using namespace tfca;

namespace {

FeatureSet feature_set(const Tensor& m, const char* source = "real") {
  return FeatureSet{m, source, "test"};
}

Tensor random_features(int n, int d, uint64_t seed, float shift = 0.0f) {
  Rng rng(seed);
  Tensor m = Tensor::randn({n, d}, rng);
  if (shift != 0.0f)
    for (auto& v : *m.data) v += shift;
  return m;
}

}  // namespace

TEST_CASE("jacobi eigensolver on a known matrix") {
  std::vector<double> a = {2, 1, 1, 2};
  std::vector<double> evals, evecs;
  jacobi_eigh(a, 2, evals, evecs);
  std::sort(evals.begin(), evals.end());
  CHECK(evals[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(evals[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("frechet distance of a set with itself is zero") {
  Tensor m = random_features(200, 8, 1);
  CHECK(std::abs(frechet_distance(feature_set(m), feature_set(m))) < 1e-6);
}

TEST_CASE("frechet distance matches the 1-D analytic case") {
  // N(0,1) vs N(1,1): (mu difference)^2 + (sigma_a - sigma_b)^2 = 1
  double d = frechet_from_moments({0.0}, {1.0}, {1.0}, {1.0}, 1);
  CHECK(d == doctest::Approx(1.0).epsilon(1e-12));
  // different variances: 0 + (2-1)^2 via trace terms: 4+1-2*2 = 1
  double d2 = frechet_from_moments({0.0}, {4.0}, {0.0}, {1.0}, 1);
  CHECK(d2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("frechet distance is symmetric and nonnegative") {
  Tensor a = random_features(100, 6, 2);
  Tensor b = random_features(100, 6, 3, 0.5f);
  double ab = frechet_distance(feature_set(a), feature_set(b, "generated"));
  double ba = frechet_distance(feature_set(b, "generated"), feature_set(a));
  CHECK(ab == doctest::Approx(ba).epsilon(1e-6));
  CHECK(ab >= 0.0);

  for (uint64_t seed = 5; seed < 10; ++seed) {
    Tensor x = random_features(50, 4, seed);
    Tensor y = random_features(50, 4, seed + 100, 0.2f);
    CHECK(frechet_distance(feature_set(x), feature_set(y)) >= 0.0);
  }
}

TEST_CASE("frechet distance survives a common rotation") {
  const int n = 120, d = 5;
  Tensor a = random_features(n, d, 6);
  Tensor b = random_features(n, d, 7, 0.3f);
  // random orthogonal matrix via Gram-Schmidt on f64
  Rng rng(8);
  std::vector<std::vector<double>> q(d, std::vector<double>(static_cast<size_t>(d)));
  for (auto& row : q)
    for (auto& v : row) v = rng.normal();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += q[static_cast<size_t>(i)][static_cast<size_t>(k)] * q[static_cast<size_t>(j)][static_cast<size_t>(k)];
      for (int k = 0; k < d; ++k) q[static_cast<size_t>(i)][static_cast<size_t>(k)] -= dot * q[static_cast<size_t>(j)][static_cast<size_t>(k)];
    }
    double norm = 0.0;
    for (int k = 0; k < d; ++k) norm += q[static_cast<size_t>(i)][static_cast<size_t>(k)] * q[static_cast<size_t>(i)][static_cast<size_t>(k)];
    norm = std::sqrt(norm);
    for (int k = 0; k < d; ++k) q[static_cast<size_t>(i)][static_cast<size_t>(k)] /= norm;
  }
  auto rotate = [&](const Tensor& m) {
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += static_cast<double>(m[i * d + k]) * q[static_cast<size_t>(j)][static_cast<size_t>(k)];
        (*out.data)[static_cast<size_t>(i * d + j)] = static_cast<float>(s);
      }
    return out;
  };
  double before = frechet_distance(feature_set(a), feature_set(b));
  double after = frechet_distance(feature_set(rotate(a)), feature_set(rotate(b)));
  CHECK(after == doctest::Approx(before).epsilon(1e-4));
}

TEST_CASE("singular covariance takes the regularized path") {
  // fewer samples than feature dimensions
  Tensor a = random_features(5, 8, 9);
  double self_d = frechet_distance(feature_set(a), feature_set(a));
  CHECK(std::abs(self_d) < 1e-6);
  Tensor b = random_features(5, 8, 10, 0.4f);
  CHECK(std::isfinite(frechet_distance(feature_set(a), feature_set(b))));
  CHECK_THROWS_AS(frechet_distance(feature_set(a), feature_set(random_features(5, 4, 11))),
                  std::invalid_argument);
}

TEST_CASE("inception score closed forms and bounds") {
  Tensor same = Tensor::full({6, 4}, 0.25f);
  CHECK(inception_score(same) == doctest::Approx(1.0).epsilon(1e-9));

  const int k = 5;
  Tensor onehots = Tensor::zeros({k, k});
  for (int i = 0; i < k; ++i) (*onehots.data)[static_cast<size_t>(i * k + i)] = 1.0f;
  CHECK(inception_score(onehots) == doctest::Approx(static_cast<double>(k)).epsilon(1e-6));

  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Tensor probs = softmax_axis(Tensor::randn({7, 6}, rng, 2.0f), 1);
    double is = inception_score(probs);
    CHECK(is >= 1.0 - 1e-9);
    CHECK(is <= 6.0 + 1e-9);
  }

  Tensor bad = Tensor::full({2, 3}, 0.5f);
  CHECK_THROWS_AS(inception_score(bad), std::invalid_argument);
}

TEST_CASE("kl metric closed forms") {
  Rng rng(12);
  Tensor p = softmax_axis(Tensor::randn({4, 5}, rng), 1);
  CHECK(kl_metric(p, p) == doctest::Approx(0.0).epsilon(1e-9));

  const int k = 8;
  Tensor onehot = Tensor::zeros({1, k});
  (*onehot.data)[3] = 1.0f;
  Tensor uniform = Tensor::full({1, k}, 1.0f / k);
  CHECK(kl_metric(onehot, uniform) == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-6));

  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng r2(seed);
    Tensor a = softmax_axis(Tensor::randn({3, 6}, r2), 1);
    Tensor b = softmax_axis(Tensor::randn({3, 6}, r2), 1);
    CHECK(kl_metric(a, b) >= -1e-9);
  }

  CHECK_THROWS_AS(kl_metric(p, softmax_axis(Tensor::zeros({3, 5}), 1)), std::invalid_argument);
}

TEST_CASE("stub embedder and classifier are deterministic") {
  StubEmbedder e1(16, 16, 32, 7);
  StubEmbedder e2(16, 16, 32, 7);
  Rng rng(13);
  Tensor mel = Tensor::randn({16, 16, 1}, rng);
  CHECK(*e1.embed(mel).data == *e2.embed(mel).data);

  StubClassifier c1(16, 16, 4, 7);
  StubClassifier c2(16, 16, 4, 7);
  Tensor p1 = c1.probs(mel);
  CHECK(*p1.data == *c2.probs(mel).data);
  double s = 0.0;
  for (float v : *p1.data) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("timing report") {
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
  Rng rng(14);
  Generator g = make_generator(cfg, rng);
  std::vector<TextCond> probes = {encode_text({0}, cfg.c_c, 1, 4), encode_text({1}, cfg.c_c, 1, 4)};
  TimingReport rep = timing_report(g, probes, 20);
  CHECK(rep.params == count_params(generator_params(g)));
  CHECK(rep.mean_ms > 0.0);
  CHECK(rep.p95_ms >= rep.median_ms);
  CHECK(rep.mean_ms < 3.0 * rep.median_ms);
  CHECK_THROWS_AS(timing_report(g, probes, 5), std::invalid_argument);
}
