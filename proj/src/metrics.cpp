#include "tfca/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace tfca {

// ---- symmetric eigensolver ----

void jacobi_eigh(std::vector<double> a, int n, std::vector<double>& eigenvalues,
                 std::vector<double>& eigenvectors) {
  if (static_cast<int>(a.size()) != n * n) throw std::invalid_argument("jacobi_eigh: bad size");
  std::vector<double>& v = eigenvectors;
  v.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

  auto at = [&](int r, int c) -> double& { return a[static_cast<size_t>(r) * n + c]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off < 1e-22) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = v[static_cast<size_t>(k) * n + p], vkq = v[static_cast<size_t>(k) * n + q];
          v[static_cast<size_t>(k) * n + p] = c * vkp - s * vkq;
          v[static_cast<size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
  }
  eigenvalues.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) eigenvalues[static_cast<size_t>(i)] = at(i, i);
}

namespace {

// B = sqrt(A) for symmetric PSD A, negative eigenvalues clamped to zero.
std::vector<double> sqrtm_psd(const std::vector<double>& a, int n) {
  std::vector<double> evals, evecs;
  jacobi_eigh(a, n, evals, evecs);
  std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    double s = std::sqrt(std::max(evals[static_cast<size_t>(k)], 0.0));
    if (s == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      double vik = evecs[static_cast<size_t>(i) * n + k] * s;
      for (int j = 0; j < n; ++j)
        out[static_cast<size_t>(i) * n + j] += vik * evecs[static_cast<size_t>(j) * n + k];
    }
  }
  return out;
}

std::vector<double> matmul_d(const std::vector<double>& a, const std::vector<double>& b, int n) {
  std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      double av = a[static_cast<size_t>(i) * n + k];
      for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += av * b[static_cast<size_t>(k) * n + j];
    }
  return out;
}

void moments_of(const Tensor& m, std::vector<double>& mu, std::vector<double>& cov) {
  int n = m.shape[0], d = m.shape[1];
  mu.assign(static_cast<size_t>(d), 0.0);
  const float* p = m.ptr();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += p[static_cast<long>(i) * d + j];
  for (auto& v : mu) v /= n;
  cov.assign(static_cast<size_t>(d) * d, 0.0);
  if (n < 2) return;
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      double da = p[static_cast<long>(i) * d + a] - mu[static_cast<size_t>(a)];
      for (int b = a; b < d; ++b) {
        double db = p[static_cast<long>(i) * d + b] - mu[static_cast<size_t>(b)];
        cov[static_cast<size_t>(a) * d + b] += da * db;
      }
    }
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      double v = cov[static_cast<size_t>(a) * d + b] / (n - 1);
      cov[static_cast<size_t>(a) * d + b] = v;
      cov[static_cast<size_t>(b) * d + a] = v;
    }
}

}  // namespace

double frechet_from_moments(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                            const std::vector<double>& mu_b, const std::vector<double>& cov_b,
                            int d) {
  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = mu_a[static_cast<size_t>(i)] - mu_b[static_cast<size_t>(i)];
    mean_term += diff * diff;
  }
  double tr_a = 0.0, tr_b = 0.0;
  for (int i = 0; i < d; ++i) {
    tr_a += cov_a[static_cast<size_t>(i) * d + i];
    tr_b += cov_b[static_cast<size_t>(i) * d + i];
  }
  // Tr((Sa Sb)^{1/2}) = sum sqrt(eig(sqrt(Sa) Sb sqrt(Sa)))
  std::vector<double> root_a = sqrtm_psd(cov_a, d);
  std::vector<double> prod = matmul_d(matmul_d(root_a, cov_b, d), root_a, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double s = 0.5 * (prod[static_cast<size_t>(i) * d + j] + prod[static_cast<size_t>(j) * d + i]);
      prod[static_cast<size_t>(i) * d + j] = s;
      prod[static_cast<size_t>(j) * d + i] = s;
    }
  std::vector<double> evals, evecs;
  jacobi_eigh(prod, d, evals, evecs);
  double tr_sqrt = 0.0;
  for (double e : evals) tr_sqrt += std::sqrt(std::max(e, 0.0));
  return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.matrix.rank() != 2 || b.matrix.rank() != 2 || a.matrix.shape[1] != b.matrix.shape[1])
    throw std::invalid_argument("frechet_distance: feature widths differ: " +
                                shape_str(a.matrix.shape) + " vs " + shape_str(b.matrix.shape));
  int d = a.matrix.shape[1];
  std::vector<double> mu_a, cov_a, mu_b, cov_b;
  moments_of(a.matrix, mu_a, cov_a);
  moments_of(b.matrix, mu_b, cov_b);
  bool singular = a.matrix.shape[0] <= d || b.matrix.shape[0] <= d;
  if (singular)
    for (int i = 0; i < d; ++i) {
      cov_a[static_cast<size_t>(i) * d + i] += 1e-6;
      cov_b[static_cast<size_t>(i) * d + i] += 1e-6;
    }
  return frechet_from_moments(mu_a, cov_a, mu_b, cov_b, d);
}

// ---- classifier metrics ----

static void check_prob_rows(const Tensor& probs, const char* name) {
  if (probs.rank() != 2) throw std::invalid_argument(std::string(name) + ": expected [N,K]");
  int n = probs.shape[0], k = probs.shape[1];
  const float* p = probs.ptr();
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += p[static_cast<long>(i) * k + j];
    if (std::abs(s - 1.0) > 1e-5)
      throw std::invalid_argument(std::string(name) + ": row " + std::to_string(i) +
                                  " sums to " + std::to_string(s) + ", not 1");
  }
}

double inception_score(const Tensor& probs) {
  check_prob_rows(probs, "inception_score");
  constexpr double kEps = 1e-12;
  int n = probs.shape[0], k = probs.shape[1];
  const float* p = probs.ptr();
  std::vector<double> marginal(static_cast<size_t>(k), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) marginal[static_cast<size_t>(j)] += p[static_cast<long>(i) * k + j];
  for (auto& v : marginal) v /= n;
  double mean_kl = 0.0;
  for (int i = 0; i < n; ++i) {
    double kl = 0.0;
    for (int j = 0; j < k; ++j) {
      double pij = p[static_cast<long>(i) * k + j];
      if (pij > 0.0)
        kl += pij * (std::log(pij + kEps) - std::log(marginal[static_cast<size_t>(j)] + kEps));
    }
    mean_kl += kl;
  }
  return std::exp(mean_kl / n);
}

double kl_metric(const Tensor& real_probs, const Tensor& gen_probs) {
  check_prob_rows(real_probs, "kl_metric");
  check_prob_rows(gen_probs, "kl_metric");
  if (real_probs.shape != gen_probs.shape)
    throw std::invalid_argument("kl_metric: unpaired shapes " + shape_str(real_probs.shape) +
                                " vs " + shape_str(gen_probs.shape));
  constexpr double kEps = 1e-12;
  int n = real_probs.shape[0], k = real_probs.shape[1];
  const float* pr = real_probs.ptr();
  const float* pg = gen_probs.ptr();
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) {
      double r = pr[static_cast<long>(i) * k + j];
      if (r > 0.0)
        total += r * (std::log(r + kEps) - std::log(pg[static_cast<long>(i) * k + j] + kEps));
    }
  return total / n;
}

// ---- stubs ----

StubEmbedder::StubEmbedder(int f, int t, int dim, uint64_t seed) : f_(f), t_(t), dim_(dim) {
  Rng rng(mix_seed(seed, 0xE3BD));
  weights_ = Tensor::randn({f * t, dim}, rng, 1.0f / std::sqrt(static_cast<float>(f * t)));
}

Tensor StubEmbedder::embed(const Tensor& mel) const {
  if (mel.numel() != f_ * t_)
    throw std::invalid_argument("StubEmbedder: mel shape " + shape_str(mel.shape) +
                                " does not match grid");
  return matmul(reshape(detach(mel), {1, f_ * t_}), weights_);
}

FeatureSet StubEmbedder::embed_all(const std::vector<Tensor>& mels,
                                   const std::string& source) const {
  std::vector<Tensor> rows;
  rows.reserve(mels.size());
  for (const auto& m : mels) rows.push_back(embed(m));
  FeatureSet fs;
  fs.matrix = concat(rows, 0);
  fs.source = source;
  fs.embedder = "stub-linear-" + std::to_string(dim_);
  return fs;
}

StubClassifier::StubClassifier(int f, int t, int k, uint64_t seed) : f_(f), t_(t), k_(k) {
  Rng rng(mix_seed(seed, 0xC1A5));
  weights_ = Tensor::randn({f * t, k}, rng, 1.0f / std::sqrt(static_cast<float>(f * t)));
}

Tensor StubClassifier::probs(const Tensor& mel) const {
  if (mel.numel() != f_ * t_)
    throw std::invalid_argument("StubClassifier: mel shape " + shape_str(mel.shape) +
                                " does not match grid");
  return softmax_axis(matmul(reshape(detach(mel), {1, f_ * t_}), weights_), 1);
}

Tensor StubClassifier::probs_all(const std::vector<Tensor>& mels) const {
  std::vector<Tensor> rows;
  rows.reserve(mels.size());
  for (const auto& m : mels) rows.push_back(probs(m));
  return concat(rows, 0);
}

// ---- timing ----

TimingReport timing_report(const Generator& g, const std::vector<TextCond>& probes,
                           int repetitions) {
  if (repetitions < 10) throw std::invalid_argument("timing_report: needs >= 10 repetitions");
  if (probes.empty()) throw std::invalid_argument("timing_report: no probe captions");
  Rng rng(0x7171);
  std::vector<double> ms;
  ms.reserve(static_cast<size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    Tensor z = Tensor::randn({1, g.cfg.c_z}, rng);
    const TextCond& cond = probes[static_cast<size_t>(r) % probes.size()];
    auto t0 = std::chrono::steady_clock::now();
    Tensor mel = generate(z, cond, g, nullptr);
    auto t1 = std::chrono::steady_clock::now();
    (void)mel;
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  TimingReport rep;
  for (double v : ms) rep.mean_ms += v;
  rep.mean_ms /= repetitions;
  std::sort(ms.begin(), ms.end());
  rep.median_ms = ms[ms.size() / 2];
  size_t idx = static_cast<size_t>(std::ceil(0.95 * repetitions)) - 1;
  rep.p95_ms = ms[std::min(idx, ms.size() - 1)];
  rep.params = count_params(generator_params(g));
  return rep;
}

}  // namespace tfca
