#pragma once

// Distribution metrics over stub embedder/classifier outputs, computed at
// f64 internally: Frechet distance between Gaussian fits, inception score,
// and paired KL. Plus single-sample inference timing.

#include <string>
#include <vector>

#include "tfca/model.hpp"
#include "tfca/tensor.hpp"

namespace tfca {

struct FeatureSet {
  Tensor matrix;         // [N, D]
  std::string source;    // "real" | "generated"
  std::string embedder;  // id of the producing embedder
};

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}); the square-root trace
// is evaluated through the symmetrized product sqrt(Sa)·Sb·sqrt(Sa) with
// negative eigenvalues clamped at zero. Singular covariances (N <= D) get
// 1e-6 I added before the square root.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// Same formula from explicit moments; cov matrices are row-major d x d.
double frechet_from_moments(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                            const std::vector<double>& mu_b, const std::vector<double>& cov_b,
                            int d);

// exp(mean_i KL(p(y|x_i) || mean_j p(y|x_j))); rows must sum to 1 +- 1e-5.
double inception_score(const Tensor& probs);

// mean over paired rows of KL(real_i || gen_i) with eps-floored logs.
double kl_metric(const Tensor& real_probs, const Tensor& gen_probs);

// Fixed seeded linear map from a flattened mel grid to a feature vector.
class StubEmbedder {
 public:
  StubEmbedder(int f, int t, int dim, uint64_t seed);
  Tensor embed(const Tensor& mel) const;  // [1, dim]
  FeatureSet embed_all(const std::vector<Tensor>& mels, const std::string& source) const;
  int dim() const { return dim_; }

 private:
  int f_, t_, dim_;
  Tensor weights_;  // [F*T, dim]
};

// Fixed seeded linear classifier mel -> vocab-size posteriors; never trained.
class StubClassifier {
 public:
  StubClassifier(int f, int t, int k, uint64_t seed);
  Tensor probs(const Tensor& mel) const;  // [1, K], softmax row
  Tensor probs_all(const std::vector<Tensor>& mels) const;  // [N, K]
  int num_classes() const { return k_; }

 private:
  int f_, t_, k_;
  Tensor weights_;  // [F*T, K]
};

struct TimingReport {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  long params = 0;
};

// Wall clock of single-sample generate() forward passes.
TimingReport timing_report(const Generator& g, const std::vector<TextCond>& probes,
                           int repetitions);

// Symmetric eigendecomposition helper (cyclic Jacobi), exposed for tests.
// a is row-major n x n and must be symmetric; eigenvalues come back
// unordered with matching columns in vectors.
void jacobi_eigh(std::vector<double> a, int n, std::vector<double>& eigenvalues,
                 std::vector<double>& eigenvectors);

}  // namespace tfca
