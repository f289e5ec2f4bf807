#pragma once

// Time-frequency cross-attention. The grid is pooled along each axis into
// frequency rows x_f [F,C] and time rows x_t [T,C]; the self variant
// attends across the two pools, the multi variant attends from an external
// condition onto each pool. Both apply the fused map to a value projection
// with a residual, so a zero value matrix makes the block an exact
// identity.

#include <optional>
#include <string>

#include "tfca/tensor.hpp"

namespace tfca {

// Projections drawn from N(0, 0.02^2); v starts at zero so the block is the
// identity map at init.
struct SelfTfcaParams {
  ParamPtr q_f, k_f, q_t, k_t;  // [C_x, C_h]
  ParamPtr v;                   // [C_x, C_x]
};

struct MultiTfcaParams {
  ParamPtr q_f, q_t;  // [C_c, C_h]
  ParamPtr k_f, k_t;  // [C_x, C_h]
  ParamPtr v;         // [C_x, C_x]
};

// Hidden width convention: half the channel width, never below 8.
inline int hidden_channels(int c_x) { return std::max(8, c_x / 2); }

SelfTfcaParams make_self_tfca_params(const std::string& prefix, int c_x, int c_h, Rng& rng);
MultiTfcaParams make_multi_tfca_params(const std::string& prefix, int c_x, int c_c, int c_h,
                                       Rng& rng);

void collect_params(const SelfTfcaParams& p, std::vector<ParamPtr>& out);
void collect_params(const MultiTfcaParams& p, std::vector<ParamPtr>& out);

// x_f[f] = mean over t of x[f,t,:]; x_t[t] = mean over f of x[f,t,:]
std::pair<Tensor, Tensor> axis_pool(const Tensor& x);

struct SelfTfcaOut {
  Tensor out;     // same shape as x
  Tensor w_f2t;   // [F,T], rows sum to 1
  Tensor w_t2f;   // [T,F], rows sum to 1
  Tensor fused;   // [F,T] = w_f2t + w_t2f^T, grand sum F+T
};

struct MultiTfcaOut {
  Tensor out;     // same shape as x
  Tensor w_c2f;   // [N,F], rows sum to 1
  Tensor w_c2t;   // [N,T], rows sum to 1
  Tensor fused;   // [F,T] = w_c2f^T . w_c2t, grand sum N
};

// When tape is non-null the block's parameters are watched on it;
// otherwise they enter as constants (frozen).
SelfTfcaOut self_tfca(const Tensor& x, const SelfTfcaParams& p, Tape* tape);
MultiTfcaOut multi_tfca(const Tensor& x, const Tensor& cond, const MultiTfcaParams& p, Tape* tape);

}  // namespace tfca
