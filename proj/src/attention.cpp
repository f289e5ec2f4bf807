#include "tfca/attention.hpp"

#include <stdexcept>

namespace tfca {

static ParamPtr gauss_param(const std::string& name, Shape shape, Rng& rng, float stddev) {
  int n = shape_numel(shape);
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal() * stddev;
  return std::make_shared<Param>(name, std::move(shape), std::move(v));
}

static ParamPtr zero_param(const std::string& name, Shape shape) {
  int n = shape_numel(shape);
  return std::make_shared<Param>(name, std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

SelfTfcaParams make_self_tfca_params(const std::string& prefix, int c_x, int c_h, Rng& rng) {
  SelfTfcaParams p;
  p.q_f = gauss_param(prefix + ".q_f", {c_x, c_h}, rng, 0.02f);
  p.k_f = gauss_param(prefix + ".k_f", {c_x, c_h}, rng, 0.02f);
  p.q_t = gauss_param(prefix + ".q_t", {c_x, c_h}, rng, 0.02f);
  p.k_t = gauss_param(prefix + ".k_t", {c_x, c_h}, rng, 0.02f);
  p.v = zero_param(prefix + ".v", {c_x, c_x});
  return p;
}

MultiTfcaParams make_multi_tfca_params(const std::string& prefix, int c_x, int c_c, int c_h,
                                       Rng& rng) {
  MultiTfcaParams p;
  p.q_f = gauss_param(prefix + ".q_f", {c_c, c_h}, rng, 0.02f);
  p.q_t = gauss_param(prefix + ".q_t", {c_c, c_h}, rng, 0.02f);
  p.k_f = gauss_param(prefix + ".k_f", {c_x, c_h}, rng, 0.02f);
  p.k_t = gauss_param(prefix + ".k_t", {c_x, c_h}, rng, 0.02f);
  p.v = zero_param(prefix + ".v", {c_x, c_x});
  return p;
}

void collect_params(const SelfTfcaParams& p, std::vector<ParamPtr>& out) {
  out.insert(out.end(), {p.q_f, p.k_f, p.q_t, p.k_t, p.v});
}

void collect_params(const MultiTfcaParams& p, std::vector<ParamPtr>& out) {
  out.insert(out.end(), {p.q_f, p.q_t, p.k_f, p.k_t, p.v});
}

static Tensor bind(const ParamPtr& p, Tape* tape) {
  return tape ? tape->watch(p) : p->constant();
}

std::pair<Tensor, Tensor> axis_pool(const Tensor& x) {
  if (x.rank() != 3)
    throw std::invalid_argument("axis_pool: expected [F,T,C], got " + shape_str(x.shape));
  return {mean_axis(x, 1), mean_axis(x, 0)};
}

// x + (x.v) * W with W broadcast across channels
static Tensor residual_apply(const Tensor& x, const Tensor& v, const Tensor& fused) {
  int F = x.shape[0], T = x.shape[1], C = x.shape[2];
  Tensor value = reshape(matmul(reshape(x, {F * T, C}), v), {F, T, C});
  return add(x, mul(value, fused));
}

SelfTfcaOut self_tfca(const Tensor& x, const SelfTfcaParams& p, Tape* tape) {
  if (x.rank() != 3)
    throw std::invalid_argument("self_tfca: expected [F,T,C], got " + shape_str(x.shape));
  if (x.shape[2] != p.q_f->shape[0])
    throw std::invalid_argument("self_tfca: channels " + shape_str(x.shape) +
                                " do not match params " + shape_str(p.q_f->shape));
  auto [x_f, x_t] = axis_pool(x);
  Tensor qf = matmul(x_f, bind(p.q_f, tape));  // [F, C_h]
  Tensor kf = matmul(x_f, bind(p.k_f, tape));
  Tensor qt = matmul(x_t, bind(p.q_t, tape));  // [T, C_h]
  Tensor kt = matmul(x_t, bind(p.k_t, tape));

  SelfTfcaOut o;
  o.w_f2t = softmax_axis(matmul(qf, transpose(kt)), 1);   // [F,T]
  o.w_t2f = softmax_axis(matmul(qt, transpose(kf)), 1);   // [T,F]
  o.fused = add(o.w_f2t, transpose(o.w_t2f));
  o.out = residual_apply(x, bind(p.v, tape), o.fused);
  return o;
}

MultiTfcaOut multi_tfca(const Tensor& x, const Tensor& cond, const MultiTfcaParams& p,
                        Tape* tape) {
  if (x.rank() != 3)
    throw std::invalid_argument("multi_tfca: expected [F,T,C], got " + shape_str(x.shape));
  if (cond.rank() != 2 || cond.shape[1] != p.q_f->shape[0])
    throw std::invalid_argument("multi_tfca: condition " + shape_str(cond.shape) +
                                " does not match params " + shape_str(p.q_f->shape));
  if (x.shape[2] != p.k_f->shape[0])
    throw std::invalid_argument("multi_tfca: channels " + shape_str(x.shape) +
                                " do not match params " + shape_str(p.k_f->shape));
  auto [x_f, x_t] = axis_pool(x);
  Tensor cqf = matmul(cond, bind(p.q_f, tape));  // [N, C_h]
  Tensor cqt = matmul(cond, bind(p.q_t, tape));
  Tensor kf = matmul(x_f, bind(p.k_f, tape));    // [F, C_h]
  Tensor kt = matmul(x_t, bind(p.k_t, tape));    // [T, C_h]

  MultiTfcaOut o;
  o.w_c2f = softmax_axis(matmul(cqf, transpose(kf)), 1);  // [N,F]
  o.w_c2t = softmax_axis(matmul(cqt, transpose(kt)), 1);  // [N,T]
  o.fused = matmul(transpose(o.w_c2f), o.w_c2t);          // [F,T]
  o.out = residual_apply(x, bind(p.v, tape), o.fused);
  return o;
}

}  // namespace tfca
