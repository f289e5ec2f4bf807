#include "tfca/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tfca {

int shape_numel(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

static void check_shape(const Shape& s) {
  if (s.size() > 4) throw std::invalid_argument("rank > 4: " + shape_str(s));
  for (int e : s)
    if (e < 1) throw std::invalid_argument("non-positive extent: " + shape_str(s));
}

static std::shared_ptr<std::vector<float>> alloc(int n, float v = 0.0f) {
  return std::make_shared<std::vector<float>>(static_cast<size_t>(n), v);
}

float Tensor::scalar() const {
  if (numel() != 1) throw std::invalid_argument("scalar() on tensor of shape " + shape_str(shape));
  return (*data)[0];
}

double Tensor::scalar_precise() const {
  if (numel() != 1) throw std::invalid_argument("scalar_precise() on non-scalar tensor");
  if (shadow) return (*shadow)[0];
  return precise ? *precise : static_cast<double>((*data)[0]);
}

bool Tensor::all_finite() const {
  for (float v : *data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::zeros(Shape s) {
  check_shape(s);
  int n = shape_numel(s);
  return Tensor(std::move(s), alloc(n));
}

Tensor Tensor::full(Shape s, float v) {
  check_shape(s);
  int n = shape_numel(s);
  return Tensor(std::move(s), alloc(n, v));
}

Tensor Tensor::from(Shape s, std::vector<float> v) {
  check_shape(s);
  if (shape_numel(s) != static_cast<int>(v.size()))
    throw std::invalid_argument("data length " + std::to_string(v.size()) +
                                " does not match shape " + shape_str(s));
  return Tensor(std::move(s), std::make_shared<std::vector<float>>(std::move(v)));
}

Tensor Tensor::scalar_of(float v) { return Tensor(Shape{}, alloc(1, v)); }

Tensor Tensor::randn(Shape s, Rng& rng, float stddev) {
  check_shape(s);
  int n = shape_numel(s);
  auto d = alloc(n);
  for (int i = 0; i < n; ++i) (*d)[i] = rng.normal() * stddev;
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::eye(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) (*t.data)[static_cast<size_t>(i) * n + i] = 1.0f;
  return t;
}

// ---- Tape ----

int Tape::push_op(int numel, std::vector<int> inputs, std::function<void(Tape&, int)> backprop) {
  int id = static_cast<int>(nodes_.size());
  for (int in : inputs)
    if (in >= id) throw std::logic_error("tape node input does not precede it");
  nodes_.push_back(Node{numel, std::move(inputs), std::move(backprop),
                        std::vector<float>(static_cast<size_t>(numel), 0.0f)});
  return id;
}

int Tape::push_leaf(int numel) { return push_op(numel, {}, nullptr); }

Tensor Tape::leaf(const Tensor& value) {
  return Tensor(value.shape, value.data, this, push_leaf(value.numel()));
}

Tensor Tape::watch(const Param& p) {
  for (const auto& [ptr, node] : watched_)
    if (ptr == &p) return Tensor(p.shape, p.value, this, node);
  int node = push_leaf(p.numel());
  watched_.emplace_back(&p, node);
  return Tensor(p.shape, p.value, this, node);
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape));
  if (loss.tape != this || loss.node < 0)
    throw std::invalid_argument("loss tensor is not on this tape");
  if (ran_backward_)
    for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0f);
  ran_backward_ = true;
  nodes_[static_cast<size_t>(loss.node)].grad[0] = 1.0f;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    auto& n = nodes_[static_cast<size_t>(i)];
    if (n.backprop) n.backprop(*this, i);
  }
}

std::span<const float> Tape::grad(const Tensor& t) const {
  if (t.tape != this || t.node < 0)
    throw std::invalid_argument("tensor is not tracked on this tape");
  const auto& g = nodes_[static_cast<size_t>(t.node)].grad;
  return {g.data(), g.size()};
}

std::vector<float> Tape::grad_of(const Param& p) const {
  for (const auto& [ptr, node] : watched_)
    if (ptr == &p) return nodes_[static_cast<size_t>(node)].grad;
  return std::vector<float>(static_cast<size_t>(p.numel()), 0.0f);
}

static Tape* result_tape(const Tensor& a, const Tensor& b) {
  if (a.tracked() && b.tracked() && a.tape != b.tape)
    throw std::invalid_argument("operands live on different tapes");
  return a.tracked() ? a.tape : (b.tracked() ? b.tape : nullptr);
}

// ---- precise (f64) shadow forward ----

namespace {
thread_local bool g_precise_forward = false;

// Reads a tensor's values at f64: its shadow when present, else the f32
// data widened (exact).
struct ShadowView {
  const std::vector<double>* d64 = nullptr;
  const std::vector<float>* d32 = nullptr;
  double operator[](long i) const {
    return d64 ? (*d64)[static_cast<size_t>(i)] : static_cast<double>((*d32)[static_cast<size_t>(i)]);
  }
};

ShadowView shadow_view(const Tensor& t) {
  ShadowView v;
  if (t.shadow)
    v.d64 = t.shadow.get();
  else
    v.d32 = t.data.get();
  return v;
}

void attach_shadow(Tensor& t, std::vector<double> values) {
  t.shadow = std::make_shared<const std::vector<double>>(std::move(values));
}
}  // namespace

PreciseForwardGuard::PreciseForwardGuard() { g_precise_forward = true; }
PreciseForwardGuard::~PreciseForwardGuard() { g_precise_forward = false; }
bool precise_forward_enabled() { return g_precise_forward; }

// ---- broadcast machinery ----

namespace {

struct BcPlan {
  Shape out;
  int rank = 0;
  int dim[4] = {1, 1, 1, 1};
  long sa[4] = {0, 0, 0, 0};
  long sb[4] = {0, 0, 0, 0};
};

Shape pad_right(const Shape& s, int rank) {
  Shape p = s;
  while (static_cast<int>(p.size()) < rank) p.push_back(1);
  return p;
}

void fill_strides(const Shape& padded, const Shape& out, long* strides) {
  int r = static_cast<int>(out.size());
  long acc = 1;
  std::vector<long> full(static_cast<size_t>(r));
  for (int i = r - 1; i >= 0; --i) {
    full[static_cast<size_t>(i)] = acc;
    acc *= padded[static_cast<size_t>(i)];
  }
  for (int i = 0; i < r; ++i)
    strides[i] = (padded[static_cast<size_t>(i)] == 1 && out[static_cast<size_t>(i)] != 1)
                     ? 0
                     : full[static_cast<size_t>(i)];
}

BcPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  int r = static_cast<int>(std::max(a.size(), b.size()));
  Shape pa = pad_right(a, r), pb = pad_right(b, r);
  BcPlan plan;
  plan.rank = r;
  for (int i = 0; i < r; ++i) {
    int ea = pa[static_cast<size_t>(i)], eb = pb[static_cast<size_t>(i)];
    if (ea != eb && ea != 1 && eb != 1)
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                  shape_str(b) + " are not broadcast-compatible");
    plan.out.push_back(std::max(ea, eb));
  }
  fill_strides(pa, plan.out, plan.sa);
  fill_strides(pb, plan.out, plan.sb);
  for (int i = 0; i < r; ++i) plan.dim[i] = plan.out[static_cast<size_t>(i)];
  return plan;
}

// fn(out_index, a_index, b_index) over the broadcast output, row-major.
template <class F>
void bc_for_each(const BcPlan& p, F&& fn) {
  long o = 0;
  for (int i0 = 0; i0 < p.dim[0]; ++i0)
    for (int i1 = 0; i1 < p.dim[1]; ++i1)
      for (int i2 = 0; i2 < p.dim[2]; ++i2) {
        long a = i0 * p.sa[0] + i1 * p.sa[1] + i2 * p.sa[2];
        long b = i0 * p.sb[0] + i1 * p.sb[1] + i2 * p.sb[2];
        for (int i3 = 0; i3 < p.dim[3]; ++i3, ++o)
          fn(o, a + i3 * p.sa[3], b + i3 * p.sb[3]);
      }
}

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  BcPlan plan = broadcast_plan(a.shape, b.shape, name);
  int n = shape_numel(plan.out);
  auto out = alloc(n);
  const float* pa = a.ptr();
  const float* pb = b.ptr();
  float* po = out->data();
  switch (kind) {
    case BinKind::Add:
      bc_for_each(plan, [&](long o, long ia, long ib) { po[o] = pa[ia] + pb[ib]; });
      break;
    case BinKind::Sub:
      bc_for_each(plan, [&](long o, long ia, long ib) { po[o] = pa[ia] - pb[ib]; });
      break;
    case BinKind::Mul:
      bc_for_each(plan, [&](long o, long ia, long ib) { po[o] = pa[ia] * pb[ib]; });
      break;
  }
  Tape* tape = result_tape(a, b);
  Tensor res(plan.out, out, tape, -1);
  if (tape) {
    int na = a.tracked() ? a.node : -1;
    int nb = b.tracked() ? b.node : -1;
    std::vector<int> inputs;
    if (na >= 0) inputs.push_back(na);
    if (nb >= 0) inputs.push_back(nb);
    res.node = tape->push_op(
        n, inputs, [=, va = a.data, vb = b.data](Tape& t, int self) {
          const std::vector<float>& g = t.grad_buf(self);
          float* ga = na >= 0 ? t.grad_buf(na).data() : nullptr;
          float* gb = nb >= 0 ? t.grad_buf(nb).data() : nullptr;
          switch (kind) {
            case BinKind::Add:
              bc_for_each(plan, [&](long o, long ia, long ib) {
                if (ga) ga[ia] += g[static_cast<size_t>(o)];
                if (gb) gb[ib] += g[static_cast<size_t>(o)];
              });
              break;
            case BinKind::Sub:
              bc_for_each(plan, [&](long o, long ia, long ib) {
                if (ga) ga[ia] += g[static_cast<size_t>(o)];
                if (gb) gb[ib] -= g[static_cast<size_t>(o)];
              });
              break;
            case BinKind::Mul:
              bc_for_each(plan, [&](long o, long ia, long ib) {
                if (ga) ga[ia] += g[static_cast<size_t>(o)] * (*vb)[static_cast<size_t>(ib)];
                if (gb) gb[ib] += g[static_cast<size_t>(o)] * (*va)[static_cast<size_t>(ia)];
              });
              break;
          }
        });
  }
  if (a.precise && b.precise && res.rank() == 0) {
    double x = *a.precise, y = *b.precise;
    double r = kind == BinKind::Add ? x + y : (kind == BinKind::Sub ? x - y : x * y);
    res.precise = std::make_shared<const double>(r);
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a), sb = shadow_view(b);
    std::vector<double> s(static_cast<size_t>(n));
    switch (kind) {
      case BinKind::Add:
        bc_for_each(plan, [&](long o, long ia, long ib) { s[static_cast<size_t>(o)] = sa[ia] + sb[ib]; });
        break;
      case BinKind::Sub:
        bc_for_each(plan, [&](long o, long ia, long ib) { s[static_cast<size_t>(o)] = sa[ia] - sb[ib]; });
        break;
      case BinKind::Mul:
        bc_for_each(plan, [&](long o, long ia, long ib) { s[static_cast<size_t>(o)] = sa[ia] * sb[ib]; });
        break;
    }
    attach_shadow(res, std::move(s));
  }
  return res;
}

// Unary pointwise op: fwd(x) -> y, dfn(x, y) -> dy/dx, fwd64 the f64 twin.
template <class Fwd, class Dfn, class Fwd64>
Tensor unary_op(const Tensor& a, Fwd fwd, Dfn dfn, Fwd64 fwd64) {
  int n = a.numel();
  auto out = alloc(n);
  const float* pa = a.ptr();
  float* po = out->data();
  for (int i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  Tensor res(a.shape, out, a.tracked() ? a.tape : nullptr, -1);
  if (res.tape) {
    int na = a.node;
    res.node = res.tape->push_op(n, {na}, [=, va = a.data, vo = out](Tape& t, int self) {
      const std::vector<float>& g = t.grad_buf(self);
      std::vector<float>& ga = t.grad_buf(na);
      for (int i = 0; i < n; ++i)
        ga[static_cast<size_t>(i)] +=
            g[static_cast<size_t>(i)] * dfn((*va)[static_cast<size_t>(i)], (*vo)[static_cast<size_t>(i)]);
    });
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a);
    std::vector<double> s(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) s[static_cast<size_t>(i)] = fwd64(sa[i]);
    attach_shadow(res, std::move(s));
  }
  return res;
}

// Splits a shape into (outer, extent, inner) around one axis.
void axis_split(const Shape& s, int axis, int& outer, int& extent, int& inner) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                shape_str(s));
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  extent = s[static_cast<size_t>(axis)];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) inner *= s[static_cast<size_t>(i)];
}

Shape drop_axis(const Shape& s, int axis) {
  Shape out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) out.push_back(s[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

Tensor scale(const Tensor& a, float s) {
  Tensor res = unary_op(
      a, [s](float x) { return x * s; }, [s](float, float) { return s; },
      [s](double x) { return x * static_cast<double>(s); });
  if (a.precise && res.rank() == 0)
    res.precise = std::make_shared<const double>(*a.precise * static_cast<double>(s));
  return res;
}

Tensor add_scalar(const Tensor& a, float s) {
  Tensor res = unary_op(
      a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; },
      [s](double x) { return x + static_cast<double>(s); });
  if (a.precise && res.rank() == 0)
    res.precise = std::make_shared<const double>(*a.precise + static_cast<double>(s));
  return res;
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](float x) { return std::exp(std::min(x, 80.0f)); },
      [](float x, float y) { return x < 80.0f ? y : 0.0f; },
      [](double x) { return std::exp(std::min(x, 80.0)); });
}

Tensor log(const Tensor& a) {
  constexpr float kEps = 1e-12f;
  return unary_op(
      a, [](float x) { return std::log(x + kEps); },
      [](float x, float) { return 1.0f / (x + kEps); },
      [](double x) { return std::log(x + static_cast<double>(kEps)); });
}

Tensor leaky_relu(const Tensor& a, float slope) {
  return unary_op(
      a, [slope](float x) { return x > 0.0f ? x : slope * x; },
      [slope](float x, float) { return x > 0.0f ? 1.0f : slope; },
      [slope](double x) { return x > 0.0 ? x : static_cast<double>(slope) * x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](float x) {
        if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
        float e = std::exp(x);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); },
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      });
}

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape) + " x " +
                                shape_str(b.shape));
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  auto out = alloc(m * n);
  const float* pa = a.ptr();
  const float* pb = b.ptr();
  float* po = out->data();
  for (int i = 0; i < m; ++i) {
    float* orow = po + static_cast<long>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      float av = pa[static_cast<long>(i) * k + kk];
      const float* brow = pb + static_cast<long>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Tape* tape = result_tape(a, b);
  Tensor res({m, n}, out, tape, -1);
  if (tape) {
    int na = a.tracked() ? a.node : -1;
    int nb = b.tracked() ? b.node : -1;
    std::vector<int> inputs;
    if (na >= 0) inputs.push_back(na);
    if (nb >= 0) inputs.push_back(nb);
    res.node = tape->push_op(m * n, inputs, [=, va = a.data, vb = b.data](Tape& t, int self) {
      const float* g = t.grad_buf(self).data();
      if (na >= 0) {
        float* ga = t.grad_buf(na).data();
        const float* B = vb->data();
        // dA = g . B^T
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const float* grow = g + static_cast<long>(i) * n;
            const float* brow = B + static_cast<long>(kk) * n;
            float acc = 0.0f;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[static_cast<long>(i) * k + kk] += acc;
          }
      }
      if (nb >= 0) {
        float* gb = t.grad_buf(nb).data();
        const float* A = va->data();
        // dB = A^T . g
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            float av = A[static_cast<long>(i) * k + kk];
            const float* grow = g + static_cast<long>(i) * n;
            float* gbrow = gb + static_cast<long>(kk) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
      }
    });
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a), sb = shadow_view(b);
    std::vector<double> s(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        double av = sa[static_cast<long>(i) * k + kk];
        for (int j = 0; j < n; ++j)
          s[static_cast<size_t>(i) * n + static_cast<size_t>(j)] += av * sb[static_cast<long>(kk) * n + j];
      }
    attach_shadow(res, std::move(s));
  }
  return res;
}

// ---- shape ops ----

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
  int r = a.rank();
  if (static_cast<int>(perm.size()) != r)
    throw std::invalid_argument("transpose: permutation size " + std::to_string(perm.size()) +
                                " vs rank " + std::to_string(r));
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)])
      throw std::invalid_argument("transpose: invalid permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  Shape out_shape;
  for (int p : perm) out_shape.push_back(a.shape[static_cast<size_t>(p)]);

  // dst walks row-major; src offset advances by the permuted strides.
  std::vector<long> src_stride(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    src_stride[static_cast<size_t>(i)] =
        src_stride[static_cast<size_t>(i + 1)] * a.shape[static_cast<size_t>(i + 1)];
  std::vector<long> walk(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) walk[static_cast<size_t>(i)] = src_stride[static_cast<size_t>(perm[static_cast<size_t>(i)])];

  int n = a.numel();
  auto permute_copy = [r, n](const Shape& dshape, const std::vector<long>& wk,
                             const float* src, float* dst, bool accumulate) {
    std::vector<int> idx(static_cast<size_t>(std::max(r, 1)), 0);
    long soff = 0;
    for (int o = 0; o < n; ++o) {
      if (accumulate)
        dst[soff] += src[o];
      else
        dst[o] = src[soff];
      for (int ax = r - 1; ax >= 0; --ax) {
        soff += wk[static_cast<size_t>(ax)];
        if (++idx[static_cast<size_t>(ax)] < dshape[static_cast<size_t>(ax)]) break;
        soff -= wk[static_cast<size_t>(ax)] * dshape[static_cast<size_t>(ax)];
        idx[static_cast<size_t>(ax)] = 0;
      }
    }
  };

  auto out = alloc(n);
  permute_copy(out_shape, walk, a.ptr(), out->data(), false);
  Tensor res(out_shape, out, a.tracked() ? a.tape : nullptr, -1);
  if (res.tape) {
    int na = a.node;
    res.node = res.tape->push_op(n, {na}, [=](Tape& t, int self) {
      // dst-major walk maps each output grad back onto its source slot
      permute_copy(out_shape, walk, t.grad_buf(self).data(), t.grad_buf(na).data(), true);
    });
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a);
    std::vector<double> s(static_cast<size_t>(n));
    std::vector<int> idx(static_cast<size_t>(std::max(r, 1)), 0);
    long soff = 0;
    for (int o = 0; o < n; ++o) {
      s[static_cast<size_t>(o)] = sa[soff];
      for (int ax = r - 1; ax >= 0; --ax) {
        soff += walk[static_cast<size_t>(ax)];
        if (++idx[static_cast<size_t>(ax)] < out_shape[static_cast<size_t>(ax)]) break;
        soff -= walk[static_cast<size_t>(ax)] * out_shape[static_cast<size_t>(ax)];
        idx[static_cast<size_t>(ax)] = 0;
      }
    }
    attach_shadow(res, std::move(s));
  }
  return res;
}

Tensor reshape(const Tensor& a, Shape s) {
  check_shape(s);
  if (shape_numel(s) != a.numel())
    throw std::invalid_argument("reshape: " + shape_str(a.shape) + " to " + shape_str(s) +
                                " changes element count");
  Tensor res(std::move(s), a.data, a.tracked() ? a.tape : nullptr, -1);
  res.shadow = a.shadow;  // same linear layout
  if (res.tape) {
    int na = a.node;
    int n = a.numel();
    res.node = res.tape->push_op(n, {na}, [=](Tape& t, int self) {
      const std::vector<float>& g = t.grad_buf(self);
      std::vector<float>& ga = t.grad_buf(na);
      for (int i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
    });
  }
  return res;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& base = parts[0].shape;
  int r = static_cast<int>(base.size());
  if (axis < 0 || axis >= r) throw std::invalid_argument("concat: axis out of range");
  Shape out_shape = base;
  int total_axis = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.shape[static_cast<size_t>(i)] != base[static_cast<size_t>(i)])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape) + " vs " +
                                    shape_str(base));
    total_axis += p.shape[static_cast<size_t>(axis)];
  }
  out_shape[static_cast<size_t>(axis)] = total_axis;

  int outer, dummy, inner;
  axis_split(out_shape, axis, outer, dummy, inner);
  int n = shape_numel(out_shape);
  auto out = alloc(n);
  float* po = out->data();
  long row = static_cast<long>(total_axis) * inner;
  long off = 0;
  for (const auto& p : parts) {
    long blk = static_cast<long>(p.shape[static_cast<size_t>(axis)]) * inner;
    const float* ps = p.ptr();
    for (int o = 0; o < outer; ++o)
      std::memcpy(po + o * row + off, ps + o * blk, static_cast<size_t>(blk) * sizeof(float));
    off += blk;
  }

  Tape* tape = nullptr;
  for (const auto& p : parts)
    if (p.tracked()) {
      if (tape && tape != p.tape) throw std::invalid_argument("concat: operands on different tapes");
      tape = p.tape;
    }
  Tensor res(out_shape, out, tape, -1);
  if (tape) {
    std::vector<int> in_nodes;
    std::vector<long> blocks;
    for (const auto& p : parts) {
      in_nodes.push_back(p.tracked() ? p.node : -1);
      blocks.push_back(static_cast<long>(p.shape[static_cast<size_t>(axis)]) * inner);
    }
    std::vector<int> inputs;
    for (int id : in_nodes)
      if (id >= 0) inputs.push_back(id);
    res.node = tape->push_op(n, inputs, [=](Tape& t, int self) {
      const float* g = t.grad_buf(self).data();
      long part_off = 0;
      for (size_t pi = 0; pi < in_nodes.size(); ++pi) {
        long blk = blocks[pi];
        if (in_nodes[pi] >= 0) {
          float* gp = t.grad_buf(in_nodes[pi]).data();
          for (int o = 0; o < outer; ++o) {
            const float* src = g + o * row + part_off;
            float* dst = gp + o * blk;
            for (long i = 0; i < blk; ++i) dst[i] += src[i];
          }
        }
        part_off += blk;
      }
    });
  }
  if (g_precise_forward) {
    std::vector<double> s(static_cast<size_t>(n));
    long soff = 0;
    for (const auto& p : parts) {
      ShadowView sp = shadow_view(p);
      long blk = static_cast<long>(p.shape[static_cast<size_t>(axis)]) * inner;
      for (int o = 0; o < outer; ++o)
        for (long i = 0; i < blk; ++i)
          s[static_cast<size_t>(o * row + soff + i)] = sp[o * blk + i];
      soff += blk;
    }
    attach_shadow(res, std::move(s));
  }
  return res;
}

// ---- reductions / normalizations ----

Tensor softmax_axis(const Tensor& a, int axis) {
  int outer, n, inner;
  axis_split(a.shape, axis, outer, n, inner);
  auto out = alloc(a.numel());
  const float* pa = a.ptr();
  float* po = out->data();
  for (int o = 0; o < outer; ++o)
    for (int in = 0; in < inner; ++in) {
      long base = static_cast<long>(o) * n * inner + in;
      float mx = pa[base];
      for (int j = 1; j < n; ++j) mx = std::max(mx, pa[base + static_cast<long>(j) * inner]);
      double denom = 0.0;
      for (int j = 0; j < n; ++j) {
        float e = std::exp(pa[base + static_cast<long>(j) * inner] - mx);
        po[base + static_cast<long>(j) * inner] = e;
        denom += e;
      }
      float inv = static_cast<float>(1.0 / denom);
      for (int j = 0; j < n; ++j) po[base + static_cast<long>(j) * inner] *= inv;
    }
  Tensor res(a.shape, out, a.tracked() ? a.tape : nullptr, -1);
  if (res.tape) {
    int na = a.node;
    res.node = res.tape->push_op(a.numel(), {na}, [=, vo = out](Tape& t, int self) {
      const float* g = t.grad_buf(self).data();
      float* ga = t.grad_buf(na).data();
      const float* y = vo->data();
      for (int o = 0; o < outer; ++o)
        for (int in = 0; in < inner; ++in) {
          long base = static_cast<long>(o) * n * inner + in;
          float dot = 0.0f;
          for (int j = 0; j < n; ++j) {
            long ix = base + static_cast<long>(j) * inner;
            dot += g[ix] * y[ix];
          }
          for (int j = 0; j < n; ++j) {
            long ix = base + static_cast<long>(j) * inner;
            ga[ix] += y[ix] * (g[ix] - dot);
          }
        }
    });
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a);
    std::vector<double> s(static_cast<size_t>(a.numel()));
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in) {
        long base = static_cast<long>(o) * n * inner + in;
        double mx = sa[base];
        for (int j = 1; j < n; ++j) mx = std::max(mx, sa[base + static_cast<long>(j) * inner]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
          double e = std::exp(sa[base + static_cast<long>(j) * inner] - mx);
          s[static_cast<size_t>(base + static_cast<long>(j) * inner)] = e;
          denom += e;
        }
        for (int j = 0; j < n; ++j) s[static_cast<size_t>(base + static_cast<long>(j) * inner)] /= denom;
      }
    attach_shadow(res, std::move(s));
  }
  return res;
}

Tensor logsumexp_axis(const Tensor& a, int axis) {
  int outer, n, inner;
  axis_split(a.shape, axis, outer, n, inner);
  Shape out_shape = drop_axis(a.shape, axis);
  auto out = alloc(outer * inner);
  const float* pa = a.ptr();
  float* po = out->data();
  for (int o = 0; o < outer; ++o)
    for (int in = 0; in < inner; ++in) {
      long base = static_cast<long>(o) * n * inner + in;
      float mx = pa[base];
      for (int j = 1; j < n; ++j) mx = std::max(mx, pa[base + static_cast<long>(j) * inner]);
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += std::exp(static_cast<double>(pa[base + static_cast<long>(j) * inner] - mx));
      po[static_cast<long>(o) * inner + in] = static_cast<float>(mx + std::log(s));
    }
  Tensor res(out_shape, out, a.tracked() ? a.tape : nullptr, -1);
  if (res.tape) {
    int na = a.node;
    res.node = res.tape->push_op(outer * inner, {na}, [=, va = a.data, vo = out](Tape& t, int self) {
      const float* g = t.grad_buf(self).data();
      float* ga = t.grad_buf(na).data();
      const float* x = va->data();
      const float* y = vo->data();
      for (int o = 0; o < outer; ++o)
        for (int in = 0; in < inner; ++in) {
          long obase = static_cast<long>(o) * inner + in;
          long base = static_cast<long>(o) * n * inner + in;
          for (int j = 0; j < n; ++j) {
            long ix = base + static_cast<long>(j) * inner;
            ga[ix] += g[obase] * std::exp(x[ix] - y[obase]);
          }
        }
    });
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a);
    std::vector<double> s(static_cast<size_t>(outer) * inner);
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in) {
        long base = static_cast<long>(o) * n * inner + in;
        double mx = sa[base];
        for (int j = 1; j < n; ++j) mx = std::max(mx, sa[base + static_cast<long>(j) * inner]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) sum += std::exp(sa[base + static_cast<long>(j) * inner] - mx);
        s[static_cast<size_t>(o) * inner + static_cast<size_t>(in)] = mx + std::log(sum);
      }
    attach_shadow(res, std::move(s));
  }
  return res;
}

static Tensor reduce_axis(const Tensor& a, int axis, bool mean) {
  int outer, n, inner;
  axis_split(a.shape, axis, outer, n, inner);
  Shape out_shape = drop_axis(a.shape, axis);
  auto out = alloc(outer * inner);
  const float* pa = a.ptr();
  float* po = out->data();
  float w = mean ? 1.0f / static_cast<float>(n) : 1.0f;
  for (int o = 0; o < outer; ++o)
    for (int in = 0; in < inner; ++in) {
      long base = static_cast<long>(o) * n * inner + in;
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += pa[base + static_cast<long>(j) * inner];
      po[static_cast<long>(o) * inner + in] = static_cast<float>(s * w);
    }
  Tensor res(out_shape, out, a.tracked() ? a.tape : nullptr, -1);
  if (res.tape) {
    int na = a.node;
    res.node = res.tape->push_op(outer * inner, {na}, [=](Tape& t, int self) {
      const float* g = t.grad_buf(self).data();
      float* ga = t.grad_buf(na).data();
      for (int o = 0; o < outer; ++o)
        for (int in = 0; in < inner; ++in) {
          float gv = g[static_cast<long>(o) * inner + in] * w;
          long base = static_cast<long>(o) * n * inner + in;
          for (int j = 0; j < n; ++j) ga[base + static_cast<long>(j) * inner] += gv;
        }
    });
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a);
    std::vector<double> s(static_cast<size_t>(outer) * inner);
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in) {
        long base = static_cast<long>(o) * n * inner + in;
        double sum = 0.0;
        for (int j = 0; j < n; ++j) sum += sa[base + static_cast<long>(j) * inner];
        if (mean) sum /= n;
        s[static_cast<size_t>(o) * inner + static_cast<size_t>(in)] = sum;
      }
    attach_shadow(res, std::move(s));
  }
  return res;
}

Tensor sum_axis(const Tensor& a, int axis) { return reduce_axis(a, axis, false); }
Tensor mean_axis(const Tensor& a, int axis) { return reduce_axis(a, axis, true); }

static Tensor reduce_all(const Tensor& a, bool mean) {
  int n = a.numel();
  double s = 0.0;
  if (g_precise_forward && a.shadow) {
    ShadowView sa = shadow_view(a);
    for (int i = 0; i < n; ++i) s += sa[i];
  } else {
    const float* pa = a.ptr();
    for (int i = 0; i < n; ++i) s += pa[i];
  }
  if (mean) s /= n;
  float w = mean ? 1.0f / static_cast<float>(n) : 1.0f;
  auto out = alloc(1, static_cast<float>(s));
  Tensor res(Shape{}, out, a.tracked() ? a.tape : nullptr, -1);
  res.precise = std::make_shared<const double>(s);
  if (g_precise_forward) attach_shadow(res, std::vector<double>{s});
  if (res.tape) {
    int na = a.node;
    res.node = res.tape->push_op(1, {na}, [=](Tape& t, int self) {
      float gv = t.grad_buf(self)[0] * w;
      std::vector<float>& ga = t.grad_buf(na);
      for (int i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += gv;
    });
  }
  return res;
}

Tensor sum_all(const Tensor& a) { return reduce_all(a, false); }
Tensor mean_all(const Tensor& a) { return reduce_all(a, true); }

Tensor l2_normalize(const Tensor& a, int axis) {
  int outer, n, inner;
  axis_split(a.shape, axis, outer, n, inner);
  auto out = alloc(a.numel());
  std::vector<float> norms(static_cast<size_t>(outer) * inner);
  const float* pa = a.ptr();
  float* po = out->data();
  for (int o = 0; o < outer; ++o)
    for (int in = 0; in < inner; ++in) {
      long base = static_cast<long>(o) * n * inner + in;
      double sq = 0.0;
      for (int j = 0; j < n; ++j) {
        double v = pa[base + static_cast<long>(j) * inner];
        sq += v * v;
      }
      float nrm = static_cast<float>(std::sqrt(sq));
      norms[static_cast<size_t>(o) * inner + in] = nrm;
      float inv = nrm > 0.0f ? 1.0f / nrm : 1.0f;  // all-zero slice passes through
      for (int j = 0; j < n; ++j)
        po[base + static_cast<long>(j) * inner] = pa[base + static_cast<long>(j) * inner] * inv;
    }
  Tensor res(a.shape, out, a.tracked() ? a.tape : nullptr, -1);
  if (res.tape) {
    int na = a.node;
    res.node = res.tape->push_op(
        a.numel(), {na}, [=, vo = out, nrms = std::move(norms)](Tape& t, int self) {
          const float* g = t.grad_buf(self).data();
          float* ga = t.grad_buf(na).data();
          const float* y = vo->data();
          for (int o = 0; o < outer; ++o)
            for (int in = 0; in < inner; ++in) {
              long base = static_cast<long>(o) * n * inner + in;
              float nrm = nrms[static_cast<size_t>(o) * inner + in];
              if (nrm == 0.0f) {
                for (int j = 0; j < n; ++j) {
                  long ix = base + static_cast<long>(j) * inner;
                  ga[ix] += g[ix];
                }
                continue;
              }
              float dot = 0.0f;
              for (int j = 0; j < n; ++j) {
                long ix = base + static_cast<long>(j) * inner;
                dot += g[ix] * y[ix];
              }
              for (int j = 0; j < n; ++j) {
                long ix = base + static_cast<long>(j) * inner;
                ga[ix] += (g[ix] - y[ix] * dot) / nrm;
              }
            }
        });
  }
  if (g_precise_forward) {
    ShadowView sa = shadow_view(a);
    std::vector<double> s(static_cast<size_t>(a.numel()));
    for (int o = 0; o < outer; ++o)
      for (int in = 0; in < inner; ++in) {
        long base = static_cast<long>(o) * n * inner + in;
        double sq = 0.0;
        for (int j = 0; j < n; ++j) {
          double v = sa[base + static_cast<long>(j) * inner];
          sq += v * v;
        }
        double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 1.0;
        for (int j = 0; j < n; ++j) {
          long ix = base + static_cast<long>(j) * inner;
          s[static_cast<size_t>(ix)] = sa[ix] * inv;
        }
      }
    attach_shadow(res, std::move(s));
  }
  return res;
}

// ---- conv / upsample ----

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride) {
  if (x.rank() != 3 || kernel.rank() != 4)
    throw std::invalid_argument("conv2d: expected x[F,T,C] and kernel[kh,kw,Cin,Cout], got " +
                                shape_str(x.shape) + " and " + shape_str(kernel.shape));
  if (stride < 1) throw std::invalid_argument("conv2d: stride < 1");
  int F = x.shape[0], T = x.shape[1], Cin = x.shape[2];
  int kh = kernel.shape[0], kw = kernel.shape[1];
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel extents must be odd");
  if (kernel.shape[2] != Cin)
    throw std::invalid_argument("conv2d: kernel channels " + shape_str(kernel.shape) +
                                " do not match input " + shape_str(x.shape));
  int Cout = kernel.shape[3];
  int OF = (F + stride - 1) / stride;
  int OT = (T + stride - 1) / stride;
  int pad_f = std::max((OF - 1) * stride + kh - F, 0) / 2;
  int pad_t = std::max((OT - 1) * stride + kw - T, 0) / 2;

  auto out = alloc(OF * OT * Cout);
  const float* px = x.ptr();
  const float* pk = kernel.ptr();
  float* po = out->data();
  for (int of = 0; of < OF; ++of)
    for (int ot = 0; ot < OT; ++ot) {
      float* orow = po + (static_cast<long>(of) * OT + ot) * Cout;
      for (int kf = 0; kf < kh; ++kf) {
        int fi = of * stride - pad_f + kf;
        if (fi < 0 || fi >= F) continue;
        for (int kt = 0; kt < kw; ++kt) {
          int ti = ot * stride - pad_t + kt;
          if (ti < 0 || ti >= T) continue;
          const float* xrow = px + (static_cast<long>(fi) * T + ti) * Cin;
          const float* krow = pk + (static_cast<long>(kf) * kw + kt) * Cin * Cout;
          for (int ci = 0; ci < Cin; ++ci) {
            float xv = xrow[ci];
            const float* kr = krow + static_cast<long>(ci) * Cout;
            for (int co = 0; co < Cout; ++co) orow[co] += xv * kr[co];
          }
        }
      }
    }

  Tape* tape = result_tape(x, kernel);
  Tensor res({OF, OT, Cout}, out, tape, -1);
  if (tape) {
    int nx = x.tracked() ? x.node : -1;
    int nk = kernel.tracked() ? kernel.node : -1;
    std::vector<int> inputs;
    if (nx >= 0) inputs.push_back(nx);
    if (nk >= 0) inputs.push_back(nk);
    res.node = tape->push_op(
        OF * OT * Cout, inputs, [=, vx = x.data, vk = kernel.data](Tape& t, int self) {
          const float* g = t.grad_buf(self).data();
          float* gx = nx >= 0 ? t.grad_buf(nx).data() : nullptr;
          float* gk = nk >= 0 ? t.grad_buf(nk).data() : nullptr;
          const float* X = vx->data();
          const float* K = vk->data();
          for (int of = 0; of < OF; ++of)
            for (int ot = 0; ot < OT; ++ot) {
              const float* grow = g + (static_cast<long>(of) * OT + ot) * Cout;
              for (int kf = 0; kf < kh; ++kf) {
                int fi = of * stride - pad_f + kf;
                if (fi < 0 || fi >= F) continue;
                for (int kt = 0; kt < kw; ++kt) {
                  int ti = ot * stride - pad_t + kt;
                  if (ti < 0 || ti >= T) continue;
                  long xbase = (static_cast<long>(fi) * T + ti) * Cin;
                  long kbase = (static_cast<long>(kf) * kw + kt) * Cin * Cout;
                  for (int ci = 0; ci < Cin; ++ci) {
                    const float* kr = K + kbase + static_cast<long>(ci) * Cout;
                    if (gx) {
                      float acc = 0.0f;
                      for (int co = 0; co < Cout; ++co) acc += grow[co] * kr[co];
                      gx[xbase + ci] += acc;
                    }
                    if (gk) {
                      float xv = X[xbase + ci];
                      float* gkr = gk + kbase + static_cast<long>(ci) * Cout;
                      for (int co = 0; co < Cout; ++co) gkr[co] += xv * grow[co];
                    }
                  }
                }
              }
            }
        });
  }
  if (g_precise_forward) {
    ShadowView sx = shadow_view(x), sk = shadow_view(kernel);
    std::vector<double> s(static_cast<size_t>(OF) * OT * Cout, 0.0);
    for (int of = 0; of < OF; ++of)
      for (int ot = 0; ot < OT; ++ot) {
        double* orow = s.data() + (static_cast<long>(of) * OT + ot) * Cout;
        for (int kf = 0; kf < kh; ++kf) {
          int fi = of * stride - pad_f + kf;
          if (fi < 0 || fi >= F) continue;
          for (int kt = 0; kt < kw; ++kt) {
            int ti = ot * stride - pad_t + kt;
            if (ti < 0 || ti >= T) continue;
            long xbase = (static_cast<long>(fi) * T + ti) * Cin;
            long kbase = (static_cast<long>(kf) * kw + kt) * Cin * Cout;
            for (int ci = 0; ci < Cin; ++ci) {
              double xv = sx[xbase + ci];
              for (int co = 0; co < Cout; ++co)
                orow[co] += xv * sk[kbase + static_cast<long>(ci) * Cout + co];
            }
          }
        }
      }
    attach_shadow(res, std::move(s));
  }
  return res;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  if (x.rank() != 3)
    throw std::invalid_argument("upsample_nearest: expected x[F,T,C], got " + shape_str(x.shape));
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor < 1");
  int F = x.shape[0], T = x.shape[1], C = x.shape[2];
  int OF = F * factor, OT = T * factor;
  auto out = alloc(OF * OT * C);
  const float* px = x.ptr();
  float* po = out->data();
  for (int of = 0; of < OF; ++of) {
    int fi = of / factor;
    for (int ot = 0; ot < OT; ++ot) {
      int ti = ot / factor;
      const float* src = px + (static_cast<long>(fi) * T + ti) * C;
      float* dst = po + (static_cast<long>(of) * OT + ot) * C;
      for (int c = 0; c < C; ++c) dst[c] = src[c];
    }
  }
  Tensor res({OF, OT, C}, out, x.tracked() ? x.tape : nullptr, -1);
  if (res.tape) {
    int nxn = x.node;
    res.node = res.tape->push_op(OF * OT * C, {nxn}, [=](Tape& t, int self) {
      const float* g = t.grad_buf(self).data();
      float* gx = t.grad_buf(nxn).data();
      for (int of = 0; of < OF; ++of) {
        int fi = of / factor;
        for (int ot = 0; ot < OT; ++ot) {
          int ti = ot / factor;
          const float* src = g + (static_cast<long>(of) * OT + ot) * C;
          float* dst = gx + (static_cast<long>(fi) * T + ti) * C;
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    });
  }
  if (g_precise_forward) {
    ShadowView sx = shadow_view(x);
    std::vector<double> s(static_cast<size_t>(OF) * OT * C);
    for (int of = 0; of < OF; ++of)
      for (int ot = 0; ot < OT; ++ot) {
        long src = (static_cast<long>(of / factor) * T + ot / factor) * C;
        for (int c = 0; c < C; ++c)
          s[(static_cast<size_t>(of) * OT + static_cast<size_t>(ot)) * C + static_cast<size_t>(c)] = sx[src + c];
      }
    attach_shadow(res, std::move(s));
  }
  return res;
}

Tensor detach(const Tensor& a) {
  Tensor res(a.shape, a.data);
  res.shadow = a.shadow;
  return res;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(rows.size());
  for (const auto& r : rows) {
    Shape s = r.shape;
    s.insert(s.begin(), 1);
    expanded.push_back(reshape(r, s));
  }
  return concat(expanded, 0);
}

const std::vector<std::string>& differentiable_op_names() {
  static const std::vector<std::string> names = {
      "matmul",      "add",         "sub",        "mul",           "scale",
      "add_scalar",  "exp",         "log",        "leaky_relu",    "sigmoid",
      "transpose",   "reshape",     "concat",     "softmax_axis",  "logsumexp_axis",
      "sum_axis",    "mean_axis",   "sum_all",    "mean_all",      "l2_normalize",
      "conv2d",      "upsample_nearest"};
  return names;
}

// ---- finite differences ----

double finite_diff_check(const std::function<Tensor(Tape&)>& f,
                         const std::vector<ParamPtr>& params, float eps) {
  if (eps <= 0.0f) throw std::invalid_argument("finite_diff_check: eps must be positive");
  Tape tape;
  Tensor loss = f(tape);
  if (loss.numel() != 1)
    throw std::invalid_argument("finite_diff_check: f must return a scalar");
  // a constant (untracked) f has all-zero gradients on both sides
  if (loss.tracked()) tape.backward(loss);
  std::vector<std::vector<float>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(tape.grad_of(*p));

  double max_err = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = *params[pi]->value;
    for (size_t i = 0; i < value.size(); ++i) {
      float orig = value[i];
      float hi = orig + eps;
      float lo = orig - eps;
      double fp, fm;
      {
        PreciseForwardGuard precise;
        value[i] = hi;
        Tape tp;
        fp = f(tp).scalar_precise();
        value[i] = lo;
        Tape tm;
        fm = f(tm).scalar_precise();
        value[i] = orig;
      }
      // the realized perturbation after f32 rounding, not the nominal one
      double fd = (fp - fm) / (static_cast<double>(hi) - static_cast<double>(lo));
      double an = analytic[pi][i];
      double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      max_err = std::max(max_err, std::abs(an - fd) / denom);
    }
  }
  return max_err;
}

// ---- TSR I/O ----

void save_tsr(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write("TSR1", 4);
  uint8_t rank = static_cast<uint8_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&rank), 1);
  for (int e : t.shape) {
    uint32_t ext = static_cast<uint32_t>(e);
    f.write(reinterpret_cast<const char*>(&ext), 4);
  }
  f.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel()) * 4);
  if (!f) throw std::runtime_error("write failed: " + path);
}

Tensor load_tsr(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "TSR1", 4) != 0)
    throw std::runtime_error("not a TSR file: " + path);
  uint8_t rank = 0;
  f.read(reinterpret_cast<char*>(&rank), 1);
  if (!f || rank > 4) throw std::runtime_error("bad TSR rank in " + path);
  Shape shape;
  for (int i = 0; i < rank; ++i) {
    uint32_t ext = 0;
    f.read(reinterpret_cast<char*>(&ext), 4);
    shape.push_back(static_cast<int>(ext));
  }
  int n = shape_numel(shape);
  auto data = alloc(n);
  f.read(reinterpret_cast<char*>(data->data()), static_cast<std::streamsize>(n) * 4);
  if (!f) throw std::runtime_error("truncated TSR file: " + path);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace tfca
