#pragma once

// Dense f32 tensors (rank <= 4, row-major) with reverse-mode autodiff on an
// explicit tape. Feature grids follow the (F, T, C) axis order repo-wide.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tfca/rng.hpp"

namespace tfca {

using Shape = std::vector<int>;

class Tape;

int shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Immutable after construction; safe to share read-only across threads.
// When `tape` is set, `node` identifies this tensor on that tape.
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<float>> data;
  Tape* tape = nullptr;
  int node = -1;
  // Full-precision readout carried by rank-0 reduction results (and scalar
  // arithmetic on them). Finite-difference checks need it: an f32 readout
  // alone floors the achievable relative error near 1e-3.
  std::shared_ptr<const double> precise;
  // f64 values computed alongside the f32 data while a PreciseForwardGuard
  // is active; absent otherwise.
  std::shared_ptr<const std::vector<double>> shadow;

  Tensor() = default;
  Tensor(Shape s, std::shared_ptr<std::vector<float>> d, Tape* tp = nullptr, int n = -1)
      : shape(std::move(s)), data(std::move(d)), tape(tp), node(n) {}

  int rank() const { return static_cast<int>(shape.size()); }
  int numel() const { return shape_numel(shape); }
  bool tracked() const { return tape != nullptr && node >= 0; }

  const float* ptr() const { return data->data(); }
  float operator[](int i) const { return (*data)[i]; }

  // Value of a rank-0 or single-element tensor.
  float scalar() const;
  // scalar() at full precision when the op chain preserved it.
  double scalar_precise() const;
  bool all_finite() const;

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, float v);
  static Tensor from(Shape s, std::vector<float> v);
  static Tensor scalar_of(float v);
  static Tensor randn(Shape s, Rng& rng, float stddev = 1.0f);
  static Tensor eye(int n);
};

// Named trainable storage. The trainer mutates `value` in place between
// tapes; tensors handed out by constant()/watch share the buffer.
struct Param {
  std::string name;
  Shape shape;
  std::shared_ptr<std::vector<float>> value;

  Param(std::string nm, Shape s, std::vector<float> v)
      : name(std::move(nm)), shape(std::move(s)),
        value(std::make_shared<std::vector<float>>(std::move(v))) {}

  int numel() const { return shape_numel(shape); }
  Tensor constant() const { return Tensor(shape, value); }
};

using ParamPtr = std::shared_ptr<Param>;

// Reverse-mode tape. Single-owner: build the graph and call backward on one
// thread. Node order is creation order, which is topological by
// construction; backward walks it once in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracks an existing value as a leaf.
  Tensor leaf(const Tensor& value);
  // Tracks a parameter, deduplicated: watching the same Param twice on one
  // tape returns the same node so gradients accumulate.
  Tensor watch(const Param& p);
  Tensor watch(const ParamPtr& p) { return watch(*p); }

  // Seeds d(loss)=1 and propagates. Resets all gradient buffers first, so
  // repeated calls are deterministic and identical.
  void backward(const Tensor& loss);

  std::span<const float> grad(const Tensor& t) const;
  // Gradient of a watched parameter; zeros if it never reached the loss.
  std::vector<float> grad_of(const Param& p) const;

  size_t num_nodes() const { return nodes_.size(); }

  // -- below is op-implementation surface --
  // Records an op node; the backprop closure receives the tape and the
  // node's own id so it can read its output gradient.
  int push_op(int numel, std::vector<int> inputs, std::function<void(Tape&, int)> backprop);
  int push_leaf(int numel);
  std::vector<float>& grad_buf(int node) { return nodes_[static_cast<size_t>(node)].grad; }

 private:
  struct Node {
    int numel;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> backprop;  // empty for leaves
    std::vector<float> grad;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<const Param*, int>> watched_;
  bool ran_backward_ = false;
};

// ---- ops ----
// Every op records its own gradient when any input is tracked. Binary ops
// broadcast either by stretching size-1 axes at equal rank, or by extending
// the lower-rank operand with trailing axes when its shape matches the
// leading extents of the other (an F x T map against an F x T x C grid
// multiplies every channel).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor exp(const Tensor& a);            // input clamped at 80 so f32 never overflows
Tensor log(const Tensor& a);            // log(x + 1e-12)
Tensor leaky_relu(const Tensor& a, float slope);
inline Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0f); }
Tensor sigmoid(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& a, const std::vector<int>& perm);
inline Tensor transpose(const Tensor& a) { return transpose(a, {1, 0}); }
Tensor reshape(const Tensor& a, Shape s);
Tensor concat(const std::vector<Tensor>& parts, int axis);

Tensor softmax_axis(const Tensor& a, int axis);      // max-subtracted
Tensor logsumexp_axis(const Tensor& a, int axis);    // collapses axis
Tensor sum_axis(const Tensor& a, int axis);          // collapses axis
Tensor mean_axis(const Tensor& a, int axis);         // collapses axis
Tensor sum_all(const Tensor& a);                     // rank-0 scalar
Tensor mean_all(const Tensor& a);
Tensor l2_normalize(const Tensor& a, int axis);      // all-zero slices pass through

// x: [F,T,Cin], kernel: [kh,kw,Cin,Cout], odd kernel, same padding.
// Output spatial extents are ceil(input/stride).
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride);
Tensor upsample_nearest(const Tensor& x, int factor);

Tensor detach(const Tensor& a);

// Rows stacked along a new leading axis; every row must share one shape.
Tensor stack_rows(const std::vector<Tensor>& rows);

// Names of all differentiable ops, in the order the grad-check table
// reports them.
const std::vector<std::string>& differentiable_op_names();

// While an instance is alive, every op also evaluates its forward at f64
// from the f32 inputs and stores it in Tensor::shadow. Central differences
// of an f32-only forward drown in output rounding (measured ~7e-4 absolute
// on attention-sized graphs), so the checker runs its probe evaluations
// under this guard. Normal training and inference never enable it.
class PreciseForwardGuard {
 public:
  PreciseForwardGuard();
  ~PreciseForwardGuard();
  PreciseForwardGuard(const PreciseForwardGuard&) = delete;
};
bool precise_forward_enabled();

// ---- finite differences ----
// Central-difference check of backward() against a scalar-valued forward
// function. f must watch the given params on the tape it receives. The
// probe evaluations run under PreciseForwardGuard. Returns max over
// coordinates of |a-b| / max(|a|,|b|,1e-8).
double finite_diff_check(const std::function<Tensor(Tape&)>& f,
                         const std::vector<ParamPtr>& params, float eps);

// ---- TSR file format ----
// "TSR1", u8 rank, rank x u32 LE extents, numel x f32 LE row-major.
void save_tsr(const std::string& path, const Tensor& t);
Tensor load_tsr(const std::string& path);

}  // namespace tfca
