#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "nfp/errors.hpp"

namespace nfp {

class Tape;

// Immutable dense tensor of doubles, rank 1 or 2, row-major. Copies are
// cheap (shared storage). A tensor is either a plain constant (no tape)
// or a node on some Tape; ops on taped tensors record backward closures.
// Value access is always safe; gradient access requires the tape to
// still be alive.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const;
  // 2-D accessors; a 1-D tensor behaves as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : shape_[0]; }

  const std::vector<double>& values() const& { return *data_; }
  // A temporary may be the buffer's only owner, so a reference into it
  // would dangle; hand back a copy instead.
  std::vector<double> values() const&& { return *data_; }
  double item() const;  // scalar value; throws DimensionError otherwise

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool requires_grad() const { return requires_grad_; }

 private:
  friend class Tape;
  std::vector<std::size_t> shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

// Gradient tape. Owns the computation graph for one backward pass.
// Single-shot: backward() may be called once; a second call throws.
// Non-movable because recorded closures hold a pointer to the tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(std::vector<std::size_t> shape, std::vector<double> values,
              bool requires_grad = true);
  // Record an interior node. `backward` receives this node's output
  // gradient and pushes contributions into parents via accumulate().
  Tensor record(std::vector<std::size_t> shape, std::vector<double> values,
                std::function<void(const std::vector<double>&)> backward);

  void backward(const Tensor& loss);
  Tensor grad(const Tensor& t) const;
  void accumulate(int node, const double* g, std::size_t count);

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return used_; }

 private:
  struct Node {
    std::size_t size;
    std::function<void(const std::vector<double>&)> backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool used_ = false;
};

// --- ops ---------------------------------------------------------------
// Each op computes its value eagerly. If no argument lives on a tape the
// result is a plain constant; arguments on two different tapes throw.
// Constant arguments simply receive no gradient.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);      // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor sum_squares(const Tensor& a);
// Row-wise L2 normalization (whole vector for rank 1). Rows with norm
// below 1e-12 throw DegenerateNormError.
Tensor l2_normalize(const Tensor& a);
// Mean cross-entropy of row-wise softmax against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels);
// max(max_{j != target} z_j - z_target, -kappa) for a single logit row.
Tensor cw_margin(const Tensor& logits, int target, double kappa);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
// Repeat a 2-D tensor's row block `times` times: [m x n] -> [times*m x n].
Tensor tile_rows(const Tensor& a, std::size_t times);

// --- optimizers ----------------------------------------------------------

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
              double lr);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long long t = 0;
};

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// --- gradient checking -----------------------------------------------------

// Builds the graph twice per probe: once for analytic gradients, then with
// central finite differences on every input element. Returns the maximum
// relative error |a - n| / max(1e-8, |a| + |n|).
double grad_check(
    const std::function<Tensor(Tape&, std::vector<Tensor>&)>& build,
    const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace nfp
