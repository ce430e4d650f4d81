#include "nfp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nfp/kernels.hpp"

namespace nfp {

namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Common tape of the arguments, or nullptr if all are constants. Two
// distinct tapes is a caller bug.
Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tape()) continue;
    if (tape && tape != t->tape())
      throw std::invalid_argument("op mixes tensors from two different tapes");
    tape = t->tape();
  }
  return tape;
}

Tensor make_result(Tape* tape, std::vector<std::size_t> shape,
                   std::vector<double> values,
                   std::function<void(const std::vector<double>&)> backward) {
  if (!tape) return Tensor(std::move(shape), std::move(values));
  return tape->record(std::move(shape), std::move(values), std::move(backward));
}

}  // namespace

// --- Tensor -----------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape.empty() || shape.size() > 2)
    throw DimensionError("tensor rank must be 1 or 2, got rank " +
                         std::to_string(shape.size()));
  if (shape_size(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  shape_ = std::move(shape);
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

std::size_t Tensor::size() const { return data_ ? data_->size() : 0; }

double Tensor::item() const {
  if (size() != 1)
    throw DimensionError("item() on tensor of size " + std::to_string(size()));
  return (*data_)[0];
}

// --- Tape -------------------------------------------------------------

Tensor Tape::leaf(std::vector<std::size_t> shape, std::vector<double> values,
                  bool requires_grad) {
  Tensor t(std::move(shape), std::move(values));
  if (!requires_grad) return t;  // plain constant, not recorded
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  t.requires_grad_ = true;
  nodes_.push_back({t.size(), nullptr});
  return t;
}

Tensor Tape::record(std::vector<std::size_t> shape, std::vector<double> values,
                    std::function<void(const std::vector<double>&)> backward) {
  Tensor t(std::move(shape), std::move(values));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  t.requires_grad_ = true;
  nodes_.push_back({t.size(), std::move(backward)});
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this)
    throw std::invalid_argument("backward: loss is not on this tape");
  if (loss.size() != 1)
    throw DimensionError("backward: loss must be scalar, has size " +
                         std::to_string(loss.size()));
  if (used_)
    throw std::logic_error("backward already ran on this tape; build a fresh "
                           "tape per backward pass");
  used_ = true;
  grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    grads_[i].assign(nodes_[i].size, 0.0);
  grads_[loss.node()][0] = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
    if (nodes_[i].backward) nodes_[i].backward(grads_[i]);
}

Tensor Tape::grad(const Tensor& t) const {
  if (t.tape() != this)
    throw std::invalid_argument("grad: tensor is not on this tape");
  if (!used_) throw std::logic_error("grad: backward has not run yet");
  return Tensor(t.shape(), grads_[t.node()]);
}

void Tape::accumulate(int node, const double* g, std::size_t count) {
  std::vector<double>& slot = grads_[node];
  for (std::size_t i = 0; i < count; ++i) slot[i] += g[i];
}

// --- elementwise ops ----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  const int na = a.node(), nb = b.node();
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, nb](const std::vector<double>& g) {
                       if (na >= 0) tape->accumulate(na, g.data(), g.size());
                       if (nb >= 0) tape->accumulate(nb, g.data(), g.size());
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] - b.values()[i];
  const int na = a.node(), nb = b.node();
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, nb](const std::vector<double>& g) {
                       if (na >= 0) tape->accumulate(na, g.data(), g.size());
                       if (nb < 0) return;
                       std::vector<double> neg(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
                       tape->accumulate(nb, neg.data(), neg.size());
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tape* tape = common_tape({&a, &b});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  const int na = a.node(), nb = b.node();
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, nb, a, b](const std::vector<double>& g) {
                       std::vector<double> tmp(g.size());
                       if (na >= 0) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           tmp[i] = g[i] * b.values()[i];
                         tape->accumulate(na, tmp.data(), tmp.size());
                       }
                       if (nb >= 0) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           tmp[i] = g[i] * a.values()[i];
                         tape->accumulate(nb, tmp.data(), tmp.size());
                       }
                     });
}

Tensor scale(const Tensor& a, double s) {
  Tape* tape = common_tape({&a});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  const int na = a.node();
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, s](const std::vector<double>& g) {
                       if (na < 0) return;
                       std::vector<double> tmp(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i)
                         tmp[i] = g[i] * s;
                       tape->accumulate(na, tmp.data(), tmp.size());
                     });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 1 || v.size() != a.cols())
    throw DimensionError("add_rowvec: want [m x n] + [n], got " +
                         shape_str(a.shape()) + " + " + shape_str(v.shape()));
  Tape* tape = common_tape({&a, &v});
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  kernels::add_rowvec(a.values().data(), v.values().data(), out.data(), m, n);
  const int na = a.node(), nv = v.node();
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, nv, m, n](const std::vector<double>& g) {
                       if (na >= 0) tape->accumulate(na, g.data(), g.size());
                       if (nv < 0) return;
                       std::vector<double> gv(n);
                       kernels::col_sum(g.data(), gv.data(), m, n);
                       tape->accumulate(nv, gv.data(), n);
                     });
}

// --- affine -------------------------------------------------------------

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2)
    throw DimensionError("affine: x and w must be rank 2");
  if (x.cols() != w.rows())
    throw DimensionError("affine: inner dims disagree, x " +
                         shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
  if (b.rank() != 1 || b.size() != w.cols())
    throw DimensionError("affine: bias must be [n] matching w columns");
  Tape* tape = common_tape({&x, &w, &b});
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  std::vector<double> out(m * n);
  kernels::matmul_nn(x.values().data(), w.values().data(), out.data(), m, k, n);
  kernels::add_rowvec(out.data(), b.values().data(), out.data(), m, n);
  const int nx = x.node(), nw = w.node(), nb = b.node();
  return make_result(
      tape, {m, n}, std::move(out),
      [tape, nx, nw, nb, x, w, m, k, n](const std::vector<double>& g) {
        if (nx >= 0) {
          std::vector<double> gx(m * k);
          kernels::matmul_nt(g.data(), w.values().data(), gx.data(), m, k, n);
          tape->accumulate(nx, gx.data(), gx.size());
        }
        if (nw >= 0) {
          std::vector<double> gw(k * n);
          kernels::matmul_tn(x.values().data(), g.data(), gw.data(), m, k, n);
          tape->accumulate(nw, gw.data(), gw.size());
        }
        if (nb >= 0) {
          std::vector<double> gb(n);
          kernels::col_sum(g.data(), gb.data(), m, n);
          tape->accumulate(nb, gb.data(), n);
        }
      });
}

// --- nonlinearities -----------------------------------------------------

Tensor relu(const Tensor& a) {
  Tape* tape = common_tape({&a});
  std::vector<double> out(a.size());
  kernels::relu_forward(a.values().data(), out.data(), a.size());
  const int na = a.node();
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, a](const std::vector<double>& g) {
                       if (na < 0) return;
                       std::vector<double> ga(g.size());
                       kernels::relu_backward(a.values().data(), g.data(),
                                              ga.data(), g.size());
                       tape->accumulate(na, ga.data(), ga.size());
                     });
}

Tensor tanh(const Tensor& a) {
  Tape* tape = common_tape({&a});
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  const int na = a.node();
  // d tanh = 1 - tanh^2; reuse the forward values
  auto vals = std::make_shared<std::vector<double>>(out);
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, vals](const std::vector<double>& g) {
                       if (na < 0) return;
                       std::vector<double> ga(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] = g[i] * (1.0 - (*vals)[i] * (*vals)[i]);
                       tape->accumulate(na, ga.data(), ga.size());
                     });
}

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  Tape* tape = common_tape({&a});
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const int na = a.node();
  const std::size_t count = a.size();
  return make_result(tape, {1}, {acc},
                     [tape, na, count](const std::vector<double>& g) {
                       if (na < 0) return;
                       std::vector<double> ga(count, g[0]);
                       tape->accumulate(na, ga.data(), count);
                     });
}

Tensor sum_squares(const Tensor& a) {
  Tape* tape = common_tape({&a});
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  const int na = a.node();
  return make_result(tape, {1}, {acc},
                     [tape, na, a](const std::vector<double>& g) {
                       if (na < 0) return;
                       std::vector<double> ga(a.size());
                       for (std::size_t i = 0; i < ga.size(); ++i)
                         ga[i] = 2.0 * a.values()[i] * g[0];
                       tape->accumulate(na, ga.data(), ga.size());
                     });
}

// --- normalization ----------------------------------------------------------

Tensor l2_normalize(const Tensor& a) {
  Tape* tape = common_tape({&a});
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = a.values()[i * n + j];
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm < 1e-12)
      throw DegenerateNormError("l2_normalize: row " + std::to_string(i) +
                                " has norm " + std::to_string(norm) +
                                " below 1e-12");
    norms[i] = norm;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.values()[i * n + j] / norm;
  }
  const int na = a.node();
  auto y = std::make_shared<std::vector<double>>(out);
  auto ns = std::make_shared<std::vector<double>>(std::move(norms));
  return make_result(tape, a.shape(), std::move(out),
                     [tape, na, y, ns, m, n](const std::vector<double>& g) {
                       if (na < 0) return;
                       // d v = (g - y * <g, y>) / norm, per row
                       std::vector<double> ga(g.size());
                       for (std::size_t i = 0; i < m; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j)
                           dot += g[i * n + j] * (*y)[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           ga[i * n + j] =
                               (g[i * n + j] - (*y)[i * n + j] * dot) / (*ns)[i];
                       }
                       tape->accumulate(na, ga.data(), ga.size());
                     });
}

// --- losses -----------------------------------------------------------------

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw DimensionError("softmax_cross_entropy: logits must be [m x K]");
  const std::size_t m = logits.rows(), kk = logits.cols();
  if (labels.size() != m)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(m) +
                         " rows vs " + std::to_string(labels.size()) +
                         " labels");
  for (int lb : labels)
    if (lb < 0 || static_cast<std::size_t>(lb) >= kk)
      throw DimensionError("softmax_cross_entropy: label " +
                           std::to_string(lb) + " out of range for K=" +
                           std::to_string(kk));
  Tape* tape = common_tape({&logits});
  // Row-stable softmax; keep probabilities for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(m * kk);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = logits.values().data() + i * kk;
    double zmax = z[0];
    for (std::size_t j = 1; j < kk; ++j) zmax = std::max(zmax, z[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < kk; ++j) denom += std::exp(z[j] - zmax);
    const double logdenom = std::log(denom);
    for (std::size_t j = 0; j < kk; ++j)
      (*probs)[i * kk + j] = std::exp(z[j] - zmax) / denom;
    loss += logdenom - (z[labels[i]] - zmax);
  }
  loss /= static_cast<double>(m);
  const int nl = logits.node();
  auto lab = std::make_shared<std::vector<int>>(labels);
  return make_result(tape, {1}, {loss},
                     [tape, nl, probs, lab, m, kk](const std::vector<double>& g) {
                       if (nl < 0) return;
                       std::vector<double> gz(m * kk);
                       const double c = g[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < kk; ++j) {
                           double p = (*probs)[i * kk + j];
                           if (static_cast<std::size_t>((*lab)[i]) == j)
                             p -= 1.0;
                           gz[i * kk + j] = p * c;
                         }
                       tape->accumulate(nl, gz.data(), gz.size());
                     });
}

Tensor cw_margin(const Tensor& logits, int target, double kappa) {
  if (logits.rows() != 1)
    throw DimensionError("cw_margin: expects a single logit row");
  const std::size_t kk = logits.cols();
  if (target < 0 || static_cast<std::size_t>(target) >= kk)
    throw DimensionError("cw_margin: target " + std::to_string(target) +
                         " out of range for K=" + std::to_string(kk));
  if (kk < 2) throw DimensionError("cw_margin: needs at least 2 classes");
  Tape* tape = common_tape({&logits});
  const double* z = logits.values().data();
  std::size_t best = target == 0 ? 1 : 0;
  for (std::size_t j = 0; j < kk; ++j) {
    if (j == static_cast<std::size_t>(target)) continue;
    if (z[j] > z[best]) best = j;  // ties keep the lowest index
  }
  const double margin = z[best] - z[target];
  const bool clamped = margin < -kappa;
  const double value = clamped ? -kappa : margin;
  const int nl = logits.node();
  const std::size_t tgt = static_cast<std::size_t>(target);
  return make_result(tape, {1}, {value},
                     [tape, nl, best, tgt, kk, clamped](
                         const std::vector<double>& g) {
                       if (nl < 0 || clamped) return;
                       std::vector<double> gz(kk, 0.0);
                       gz[best] += g[0];
                       gz[tgt] -= g[0];
                       tape->accumulate(nl, gz.data(), kk);
                     });
}

// --- shape ops -------------------------------------------------------------

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  if (a.rank() != 2) throw DimensionError("slice_rows: rank-2 tensor required");
  if (r0 >= r1 || r1 > a.rows())
    throw DimensionError("slice_rows: bad range [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") for " + std::to_string(a.rows()) +
                         " rows");
  Tape* tape = common_tape({&a});
  const std::size_t n = a.cols(), m = r1 - r0;
  std::vector<double> out(a.values().begin() + r0 * n,
                          a.values().begin() + r1 * n);
  const int na = a.node();
  const std::size_t total = a.size();
  return make_result(tape, {m, n}, std::move(out),
                     [tape, na, r0, n, total](const std::vector<double>& g) {
                       if (na < 0) return;
                       std::vector<double> ga(total, 0.0);
                       std::copy(g.begin(), g.end(), ga.begin() + r0 * n);
                       tape->accumulate(na, ga.data(), total);
                     });
}

Tensor tile_rows(const Tensor& a, std::size_t times) {
  if (a.rank() != 2) throw DimensionError("tile_rows: rank-2 tensor required");
  if (times == 0) throw DimensionError("tile_rows: times must be positive");
  Tape* tape = common_tape({&a});
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(times * m * n);
  for (std::size_t t = 0; t < times; ++t)
    std::copy(a.values().begin(), a.values().end(), out.begin() + t * m * n);
  const int na = a.node();
  return make_result(tape, {times * m, n}, std::move(out),
                     [tape, na, times, m, n](const std::vector<double>& g) {
                       if (na < 0) return;
                       std::vector<double> ga(m * n, 0.0);
                       for (std::size_t t = 0; t < times; ++t)
                         for (std::size_t i = 0; i < m * n; ++i)
                           ga[i] += g[t * m * n + i];
                       tape->accumulate(na, ga.data(), ga.size());
                     });
}

// --- optimizers --------------------------------------------------------------

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
              double lr) {
  if (params.size() != grads.size())
    throw DimensionError("sgd_step: params/grads length mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_same_shape(params[p], grads[p], "sgd_step");
    std::vector<double> next(params[p].size());
    for (std::size_t i = 0; i < next.size(); ++i)
      next[i] = params[p].values()[i] - lr * grads[p].values()[i];
    params[p] = Tensor(params[p].shape(), std::move(next));
  }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: params/grads length mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p].size(), 0.0);
      state.v[p].assign(params[p].size(), 0.0);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_same_shape(params[p], grads[p], "adam_step");
    std::vector<double> next(params[p].size());
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double g = grads[p].values()[i];
      state.m[p][i] = beta1 * state.m[p][i] + (1.0 - beta1) * g;
      state.v[p][i] = beta2 * state.v[p][i] + (1.0 - beta2) * g * g;
      const double mh = state.m[p][i] / bc1;
      const double vh = state.v[p][i] / bc2;
      next[i] = params[p].values()[i] - lr * mh / (std::sqrt(vh) + eps);
    }
    params[p] = Tensor(params[p].shape(), std::move(next));
  }
}

// --- gradient checking ---------------------------------------------------------

double grad_check(
    const std::function<Tensor(Tape&, std::vector<Tensor>&)>& build,
    const std::vector<Tensor>& inputs, double h) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& in : inputs) leaves.push_back(tape.leaf(in.shape(), in.values()));
  Tensor loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& lf : leaves) analytic.push_back(tape.grad(lf).values());

  auto forward_value = [&](const std::vector<Tensor>& probe) {
    Tape t2;
    std::vector<Tensor> lv;
    lv.reserve(probe.size());
    for (const Tensor& in : probe) lv.push_back(t2.leaf(in.shape(), in.values()));
    return build(t2, lv).item();
  };

  double max_rel = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (std::size_t i = 0; i < inputs[p].size(); ++i) {
      std::vector<double> vp = inputs[p].values();
      vp[i] += h;
      probe[p] = Tensor(inputs[p].shape(), vp);
      const double fp = forward_value(probe);
      vp[i] -= 2.0 * h;
      probe[p] = Tensor(inputs[p].shape(), vp);
      const double fm = forward_value(probe);
      probe[p] = inputs[p];
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double rel =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace nfp
