#include <cmath>
#include <vector>

#include "doctest.h"
#include "nfp/rng.hpp"
#include "nfp/tensor.hpp"

using nfp::Tape;
using nfp::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, nfp::Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("frozen forward values") {
  SUBCASE("affine") {
    Tensor x({1, 2}, {1, 1});
    Tensor w({2, 2}, {2, 3, 4, 5});
    Tensor b({2}, {1, 1});
    Tensor y = nfp::affine(x, w, b);
    CHECK(y.values() == std::vector<double>{7, 9});
  }
  SUBCASE("cross entropy of uniform logits is ln K") {
    Tensor z({1, 2}, {0, 0});
    CHECK(nfp::softmax_cross_entropy(z, {0}).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    Tensor z3({1, 3}, {1, 2, 3});
    // logsumexp(1,2,3) - 3
    const double want = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
    CHECK(nfp::softmax_cross_entropy(z3, {2}).item() ==
          doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("l2_normalize") {
    Tensor v({2}, {3, 4});
    CHECK(nfp::l2_normalize(v).values() == std::vector<double>{0.6, 0.8});
    Tensor m({2, 2}, {3, 4, 0, 2});
    auto out = nfp::l2_normalize(m).values();
    CHECK(out[0] == doctest::Approx(0.6));
    CHECK(out[3] == doctest::Approx(1.0));
  }
  SUBCASE("reductions") {
    Tensor a({3}, {1, -2, 3});
    CHECK(nfp::sum(a).item() == 2.0);
    CHECK(nfp::sum_squares(a).item() == 14.0);
  }
  SUBCASE("slice and tile") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(nfp::slice_rows(a, 1, 2).values() == std::vector<double>{3, 4});
    CHECK(nfp::tile_rows(a, 2).values() ==
          std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4});
    CHECK(nfp::tile_rows(a, 2).rows() == 4);
  }
  SUBCASE("cw_margin") {
    Tensor z({1, 3}, {1.0, 5.0, 2.0});
    CHECK(nfp::cw_margin(z, 1, 5.0).item() == doctest::Approx(-3.0));  // 2 - 5
    CHECK(nfp::cw_margin(z, 1, 2.0).item() == doctest::Approx(-2.0));  // clamped
    CHECK(nfp::cw_margin(z, 0, 0.0).item() == doctest::Approx(4.0));   // 5 - 1
  }
}

TEST_CASE("degenerate norm throws") {
  Tensor v({2}, {0, 0});
  CHECK_THROWS_AS(nfp::l2_normalize(v), nfp::DegenerateNormError);
  Tensor m({2, 2}, {1, 1, 0, 0});
  CHECK_THROWS_AS(nfp::l2_normalize(m), nfp::DegenerateNormError);
}

TEST_CASE("shape errors throw DimensionError") {
  Tensor a({2}, {1, 2});
  Tensor b({3}, {1, 2, 3});
  CHECK_THROWS_AS(nfp::add(a, b), nfp::DimensionError);
  Tensor x({1, 3}, {1, 2, 3});
  Tensor w({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(nfp::affine(x, w, a), nfp::DimensionError);
  CHECK_THROWS_AS(nfp::softmax_cross_entropy(x, {5}), nfp::DimensionError);
  CHECK_THROWS_AS(nfp::slice_rows(x, 1, 1), nfp::DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), nfp::DimensionError);
}

TEST_CASE("tape lifecycle rules") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1.0, 2.0});
  Tensor loss = nfp::sum_squares(x);

  SUBCASE("grad before backward throws") {
    CHECK_THROWS_AS(tape.grad(x), std::logic_error);
  }
  SUBCASE("backward on non-scalar throws") {
    CHECK_THROWS_AS(tape.backward(x), nfp::DimensionError);
  }
  SUBCASE("backward twice throws") {
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  }
  SUBCASE("mixed tapes throw") {
    Tape other;
    Tensor y = other.leaf({2}, {1.0, 1.0});
    CHECK_THROWS_AS(nfp::add(x, y), std::invalid_argument);
  }
  SUBCASE("gradient of sum of squares is 2x") {
    tape.backward(loss);
    CHECK(tape.grad(x).values() == std::vector<double>{2.0, 4.0});
  }
}

TEST_CASE("constants participate without gradients") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1.0, 2.0});
  Tensor c({2}, {10.0, 20.0});  // no tape
  Tensor loss = nfp::sum(nfp::mul(x, c));
  tape.backward(loss);
  CHECK(tape.grad(x).values() == std::vector<double>{10.0, 20.0});
}

TEST_CASE("ops without any taped input return plain constants") {
  Tensor a({2}, {1, 2});
  Tensor b({2}, {3, 4});
  Tensor c = nfp::add(a, b);
  CHECK(c.tape() == nullptr);
  CHECK(c.values() == std::vector<double>{4, 6});
}

TEST_CASE("relu subgradient at zero is zero") {
  Tape tape;
  Tensor x = tape.leaf({3}, {-1.0, 0.0, 2.0});
  tape.backward(nfp::sum(nfp::relu(x)));
  CHECK(tape.grad(x).values() == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("finite-difference oracle per op") {
  nfp::Rng rng(2024);
  // Inputs kept away from relu/cw kinks by the loss structure or offsets.
  SUBCASE("affine + relu + ce") {
    auto build = [](Tape&, std::vector<Tensor>& in) {
      Tensor h = nfp::relu(nfp::affine(in[0], in[1], in[2]));
      Tensor z = nfp::affine(h, in[3], in[4]);
      return nfp::softmax_cross_entropy(z, {1, 0});
    };
    std::vector<Tensor> inputs{
        random_tensor({2, 3}, rng), random_tensor({3, 4}, rng),
        random_tensor({4}, rng),    random_tensor({4, 3}, rng),
        random_tensor({3}, rng)};
    CHECK(nfp::grad_check(build, inputs) < 1e-6);
  }
  SUBCASE("l2_normalize chain") {
    auto build = [](Tape&, std::vector<Tensor>& in) {
      return nfp::sum_squares(nfp::sub(nfp::l2_normalize(in[0]),
                                       nfp::l2_normalize(in[1])));
    };
    std::vector<Tensor> inputs{random_tensor({3, 4}, rng, 0.5, 1.5),
                               random_tensor({3, 4}, rng, 0.5, 1.5)};
    CHECK(nfp::grad_check(build, inputs) < 1e-6);
  }
  SUBCASE("mul scale tanh sum") {
    auto build = [](Tape&, std::vector<Tensor>& in) {
      return nfp::sum(nfp::tanh(nfp::scale(nfp::mul(in[0], in[1]), 0.7)));
    };
    std::vector<Tensor> inputs{random_tensor({2, 3}, rng),
                               random_tensor({2, 3}, rng)};
    CHECK(nfp::grad_check(build, inputs) < 1e-6);
  }
  SUBCASE("add_rowvec slice tile") {
    auto build = [](Tape&, std::vector<Tensor>& in) {
      Tensor t = nfp::tile_rows(in[0], 3);            // [6 x 2]
      Tensor s = nfp::add_rowvec(t, in[1]);           // + rowvec
      Tensor a = nfp::slice_rows(s, 2, 5);            // [3 x 2]
      return nfp::sum_squares(a);
    };
    std::vector<Tensor> inputs{random_tensor({2, 2}, rng),
                               random_tensor({2}, rng)};
    CHECK(nfp::grad_check(build, inputs) < 1e-6);
  }
  SUBCASE("cw_margin away from ties") {
    auto build = [](Tape&, std::vector<Tensor>& in) {
      return nfp::cw_margin(in[0], 2, 0.0);
    };
    std::vector<Tensor> inputs{Tensor({1, 4}, {0.3, 1.7, -0.4, 0.9})};
    CHECK(nfp::grad_check(build, inputs) < 1e-6);
  }
}

TEST_CASE("optimizer steps") {
  SUBCASE("sgd") {
    std::vector<Tensor> params{Tensor({2}, {1.0, 2.0})};
    std::vector<Tensor> grads{Tensor({2}, {0.5, -1.0})};
    nfp::sgd_step(params, grads, 0.1);
    CHECK(params[0].values()[0] == doctest::Approx(0.95));
    CHECK(params[0].values()[1] == doctest::Approx(2.1));
  }
  SUBCASE("adam first step moves by about lr in the gradient sign") {
    std::vector<Tensor> params{Tensor({1}, {1.0})};
    std::vector<Tensor> grads{Tensor({1}, {3.0})};
    nfp::AdamState st;
    nfp::adam_step(params, grads, st, 1e-3);
    CHECK(params[0].values()[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
    CHECK(st.t == 1);
  }
}

TEST_CASE("randomized composite graphs match finite differences") {
  // Mini version of the acceptance trial battery: random shapes, random
  // values, multi-op graphs.
  nfp::Rng rng(555);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 1 + rng.below(3);
    const std::size_t d = 2 + rng.below(3);
    const std::size_t hdim = 2 + rng.below(3);
    const std::size_t kcls = 2 + rng.below(3);
    std::vector<int> labels(m);
    for (auto& l : labels) l = static_cast<int>(rng.below(kcls));
    auto build = [labels](Tape&, std::vector<Tensor>& in) {
      Tensor h = nfp::tanh(nfp::affine(in[0], in[1], in[2]));
      Tensor z = nfp::affine(h, in[3], in[4]);
      Tensor ce = nfp::softmax_cross_entropy(z, labels);
      Tensor reg = nfp::sum_squares(nfp::l2_normalize(z));
      return nfp::add(ce, nfp::scale(reg, 0.3));
    };
    std::vector<Tensor> inputs{
        random_tensor({m, d}, rng),    random_tensor({d, hdim}, rng),
        random_tensor({hdim}, rng),    random_tensor({hdim, kcls}, rng),
        random_tensor({kcls}, rng)};
    CHECK(nfp::grad_check(build, inputs) < 1e-5);
  }
}
