#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "nfp/classifier.hpp"
#include "nfp/datasets.hpp"
#include "nfp/errors.hpp"
#include "nfp/fingerprint.hpp"
#include "nfp/rng.hpp"
#include "nfp/tensor.hpp"

using namespace nfp;

namespace {

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

double vec_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// identity-logit 2D model: h(x) = x
MlpClassifier identity_model() {
  MlpClassifier m({2, 2}, 0);
  m.set_params({Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, {0, 0})});
  return m;
}

}  // namespace

TEST_CASE("direction sampling: support, determinism, validation") {
  CHECK_THROWS_AS(sample_directions(3, 2, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_directions(0, 2, 0.1, 1), std::invalid_argument);

  const auto dx = sample_directions(1000, 100, 0.3, 42);  // 1e5 coordinates
  REQUIRE(dx.size() == 100000);
  double max_abs = 0.0;
  for (double v : dx) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs <= 0.3);
  CHECK(max_abs > 0.29);  // fills its support

  CHECK(sample_directions(4, 3, 0.1, 7) == sample_directions(4, 3, 0.1, 7));
  CHECK(sample_directions(4, 3, 0.1, 7) != sample_directions(4, 3, 0.1, 8));
}

TEST_CASE("structured targets put +a off-class and -b on-class") {
  const auto dy = structured_targets(3, 10, 0.25, 0.75);
  REQUIRE(dy.size() == 3 * 10 * 10);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t cls = 0; cls < 10; ++cls) {
      const double* row = dy.data() + (i * 10 + cls) * 10;
      double sq = 0.0;
      for (std::size_t c = 0; c < 10; ++c) {
        CHECK(row[c] == (c == cls ? -0.75 : 0.25));
        sq += row[c] * row[c];
      }
      CHECK(std::sqrt(sq) == doctest::Approx(std::sqrt(1.125)));  // ~1.0607
    }

  const auto two = structured_targets(1, 2, 1.0, 1.0);
  CHECK(two[0] == -1.0);  // class 0 target
  CHECK(two[1] == 1.0);
  CHECK(two[2] == 1.0);  // class 1 target
  CHECK(two[3] == -1.0);

  const auto zero = structured_targets(2, 4, 0.0, 0.0);
  for (double v : zero) CHECK(v == 0.0);

  const auto unit = structured_targets(2, 10, 0.25, 0.75, true);
  for (std::size_t r = 0; r < 2 * 10; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < 10; ++c) sq += unit[r * 10 + c] * unit[r * 10 + c];
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(structured_targets(1, 2, 0.0, 0.0, true), DegenerateNormError);
  CHECK_THROWS_AS(structured_targets(1, 2, -0.1, 0.75), std::invalid_argument);
}

TEST_CASE("random targets stay in [-0.5, 0.5] and follow the seed") {
  const auto dy = random_targets(100, 10, 5);
  REQUIRE(dy.size() == 100 * 10 * 10);
  for (double v : dy) {
    CHECK(v >= -0.5);
    CHECK(v <= 0.5);
  }
  CHECK(random_targets(3, 4, 9) == random_targets(3, 4, 9));
  CHECK(random_targets(3, 4, 9) != random_targets(3, 4, 10));
}

TEST_CASE("response is zero at dx=0 and bounded by 2") {
  MlpClassifier m({3, 8, 4}, 3);
  FingerprintSuite zero;
  zero.n_directions = 1;
  zero.num_classes = 4;
  zero.input_dim = 3;
  zero.dx.assign(3, 0.0);
  zero.dy.assign(1 * 4 * 4, 0.0);
  const auto r0 = response(m, {0.2, 0.5, 0.8}, 0, zero);
  for (double v : r0) CHECK(v == 0.0);

  Rng rng(17);
  const FingerprintSuite s = make_suite(4, 3, 4, 0.5, 0.05, 21);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(3);
    for (auto& v : x) v = rng.uniform();
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(vec_norm(response(m, x, i, s)) <= 2.0 + 1e-12);
  }
  CHECK_THROWS_AS(response(m, {0.1, 0.1, 0.1}, 4, s), DimensionError);
}

TEST_CASE("response on a linear-logit model matches the closed form") {
  // h(x) = W x with W = [[2,1],[0,1]] (row-major, inputs index rows)
  MlpClassifier m({2, 2}, 0);
  m.set_params({Tensor({2, 2}, {2.0, 0.0, 1.0, 1.0}), Tensor({2}, {0, 0})});
  FingerprintSuite s;
  s.n_directions = 1;
  s.num_classes = 2;
  s.input_dim = 2;
  s.dx = {0.03, -0.04};
  s.dy.assign(4, 0.0);

  const std::vector<double> x{0.4, 0.7};
  auto phi = [&](const std::vector<double>& p) {
    const double h0 = 2.0 * p[0] + 1.0 * p[1];
    const double h1 = 0.0 * p[0] + 1.0 * p[1];
    const double nn = std::sqrt(h0 * h0 + h1 * h1);
    return std::vector<double>{h0 / nn, h1 / nn};
  };
  const auto base = phi(x), pert = phi({x[0] + 0.03, x[1] - 0.04});
  const auto got = response(m, x, 0, s);
  CHECK(std::abs(got[0] - (pert[0] - base[0])) <= 1e-12);
  CHECK(std::abs(got[1] - (pert[1] - base[1])) <= 1e-12);
}

TEST_CASE("fingerprint loss worked examples") {
  MlpClassifier m({3, 6, 4}, 5);
  FingerprintSuite s = make_suite(3, 3, 4, 0.1, 0.05, 8);
  const std::vector<double> x{0.3, 0.6, 0.9};

  SUBCASE("targets set to the measured responses give zero loss") {
    for (std::size_t i = 0; i < s.n_directions; ++i) {
      const auto r = response(m, x, i, s);
      for (std::size_t j = 0; j < s.num_classes; ++j)
        std::copy(r.begin(), r.end(),
                  s.dy.begin() + (i * s.num_classes + j) * s.num_classes);
    }
    for (int k = 0; k < 4; ++k)
      CHECK(fingerprint_loss(m, x, k, s) == 0.0);
  }

  SUBCASE("zero targets and zero directions give zero loss") {
    std::fill(s.dx.begin(), s.dx.end(), 0.0);
    std::fill(s.dy.begin(), s.dy.end(), 0.0);
    CHECK(fingerprint_loss(m, x, 0, s) == 0.0);
  }

  SUBCASE("unit response against a perpendicular unit target scores 2") {
    // identity logits: x=(-0.5, sqrt(0.75)) and dx=(1,0) are both unit
    // norm, so F = (1, 0) exactly; against target (0,1) the squared
    // distance is 2
    MlpClassifier ident = identity_model();
    FingerprintSuite one;
    one.n_directions = 1;
    one.num_classes = 2;
    one.input_dim = 2;
    one.dx = {1.0, 0.0};
    one.dy = {0.0, 1.0, 0.0, 1.0};  // same target for both classes
    const std::vector<double> x0{-0.5, std::sqrt(0.75)};
    CHECK(fingerprint_loss(ident, x0, 0, one) ==
          doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("class index is validated") {
    CHECK_THROWS_AS(fingerprint_loss(m, x, 4, s), DimensionError);
    CHECK_THROWS_AS(fingerprint_loss(m, x, -1, s), DimensionError);
  }
}

TEST_CASE("comparison function averages unsquared distances") {
  MlpClassifier m({2, 5, 3}, 4);
  const std::vector<double> x{0.4, 0.6};

  SUBCASE("per-direction distances 1 and 3 average to 2") {
    FingerprintSuite s = make_suite(2, 2, 3, 0.1, 0.05, 3);
    // place class-0 targets at exact distance 1 then 3 from the responses
    const auto r0 = response(m, x, 0, s), r1 = response(m, x, 1, s);
    double* t0 = s.dy.data() + (0 * 3 + 0) * 3;
    double* t1 = s.dy.data() + (1 * 3 + 0) * 3;
    t0[0] = r0[0] + 1.0;
    t0[1] = r0[1];
    t0[2] = r0[2];
    t1[0] = r1[0];
    t1[1] = r1[1] - 3.0;
    t1[2] = r1[2];
    CHECK(comparison_d(m, x, 0, s) == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("at N=1 the comparison squared equals the loss") {
    const FingerprintSuite s = make_suite(1, 2, 3, 0.1, 0.05, 3);
    for (int j = 0; j < 3; ++j) {
      const double d = comparison_d(m, x, j, s);
      CHECK(d * d == doctest::Approx(fingerprint_loss(m, x, j, s))
                         .epsilon(1e-12));
    }
  }

  SUBCASE("exact-match targets give zero") {
    FingerprintSuite s = make_suite(2, 2, 3, 0.1, 0.05, 3);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto r = response(m, x, i, s);
      std::copy(r.begin(), r.end(), s.dy.begin() + (i * 3 + 1) * 3);
    }
    CHECK(comparison_d(m, x, 1, s) == 0.0);
  }
}

TEST_CASE("detection accepts iff some class comparison clears tau") {
  MlpClassifier m({2, 8, 3}, 6);
  FingerprintSuite s = make_suite(3, 2, 3, 0.1, 0.05, 11);
  const std::vector<double> x{0.25, 0.75};

  s.tau = 1e6;
  CHECK(detect(m, x, s).accepted);
  CHECK(detect_fast(m, x, s));
  s.tau = 1e-12;
  CHECK_FALSE(detect(m, x, s).accepted);
  CHECK_FALSE(detect_fast(m, x, s));

  // verdict structure: per-class scores, argmin, exact tie to comparison_d
  s.tau = 0.05;
  Rng rng(23);
  for (int t = 0; t < 40; ++t) {
    std::vector<double> p{rng.uniform(), rng.uniform()};
    const DetectionVerdict v = detect(m, p, s);
    REQUIRE(v.per_class_d.size() == 3);
    double best = v.per_class_d[0];
    int best_j = 0;
    for (int j = 0; j < 3; ++j) {
      CHECK(v.per_class_d[j] == comparison_d(m, p, j, s));
      CHECK(v.per_class_d[j] >= 0.0);
      if (v.per_class_d[j] < best) {
        best = v.per_class_d[j];
        best_j = j;
      }
    }
    CHECK(v.best_class == best_j);
    CHECK(v.threshold_used == s.tau);
    CHECK(v.accepted == (best <= s.tau));
    CHECK(detect_fast(m, p, s) == v.accepted);

    // monotone in tau: accepted at tau stays accepted at any larger tau
    FingerprintSuite wider = s;
    wider.tau = s.tau * 10.0;
    if (v.accepted) CHECK(detect(m, p, wider).accepted);
  }
}

TEST_CASE("fingerprint order does not change loss or comparison") {
  MlpClassifier m({3, 7, 4}, 9);
  const FingerprintSuite s = make_suite(5, 3, 4, 0.2, 0.05, 14);
  FingerprintSuite perm = s;
  const std::vector<std::size_t> order{3, 0, 4, 1, 2};
  for (std::size_t i = 0; i < 5; ++i) {
    std::copy(s.dx_row(order[i]), s.dx_row(order[i]) + 3,
              perm.dx.begin() + i * 3);
    for (std::size_t j = 0; j < 4; ++j)
      std::copy(s.dy_row(order[i], j), s.dy_row(order[i], j) + 4,
                perm.dy.begin() + (i * 4 + j) * 4);
  }
  const std::vector<double> x{0.2, 0.5, 0.9};
  for (int k = 0; k < 4; ++k) {
    CHECK(fingerprint_loss(m, x, k, s) ==
          doctest::Approx(fingerprint_loss(m, x, k, perm)).epsilon(1e-12));
    CHECK(comparison_d(m, x, k, s) ==
          doctest::Approx(comparison_d(m, x, k, perm)).epsilon(1e-12));
  }
}

TEST_CASE("taped fingerprint loss matches the plain value and finite differences") {
  MlpClassifier m({3, 6, 4}, 12);
  const FingerprintSuite s = make_suite(2, 3, 4, 0.1, 0.05, 19);
  const std::vector<double> x{0.3, 0.55, 0.7};

  Tape tape;
  Tensor xt = tape.leaf({1, 3}, x, true);
  Tensor loss = fingerprint_loss_graph(m.params(), m.widths(), xt, 2, s);
  CHECK(loss.item() ==
        doctest::Approx(fingerprint_loss(m, x, 2, s)).epsilon(1e-12));

  tape.backward(loss);
  const auto grad = tape.grad(xt).values();
  const double h = 1e-6;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> lo = x, hi = x;
    lo[c] -= h;
    hi[c] += h;
    const double fd = (fingerprint_loss(m, hi, 2, s) -
                       fingerprint_loss(m, lo, 2, s)) /
                      (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad[c]), 1e-8});
    CHECK(std::abs(grad[c] - fd) / scale < 1e-4);
  }
}

TEST_CASE("batched responses equal per-example responses") {
  MlpClassifier m({4, 9, 3}, 15);
  const FingerprintSuite s = make_suite(3, 4, 3, 0.15, 0.05, 22);
  Rng rng(5);
  std::vector<double> xs(5 * 4);
  for (auto& v : xs) v = rng.uniform();
  const auto batched = batch_responses(m, Tensor({5, 4}, xs), s);
  REQUIRE(batched.size() == 5 * 3 * 3);
  for (std::size_t r = 0; r < 5; ++r) {
    const std::vector<double> x(xs.begin() + r * 4, xs.begin() + (r + 1) * 4);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto one = response(m, x, i, s);
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(std::abs(batched[(r * 3 + i) * 3 + c] - one[c]) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(batch_responses(m, Tensor({1, 3}, {0.1, 0.2, 0.3}), s),
                  DimensionError);
}

TEST_CASE("min_d_scores matches per-example detection across chunk edges") {
  MlpClassifier m({2, 6, 2}, 18);
  const FingerprintSuite s = make_suite(2, 2, 2, 0.1, 0.05, 25);
  const TwoGaussians g = make_two_gaussians(150, {-1, 0}, {1, 0}, 0.2, 33);
  REQUIRE(g.data.size() == 300);  // crosses the 128-wide batching chunk
  const auto scores = min_d_scores(m, g.data, s);
  REQUIRE(scores.size() == 300);
  for (std::size_t i = 0; i < 300; ++i) {
    const DetectionVerdict v = detect(m, g.data.example(i), s);
    CHECK(std::abs(scores[i] - v.per_class_d[v.best_class]) <= 1e-12);
  }
}

TEST_CASE("suite JSON round trip is lossless and validated") {
  FingerprintSuite s = make_suite(3, 4, 3, 0.07, 0.04, 99, "random");
  const std::string p = temp_path("nfp_suite_rt.json");
  save_suite(p, s);
  const FingerprintSuite r = load_suite(p);
  CHECK(r.n_directions == s.n_directions);
  CHECK(r.num_classes == s.num_classes);
  CHECK(r.input_dim == s.input_dim);
  CHECK(r.epsilon == s.epsilon);
  CHECK(r.tau == s.tau);
  CHECK(r.seed == s.seed);
  CHECK(r.dy_mode == s.dy_mode);
  CHECK(r.dx == s.dx);  // exact doubles
  CHECK(r.dy == s.dy);
  std::remove(p.c_str());
}

TEST_CASE("suite loader rejects malformed documents") {
  const FingerprintSuite s = make_suite(2, 3, 2, 0.1, 0.05, 7);
  const std::string p = temp_path("nfp_suite_bad.json");

  SUBCASE("ragged dx") {
    save_suite(p, s);
    std::ifstream in(p);
    auto j = nlohmann::json::parse(in);
    in.close();
    j["dx"][1].erase(2);  // drop one coordinate from the second row
    std::ofstream(p) << j.dump(1);
    CHECK_THROWS_WITH_AS(load_suite(p), doctest::Contains("ragged dx"),
                         FormatError);
  }

  SUBCASE("ragged dy") {
    save_suite(p, s);
    std::ifstream in(p);
    auto j = nlohmann::json::parse(in);
    in.close();
    j["dy"][0][1].erase(0);
    std::ofstream(p) << j.dump(1);
    CHECK_THROWS_WITH_AS(load_suite(p),
                         doctest::Contains("dy target width"), FormatError);
  }

  SUBCASE("nonpositive tau") {
    save_suite(p, s);
    std::ifstream in(p);
    auto j = nlohmann::json::parse(in);
    in.close();
    j["tau"] = 0.0;
    std::ofstream(p) << j.dump(1);
    CHECK_THROWS_WITH_AS(load_suite(p), doctest::Contains("tau"), FormatError);
  }

  SUBCASE("wrong version") {
    std::ofstream(p) << "{\"version\": \"other\"}";
    CHECK_THROWS_WITH_AS(load_suite(p), doctest::Contains("version"),
                         FormatError);
  }

  SUBCASE("not JSON at all") {
    std::ofstream(p) << "not json";
    CHECK_THROWS_WITH_AS(load_suite(p), doctest::Contains("parse"), FormatError);
  }

  SUBCASE("stored direction values override a stale epsilon") {
    save_suite(p, s);
    std::ifstream in(p);
    auto j = nlohmann::json::parse(in);
    in.close();
    j["epsilon"] = 1e-9;  // advisory scalar out of sync with the arrays
    std::ofstream(p) << j.dump(1);
    const FingerprintSuite r = load_suite(p);
    CHECK(r.dx == s.dx);  // values untouched
    double max_abs = 0.0;
    for (double v : r.dx) max_abs = std::max(max_abs, std::abs(v));
    CHECK(r.epsilon == max_abs);  // epsilon lifted to cover the data
  }

  std::remove(p.c_str());
}

TEST_CASE("world-readable key files trigger a warning") {
  const FingerprintSuite s = make_suite(1, 2, 2, 0.1, 0.05, 3);
  const std::string p = temp_path("nfp_suite_perm.json");
  save_suite(p, s);

  std::filesystem::permissions(p, std::filesystem::perms::owner_read |
                                      std::filesystem::perms::owner_write,
                               std::filesystem::perm_options::replace);
  std::ostringstream quiet;
  warn_if_world_readable(p, quiet);
  CHECK(quiet.str().empty());

  std::filesystem::permissions(p, std::filesystem::perms::owner_read |
                                      std::filesystem::perms::owner_write |
                                      std::filesystem::perms::group_read |
                                      std::filesystem::perms::others_read,
                               std::filesystem::perm_options::replace);
  std::ostringstream loud;
  warn_if_world_readable(p, loud);
  CHECK(loud.str().find("warning") != std::string::npos);
  CHECK(loud.str().find("private key") != std::string::npos);
  std::remove(p.c_str());
}

TEST_CASE("trained toy model separates train points from far points") {
  const TwoGaussians g = make_two_gaussians(100, {-1, 0}, {1, 0}, 0.005, 12);
  const FingerprintSuite s = make_suite(2, 2, 2, 0.05, 0.05, 2);
  MlpClassifier m({2, 200, 200, 2}, 56);
  TrainConfig cfg;
  cfg.alpha = 1.0;
  cfg.epochs = 100;
  cfg.seed = 78;
  cfg.lr = 3e-3;
  cfg.batch_size = 8;
  train_nfp(m, g.data, &s, cfg);

  const std::vector<double> far{0.95, 0.05};  // ~200 cloud widths away
  const DetectionVerdict vf = detect(m, far, s);
  const double far_d = vf.per_class_d[vf.best_class];
  std::size_t closer = 0;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (comparison_d(m, g.data.example(i), g.data.labels[i], s) < far_d)
      ++closer;
  CHECK(closer >= g.data.size() * 95 / 100);
}
