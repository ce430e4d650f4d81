#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "nfp/classifier.hpp"
#include "nfp/datasets.hpp"
#include "nfp/errors.hpp"
#include "nfp/fingerprint.hpp"
#include "nfp/rng.hpp"

using namespace nfp;

namespace {

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

// 2-input 2-class linear model with explicit weights (rows = inputs)
MlpClassifier linear_model(const std::vector<double>& w,
                           const std::vector<double>& b) {
  MlpClassifier m({2, 2}, 0);
  m.set_params({Tensor({2, 2}, w), Tensor({2}, b)});
  return m;
}

}  // namespace

TEST_CASE("logits of an identity-weight model select input coordinates") {
  MlpClassifier m = linear_model({1, 0, 0, 1}, {0, 0});
  const auto z = m.logits(Tensor({1, 2}, {0.3, 0.8})).values();
  CHECK(z[0] == doctest::Approx(0.3));
  CHECK(z[1] == doctest::Approx(0.8));
}

TEST_CASE("a batch of two equals two single calls stacked") {
  MlpClassifier m({3, 8, 4}, 42);
  const std::vector<double> a{0.1, 0.5, 0.9}, b{0.7, 0.2, 0.4};
  const auto za = m.logits(Tensor({1, 3}, a)).values();
  const auto zb = m.logits(Tensor({1, 3}, b)).values();
  std::vector<double> both = a;
  both.insert(both.end(), b.begin(), b.end());
  const auto z2 = m.logits(Tensor({2, 3}, both)).values();
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(z2[j] == doctest::Approx(za[j]).epsilon(1e-12));
    CHECK(z2[4 + j] == doctest::Approx(zb[j]).epsilon(1e-12));
  }
}

TEST_CASE("same seed builds the same model") {
  MlpClassifier a({4, 6, 3}, 7), b({4, 6, 3}, 7), c({4, 6, 3}, 8);
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i].values() == b.params()[i].values());
  bool any_differ = false;
  for (std::size_t i = 0; i < a.params().size(); ++i)
    any_differ = any_differ || a.params()[i].values() != c.params()[i].values();
  CHECK(any_differ);
}

TEST_CASE("normalized logits have unit rows and the right direction") {
  // craft logits (3,4): x = (1,0), W rows select (3,4)
  MlpClassifier m = linear_model({3, 4, 0, 0}, {0, 0});
  const auto phi = m.normalized_logits(Tensor({1, 2}, {1.0, 0.0})).values();
  CHECK(phi[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(phi[1] == doctest::Approx(0.8).epsilon(1e-12));

  MlpClassifier r({5, 9, 4}, 13);
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(5);
    for (auto& v : x) v = rng.uniform();
    const auto row = r.normalized_logits(Tensor({1, 5}, x)).values();
    double sq = 0.0;
    for (double v : row) sq += v * v;
    CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-12);
  }
}

TEST_CASE("normalized logits ignore positive scaling of the final layer") {
  MlpClassifier m({3, 10, 4}, 5);
  auto params = m.params();
  const std::size_t last_w = params.size() - 2, last_b = params.size() - 1;
  auto w = params[last_w].values();
  auto b = params[last_b].values();
  for (auto& v : w) v *= 10.0;
  for (auto& v : b) v *= 10.0;
  MlpClassifier scaled({3, 10, 4}, 5);
  params[last_w] = Tensor(params[last_w].shape(), w);
  params[last_b] = Tensor(params[last_b].shape(), b);
  scaled.set_params(params);

  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(3);
    for (auto& v : x) v = rng.uniform();
    const auto p1 = m.normalized_logits(Tensor({1, 3}, x)).values();
    const auto p2 = scaled.normalized_logits(Tensor({1, 3}, x)).values();
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(std::abs(p1[j] - p2[j]) <= 1e-10);
  }
}

TEST_CASE("predict takes the argmax and breaks ties low") {
  MlpClassifier m = linear_model({1, 0, 0, 1}, {0, 0});
  CHECK(m.predict({0.1, 0.9}) == 1);
  CHECK(m.predict({0.5, 0.5}) == 0);  // exact tie -> lowest index

  // softmax argmax equals logit argmax (monotone map)
  Rng rng(31);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> h(6);
    for (auto& v : h) v = rng.uniform(-5.0, 5.0);
    std::size_t am = 0;
    for (std::size_t j = 1; j < 6; ++j)
      if (h[j] > h[am]) am = j;
    double mx = h[am], denom = 0.0;
    std::vector<double> sm(6);
    for (std::size_t j = 0; j < 6; ++j) denom += std::exp(h[j] - mx);
    std::size_t am_soft = 0;
    for (std::size_t j = 0; j < 6; ++j) {
      sm[j] = std::exp(h[j] - mx) / denom;
      if (sm[j] > sm[am_soft]) am_soft = j;
    }
    CHECK(am == am_soft);
  }
}

TEST_CASE("checkpoint round trip is bitwise lossless") {
  MlpClassifier m({7, 11, 3}, 77);
  const std::string p1 = temp_path("nfp_model_a.nfpmodel");
  const std::string p2 = temp_path("nfp_model_b.nfpmodel");
  m.save(p1);
  MlpClassifier loaded = MlpClassifier::load(p1);
  CHECK(loaded.widths() == m.widths());
  for (std::size_t i = 0; i < m.params().size(); ++i)
    CHECK(loaded.params()[i].values() == m.params()[i].values());
  loaded.save(p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint loader rejects other files") {
  const std::string p = temp_path("nfp_model_bad.nfpmodel");
  std::ofstream(p) << "definitely not a model\n";
  CHECK_THROWS_AS(MlpClassifier::load(p), FormatError);
  std::remove(p.c_str());
  CHECK_THROWS_AS(MlpClassifier::load(temp_path("nfp_model_missing")),
                  FormatError);
}

TEST_CASE("constructor and forward validate shapes") {
  CHECK_THROWS_AS(MlpClassifier({5}, 0), DimensionError);
  CHECK_THROWS_AS(MlpClassifier({5, 0, 2}, 0), DimensionError);
  MlpClassifier m({3, 4, 2}, 0);
  CHECK_THROWS_AS(m.logits(Tensor({1, 2}, {0.0, 0.0})), DimensionError);
}

TEST_CASE("training with a zero fingerprint weight is plain training") {
  const TwoGaussians g = make_two_gaussians(100, {-1, 0}, {1, 0}, 0.3, 4);
  const FingerprintSuite suite = make_suite(2, 2, 2, 0.05, 0.05, 9);
  TrainConfig cfg;
  cfg.alpha = 0.0;
  cfg.epochs = 3;
  cfg.seed = 6;

  MlpClassifier a({2, 16, 2}, 11), b({2, 16, 2}, 11);
  const TrainHistory ha = train_nfp(a, g.data, nullptr, cfg);
  const TrainHistory hb = train_nfp(b, g.data, &suite, cfg);
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i].values() == b.params()[i].values());  // bitwise
  REQUIRE(ha.size() == 3);
  REQUIRE(hb.size() == 3);
  for (std::size_t e = 0; e < 3; ++e)
    CHECK(ha[e].task_loss == hb[e].task_loss);  // bitwise same loss path
  // with a suite present the fingerprint loss is still scored for the log
  CHECK(hb[0].fp_loss > 0.0);
  CHECK(ha[0].fp_loss == 0.0);
}

TEST_CASE("training is deterministic under seed and validates config") {
  const TwoGaussians g = make_two_gaussians(60, {-1, 0}, {1, 0}, 0.3, 4);
  const FingerprintSuite suite = make_suite(2, 2, 2, 0.05, 0.05, 9);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;

  MlpClassifier a({2, 12, 2}, 1), b({2, 12, 2}, 1);
  train_nfp(a, g.data, &suite, cfg);
  train_nfp(b, g.data, &suite, cfg);
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i].values() == b.params()[i].values());

  MlpClassifier c({2, 12, 2}, 1);
  TrainConfig bad = cfg;
  bad.alpha = -0.5;
  CHECK_THROWS_AS(train_nfp(c, g.data, &suite, bad), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train_nfp(c, g.data, &suite, bad), std::invalid_argument);
  bad = cfg;
  bad.optimizer = "lion";
  CHECK_THROWS_AS(train_nfp(c, g.data, &suite, bad), std::invalid_argument);
  bad = cfg;  // alpha > 0 demands a suite
  CHECK_THROWS_AS(train_nfp(c, g.data, nullptr, bad), std::invalid_argument);
  // suite dimensioned for the wrong input width
  const FingerprintSuite wrong = make_suite(2, 5, 2, 0.05, 0.05, 9);
  CHECK_THROWS_AS(train_nfp(c, g.data, &wrong, cfg), DimensionError);
}

TEST_CASE("training aborts with diagnostics when the loss is not finite") {
  const TwoGaussians g = make_two_gaussians(40, {-1, 0}, {1, 0}, 0.3, 4);
  const FingerprintSuite suite = make_suite(2, 2, 2, 0.05, 0.05, 9);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.optimizer = "sgd";
  MlpClassifier m({2, 12, 2}, 1);
  // overflow the forward pass: 1e200-scale weights square through two layers
  std::vector<Tensor> huge;
  for (const Tensor& p : m.params())
    huge.emplace_back(p.shape(),
                      std::vector<double>(p.values().size(), 1e200));
  m.set_params(huge);
  CHECK_THROWS_WITH_AS(train_nfp(m, g.data, &suite, cfg),
                       doctest::Contains("epoch"), std::runtime_error);
}

TEST_CASE("joint training on the toy task learns task and fingerprints") {
  // 2D Gaussians, N=2, eps=0.05, alpha=1: the calibrated regression bound
  // is >99% train accuracy with mean train fingerprint loss under 0.05.
  // The clouds must be tighter than the fingerprint directions: in 2D,
  // x + dx_i otherwise lands on neighboring training points whose own
  // targets conflict, and no network can satisfy both.
  const TwoGaussians g = make_two_gaussians(100, {-1, 0}, {1, 0}, 0.005, 12);
  const FingerprintSuite suite = make_suite(2, 2, 2, 0.05, 0.05, 2);
  MlpClassifier m({2, 200, 200, 2}, 56);
  TrainConfig cfg;
  cfg.alpha = 1.0;
  cfg.epochs = 200;
  cfg.seed = 78;
  cfg.lr = 3e-3;
  cfg.batch_size = 8;
  const TrainHistory h = train_nfp(m, g.data, &suite, cfg);
  REQUIRE(h.size() == 200);
  CHECK(m.accuracy(g.data) > 0.99);
  double mean_fp = 0.0;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    mean_fp += fingerprint_loss(m, g.data.example(i), g.data.labels[i], suite);
  mean_fp /= static_cast<double>(g.data.size());
  CHECK(mean_fp < 0.05);
  // history converged downward overall
  CHECK(h.back().fp_loss < h.front().fp_loss);
  CHECK(h.back().task_loss < h.front().task_loss);
}
