#include "nfp/fingerprint.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "nfp/errors.hpp"
#include "nfp/rng.hpp"

namespace nfp {

std::vector<double> sample_directions(std::size_t n, std::size_t l, double eps,
                                      uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_directions: N must be >= 1");
  if (eps <= 0.0)
    throw std::invalid_argument("sample_directions: epsilon must be positive");
  Rng rng(seed);
  std::vector<double> dx(n * l);
  for (auto& v : dx) v = rng.uniform(-eps, eps);
  return dx;
}

std::vector<double> structured_targets(std::size_t n, std::size_t k, double a,
                                       double b, bool normalize) {
  if (a < 0.0 || b < 0.0)
    throw std::invalid_argument("structured_targets: a and b must be >= 0");
  std::vector<double> dy(n * k * k);
  double norm = 1.0;
  if (normalize) {
    norm = std::sqrt(static_cast<double>(k - 1) * a * a + b * b);
    if (norm < 1e-12)
      throw DegenerateNormError("structured_targets: cannot normalize all-zero "
                                "targets");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t cls = 0; cls < k; ++cls)
      for (std::size_t c = 0; c < k; ++c)
        dy[(i * k + cls) * k + c] = (c == cls ? -b : a) / norm;
  return dy;
}

std::vector<double> random_targets(std::size_t n, std::size_t k, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> dy(n * k * k);
  for (auto& v : dy) v = rng.uniform(-0.5, 0.5);
  return dy;
}

FingerprintSuite make_suite(std::size_t n, std::size_t l, std::size_t k,
                            double epsilon, double tau, uint64_t seed,
                            const std::string& dy_mode, bool dy_normalize,
                            double target_a, double target_b) {
  if (k < 2) throw DimensionError("make_suite: need at least 2 classes");
  if (tau <= 0.0) throw std::invalid_argument("make_suite: tau must be positive");
  FingerprintSuite s;
  s.n_directions = n;
  s.num_classes = k;
  s.input_dim = l;
  s.epsilon = epsilon;
  s.tau = tau;
  s.seed = seed;
  s.dy_mode = dy_mode;
  s.dy_normalized = dy_normalize;
  s.dx = sample_directions(n, l, epsilon, derive_seed(seed, stream_tag("fp-dx")));
  if (dy_mode == "structured")
    s.dy = structured_targets(n, k, target_a, target_b, dy_normalize);
  else if (dy_mode == "random")
    s.dy = random_targets(n, k, derive_seed(seed, stream_tag("fp-dy")));
  else
    throw std::invalid_argument("make_suite: dy_mode must be 'structured' or "
                                "'random', got '" + dy_mode + "'");
  return s;
}

// --- responses ----------------------------------------------------------------

std::vector<double> batch_responses(const MlpClassifier& model, const Tensor& x,
                                    const FingerprintSuite& suite) {
  if (x.rank() != 2 || x.cols() != suite.input_dim)
    throw DimensionError("batch_responses: input width mismatch");
  const std::size_t b = x.rows(), l = suite.input_dim;
  const std::size_t n = suite.n_directions, kk = suite.num_classes;
  std::vector<double> stacked((n + 1) * b * l);
  std::copy(x.values().begin(), x.values().end(), stacked.begin());
  for (std::size_t i = 0; i < n; ++i) {
    const double* dx = suite.dx_row(i);
    double* block = stacked.data() + (i + 1) * b * l;
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < l; ++c)
        block[r * l + c] = x.values()[r * l + c] + dx[c];
  }
  Tensor phi =
      model.normalized_logits(Tensor({(n + 1) * b, l}, std::move(stacked)));
  std::vector<double> out(b * n * kk);
  for (std::size_t r = 0; r < b; ++r) {
    const double* base = phi.values().data() + r * kk;
    for (std::size_t i = 0; i < n; ++i) {
      const double* pert = phi.values().data() + ((i + 1) * b + r) * kk;
      double* dst = out.data() + (r * n + i) * kk;
      for (std::size_t c = 0; c < kk; ++c) dst[c] = pert[c] - base[c];
    }
  }
  return out;
}

std::vector<double> response(const MlpClassifier& model,
                             const std::vector<double>& x, std::size_t i,
                             const FingerprintSuite& suite) {
  if (i >= suite.n_directions)
    throw DimensionError("response: direction index out of range");
  auto all = batch_responses(model, Tensor({1, suite.input_dim}, x), suite);
  const std::size_t kk = suite.num_classes;
  return std::vector<double>(all.begin() + i * kk, all.begin() + (i + 1) * kk);
}

namespace {

double fp_loss_from_responses(const double* resp, const FingerprintSuite& suite,
                              std::size_t k) {
  const std::size_t n = suite.n_directions, kk = suite.num_classes;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* target = suite.dy_row(i, k);
    double sq = 0.0;
    for (std::size_t c = 0; c < kk; ++c) {
      const double d = resp[i * kk + c] - target[c];
      sq += d * d;
    }
    total += sq;
  }
  return total;
}

double comparison_from_responses(const double* resp,
                                 const FingerprintSuite& suite, std::size_t j) {
  const std::size_t n = suite.n_directions, kk = suite.num_classes;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* target = suite.dy_row(i, j);
    double sq = 0.0;
    for (std::size_t c = 0; c < kk; ++c) {
      const double d = resp[i * kk + c] - target[c];
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(n);
}

}  // namespace

double fingerprint_loss(const MlpClassifier& model, const std::vector<double>& x,
                        int k, const FingerprintSuite& suite) {
  if (k < 0 || static_cast<std::size_t>(k) >= suite.num_classes)
    throw DimensionError("fingerprint_loss: class out of range");
  auto resp = batch_responses(model, Tensor({1, suite.input_dim}, x), suite);
  return fp_loss_from_responses(resp.data(), suite, static_cast<std::size_t>(k));
}

double comparison_d(const MlpClassifier& model, const std::vector<double>& x,
                    int j, const FingerprintSuite& suite) {
  if (j < 0 || static_cast<std::size_t>(j) >= suite.num_classes)
    throw DimensionError("comparison_d: class out of range");
  auto resp = batch_responses(model, Tensor({1, suite.input_dim}, x), suite);
  return comparison_from_responses(resp.data(), suite,
                                   static_cast<std::size_t>(j));
}

double min_fp_loss_over_classes(const MlpClassifier& model,
                                const std::vector<double>& x,
                                const FingerprintSuite& suite) {
  auto resp = batch_responses(model, Tensor({1, suite.input_dim}, x), suite);
  double best = fp_loss_from_responses(resp.data(), suite, 0);
  for (std::size_t k = 1; k < suite.num_classes; ++k)
    best = std::min(best, fp_loss_from_responses(resp.data(), suite, k));
  return best;
}

DetectionVerdict detect(const MlpClassifier& model, const std::vector<double>& x,
                        const FingerprintSuite& suite) {
  auto resp = batch_responses(model, Tensor({1, suite.input_dim}, x), suite);
  DetectionVerdict v;
  v.threshold_used = suite.tau;
  v.per_class_d.resize(suite.num_classes);
  for (std::size_t j = 0; j < suite.num_classes; ++j)
    v.per_class_d[j] = comparison_from_responses(resp.data(), suite, j);
  v.best_class = 0;
  for (std::size_t j = 1; j < suite.num_classes; ++j)
    if (v.per_class_d[j] < v.per_class_d[v.best_class])
      v.best_class = static_cast<int>(j);
  v.accepted = v.per_class_d[v.best_class] <= suite.tau;
  return v;
}

bool detect_fast(const MlpClassifier& model, const std::vector<double>& x,
                 const FingerprintSuite& suite) {
  auto resp = batch_responses(model, Tensor({1, suite.input_dim}, x), suite);
  for (std::size_t j = 0; j < suite.num_classes; ++j)
    if (comparison_from_responses(resp.data(), suite, j) <= suite.tau)
      return true;
  return false;
}

std::vector<double> min_d_scores(const MlpClassifier& model,
                                 const LabeledDataset& data,
                                 const FingerprintSuite& suite) {
  std::vector<double> scores(data.size());
  const std::size_t chunk = 128;
  const std::size_t n = suite.n_directions, kk = suite.num_classes;
  for (std::size_t at = 0; at < data.size(); at += chunk) {
    const std::size_t hi = std::min(at + chunk, data.size());
    std::vector<std::size_t> idx(hi - at);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = at + i;
    auto resp = batch_responses(model, data.batch(idx), suite);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* rr = resp.data() + r * n * kk;
      double best = comparison_from_responses(rr, suite, 0);
      for (std::size_t j = 1; j < kk; ++j)
        best = std::min(best, comparison_from_responses(rr, suite, j));
      scores[at + r] = best;
    }
  }
  return scores;
}

Tensor fingerprint_loss_graph(const std::vector<Tensor>& params,
                              const std::vector<std::size_t>& widths,
                              const Tensor& x_t, int k,
                              const FingerprintSuite& suite) {
  if (x_t.rank() != 2 || x_t.rows() != 1 || x_t.cols() != suite.input_dim)
    throw DimensionError("fingerprint_loss_graph: x must be [1 x l]");
  if (k < 0 || static_cast<std::size_t>(k) >= suite.num_classes)
    throw DimensionError("fingerprint_loss_graph: class out of range");
  const std::size_t n = suite.n_directions, l = suite.input_dim;
  const std::size_t kk = suite.num_classes;
  std::vector<double> offsets((n + 1) * l, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(suite.dx_row(i), suite.dx_row(i) + l, offsets.begin() + (i + 1) * l);
  Tensor stacked = add(tile_rows(x_t, n + 1), Tensor({n + 1, l}, std::move(offsets)));
  Tensor phi = l2_normalize(MlpClassifier::forward(params, widths, stacked));
  Tensor phi0 = slice_rows(phi, 0, 1);
  Tensor total;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor fi = sub(slice_rows(phi, i + 1, i + 2), phi0);
    const double* target = suite.dy_row(i, static_cast<std::size_t>(k));
    Tensor err = sub(fi, Tensor({1, kk}, std::vector<double>(target, target + kk)));
    Tensor sq = sum_squares(err);
    total = i == 0 ? sq : add(total, sq);
  }
  return total;
}

// --- serialization -------------------------------------------------------------

void save_suite(const std::string& path, const FingerprintSuite& suite) {
  nlohmann::json doc;
  doc["version"] = "nfp-suite-v1";
  doc["N"] = suite.n_directions;
  doc["K"] = suite.num_classes;
  doc["l"] = suite.input_dim;
  doc["epsilon"] = suite.epsilon;
  doc["tau"] = suite.tau;
  doc["seed"] = suite.seed;
  doc["dy_mode"] = suite.dy_mode;
  auto dx = nlohmann::json::array();
  for (std::size_t i = 0; i < suite.n_directions; ++i)
    dx.push_back(std::vector<double>(suite.dx_row(i),
                                     suite.dx_row(i) + suite.input_dim));
  doc["dx"] = std::move(dx);
  auto dy = nlohmann::json::array();
  for (std::size_t i = 0; i < suite.n_directions; ++i) {
    auto per_class = nlohmann::json::array();
    for (std::size_t j = 0; j < suite.num_classes; ++j)
      per_class.push_back(std::vector<double>(
          suite.dy_row(i, j), suite.dy_row(i, j) + suite.num_classes));
    dy.push_back(std::move(per_class));
  }
  doc["dy"] = std::move(dy);
  std::ofstream out(path);
  if (!out) throw FormatError(path + ": cannot open for write");
  out << doc.dump(1) << "\n";
  if (!out) throw FormatError(path + ": write failed");
}

FingerprintSuite load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": JSON parse failed: " + e.what());
  }
  if (!doc.contains("version") || doc["version"] != "nfp-suite-v1")
    throw FormatError(path + ": missing or unsupported suite version");
  FingerprintSuite s;
  try {
    s.epsilon = doc.value("epsilon", 0.0);
    s.tau = doc.value("tau", 0.05);
    s.seed = doc.value("seed", uint64_t{0});
    s.dy_mode = doc.value("dy_mode", std::string("structured"));
    const auto& dx = doc.at("dx");
    const auto& dy = doc.at("dy");
    // Array shapes are authoritative; the N/K/l scalars are advisory echoes.
    s.n_directions = dx.size();
    if (s.n_directions == 0) throw FormatError(path + ": empty dx");
    s.input_dim = dx.at(0).size();
    if (dy.size() != s.n_directions)
      throw FormatError(path + ": dy outer size != dx size");
    s.num_classes = dy.at(0).size();
    if (s.num_classes == 0) throw FormatError(path + ": empty dy row");
    s.dx.reserve(s.n_directions * s.input_dim);
    for (const auto& row : dx) {
      if (row.size() != s.input_dim)
        throw FormatError(path + ": ragged dx rows");
      for (const auto& v : row) s.dx.push_back(v.get<double>());
    }
    s.dy.reserve(s.n_directions * s.num_classes * s.num_classes);
    for (const auto& per_class : dy) {
      if (per_class.size() != s.num_classes)
        throw FormatError(path + ": ragged dy class count");
      for (const auto& row : per_class) {
        if (row.size() != s.num_classes)
          throw FormatError(path + ": dy target width != class count");
        for (const auto& v : row) s.dy.push_back(v.get<double>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed suite document: " + e.what());
  }
  if (s.tau <= 0.0) throw FormatError(path + ": tau must be positive");
  // Values win over advisory metadata: keep epsilon consistent with the
  // actual direction magnitudes.
  double max_abs = 0.0;
  for (double v : s.dx) max_abs = std::max(max_abs, std::abs(v));
  s.epsilon = std::max(s.epsilon, max_abs);
  return s;
}

void warn_if_world_readable(const std::string& path, std::ostream& out) {
  struct stat st {};
  if (::stat(path.c_str(), &st) != 0) return;
  if (st.st_mode & (S_IRGRP | S_IROTH))
    out << "warning: " << path
        << " is readable by other users; the fingerprint suite is the "
           "detection private key (chmod 600 recommended)\n";
}

}  // namespace nfp
