#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "nfp/classifier.hpp"
#include "nfp/tensor.hpp"

namespace nfp {

// A fingerprint suite: N shared input perturbations dx and, per class j,
// the expected response targets dy. Together with tau this file IS the
// detector's private key; keep suite files unreadable to other users.
struct FingerprintSuite {
  std::size_t n_directions = 0;  // N
  std::size_t num_classes = 0;   // K
  std::size_t input_dim = 0;     // l
  double epsilon = 0.0;
  double tau = 0.05;
  uint64_t seed = 0;
  std::string dy_mode = "structured";  // "structured" | "random"
  bool dy_normalized = false;  // construction metadata; not serialized
  std::vector<double> dx;  // N x l
  std::vector<double> dy;  // N x K x K, [i][j] = target vector for class j

  const double* dx_row(std::size_t i) const { return dx.data() + i * input_dim; }
  const double* dy_row(std::size_t i, std::size_t j) const {
    return dy.data() + (i * num_classes + j) * num_classes;
  }
};

struct DetectionVerdict {
  bool accepted = false;
  std::vector<double> per_class_d;  // D(x, f, chi^{.,j}) for every j
  int best_class = -1;              // argmin, lowest index on ties
  double threshold_used = 0.0;
};

// N direction vectors, coordinates i.i.d. uniform on [-eps, eps].
std::vector<double> sample_directions(std::size_t n, std::size_t l, double eps,
                                      uint64_t seed);
// Per class k: +a on every coordinate except -b at k itself, replicated
// across the N directions. Optionally rescaled to unit L2 norm (the
// unnormalized 0.25/-0.75 default has norm sqrt(1.125)).
std::vector<double> structured_targets(std::size_t n, std::size_t k, double a,
                                       double b, bool normalize = false);
// Every coordinate i.i.d. uniform on [-0.5, 0.5].
std::vector<double> random_targets(std::size_t n, std::size_t k, uint64_t seed);

FingerprintSuite make_suite(std::size_t n, std::size_t l, std::size_t k,
                            double epsilon, double tau, uint64_t seed,
                            const std::string& dy_mode = "structured",
                            bool dy_normalize = false, double target_a = 0.25,
                            double target_b = 0.75);

// F(x, dx_i) = phi(x + dx_i) - phi(x) for one direction. Tape-free.
std::vector<double> response(const MlpClassifier& model,
                             const std::vector<double>& x, std::size_t i,
                             const FingerprintSuite& suite);

// All N responses for a batch X [b x l] in one stacked forward pass.
// Returns [b x N x K] flat.
std::vector<double> batch_responses(const MlpClassifier& model, const Tensor& x,
                                    const FingerprintSuite& suite);

// Sum over i of ||F(x,dx_i) - dy^{i,k}||_2^2 (squared norms).
double fingerprint_loss(const MlpClassifier& model, const std::vector<double>& x,
                        int k, const FingerprintSuite& suite);
// Mean over i of ||F(x,dx_i) - dy^{i,j}||_2 (unsquared norms). The two
// aggregations are intentionally different; never substitute one.
double comparison_d(const MlpClassifier& model, const std::vector<double>& x,
                    int j, const FingerprintSuite& suite);
double min_fp_loss_over_classes(const MlpClassifier& model,
                                const std::vector<double>& x,
                                const FingerprintSuite& suite);

// Scores all classes; accepted iff min_j D <= tau.
DetectionVerdict detect(const MlpClassifier& model, const std::vector<double>& x,
                        const FingerprintSuite& suite);
// Early-exit variant for serving; identical accept/reject outcome.
bool detect_fast(const MlpClassifier& model, const std::vector<double>& x,
                 const FingerprintSuite& suite);

// min_j D for every example of a dataset (chunked batched forwards).
std::vector<double> min_d_scores(const MlpClassifier& model,
                                 const LabeledDataset& data,
                                 const FingerprintSuite& suite);

// Taped single-example fingerprint loss for attack/training graphs:
// x_t is [1 x l] on a tape; params may be taped (training) or plain
// constants (attacks differentiating w.r.t. x).
Tensor fingerprint_loss_graph(const std::vector<Tensor>& params,
                              const std::vector<std::size_t>& widths,
                              const Tensor& x_t, int k,
                              const FingerprintSuite& suite);

// JSON (de)serialization. Array values are authoritative; scalar metadata
// (epsilon, seed) is advisory. Reals round-trip exactly.
void save_suite(const std::string& path, const FingerprintSuite& suite);
FingerprintSuite load_suite(const std::string& path);

// Emits a warning to `out` if the file is readable by group/other.
void warn_if_world_readable(const std::string& path, std::ostream& out);

}  // namespace nfp
