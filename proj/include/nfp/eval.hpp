#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nfp/attacks.hpp"
#include "nfp/classifier.hpp"
#include "nfp/datasets.hpp"
#include "nfp/fingerprint.hpp"

namespace nfp {

struct ScoredExample {
  std::size_t input_id = 0;
  bool is_adversarial = false;
  double score = 0.0;  // min over classes of D; lower = more real
};

struct ExperimentReport {
  double auc = 0.5;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  std::size_t attacks_attempted = 0;
  std::size_t attacks_successful = 0;
  bool degenerate = false;  // fake set came out empty
  std::vector<ScoredExample> scores;  // real block first, then fake
  std::vector<std::pair<std::string, std::string>> config_echo;
};

// Rank statistic P(fake > real) + 1/2 P(tie), computed by sweeping the
// accept threshold over the merged score values. Ties get half credit.
// The sweep accumulates an integer pair count, so it matches
// auc_pairwise_oracle bitwise. Throws std::invalid_argument on an empty
// side.
double auc_roc(const std::vector<double>& real_scores,
               const std::vector<double>& fake_scores);

// O(n_real * n_fake) direct pair counting; the independent oracle for
// auc_roc.
double auc_pairwise_oracle(const std::vector<double>& real_scores,
                           const std::vector<double>& fake_scores);

using AttackFn = std::function<AttackOutcome(const std::vector<double>& x,
                                             int y, std::size_t index)>;

// Attacks every pretest example, scores the real set and the successful
// adversarial set with min_j D, and reports the AUC between them.
// keep_unsuccessful adds failed attacks to the fake set anyway (off by
// default, matching the discard-before-evaluation protocol). An empty
// fake set yields auc = 0.5 with degenerate = true.
ExperimentReport run_detection_experiment(const MlpClassifier& model,
                                          const FingerprintSuite& suite,
                                          const LabeledDataset& pretest,
                                          const AttackFn& attack,
                                          bool keep_unsuccessful = false);

struct SweepCell {
  std::size_t n_directions = 0;
  double epsilon = 0.0;
  std::vector<double> aucs;  // one entry per repeat
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev; 0 when repeats == 1
};

// Hyperparameter sensitivity: one AUC per (N, epsilon, repeat) via the
// caller-supplied trial (which trains a fresh model + suite and runs a
// detection experiment). Throws std::invalid_argument on an empty grid
// or repeats < 1.
std::vector<SweepCell> sensitivity_sweep(
    const std::vector<std::pair<std::size_t, double>>& grid, int repeats,
    const std::function<double(std::size_t n, double eps, int repeat)>& trial);

struct ContourGrid {
  std::size_t resolution = 0;
  std::vector<double> x1;      // resolution values
  std::vector<double> x2;      // resolution values
  std::vector<double> values;  // [resolution x resolution] row-major,
                               // values[r * resolution + c] at (x1[c], x2[r])
};

// min over classes k of the fingerprint loss on a 2-D input grid
// spanning [x1_lo, x1_hi] x [x2_lo, x2_hi]. resolution == 1 evaluates the
// rectangle midpoint. Throws DimensionError unless the model input
// dimension is 2.
ContourGrid loss_contour_grid(const MlpClassifier& model,
                              const FingerprintSuite& suite, double x1_lo,
                              double x1_hi, double x2_lo, double x2_hi,
                              std::size_t resolution);

}  // namespace nfp
