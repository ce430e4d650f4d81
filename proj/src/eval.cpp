#include "nfp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nfp/errors.hpp"

namespace nfp {

namespace {

// Shared integer numerator: 2 per strictly-ordered (fake > real) pair,
// 1 per tie. Both AUC entry points divide this by 2 * n_r * n_f, so they
// agree bitwise whenever the counts agree.
double auc_from_numerator(unsigned long long numerator, std::size_t n_real,
                          std::size_t n_fake) {
  return static_cast<double>(numerator) /
         (2.0 * static_cast<double>(n_real) * static_cast<double>(n_fake));
}

void check_nonempty(const std::vector<double>& real_scores,
                    const std::vector<double>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty())
    throw std::invalid_argument("auc_roc: both score sets must be nonempty");
}

}  // namespace

double auc_roc(const std::vector<double>& real_scores,
               const std::vector<double>& fake_scores) {
  check_nonempty(real_scores, fake_scores);
  std::vector<double> r = real_scores, f = fake_scores;
  std::sort(r.begin(), r.end());
  std::sort(f.begin(), f.end());
  unsigned long long numerator = 0;
  std::size_t below = 0;  // reals strictly below the current fake value
  std::size_t ri = 0;
  std::size_t fi = 0;
  while (fi < f.size()) {
    const double v = f[fi];
    while (ri < r.size() && r[ri] < v) {
      ++ri;
      ++below;
    }
    std::size_t tied_real = 0;
    std::size_t rj = ri;
    while (rj < r.size() && r[rj] == v) {
      ++rj;
      ++tied_real;
    }
    std::size_t tied_fake = 0;
    while (fi < f.size() && f[fi] == v) {
      ++fi;
      ++tied_fake;
    }
    numerator += static_cast<unsigned long long>(tied_fake) *
                 (2ull * below + tied_real);
  }
  return auc_from_numerator(numerator, r.size(), f.size());
}

double auc_pairwise_oracle(const std::vector<double>& real_scores,
                           const std::vector<double>& fake_scores) {
  check_nonempty(real_scores, fake_scores);
  unsigned long long numerator = 0;
  for (double fv : fake_scores)
    for (double rv : real_scores) {
      if (fv > rv)
        numerator += 2;
      else if (fv == rv)
        numerator += 1;
    }
  return auc_from_numerator(numerator, real_scores.size(), fake_scores.size());
}

ExperimentReport run_detection_experiment(const MlpClassifier& model,
                                          const FingerprintSuite& suite,
                                          const LabeledDataset& pretest,
                                          const AttackFn& attack,
                                          bool keep_unsuccessful) {
  if (pretest.size() == 0)
    throw std::invalid_argument("run_detection_experiment: empty pretest set");
  ExperimentReport report;
  report.n_real = pretest.size();

  const auto real_scores = min_d_scores(model, pretest, suite);
  for (std::size_t i = 0; i < real_scores.size(); ++i)
    report.scores.push_back({i, false, real_scores[i]});

  LabeledDataset fakes;
  fakes.name = pretest.name + "-adversarial";
  fakes.input_dim = pretest.input_dim;
  fakes.num_classes = pretest.num_classes;
  std::vector<std::size_t> fake_ids;
  for (std::size_t i = 0; i < pretest.size(); ++i) {
    AttackOutcome out = attack(pretest.example(i), pretest.labels[i], i);
    ++report.attacks_attempted;
    if (out.success) ++report.attacks_successful;
    if (out.success || keep_unsuccessful) {
      fakes.inputs.insert(fakes.inputs.end(), out.x_adv.begin(),
                          out.x_adv.end());
      fakes.labels.push_back(pretest.labels[i]);
      fake_ids.push_back(i);
    }
  }
  report.n_fake = fakes.size();
  if (report.n_fake == 0) {
    report.degenerate = true;
    report.auc = 0.5;
    return report;
  }
  const auto fake_scores = min_d_scores(model, fakes, suite);
  for (std::size_t i = 0; i < fake_scores.size(); ++i)
    report.scores.push_back({fake_ids[i], true, fake_scores[i]});
  report.auc = auc_roc(real_scores, fake_scores);
  return report;
}

std::vector<SweepCell> sensitivity_sweep(
    const std::vector<std::pair<std::size_t, double>>& grid, int repeats,
    const std::function<double(std::size_t, double, int)>& trial) {
  if (grid.empty()) throw std::invalid_argument("sensitivity_sweep: empty grid");
  if (repeats < 1) throw std::invalid_argument("sensitivity_sweep: repeats < 1");
  std::vector<SweepCell> cells;
  cells.reserve(grid.size());
  for (const auto& [n, eps] : grid) {
    SweepCell cell;
    cell.n_directions = n;
    cell.epsilon = eps;
    for (int r = 0; r < repeats; ++r) cell.aucs.push_back(trial(n, eps, r));
    double sum = 0.0;
    for (double a : cell.aucs) sum += a;
    cell.mean = sum / static_cast<double>(repeats);
    if (repeats > 1) {
      double sq = 0.0;
      for (double a : cell.aucs) sq += (a - cell.mean) * (a - cell.mean);
      cell.stddev = std::sqrt(sq / static_cast<double>(repeats - 1));
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

ContourGrid loss_contour_grid(const MlpClassifier& model,
                              const FingerprintSuite& suite, double x1_lo,
                              double x1_hi, double x2_lo, double x2_hi,
                              std::size_t resolution) {
  if (model.input_dim() != 2)
    throw DimensionError("loss_contour_grid: model input dimension must be 2");
  if (resolution < 1)
    throw std::invalid_argument("loss_contour_grid: resolution < 1");
  ContourGrid grid;
  grid.resolution = resolution;
  auto linspace = [resolution](double lo, double hi) {
    std::vector<double> v(resolution);
    if (resolution == 1) {
      v[0] = 0.5 * (lo + hi);
    } else {
      const double step = (hi - lo) / static_cast<double>(resolution - 1);
      for (std::size_t i = 0; i < resolution; ++i)
        v[i] = lo + step * static_cast<double>(i);
    }
    return v;
  };
  grid.x1 = linspace(x1_lo, x1_hi);
  grid.x2 = linspace(x2_lo, x2_hi);
  grid.values.resize(resolution * resolution);
  for (std::size_t r = 0; r < resolution; ++r)
    for (std::size_t c = 0; c < resolution; ++c)
      grid.values[r * resolution + c] = min_fp_loss_over_classes(
          model, {grid.x1[c], grid.x2[r]}, suite);
  return grid;
}

}  // namespace nfp
