#pragma once

#include <array>
#include <string>
#include <vector>

namespace nfp {

// Separating hyperplane <w, x> + b = 0 with labels in {-1, +1};
// positive class on the positive side.
struct LinearSvm {
  std::vector<double> w;
  double b = 0.0;
};

// Per-class min/max distances of the data to the hyperplane along w-hat.
// All four are positive for strictly separable data.
struct MarginExtrema {
  double minus_min = 0.0;
  double minus_max = 0.0;
  double plus_min = 0.0;
  double plus_max = 0.0;
};

struct LinearFingerprint {
  std::vector<double> dx;
  int expected_dy = 0;  // in {-2, 0, +2}
};

struct Theorem1Fingerprints {
  std::array<LinearFingerprint, 4> fp;
  // min == max on a side means two fingerprints share a direction but
  // expect different responses (boundary-support case).
  bool degenerate = false;
};

struct LinearVerdict {
  bool adversarial = false;
  std::string region;  // "real" or the matched flagged interval
  double d = 0.0;
};

// (<x,w> + b) / ||w||
double signed_distance(const LinearSvm& svm, const std::vector<double>& x);

// Convenience: a point with the given signed distance (along w-hat).
std::vector<double> point_at_distance(const LinearSvm& svm, double d);

// points: n x dim row-major, labels in {-1,+1}. Throws SeparabilityError
// if any point is misclassified or sits exactly on the hyperplane.
MarginExtrema margin_extrema(const LinearSvm& svm,
                             const std::vector<double>& points,
                             const std::vector<int>& labels);

// The four canonical fingerprints:
//   (+minus_min * w-hat, 0), (+minus_max * w-hat, +2),
//   (-plus_max  * w-hat, -2), (-plus_min  * w-hat, 0)
Theorem1Fingerprints theorem1_fingerprints(const LinearSvm& svm,
                                           const MarginExtrema& extrema);

// sign(<w, x+dx> + b) - sign(<w, x> + b) in {-2, 0, +2}. Throws
// BoundaryError if either evaluation lands exactly on the hyperplane:
// the sign algebra is undefined there and guessing would corrupt the
// oracle equivalence test.
int sign_response(const LinearSvm& svm, const std::vector<double>& x,
                  const std::vector<double>& dx);

// Region arithmetic: adversarial iff d(x) lies in one of the four open
// flagged intervals; interval endpoints count as real (support vectors
// are data).
LinearVerdict detect_linear(const LinearSvm& svm, const MarginExtrema& extrema,
                            const std::vector<double>& x);

// Independent oracle: applies all four fingerprints via sign_response and
// declares x real iff the observed response vector matches the expected
// pattern of some class. Must agree with detect_linear off endpoints.
bool brute_force_adversarial(const LinearSvm& svm, const MarginExtrema& extrema,
                             const std::vector<double>& x);

// Oracle over a grid of signed distances (each mapped to a point along
// w-hat). Grids must avoid the exact region endpoints.
std::vector<bool> brute_force_region_oracle(const LinearSvm& svm,
                                            const MarginExtrema& extrema,
                                            const std::vector<double>& distances);

}  // namespace nfp
