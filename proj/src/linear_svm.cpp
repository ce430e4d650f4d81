#include "nfp/linear_svm.hpp"

#include <cmath>
#include <stdexcept>

#include "nfp/errors.hpp"

namespace nfp {

namespace {

double norm(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_valid(const LinearSvm& svm) {
  if (svm.w.empty() || norm(svm.w) <= 0.0)
    throw DimensionError("linear svm: ||w|| must be positive");
}

int strict_sign(double v) {
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  throw BoundaryError("sign undefined exactly on the hyperplane");
}

}  // namespace

double signed_distance(const LinearSvm& svm, const std::vector<double>& x) {
  require_valid(svm);
  if (x.size() != svm.w.size())
    throw DimensionError("signed_distance: dimension mismatch");
  return (dot(x, svm.w) + svm.b) / norm(svm.w);
}

std::vector<double> point_at_distance(const LinearSvm& svm, double d) {
  require_valid(svm);
  const double wn = norm(svm.w);
  const double c = d - svm.b / wn;  // x = c * w-hat gives distance d
  std::vector<double> x(svm.w.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = c * svm.w[i] / wn;
  return x;
}

MarginExtrema margin_extrema(const LinearSvm& svm,
                             const std::vector<double>& points,
                             const std::vector<int>& labels) {
  require_valid(svm);
  const std::size_t dim = svm.w.size();
  if (labels.empty() || points.size() != labels.size() * dim)
    throw DimensionError("margin_extrema: points/labels size mismatch");
  bool has_minus = false, has_plus = false;
  MarginExtrema e;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != -1 && labels[i] != 1)
      throw DimensionError("margin_extrema: labels must be -1 or +1");
    std::vector<double> x(points.begin() + i * dim, points.begin() + (i + 1) * dim);
    const double d = signed_distance(svm, x);
    if (d == 0.0 || (d > 0.0) != (labels[i] > 0))
      throw SeparabilityError("margin_extrema: point " + std::to_string(i) +
                              " with label " + std::to_string(labels[i]) +
                              " has signed distance " + std::to_string(d));
    const double a = std::abs(d);
    if (labels[i] < 0) {
      if (!has_minus) {
        e.minus_min = e.minus_max = a;
        has_minus = true;
      } else {
        e.minus_min = std::min(e.minus_min, a);
        e.minus_max = std::max(e.minus_max, a);
      }
    } else {
      if (!has_plus) {
        e.plus_min = e.plus_max = a;
        has_plus = true;
      } else {
        e.plus_min = std::min(e.plus_min, a);
        e.plus_max = std::max(e.plus_max, a);
      }
    }
  }
  if (!has_minus || !has_plus)
    throw SeparabilityError("margin_extrema: both classes must be nonempty");
  return e;
}

Theorem1Fingerprints theorem1_fingerprints(const LinearSvm& svm,
                                           const MarginExtrema& extrema) {
  require_valid(svm);
  const double wn = norm(svm.w);
  auto along = [&](double c) {
    std::vector<double> dx(svm.w.size());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = c * svm.w[i] / wn;
    return dx;
  };
  Theorem1Fingerprints out;
  out.fp[0] = {along(extrema.minus_min), 0};
  out.fp[1] = {along(extrema.minus_max), +2};
  out.fp[2] = {along(-extrema.plus_max), -2};
  out.fp[3] = {along(-extrema.plus_min), 0};
  out.degenerate = extrema.minus_min == extrema.minus_max ||
                   extrema.plus_min == extrema.plus_max;
  return out;
}

int sign_response(const LinearSvm& svm, const std::vector<double>& x,
                  const std::vector<double>& dx) {
  if (dx.size() != x.size())
    throw DimensionError("sign_response: dx dimension mismatch");
  std::vector<double> moved(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) moved[i] = x[i] + dx[i];
  return strict_sign(signed_distance(svm, moved)) -
         strict_sign(signed_distance(svm, x));
}

LinearVerdict detect_linear(const LinearSvm& svm, const MarginExtrema& extrema,
                            const std::vector<double>& x) {
  LinearVerdict v;
  v.d = signed_distance(svm, x);
  if (v.d == 0.0)
    throw BoundaryError("detect_linear: input exactly on the hyperplane");
  if (v.d > extrema.plus_max) {
    v.adversarial = true;
    v.region = "d > delta_plus_max";
  } else if (v.d > 0.0 && v.d < extrema.plus_min) {
    v.adversarial = true;
    v.region = "0 < d < delta_plus_min";
  } else if (v.d < -extrema.minus_max) {
    v.adversarial = true;
    v.region = "d < -delta_minus_max";
  } else if (v.d < 0.0 && v.d > -extrema.minus_min) {
    v.adversarial = true;
    v.region = "-delta_minus_min < d < 0";
  } else {
    v.adversarial = false;
    v.region = "real";
  }
  return v;
}

bool brute_force_adversarial(const LinearSvm& svm, const MarginExtrema& extrema,
                             const std::vector<double>& x) {
  const auto fps = theorem1_fingerprints(svm, extrema);
  int observed[4];
  for (int i = 0; i < 4; ++i) observed[i] = sign_response(svm, x, fps.fp[i].dx);
  // Expected response patterns over the four fingerprints, by class:
  // a real negative sees (0, +2, 0, 0); a real positive sees (0, 0, -2, 0).
  static constexpr int kNegPattern[4] = {0, +2, 0, 0};
  static constexpr int kPosPattern[4] = {0, 0, -2, 0};
  bool neg_ok = true, pos_ok = true;
  for (int i = 0; i < 4; ++i) {
    neg_ok = neg_ok && observed[i] == kNegPattern[i];
    pos_ok = pos_ok && observed[i] == kPosPattern[i];
  }
  return !(neg_ok || pos_ok);
}

std::vector<bool> brute_force_region_oracle(
    const LinearSvm& svm, const MarginExtrema& extrema,
    const std::vector<double>& distances) {
  std::vector<bool> out(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i)
    out[i] = brute_force_adversarial(svm, extrema,
                                     point_at_distance(svm, distances[i]));
  return out;
}

}  // namespace nfp
