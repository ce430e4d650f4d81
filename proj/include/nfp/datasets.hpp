#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nfp/tensor.hpp"

namespace nfp {

// Immutable labeled dataset. Inputs are row-major [n x input_dim] with
// entries in [0,1] (pixel-intensity convention; attack bounds assume it).
struct LabeledDataset {
  std::string name;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::vector<double> example(std::size_t i) const;
  Tensor row_tensor(std::size_t i) const;                   // [1 x l]
  Tensor batch(const std::vector<std::size_t>& idx) const;  // [b x l]
};

// Checks label range, [0,1] entries, and size consistency; throws
// DimensionError / FormatError on violation.
void validate_dataset(const LabeledDataset& d);

struct SplitSpec {
  std::size_t pretest_size = 0;
  uint64_t seed = 0;
  bool discard_misclassified = true;
};

struct PretestReport {
  std::size_t requested = 0;
  std::size_t discarded = 0;
  std::size_t retained = 0;
  bool empty_after_discard = false;
};

// IDX binary ingestion (big-endian; images magic 0x00000803, labels
// 0x00000801). Distinct FormatError messages for bad magic, truncation,
// and image/label count mismatch. If declared_classes == 0, K is
// inferred as max(label)+1.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path,
                        std::size_t declared_classes = 0);

// Inverse of load_idx up to the 1/255 quantization. Used by tests and
// the synthetic corpus generator.
void write_idx(const std::string& images_path, const std::string& labels_path,
               const LabeledDataset& data);

// Affine map from raw plane coordinates into the unit square:
// unit = (raw - offset) * scale, same scale on both axes.
struct PlaneTransform {
  double offset_x = 0.0;
  double offset_y = 0.0;
  double scale = 1.0;
  std::array<double, 2> to_unit(double x, double y) const {
    return {(x - offset_x) * scale, (y - offset_y) * scale};
  }
  std::array<double, 2> from_unit(double ux, double uy) const {
    return {ux / scale + offset_x, uy / scale + offset_y};
  }
};

struct TwoGaussians {
  LabeledDataset data;
  PlaneTransform to_unit;
  std::array<double, 2> mean0_unit{};
  std::array<double, 2> mean1_unit{};
  double stddev_unit = 0.0;
};

// Two isotropic Gaussian balls in the plane, rescaled into [0,1]^2 so
// attack bounds and fingerprint magnitudes share the image unit system.
// The rescale box is fixed from the configuration (means +/- box_margin
// stddevs, squared and centered), not from the samples, so the transform
// does not depend on n; samples in the far tail are clipped. Margins far
// above the default 5 shrink the clouds relative to the unit box, which
// brings the inter-cloud gap within reach of small L-inf attack bounds
// while keeping each cloud tighter than the fingerprint magnitude.
TwoGaussians make_two_gaussians(std::size_t n_per_class,
                                std::array<double, 2> mean0,
                                std::array<double, 2> mean1, double stddev,
                                uint64_t seed, double box_margin = 5.0);

// Deterministic 28x28 10-class digit-like corpus: per-class smooth
// prototypes plus small translations and pixel noise. Stands in when no
// IDX corpus is available on disk.
LabeledDataset make_synthetic_digits(std::size_t n, uint64_t seed);

// Uniformly samples spec.pretest_size items without replacement (seeded
// Fisher-Yates), then optionally discards the ones `predict` gets wrong.
std::pair<LabeledDataset, PretestReport> pretest_split(
    const LabeledDataset& data, const SplitSpec& spec,
    const std::function<int(const std::vector<double>&)>& predict);

}  // namespace nfp
