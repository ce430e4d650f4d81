#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfp/datasets.hpp"
#include "nfp/tensor.hpp"

namespace nfp {

struct FingerprintSuite;  // fingerprint.hpp

// Fully-connected relu classifier. Parameters are plain tensors; training
// re-leafs them onto a fresh tape per minibatch.
class MlpClassifier {
 public:
  // widths = {input l, hidden..., output K}; He-initialized weights,
  // zero biases, deterministic under seed.
  MlpClassifier(std::vector<std::size_t> widths, uint64_t seed);

  static MlpClassifier load(const std::string& path);
  void save(const std::string& path) const;

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t num_classes() const { return widths_.back(); }

  // Plain (tape-free) forward passes.
  Tensor logits(const Tensor& x) const;  // [b x l] -> [b x K]
  Tensor normalized_logits(const Tensor& x) const;
  int predict(const std::vector<double>& x) const;
  std::vector<int> predict_batch(const Tensor& x) const;
  double accuracy(const LabeledDataset& data) const;

  // Forward through explicit parameter tensors (taped or plain), so the
  // same code serves inference, training, and attack graphs.
  static Tensor forward(const std::vector<Tensor>& params,
                        const std::vector<std::size_t>& widths,
                        const Tensor& x);
  // Re-leaf current parameters onto `tape` (gradients enabled).
  std::vector<Tensor> taped_params(Tape& tape) const;
  const std::vector<Tensor>& params() const { return params_; }
  void set_params(std::vector<Tensor> p);

 private:
  MlpClassifier() = default;
  std::vector<std::size_t> widths_;
  std::vector<Tensor> params_;  // W0, b0, W1, b1, ...
};

struct TrainConfig {
  double alpha = 1.0;  // fingerprint-loss weight; 0 = plain training
  int epochs = 10;
  std::size_t batch_size = 32;
  std::string optimizer = "adam";  // "adam" | "sgd"
  double lr = 1e-3;
  uint64_t seed = 1;
};

struct EpochStats {
  double task_loss = 0.0;  // mean cross-entropy over the epoch
  double fp_loss = 0.0;    // mean per-example fingerprint loss
};
using TrainHistory = std::vector<EpochStats>;

// Joint training: cross-entropy plus alpha * fingerprint loss, where each
// example contributes only its ground-truth class's targets. alpha = 0
// skips the fingerprint branch entirely and is bitwise identical to plain
// classifier training under the same seed. suite may be null iff alpha=0;
// when given with alpha=0 it is still scored (no-grad) for the history.
TrainHistory train_nfp(MlpClassifier& model, const LabeledDataset& train,
                       const FingerprintSuite* suite, const TrainConfig& cfg);

}  // namespace nfp
