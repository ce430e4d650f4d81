#include "nfp/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "nfp/errors.hpp"
#include "nfp/fingerprint.hpp"
#include "nfp/rng.hpp"

namespace nfp {

MlpClassifier::MlpClassifier(std::vector<std::size_t> widths, uint64_t seed) {
  if (widths.size() < 2)
    throw DimensionError("classifier needs at least input and output widths");
  for (auto w : widths)
    if (w == 0) throw DimensionError("zero layer width");
  widths_ = std::move(widths);
  Rng rng(derive_seed(seed, stream_tag("model-init")));
  for (std::size_t layer = 0; layer + 1 < widths_.size(); ++layer) {
    const std::size_t fan_in = widths_[layer], fan_out = widths_[layer + 1];
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = std_dev * rng.gaussian();
    params_.emplace_back(std::vector<std::size_t>{fan_in, fan_out}, std::move(w));
    params_.emplace_back(std::vector<std::size_t>{fan_out},
                         std::vector<double>(fan_out, 0.0));
  }
}

Tensor MlpClassifier::forward(const std::vector<Tensor>& params,
                              const std::vector<std::size_t>& widths,
                              const Tensor& x) {
  if (x.rank() != 2 || x.cols() != widths.front())
    throw DimensionError("forward: input width " + std::to_string(x.cols()) +
                         " != model input " + std::to_string(widths.front()));
  Tensor h = x;
  const std::size_t n_layers = widths.size() - 1;
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    h = affine(h, params[2 * layer], params[2 * layer + 1]);
    if (layer + 1 < n_layers) h = relu(h);
  }
  return h;
}

std::vector<Tensor> MlpClassifier::taped_params(Tape& tape) const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const Tensor& p : params_) out.push_back(tape.leaf(p.shape(), p.values()));
  return out;
}

void MlpClassifier::set_params(std::vector<Tensor> p) {
  if (p.size() != params_.size())
    throw DimensionError("set_params: expected " +
                         std::to_string(params_.size()) + " tensors");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i].shape() != params_[i].shape())
      throw DimensionError("set_params: shape mismatch at tensor " +
                           std::to_string(i));
  params_ = std::move(p);
}

Tensor MlpClassifier::logits(const Tensor& x) const {
  return forward(params_, widths_, x);
}

Tensor MlpClassifier::normalized_logits(const Tensor& x) const {
  return l2_normalize(logits(x));
}

int MlpClassifier::predict(const std::vector<double>& x) const {
  Tensor z = logits(Tensor({1, input_dim()}, x));
  const auto& v = z.values();
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;  // ties keep the lowest index
  return static_cast<int>(best);
}

std::vector<int> MlpClassifier::predict_batch(const Tensor& x) const {
  Tensor z = logits(x);
  const std::size_t b = z.rows(), kk = z.cols();
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = z.values().data() + i * kk;
    std::size_t best = 0;
    for (std::size_t j = 1; j < kk; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double MlpClassifier::accuracy(const LabeledDataset& data) const {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  const std::size_t chunk = 256;
  for (std::size_t at = 0; at < data.size(); at += chunk) {
    const std::size_t hi = std::min(at + chunk, data.size());
    std::vector<std::size_t> idx(hi - at);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = at + i;
    auto preds = predict_batch(data.batch(idx));
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (preds[i] == data.labels[at + i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// --- checkpoint ------------------------------------------------------------

void MlpClassifier::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError(path + ": cannot open for write");
  out << "NFPMODEL v1\n" << widths_.size();
  for (auto w : widths_) out << ' ' << w;
  out << '\n';
  char buf[40];
  for (const Tensor& p : params_) {
    bool first = true;
    for (double v : p.values()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      if (!first) out << ' ';
      out << buf;
      first = false;
    }
    out << '\n';
  }
  if (!out) throw FormatError(path + ": write failed");
}

MlpClassifier MlpClassifier::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  std::string header;
  std::getline(in, header);
  if (header != "NFPMODEL v1")
    throw FormatError(path + ": bad header '" + header + "'");
  std::size_t n_widths = 0;
  if (!(in >> n_widths) || n_widths < 2)
    throw FormatError(path + ": bad width count");
  MlpClassifier model;
  model.widths_.resize(n_widths);
  for (auto& w : model.widths_)
    if (!(in >> w) || w == 0) throw FormatError(path + ": bad layer width");
  for (std::size_t layer = 0; layer + 1 < n_widths; ++layer) {
    const std::size_t fan_in = model.widths_[layer];
    const std::size_t fan_out = model.widths_[layer + 1];
    std::vector<double> w(fan_in * fan_out), b(fan_out);
    for (auto& v : w)
      if (!(in >> v)) throw FormatError(path + ": truncated weights at layer " +
                                        std::to_string(layer));
    for (auto& v : b)
      if (!(in >> v)) throw FormatError(path + ": truncated biases at layer " +
                                        std::to_string(layer));
    model.params_.emplace_back(std::vector<std::size_t>{fan_in, fan_out},
                               std::move(w));
    model.params_.emplace_back(std::vector<std::size_t>{fan_out}, std::move(b));
  }
  return model;
}

// --- training ----------------------------------------------------------------

namespace {

// Precomputed constants for one batch's fingerprint branch.
struct FpBatchConstants {
  Tensor stacked;                 // [(N+1)*b x l]: x rows then x+dx_i blocks
  std::vector<Tensor> dy_blocks;  // N tensors [b x K], row r = dy^{i, label_r}
};

FpBatchConstants fp_batch_constants(const Tensor& x_batch,
                                    const std::vector<int>& labels,
                                    const FingerprintSuite& suite) {
  const std::size_t b = x_batch.rows(), l = x_batch.cols();
  const std::size_t n = suite.n_directions, kk = suite.num_classes;
  FpBatchConstants out;
  std::vector<double> stacked((n + 1) * b * l);
  std::copy(x_batch.values().begin(), x_batch.values().end(), stacked.begin());
  for (std::size_t i = 0; i < n; ++i) {
    const double* dx = suite.dx_row(i);
    double* block = stacked.data() + (i + 1) * b * l;
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < l; ++c)
        block[r * l + c] = x_batch.values()[r * l + c] + dx[c];
  }
  out.stacked = Tensor({(n + 1) * b, l}, std::move(stacked));
  out.dy_blocks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> block(b * kk);
    for (std::size_t r = 0; r < b; ++r) {
      const double* row = suite.dy_row(i, static_cast<std::size_t>(labels[r]));
      std::copy(row, row + kk, block.begin() + r * kk);
    }
    out.dy_blocks.emplace_back(std::vector<std::size_t>{b, kk}, std::move(block));
  }
  return out;
}

}  // namespace

TrainHistory train_nfp(MlpClassifier& model, const LabeledDataset& train,
                       const FingerprintSuite* suite, const TrainConfig& cfg) {
  if (cfg.alpha < 0.0) throw std::invalid_argument("train_nfp: alpha < 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train_nfp: batch_size < 1");
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
    throw std::invalid_argument("train_nfp: unknown optimizer '" +
                                cfg.optimizer + "'");
  if (cfg.alpha > 0.0 && !suite)
    throw std::invalid_argument("train_nfp: alpha > 0 requires a suite");
  if (train.input_dim != model.input_dim() ||
      train.num_classes != model.num_classes())
    throw DimensionError("train_nfp: dataset (" + std::to_string(train.input_dim) +
                         ", " + std::to_string(train.num_classes) +
                         ") vs model (" + std::to_string(model.input_dim()) +
                         ", " + std::to_string(model.num_classes()) + ")");
  if (suite && (suite->input_dim != model.input_dim() ||
                suite->num_classes != model.num_classes()))
    throw DimensionError("train_nfp: suite dims do not match model");
  const std::size_t n = train.size();
  if (n == 0) throw DimensionError("train_nfp: empty training set");

  const bool use_fp = cfg.alpha > 0.0;
  Rng shuffle_rng(derive_seed(cfg.seed, stream_tag("epoch-shuffle")));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  AdamState adam;
  TrainHistory history;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double epoch_task = 0.0, epoch_fp = 0.0;
    for (std::size_t at = 0; at < n; at += cfg.batch_size) {
      const std::size_t hi = std::min(at + cfg.batch_size, n);
      const std::size_t b = hi - at;
      std::vector<std::size_t> idx(order.begin() + at, order.begin() + hi);
      Tensor x_batch = train.batch(idx);
      std::vector<int> labels(b);
      for (std::size_t i = 0; i < b; ++i) labels[i] = train.labels[idx[i]];

      Tape tape;
      std::vector<Tensor> taped = model.taped_params(tape);
      Tensor loss, ce;
      double batch_fp = 0.0;
      if (use_fp) {
        auto consts = fp_batch_constants(x_batch, labels, *suite);
        Tensor z_all = MlpClassifier::forward(taped, model.widths(), consts.stacked);
        Tensor z0 = slice_rows(z_all, 0, b);
        ce = softmax_cross_entropy(z0, labels);
        Tensor phi = l2_normalize(z_all);
        Tensor phi0 = slice_rows(phi, 0, b);
        Tensor fp_total;
        for (std::size_t i = 0; i < suite->n_directions; ++i) {
          Tensor fi = sub(slice_rows(phi, (i + 1) * b, (i + 2) * b), phi0);
          Tensor err = sub(fi, consts.dy_blocks[i]);
          Tensor sq = sum_squares(err);
          fp_total = i == 0 ? sq : add(fp_total, sq);
        }
        batch_fp = fp_total.item();
        loss = add(ce, scale(fp_total, cfg.alpha / static_cast<double>(b)));
      } else {
        Tensor z = MlpClassifier::forward(taped, model.widths(), x_batch);
        ce = softmax_cross_entropy(z, labels);
        loss = ce;
      }
      if (!std::isfinite(loss.item()))
        throw std::runtime_error(
            "train_nfp: non-finite loss " + std::to_string(loss.item()) +
            " at epoch " + std::to_string(epoch) + ", batch offset " +
            std::to_string(at) + "; lower the learning rate");
      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(taped.size());
      for (const Tensor& p : taped) grads.push_back(tape.grad(p));
      std::vector<Tensor> params = model.params();
      if (cfg.optimizer == "adam")
        adam_step(params, grads, adam, cfg.lr);
      else
        sgd_step(params, grads, cfg.lr);
      for (const Tensor& p : params)
        for (double v : p.values())
          if (!std::isfinite(v))
            throw std::runtime_error("train_nfp: non-finite parameter after "
                                     "step at epoch " + std::to_string(epoch));
      model.set_params(std::move(params));
      epoch_task += ce.item() * static_cast<double>(b);
      epoch_fp += batch_fp;
    }
    EpochStats stats;
    stats.task_loss = epoch_task / static_cast<double>(n);
    if (use_fp) {
      stats.fp_loss = epoch_fp / static_cast<double>(n);
    } else if (suite) {
      // alpha = 0 but a suite was supplied: score it for the history
      // without touching the optimizer path.
      const std::size_t sample = std::min<std::size_t>(256, n);
      double acc = 0.0;
      for (std::size_t i = 0; i < sample; ++i)
        acc += fingerprint_loss(model, train.example(i), train.labels[i], *suite);
      stats.fp_loss = acc / static_cast<double>(sample);
    }
    history.push_back(stats);
  }
  return history;
}

}  // namespace nfp
