#include "nfp/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "nfp/errors.hpp"
#include "nfp/rng.hpp"

namespace nfp {

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Intersection of the bound ball around x0 with the [0,1] box is itself a
// per-coordinate interval, so one clamp serves both constraints.
void clamp_ball_box(std::vector<double>& x, const std::vector<double>& x0,
                    double bound) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = std::max(0.0, x0[i] - bound);
    const double hi = std::min(1.0, x0[i] + bound);
    x[i] = std::clamp(x[i], lo, hi);
  }
}

void fill_norms(AttackOutcome& out, const std::vector<double>& x) {
  out.linf = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = out.x_adv[i] - x[i];
    out.linf = std::max(out.linf, std::abs(d));
    sq += d * d;
  }
  out.l2 = std::sqrt(sq);
}

// d(CE)/dx at a single example, via a throwaway tape. Optionally combined
// with -gamma * L_fp (the adaptive gradient objective); the fingerprint
// branch is skipped entirely at gamma = 0 so the base attack is
// reproduced bitwise.
std::vector<double> combined_objective_grad(const MlpClassifier& model,
                                            const FingerprintSuite* suite,
                                            double gamma,
                                            const std::vector<double>& x,
                                            int y) {
  Tape tape;
  Tensor x_t = tape.leaf({1, x.size()}, x);
  Tensor obj;
  if (suite && gamma != 0.0) {
    Tensor lfp =
        fingerprint_loss_graph(model.params(), model.widths(), x_t, y, *suite);
    // The stacked fingerprint forward already contains the clean row;
    // rebuilding it for the CE term costs one extra small forward.
    Tensor z = MlpClassifier::forward(model.params(), model.widths(), x_t);
    obj = sub(softmax_cross_entropy(z, {y}), scale(lfp, gamma));
  } else {
    Tensor z = MlpClassifier::forward(model.params(), model.widths(), x_t);
    obj = softmax_cross_entropy(z, {y});
  }
  tape.backward(obj);
  return tape.grad(x_t).values();
}

AttackOutcome run_fgsm(const MlpClassifier& model, const FingerprintSuite* suite,
                       double gamma, const std::vector<double>& x, int y,
                       const AttackConfig& cfg) {
  auto g = combined_objective_grad(model, suite, gamma, x, y);
  AttackOutcome out;
  out.x_adv.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.x_adv[i] = x[i] + cfg.bound * sign0(g[i]);
  clamp_ball_box(out.x_adv, x, cfg.bound);
  out.iters_used = 1;
  out.success = model.predict(out.x_adv) != y;
  fill_norms(out, x);
  return out;
}

AttackOutcome run_bim(const MlpClassifier& model, const FingerprintSuite* suite,
                      double gamma, const std::vector<double>& x, int y,
                      const AttackConfig& cfg, char variant) {
  if (variant != 'a' && variant != 'b')
    throw std::invalid_argument("bim: variant must be 'a' or 'b'");
  if (cfg.max_iters < 1) throw std::invalid_argument("bim: max_iters < 1");
  AttackOutcome out;
  out.x_adv = x;
  out.iters_used = 0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (variant == 'a' && model.predict(out.x_adv) != y) break;
    auto g = combined_objective_grad(model, suite, gamma, out.x_adv, y);
    for (std::size_t i = 0; i < x.size(); ++i)
      out.x_adv[i] += cfg.step_size * sign0(g[i]);
    clamp_ball_box(out.x_adv, x, cfg.bound);
    out.iters_used = it + 1;
  }
  out.success = model.predict(out.x_adv) != y;
  fill_norms(out, x);
  return out;
}

}  // namespace

AttackOutcome fgsm(const MlpClassifier& model, const std::vector<double>& x,
                   int y, const AttackConfig& cfg) {
  return run_fgsm(model, nullptr, 0.0, x, y, cfg);
}

AttackOutcome bim(const MlpClassifier& model, const std::vector<double>& x,
                  int y, const AttackConfig& cfg, char variant) {
  return run_bim(model, nullptr, 0.0, x, y, cfg, variant);
}

AttackOutcome adaptive_grad_attack(const MlpClassifier& model,
                                   const FingerprintSuite& suite,
                                   const std::vector<double>& x, int y,
                                   const AttackConfig& cfg,
                                   const std::string& base) {
  AttackOutcome out;
  if (base == "fgsm")
    out = run_fgsm(model, &suite, cfg.gamma, x, y, cfg);
  else if (base == "bim_b")
    out = run_bim(model, &suite, cfg.gamma, x, y, cfg, 'b');
  else
    throw std::invalid_argument("adaptive_grad_attack: base must be fgsm or "
                                "bim_b, got '" + base + "'");
  out.gamma_used = cfg.gamma;
  out.fp_loss_achieved = fingerprint_loss(model, out.x_adv, y, suite);
  return out;
}

BisectResult bisect_gamma(const std::function<AttackOutcome(double)>& attack,
                          double lo, double hi, int steps) {
  if (steps < 1) throw std::invalid_argument("bisect_gamma: steps < 1");
  if (!(lo > 0.0) || !(hi > lo))
    throw std::invalid_argument("bisect_gamma: need 0 < lo < hi");
  BisectResult res;
  AttackOutcome at_hi = attack(hi);
  if (at_hi.success) {
    res.outcome = std::move(at_hi);
    res.gamma = hi;
    res.any_success = true;
    res.outcome.gamma_used = hi;
    return res;
  }
  AttackOutcome at_lo = attack(lo);
  if (!at_lo.success) {
    res.outcome = std::move(at_lo);
    res.gamma = lo;
    res.any_success = false;
    res.outcome.gamma_used = lo;
    return res;
  }
  // success at lo, failure at hi: log-scale bisection for the crossover
  double good = lo, bad = hi;
  AttackOutcome best = std::move(at_lo);
  for (int s = 0; s < steps; ++s) {
    const double mid = std::sqrt(good * bad);
    AttackOutcome at_mid = attack(mid);
    if (at_mid.success) {
      good = mid;
      best = std::move(at_mid);
    } else {
      bad = mid;
    }
  }
  res.outcome = std::move(best);
  res.gamma = good;
  res.any_success = true;
  res.outcome.gamma_used = good;
  return res;
}

// --- CW ---------------------------------------------------------------

namespace {

struct CwRunResult {
  bool success = false;
  std::vector<double> x_best;
  double l2_best = 0.0;
  double fp_best = 0.0;
  int iters = 0;
};

// One CW optimization at fixed (gamma1, gamma2). Tracks the best
// target-hitting iterate under the mode's criterion (mode 1: smallest
// L_fp, mode 2: smallest squared distance).
CwRunResult cw_run(const MlpClassifier& model, const FingerprintSuite& suite,
                   const std::vector<double>& x, int y_true, int y_target,
                   const AttackConfig& cfg, int mode, double gamma1,
                   double gamma2) {
  const std::size_t l = x.size();
  // tanh-space parameterization keeps x' inside (0,1) by construction
  std::vector<double> v0(l);
  for (std::size_t i = 0; i < l; ++i) {
    const double c = std::clamp(x[i], 1e-6, 1.0 - 1e-6);
    v0[i] = std::atanh(2.0 * c - 1.0);
  }
  std::vector<Tensor> v{Tensor({1, l}, v0)};
  AdamState adam;
  const Tensor ones({1, l}, std::vector<double>(l, 1.0));
  const Tensor x_const({1, l}, x);
  CwRunResult res;
  double best_key = 0.0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    Tape tape;
    Tensor v_t = tape.leaf({1, l}, v[0].values());
    Tensor x_adv = scale(add(nfp::tanh(v_t), ones), 0.5);
    Tensor dist = sum_squares(sub(x_adv, x_const));
    Tensor z = MlpClassifier::forward(model.params(), model.widths(), x_adv);
    Tensor cw = cw_margin(z, y_target, cfg.kappa);
    Tensor obj;
    double fp_value = 0.0;
    if (gamma2 != 0.0) {
      Tensor lfp = fingerprint_loss_graph(model.params(), model.widths(), x_adv,
                                          y_true, suite);
      fp_value = lfp.item();
      obj = add(dist, scale(add(cw, scale(lfp, gamma2)), gamma1));
    } else {
      obj = add(dist, scale(cw, gamma1));
    }
    // the logits row is already evaluated; check whether the target is hit
    const auto& zl = z.values();
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < zl.size(); ++j)
      if (zl[j] > zl[argmax]) argmax = j;
    if (static_cast<int>(argmax) == y_target) {
      const double key = mode == 1 ? fp_value : dist.item();
      if (!res.success || key < best_key) {
        res.success = true;
        best_key = key;
        res.x_best = x_adv.values();
        res.l2_best = std::sqrt(dist.item());
        res.fp_best = fp_value;
      }
    }
    tape.backward(obj);
    std::vector<Tensor> grads{tape.grad(v_t)};
    adam_step(v, grads, adam, cfg.step_size);
    res.iters = it + 1;
  }
  return res;
}

}  // namespace

AttackOutcome cw_adaptive(const MlpClassifier& model,
                          const FingerprintSuite& suite,
                          const std::vector<double>& x, int y_true,
                          int y_target, const AttackConfig& cfg, int mode) {
  if (mode != 1 && mode != 2)
    throw std::invalid_argument("cw_adaptive: mode must be 1 or 2");
  if (y_target == y_true)
    throw std::invalid_argument("cw_adaptive: target must differ from the true "
                                "class");
  const double gamma2_fixed = mode == 1 ? cfg.gamma2 : 1.0;
  constexpr double kGamma1Max = 1e6, kGamma2Max = 1e4;
  const int gamma1_budget = 9;

  CwRunResult best;
  double best_key = 0.0;
  double last_gamma = cfg.gamma1;
  auto consider = [&](const CwRunResult& r, double gamma_here) {
    if (!r.success) return;
    const double key = mode == 1 ? r.fp_best : r.l2_best;
    if (!best.success || key < best_key) {
      best = r;
      best_key = key;
      last_gamma = gamma_here;
    }
  };

  // Phase 1: smallest successful gamma1, climbing then log-bisecting.
  int evals = 0;
  double g1 = cfg.gamma1;
  CwRunResult r = cw_run(model, suite, x, y_true, y_target, cfg, mode, g1,
                         gamma2_fixed);
  ++evals;
  consider(r, g1);
  double g1_success = r.success ? g1 : -1.0;
  double g1_fail = r.success ? -1.0 : g1;
  while (g1_success < 0.0 && evals < gamma1_budget && g1 < kGamma1Max) {
    g1 = std::min(g1 * 10.0, kGamma1Max);
    r = cw_run(model, suite, x, y_true, y_target, cfg, mode, g1, gamma2_fixed);
    ++evals;
    consider(r, g1);
    if (r.success)
      g1_success = g1;
    else
      g1_fail = g1;
  }
  if (g1_success > 0.0 && g1_fail > 0.0) {
    while (evals < gamma1_budget) {
      const double mid = std::sqrt(g1_success * g1_fail);
      r = cw_run(model, suite, x, y_true, y_target, cfg, mode, mid,
                 gamma2_fixed);
      ++evals;
      consider(r, mid);
      if (r.success)
        g1_success = mid;
      else
        g1_fail = mid;
    }
  }

  // Phase 2 (mode 1 only): push gamma2 up while the attack still lands.
  // Skipped at gamma2 = 0, which is plain CW-L2 with no fingerprint term.
  if (mode == 1 && g1_success > 0.0 && gamma2_fixed > 0.0) {
    double g2_good = gamma2_fixed, g2_bad = -1.0;
    r = cw_run(model, suite, x, y_true, y_target, cfg, mode, g1_success,
               kGamma2Max);
    consider(r, g1_success);
    if (r.success) {
      g2_good = kGamma2Max;
    } else {
      g2_bad = kGamma2Max;
      for (int s = 0; s < cfg.bisection_steps - 1; ++s) {
        const double mid = std::sqrt(g2_good * g2_bad);
        r = cw_run(model, suite, x, y_true, y_target, cfg, mode, g1_success,
                   mid);
        consider(r, g1_success);
        if (r.success)
          g2_good = mid;
        else
          g2_bad = mid;
      }
    }
  }

  AttackOutcome out;
  if (best.success) {
    out.x_adv = best.x_best;
    out.fp_loss_achieved = best.fp_best;
  } else {
    out.x_adv = x;  // nothing landed; report the unperturbed input
    out.fp_loss_achieved = fingerprint_loss(model, x, y_true, suite);
  }
  out.gamma_used = last_gamma;
  out.iters_used = cfg.max_iters;
  out.success = model.predict(out.x_adv) != y_true;
  fill_norms(out, x);
  return out;
}

// --- SPSA ---------------------------------------------------------------

std::vector<double> spsa_gradient(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<double>& x, double perturbation, int n_samples,
    uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("spsa_gradient: n_samples < 1");
  Rng rng(seed);
  const std::size_t l = x.size();
  std::vector<double> g(l, 0.0), r(l), probe(l);
  for (int s = 0; s < n_samples; ++s) {
    for (auto& ri : r) ri = static_cast<double>(rng.rademacher());
    for (std::size_t i = 0; i < l; ++i) probe[i] = x[i] + perturbation * r[i];
    const double jp = objective(probe);
    for (std::size_t i = 0; i < l; ++i) probe[i] = x[i] - perturbation * r[i];
    const double jm = objective(probe);
    const double coef = (jp - jm) / (2.0 * perturbation);
    for (std::size_t i = 0; i < l; ++i) g[i] += coef * r[i];
  }
  for (auto& gi : g) gi /= static_cast<double>(n_samples);
  return g;
}

std::vector<double> spsa_minimize(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<double>& x0, const std::vector<double>& center,
    const AttackConfig& cfg) {
  std::vector<double> x = x0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    auto g = spsa_gradient(objective, x, cfg.spsa_perturbation,
                           cfg.spsa_samples, derive_seed(cfg.seed, it));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= cfg.step_size * g[i];
    clamp_ball_box(x, center, cfg.bound);
  }
  return x;
}

namespace {

std::vector<double> normalize_or_throw(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  if (n < 1e-12)
    throw DegenerateNormError("logits norm below 1e-12 in forward-only "
                              "fingerprint evaluation");
  for (auto& x : v) x /= n;
  return v;
}

// Fingerprint loss through a forward-only interface (black-box contract).
double forward_only_fp_loss(
    const std::function<std::vector<double>(const std::vector<double>&)>& logits_fn,
    const std::vector<double>& x, int y, const FingerprintSuite& suite) {
  const auto phi0 = normalize_or_throw(logits_fn(x));
  std::vector<double> moved(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < suite.n_directions; ++i) {
    const double* dx = suite.dx_row(i);
    for (std::size_t c = 0; c < x.size(); ++c) moved[c] = x[c] + dx[c];
    const auto phi = normalize_or_throw(logits_fn(moved));
    const double* target = suite.dy_row(i, static_cast<std::size_t>(y));
    double sq = 0.0;
    for (std::size_t c = 0; c < phi.size(); ++c) {
      const double d = (phi[c] - phi0[c]) - target[c];
      sq += d * d;
    }
    total += sq;
  }
  return total;
}

int argmax_index(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;
  return static_cast<int>(best);
}

}  // namespace

AttackOutcome spsa_adaptive(
    const std::function<std::vector<double>(const std::vector<double>&)>& logits_fn,
    std::size_t num_classes, const FingerprintSuite& suite,
    const std::vector<double>& x, int y, const AttackConfig& cfg) {
  if (num_classes < 2)
    throw std::invalid_argument("spsa_adaptive: need at least 2 classes");
  auto run_at = [&](double gamma) {
    auto objective = [&, gamma](const std::vector<double>& probe) {
      const auto z = logits_fn(probe);
      double other = -1e300;
      for (std::size_t j = 0; j < z.size(); ++j)
        if (static_cast<int>(j) != y) other = std::max(other, z[j]);
      const double margin = z[static_cast<std::size_t>(y)] - other;
      if (gamma == 0.0) return margin;
      return margin + gamma * forward_only_fp_loss(logits_fn, probe, y, suite);
    };
    AttackOutcome out;
    out.x_adv = spsa_minimize(objective, x, x, cfg);
    out.success = argmax_index(logits_fn(out.x_adv)) != y;
    out.fp_loss_achieved = forward_only_fp_loss(logits_fn, out.x_adv, y, suite);
    out.iters_used = cfg.max_iters;
    out.gamma_used = gamma;
    fill_norms(out, x);
    return out;
  };
  // largest gamma in [0.001, 50] that still flips the class
  BisectResult res = bisect_gamma(run_at, 0.001, 50.0, cfg.bisection_steps);
  return res.outcome;
}

// --- balanced-loss family ---------------------------------------------------

AttackOutcome balanced_engine(
    const std::vector<const MlpClassifier*>& models,
    const std::function<const FingerprintSuite*(std::size_t, int)>& suite_for,
    bool suites_change_per_iter, const std::vector<double>& x, int y,
    const AttackConfig& cfg) {
  if (models.empty())
    throw std::invalid_argument("balanced_engine: need at least one model");
  if (cfg.max_iters < 1)
    throw std::invalid_argument("balanced_engine: max_iters < 1");
  const std::size_t l = x.size();
  const std::size_t n_models = models.size();
  const double inv_m = 1.0 / static_cast<double>(n_models);

  // L_fp(x, y) baselines; recomputed per iteration when suites resample.
  std::vector<double> base_fp(n_models, 0.0);
  auto refresh_base = [&](int iter) {
    for (std::size_t m = 0; m < n_models; ++m)
      base_fp[m] = fingerprint_loss(*models[m], x, y, *suite_for(m, iter));
  };
  refresh_base(0);

  std::vector<double> cur = x;
  // Among iterates every model misclassifies, keep the one with the lowest
  // detection score under the attacker-visible suites (the iterate right
  // after the class flip usually still matches the original class's
  // targets; later steps under the exploded 10^dfp factor wreck that fit).
  // White-box attackers score with the true suite; EOT attackers only with
  // their current resample.
  std::vector<double> best_evading;
  double best_score = std::numeric_limits<double>::infinity();
  auto evading_score = [&](const std::vector<double>& pt, int iter) {
    double s = 0.0;
    for (std::size_t m = 0; m < n_models; ++m) {
      const DetectionVerdict v = detect(*models[m], pt, *suite_for(m, iter));
      s += *std::min_element(v.per_class_d.begin(), v.per_class_d.end());
    }
    return s * inv_m;
  };
  const int traj_every = std::max(1, cfg.max_iters / 100);
  AttackOutcome out;
  int total_iters = 0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (suites_change_per_iter && it > 0) refresh_base(it);
    Tape tape;
    Tensor x_t = tape.leaf({1, l}, cur);
    Tensor obj;
    bool all_misclassified = true;
    double fp_sum = 0.0, adv_sum = 0.0;
    for (std::size_t m = 0; m < n_models; ++m) {
      const MlpClassifier& model = *models[m];
      const FingerprintSuite& suite = *suite_for(m, it);
      Tensor z = MlpClassifier::forward(model.params(), model.widths(), x_t);
      const int y_pred = argmax_index(z.values());
      all_misclassified = all_misclassified && y_pred != y;
      Tensor lfp = fingerprint_loss_graph(model.params(), model.widths(), x_t,
                                          y_pred, suite);
      Tensor ce = softmax_cross_entropy(z, {y});
      // Scaling factors are plain numbers recomputed from the current
      // iterate — deliberately not differentiated through.
      const double dfp = std::clamp(lfp.item() - base_fp[m], -30.0, 30.0);
      const double f1 = std::pow(10.0, dfp);
      const double f2 = std::pow(0.1, dfp);
      Tensor term = sub(scale(lfp, f1 * inv_m), scale(ce, f2 * inv_m));
      obj = m == 0 ? term : add(obj, term);
      fp_sum += lfp.item();
      adv_sum += -ce.item();
    }
    if (all_misclassified) {
      const double s = evading_score(cur, it);
      if (s < best_score) {
        best_score = s;
        best_evading = cur;
      }
    }
    if (it % traj_every == 0) {
      out.trajectory_fp.push_back(fp_sum * inv_m);
      out.trajectory_adv.push_back(adv_sum * inv_m);
    }
    tape.backward(obj);
    const std::vector<double> g = tape.grad(x_t).values();
    for (std::size_t i = 0; i < l; ++i) cur[i] -= cfg.step_size * g[i];
    clamp_ball_box(cur, x, cfg.bound);
    total_iters = it + 1;
  }
  // The post-loop iterate is one more candidate; then return the best
  // evading iterate seen, or the final iterate when nothing ever flipped.
  bool final_success = true;
  for (const auto* m : models)
    final_success = final_success && m->predict(cur) != y;
  if (final_success &&
      evading_score(cur, cfg.max_iters - 1) < best_score)
    best_evading = std::move(cur);
  if (!best_evading.empty()) cur = std::move(best_evading);

  out.x_adv = std::move(cur);
  out.iters_used = total_iters;
  bool all_bad = true;
  for (const auto* m : models)
    all_bad = all_bad && m->predict(out.x_adv) != y;
  out.success = all_bad;
  out.fp_loss_achieved =
      fingerprint_loss(*models[0], out.x_adv, y,
                       *suite_for(0, cfg.max_iters - 1));
  fill_norms(out, x);
  return out;
}

AttackOutcome balanced_whitebox(const MlpClassifier& model,
                                const FingerprintSuite& suite,
                                const std::vector<double>& x, int y,
                                const AttackConfig& cfg) {
  return balanced_engine({&model},
                         [&suite](std::size_t, int) { return &suite; }, false,
                         x, y, cfg);
}

AttackOutcome eot_greybox(const MlpClassifier& model, const EotParams& params,
                          std::size_t num_classes, const std::vector<double>& x,
                          int y, const AttackConfig& cfg) {
  if (params.n_directions < 1)
    throw std::invalid_argument("eot_greybox: n_directions < 1");
  if (params.dy_known && !params.known_dy_source)
    throw std::invalid_argument("eot_greybox: dy_known without a source suite");
  if (params.n_avg < 1)
    throw std::invalid_argument("eot_greybox: n_avg < 1");
  const std::size_t n_avg = static_cast<std::size_t>(params.n_avg);
  const uint64_t dx_root = derive_seed(params.attacker_seed,
                                       stream_tag("eot-dx"));
  const uint64_t dy_root = derive_seed(params.attacker_seed,
                                       stream_tag("eot-dy"));
  // n_avg independent sample streams; the engine averages over "models",
  // so averaging over suite samples is the same single model repeated
  // with one fresh-sample stream per slot.
  auto scratch = std::make_shared<std::vector<FingerprintSuite>>(n_avg);
  auto cached = std::make_shared<std::vector<int>>(n_avg, -1);
  for (auto& s : *scratch) {
    s.n_directions = params.n_directions;
    s.num_classes = num_classes;
    s.input_dim = x.size();
    s.epsilon = params.epsilon;
    s.tau = 1.0;  // unused by the attack
    s.dy_mode = params.dy_known ? "structured" : "random";
  }
  auto provider = [&params, num_classes, n_avg, dx_root, dy_root, scratch,
                   cached](std::size_t m, int iter) -> const FingerprintSuite* {
    FingerprintSuite& s = (*scratch)[m];
    if ((*cached)[m] == iter) return &s;
    (*cached)[m] = iter;
    const uint64_t draw = static_cast<uint64_t>(iter) * n_avg + m;
    s.dx = sample_directions(params.n_directions, s.input_dim, params.epsilon,
                             derive_seed(dx_root, draw));
    if (params.dy_known)
      s.dy = params.known_dy_source->dy;
    else
      s.dy = random_targets(params.n_directions, num_classes,
                            derive_seed(dy_root, draw));
    return &s;
  };
  const std::vector<const MlpClassifier*> models(n_avg, &model);
  return balanced_engine(models, provider, true, x, y, cfg);
}

TransferOutcome transfer_attack(
    const std::vector<const MlpClassifier*>& sources,
    const std::vector<const FingerprintSuite*>& source_suites,
    const MlpClassifier& target, const std::vector<double>& x, int y,
    const AttackConfig& cfg) {
  if (sources.empty())
    throw std::invalid_argument("transfer_attack: need at least one source "
                                "model");
  if (sources.size() != source_suites.size())
    throw std::invalid_argument("transfer_attack: one suite per source model");
  TransferOutcome out;
  out.outcome = balanced_engine(
      sources,
      [&source_suites](std::size_t m, int) { return source_suites[m]; }, false,
      x, y, cfg);
  out.transferred = target.predict(out.outcome.x_adv) != y;
  return out;
}

BallProbeReport random_ball_probe(const MlpClassifier& model,
                                  const FingerprintSuite& suite,
                                  const std::vector<double>& x, int y,
                                  double eps_ball, std::size_t n_samples,
                                  uint64_t seed) {
  if (n_samples < 1)
    throw std::invalid_argument("random_ball_probe: n_samples < 1");
  if (eps_ball < 0.0)
    throw std::invalid_argument("random_ball_probe: negative ball radius");
  const std::size_t l = x.size();
  Rng rng(seed);
  BallProbeReport report;
  report.n_samples = n_samples;
  report.min_adv_fp_loss = std::numeric_limits<double>::infinity();
  const std::size_t chunk = 256;
  std::vector<double> block;
  block.reserve(chunk * l);
  for (std::size_t at = 0; at < n_samples; at += chunk) {
    const std::size_t count = std::min(chunk, n_samples - at);
    block.assign(count * l, 0.0);
    for (std::size_t s = 0; s < count; ++s)
      for (std::size_t c = 0; c < l; ++c)
        block[s * l + c] =
            std::clamp(x[c] + rng.uniform(-eps_ball, eps_ball), 0.0, 1.0);
    Tensor xs({count, l}, block);
    const auto preds = model.predict_batch(xs);
    std::vector<double> adv_rows;
    for (std::size_t s = 0; s < count; ++s)
      if (preds[s] != y)
        adv_rows.insert(adv_rows.end(), block.begin() + s * l,
                        block.begin() + (s + 1) * l);
    const std::size_t n_adv = adv_rows.size() / l;
    report.n_adversarial += n_adv;
    if (n_adv == 0) continue;
    const auto resp = batch_responses(
        model, Tensor({n_adv, l}, std::move(adv_rows)), suite);
    const std::size_t nk = suite.n_directions * suite.num_classes;
    for (std::size_t s = 0; s < n_adv; ++s) {
      const double* rr = resp.data() + s * nk;
      // min over classes of the squared-deviation sum
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < suite.num_classes; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < suite.n_directions; ++i) {
          const double* target = suite.dy_row(i, k);
          const double* row = rr + i * suite.num_classes;
          double sq = 0.0;
          for (std::size_t c = 0; c < suite.num_classes; ++c) {
            const double d = row[c] - target[c];
            sq += d * d;
          }
          total += sq;
        }
        best = std::min(best, total);
      }
      report.min_adv_fp_loss = std::min(report.min_adv_fp_loss, best);
    }
  }
  report.any_adversarial = report.n_adversarial > 0;
  if (!report.any_adversarial) report.min_adv_fp_loss = 0.0;
  return report;
}

}  // namespace nfp
