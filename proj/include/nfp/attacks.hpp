#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nfp/classifier.hpp"
#include "nfp/fingerprint.hpp"

namespace nfp {

struct AttackConfig {
  double bound = 0.1;      // L-infinity distortion cap
  double step_size = 0.010;
  int max_iters = 50;
  double gamma = 0.0;      // fingerprint-tradeoff weight for adaptive attacks
  double gamma1 = 1e-3;    // cw: initial weight of (L_CW + gamma2 * L_fp)
  double gamma2 = 0.1;     // cw: initial fingerprint weight
  int bisection_steps = 5;
  double kappa = 0.0;      // cw confidence margin
  uint64_t seed = 0;
  // spsa only
  int spsa_samples = 128;
  double spsa_perturbation = 0.01;
};

struct AttackOutcome {
  std::vector<double> x_adv;
  bool success = false;  // predicted class != true class
  double linf = 0.0;
  double l2 = 0.0;
  double fp_loss_achieved = 0.0;  // true-class L_fp under the attack's suite
  int iters_used = 0;
  double gamma_used = 0.0;
  // balanced-family attacks: (fp_loss, adv_loss) sampled along the run
  std::vector<double> trajectory_fp;
  std::vector<double> trajectory_adv;
};

// Single ascent step on the cross-entropy: x + bound * sign(grad), clipped
// to [0,1]. sign(0) = 0.
AttackOutcome fgsm(const MlpClassifier& model, const std::vector<double>& x,
                   int y, const AttackConfig& cfg);

// Iterated FGSM with per-step projection to the bound ball and [0,1].
// variant 'a' stops at the first misclassification (capped at max_iters);
// variant 'b' always runs exactly max_iters steps.
AttackOutcome bim(const MlpClassifier& model, const std::vector<double>& x,
                  int y, const AttackConfig& cfg, char variant);

// Base attack driven by the combined objective CE - gamma * L_fp instead
// of plain CE. gamma = 0 reproduces the base attack bitwise.
AttackOutcome adaptive_grad_attack(const MlpClassifier& model,
                                   const FingerprintSuite& suite,
                                   const std::vector<double>& x, int y,
                                   const AttackConfig& cfg,
                                   const std::string& base /* fgsm | bim_b */);

struct BisectResult {
  AttackOutcome outcome;
  double gamma = 0.0;
  bool any_success = false;
};

// Log-scale search for the largest gamma in [lo, hi] whose attack still
// succeeds (assumes success is monotone downward in gamma). Returns the
// lo outcome flagged unsuccessful when even gamma=lo fails.
BisectResult bisect_gamma(const std::function<AttackOutcome(double)>& attack,
                          double lo, double hi, int steps);

// Targeted CW-L2 with a fingerprint term:
//   min ||x'-x||_2^2 + gamma1 * (L_CW(x', target) + gamma2 * L_fp(x', y_true))
// in tanh space, Adam. mode 1: search decreasing gamma1 then increasing
// gamma2, return the successful attack with smallest L_fp. mode 2: gamma2
// fixed at 1.0, return the successful attack with smallest L2. Not
// L-infinity bounded (cfg.bound unused).
AttackOutcome cw_adaptive(const MlpClassifier& model,
                          const FingerprintSuite& suite,
                          const std::vector<double>& x, int y_true,
                          int y_target, const AttackConfig& cfg, int mode);

// SPSA machinery: forward-only gradient estimation with Rademacher
// perturbations. Exposed for direct testing.
std::vector<double> spsa_gradient(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<double>& x, double perturbation, int n_samples,
    uint64_t seed);
std::vector<double> spsa_minimize(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<double>& x0, const std::vector<double>& center,
    const AttackConfig& cfg);

// Black-box adaptive attack: the model is reachable only through
// logits_fn. Minimizes margin(h, y) + gamma * L_fp with gamma found by
// bisection over [0.001, 50].
AttackOutcome spsa_adaptive(
    const std::function<std::vector<double>(const std::vector<double>&)>& logits_fn,
    std::size_t num_classes, const FingerprintSuite& suite,
    const std::vector<double>& x, int y, const AttackConfig& cfg);

// Shared core of the balanced-loss attack family: minimize the mean over
// models of  f1 * L_fp(x', y') + f2 * L_adv,  f1 = 10^dfp, f2 = 0.1^dfp,
// dfp = L_fp(x',y') - L_fp(x,y), y' = the model's current prediction at
// x', L_adv = negated cross-entropy toward the true label. f1/f2 are
// recomputed each step but not differentiated through. SGD with per-step
// ball + [0,1] projection. suite_for(m, iter) supplies model m's suite at
// iteration iter; set suites_change_per_iter when it returns different
// values across iterations so the L_fp(x,y) baseline is refreshed.
// Returns the final iterate if every model misclassifies it, else the
// last iterate they all misclassified, else the final iterate.
AttackOutcome balanced_engine(
    const std::vector<const MlpClassifier*>& models,
    const std::function<const FingerprintSuite*(std::size_t, int)>& suite_for,
    bool suites_change_per_iter, const std::vector<double>& x, int y,
    const AttackConfig& cfg);

// balanced_engine against a single model with a fixed suite.
AttackOutcome balanced_whitebox(const MlpClassifier& model,
                                const FingerprintSuite& suite,
                                const std::vector<double>& x, int y,
                                const AttackConfig& cfg);

// What the grey-box attacker knows about the suite distribution.
struct EotParams {
  std::size_t n_directions = 0;
  double epsilon = 0.0;
  bool dy_known = false;           // true: attacker holds the real dy targets
  const FingerprintSuite* known_dy_source = nullptr;  // required if dy_known
  uint64_t attacker_seed = 0;
  int n_avg = 1;  // independent suite samples averaged per iteration
};

// Same optimizer as balanced_whitebox, but the fingerprint term uses
// freshly resampled suites every iteration (n_avg-sample expectation
// estimate; default a single sample per step).
AttackOutcome eot_greybox(const MlpClassifier& model, const EotParams& params,
                          std::size_t num_classes, const std::vector<double>& x,
                          int y, const AttackConfig& cfg);

struct TransferOutcome {
  AttackOutcome outcome;
  bool transferred = false;  // success on the held-out target model
};

// balanced_whitebox against the mean objective over source models (each
// with its own suite); evaluated for transfer on the target.
TransferOutcome transfer_attack(
    const std::vector<const MlpClassifier*>& sources,
    const std::vector<const FingerprintSuite*>& source_suites,
    const MlpClassifier& target, const std::vector<double>& x, int y,
    const AttackConfig& cfg);

struct BallProbeReport {
  std::size_t n_samples = 0;
  std::size_t n_adversarial = 0;
  bool any_adversarial = false;
  // min over adversarial samples of min over classes of L_fp
  double min_adv_fp_loss = 0.0;
};

// Uniform samples in the L-infinity ball around x (clipped to [0,1]);
// counts misclassified ones and tracks their minimal fingerprint loss.
BallProbeReport random_ball_probe(const MlpClassifier& model,
                                  const FingerprintSuite& suite,
                                  const std::vector<double>& x, int y,
                                  double eps_ball, std::size_t n_samples,
                                  uint64_t seed);

}  // namespace nfp
