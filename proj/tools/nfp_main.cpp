#include <sys/stat.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nfp/artifacts.hpp"
#include "nfp/attacks.hpp"
#include "nfp/classifier.hpp"
#include "nfp/datasets.hpp"
#include "nfp/errors.hpp"
#include "nfp/eval.hpp"
#include "nfp/fingerprint.hpp"
#include "nfp/linear_svm.hpp"
#include "nfp/rng.hpp"
#include "nfp/serve.hpp"

namespace {

using namespace nfp;

// All flag values in one bag; each subcommand registers the subset it
// understands. Strings echoed verbatim into the manifest.
struct Options {
  std::string task = "toy2d";  // toy2d | digits
  std::string dataset_dir;
  std::string model_path;
  std::string suite_path;
  std::size_t n_fp = 10;
  double eps = 0.03;
  double tau = 0.05;
  double alpha = 1.0;
  std::string attack = "fgsm";
  double bound = 0.1;
  int steps = 50;
  double step_size = 0.010;
  double gamma = 0.0;
  uint64_t seed = 1;
  std::string out_dir = "out";
  uint16_t port = 0;
  bool stdio = false;
  double calibrate = -1.0;  // quantile; <0 = not calibrating
  std::string input_csv;
  std::string dy_mode = "structured";
  int epochs = -1;           // -1 = per-task default
  std::size_t train_size = 0;  // 0 = per-task default
  std::size_t pretest_size = 200;
  std::string hidden;  // comma list; empty = per-task default
  double lr = 0.0;         // 0 = per-task default
  std::size_t batch = 0;   // 0 = per-task default
  bool keep_unsuccessful = false;
};

std::string u64_str(uint64_t v) { return std::to_string(v); }
std::string real_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::size_t> parse_widths(const std::string& hidden,
                                      std::size_t input_dim,
                                      std::size_t num_classes) {
  std::vector<std::size_t> widths{input_dim};
  std::stringstream ss(hidden);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    widths.push_back(static_cast<std::size_t>(std::stoul(part)));
  }
  widths.push_back(num_classes);
  return widths;
}

// Task data: train set plus a disjoint pool the pretest is drawn from.
struct TaskData {
  LabeledDataset train;
  LabeledDataset test;
};

TaskData load_task(const Options& opt) {
  TaskData td;
  const uint64_t data_seed = derive_seed(opt.seed, stream_tag("cli-data"));
  const uint64_t test_seed = derive_seed(opt.seed, stream_tag("cli-test"));
  if (opt.task == "toy2d") {
    // stddev 0.005 keeps each class cloud tighter than the fingerprint
    // directions, so the encoded responses are exactly learnable in 2D
    // (wide clouds make neighboring points carry conflicting targets)
    const std::size_t n = opt.train_size ? opt.train_size : 200;
    td.train = make_two_gaussians(n / 2, {-1.0, 0.0}, {1.0, 0.0}, 0.005,
                                  data_seed).data;
    td.test = make_two_gaussians(std::max<std::size_t>(n / 4, 100), {-1.0, 0.0},
                                 {1.0, 0.0}, 0.005, test_seed).data;
  } else if (opt.task == "digits") {
    std::string dir = opt.dataset_dir;
    if (dir.empty())
      if (const char* env = std::getenv("NFP_MNIST_DIR")) dir = env;
    const std::size_t n = opt.train_size ? opt.train_size : 5000;
    if (!dir.empty()) {
      td.train = load_idx(dir + "/train-images-idx3-ubyte",
                          dir + "/train-labels-idx1-ubyte", 10);
      td.test = load_idx(dir + "/t10k-images-idx3-ubyte",
                         dir + "/t10k-labels-idx1-ubyte", 10);
      if (td.train.size() > n) {
        td.train.inputs.resize(n * td.train.input_dim);
        td.train.labels.resize(n);
      }
    } else {
      td.train = make_synthetic_digits(n, data_seed);
      td.test = make_synthetic_digits(std::max<std::size_t>(n / 4, 1000),
                                      test_seed);
    }
  } else {
    throw CLI::ValidationError("--task must be toy2d or digits");
  }
  validate_dataset(td.train);
  validate_dataset(td.test);
  return td;
}

std::string resolve_suite_path(const Options& opt) {
  if (!opt.suite_path.empty()) return opt.suite_path;
  if (const char* env = std::getenv("NFP_SUITE_PATH")) return env;
  throw CLI::ValidationError("no suite given: pass --suite or set "
                             "NFP_SUITE_PATH");
}

FingerprintSuite load_suite_checked(const Options& opt) {
  const std::string path = resolve_suite_path(opt);
  warn_if_world_readable(path, std::cerr);
  return load_suite(path);
}

void restrict_permissions(const std::string& path) {
  ::chmod(path.c_str(), S_IRUSR | S_IWUSR);
}

LabeledDataset build_pretest(const MlpClassifier& model, const TaskData& td,
                             const Options& opt) {
  SplitSpec spec;
  spec.pretest_size = std::min(opt.pretest_size, td.test.size());
  spec.seed = derive_seed(opt.seed, stream_tag("cli-split"));
  spec.discard_misclassified = true;
  auto [pretest, rep] = pretest_split(
      td.test, spec,
      [&model](const std::vector<double>& x) { return model.predict(x); });
  if (rep.empty_after_discard)
    throw std::runtime_error("pretest is empty after discarding "
                             "misclassified examples");
  return pretest;
}

// Config echo rows shared by attack/eval manifests.
std::vector<std::pair<std::string, std::string>> attack_config_echo(
    const Options& opt) {
  return {{"task", opt.task},          {"attack", opt.attack},
          {"bound", real_str(opt.bound)}, {"steps", std::to_string(opt.steps)},
          {"step_size", real_str(opt.step_size)},
          {"gamma", real_str(opt.gamma)}, {"seed", u64_str(opt.seed)},
          {"pretest_size", std::to_string(opt.pretest_size)}};
}

AttackFn make_attack_fn(const MlpClassifier& model,
                        const FingerprintSuite& suite, const Options& opt) {
  AttackConfig base;
  base.bound = opt.bound;
  base.step_size = opt.step_size;
  base.max_iters = opt.steps;
  base.gamma = opt.gamma;
  const uint64_t attack_seed = derive_seed(opt.seed, stream_tag("cli-attack"));
  const std::string name = opt.attack;
  return [&model, &suite, base, attack_seed, name](
             const std::vector<double>& x, int y, std::size_t index) {
    AttackConfig cfg = base;
    cfg.seed = derive_seed(attack_seed, index);
    if (name == "fgsm") return fgsm(model, x, y, cfg);
    if (name == "bim_a") return bim(model, x, y, cfg, 'a');
    if (name == "bim_b") return bim(model, x, y, cfg, 'b');
    if (name == "adaptive_fgsm")
      return adaptive_grad_attack(model, suite, x, y, cfg, "fgsm");
    if (name == "adaptive_bim_b")
      return adaptive_grad_attack(model, suite, x, y, cfg, "bim_b");
    if (name == "balanced") return balanced_whitebox(model, suite, x, y, cfg);
    if (name == "eot" || name == "eot_known") {
      EotParams ep;
      ep.n_directions = suite.n_directions;
      ep.epsilon = suite.epsilon;
      ep.dy_known = name == "eot_known";
      ep.known_dy_source = ep.dy_known ? &suite : nullptr;
      ep.attacker_seed = cfg.seed;
      return eot_greybox(model, ep, suite.num_classes, x, y, cfg);
    }
    if (name == "spsa") {
      auto logits_fn = [&model](const std::vector<double>& p) {
        return model.logits(Tensor({1, p.size()}, p)).values();
      };
      return spsa_adaptive(logits_fn, model.num_classes(), suite, x, y, cfg);
    }
    if (name == "cw") {
      // target the runner-up class at the clean input
      const auto z = model.logits(Tensor({1, x.size()}, x)).values();
      int best = 0, second = -1;
      for (std::size_t j = 1; j < z.size(); ++j)
        if (z[j] > z[best]) best = static_cast<int>(j);
      for (std::size_t j = 0; j < z.size(); ++j)
        if (static_cast<int>(j) != y &&
            (second < 0 || z[j] > z[static_cast<std::size_t>(second)]))
          second = static_cast<int>(j);
      return cw_adaptive(model, suite, x, y, second, cfg, 1);
    }
    throw CLI::ValidationError("unknown --attack: " + name);
  };
}

int cmd_train(const Options& opt) {
  std::filesystem::create_directories(opt.out_dir);
  TaskData td = load_task(opt);

  FingerprintSuite suite = make_suite(
      opt.n_fp, td.train.input_dim, td.train.num_classes, opt.eps, opt.tau,
      derive_seed(opt.seed, stream_tag("cli-suite")), opt.dy_mode);

  const std::string default_hidden = "200,200";
  const auto widths = parse_widths(opt.hidden.empty() ? default_hidden
                                                      : opt.hidden,
                                   td.train.input_dim, td.train.num_classes);
  MlpClassifier model(widths, derive_seed(opt.seed, stream_tag("cli-model")));

  const bool toy = opt.task == "toy2d";
  TrainConfig tc;
  tc.alpha = opt.alpha;
  tc.epochs = opt.epochs > 0 ? opt.epochs : (toy ? 200 : 8);
  tc.batch_size = opt.batch ? opt.batch : (toy ? 8 : 32);
  tc.lr = opt.lr > 0.0 ? opt.lr : (toy ? 3e-3 : 1e-3);
  tc.seed = derive_seed(opt.seed, stream_tag("cli-train"));
  const TrainHistory history =
      train_nfp(model, td.train, opt.alpha > 0.0 ? &suite : nullptr, tc);

  const std::string model_path = opt.out_dir + "/model.nfpmodel";
  const std::string suite_path = opt.out_dir + "/suite.json";
  const std::string history_path = opt.out_dir + "/history.csv";
  model.save(model_path);
  save_suite(suite_path, suite);
  restrict_permissions(suite_path);
  write_history_csv(history_path, history);

  const double train_acc = model.accuracy(td.train);
  const double test_acc = model.accuracy(td.test);
  std::cout << "train accuracy " << train_acc << ", test accuracy " << test_acc
            << "\n";

  Manifest m;
  m.command = "train";
  m.config = {{"task", opt.task},
              {"n_fp", std::to_string(opt.n_fp)},
              {"eps", real_str(opt.eps)},
              {"tau", real_str(opt.tau)},
              {"alpha", real_str(opt.alpha)},
              {"epochs", std::to_string(tc.epochs)},
              {"lr", real_str(tc.lr)},
              {"batch", std::to_string(tc.batch_size)},
              {"hidden", opt.hidden.empty() ? default_hidden : opt.hidden},
              {"train_size", std::to_string(td.train.size())},
              {"dy_mode", opt.dy_mode},
              {"seed", u64_str(opt.seed)}};
  m.artifacts = {model_path, suite_path, history_path};
  write_manifest(opt.out_dir + "/manifest.json", m);
  return 0;
}

int cmd_attack(const Options& opt) {
  std::filesystem::create_directories(opt.out_dir);
  MlpClassifier model = MlpClassifier::load(opt.model_path);
  FingerprintSuite suite = load_suite_checked(opt);
  TaskData td = load_task(opt);
  LabeledDataset pretest = build_pretest(model, td, opt);
  AttackFn attack = make_attack_fn(model, suite, opt);

  LabeledDataset adv;
  adv.name = pretest.name + "-adv";
  adv.input_dim = pretest.input_dim;
  adv.num_classes = pretest.num_classes;
  const uint64_t attack_seed = derive_seed(opt.seed, stream_tag("cli-attack"));
  std::vector<AttackRow> rows;
  for (std::size_t i = 0; i < pretest.size(); ++i) {
    AttackOutcome out = attack(pretest.example(i), pretest.labels[i], i);
    rows.push_back({i, opt.attack, out.success, out.linf, out.l2,
                    out.fp_loss_achieved, out.iters_used,
                    derive_seed(attack_seed, i)});
    adv.inputs.insert(adv.inputs.end(), out.x_adv.begin(), out.x_adv.end());
    adv.labels.push_back(pretest.labels[i]);
  }
  const std::string csv_path = opt.out_dir + "/attack.csv";
  const std::string adv_images = opt.out_dir + "/adv-images-idx3-ubyte";
  const std::string adv_labels = opt.out_dir + "/adv-labels-idx1-ubyte";
  write_attack_csv(csv_path, rows);
  write_idx(adv_images, adv_labels, adv);

  std::size_t successes = 0;
  for (const auto& r : rows) successes += r.success ? 1 : 0;
  std::cout << successes << "/" << rows.size() << " attacks succeeded\n";

  Manifest m;
  m.command = "attack";
  m.config = attack_config_echo(opt);
  m.artifacts = {csv_path, adv_images, adv_labels};
  write_manifest(opt.out_dir + "/manifest.json", m);
  return 0;
}

int cmd_eval(const Options& opt) {
  std::filesystem::create_directories(opt.out_dir);
  MlpClassifier model = MlpClassifier::load(opt.model_path);
  FingerprintSuite suite = load_suite_checked(opt);
  TaskData td = load_task(opt);
  LabeledDataset pretest = build_pretest(model, td, opt);
  AttackFn attack = make_attack_fn(model, suite, opt);

  ExperimentReport report = run_detection_experiment(model, suite, pretest,
                                                     attack,
                                                     opt.keep_unsuccessful);
  report.config_echo = attack_config_echo(opt);

  const std::string report_path = opt.out_dir + "/report.json";
  const std::string scores_path = opt.out_dir + "/scores.csv";
  write_report_json(report_path, report);
  write_scores_csv(scores_path, report.scores);
  Manifest m;
  m.command = "eval";
  m.config = report.config_echo;
  m.artifacts = {report_path, scores_path};

  if (model.input_dim() == 2) {
    const ContourGrid grid = loss_contour_grid(model, suite, 0.0, 1.0, 0.0,
                                               1.0, 101);
    const std::string contour_path = opt.out_dir + "/contour.csv";
    write_contour_csv(contour_path, grid);
    m.artifacts.push_back(contour_path);
  }
  write_manifest(opt.out_dir + "/manifest.json", m);

  std::cout << "auc " << report.auc << " (real " << report.n_real << ", fake "
            << report.n_fake << ", attacks " << report.attacks_successful << "/"
            << report.attacks_attempted << " successful"
            << (report.degenerate ? ", degenerate" : "") << ")\n";
  return 0;
}

int cmd_detect(const Options& opt) {
  MlpClassifier model = MlpClassifier::load(opt.model_path);
  FingerprintSuite suite = load_suite_checked(opt);

  if (opt.calibrate >= 0.0) {
    if (!(opt.calibrate > 0.0) || opt.calibrate > 1.0)
      throw CLI::ValidationError("--calibrate quantile must be in (0, 1]");
    TaskData td = load_task(opt);
    LabeledDataset holdout = build_pretest(model, td, opt);
    std::vector<double> scores = min_d_scores(model, holdout, suite);
    std::sort(scores.begin(), scores.end());
    const std::size_t idx = std::min(
        scores.size() - 1,
        static_cast<std::size_t>(opt.calibrate *
                                 static_cast<double>(scores.size())));
    suite.tau = scores[idx];
    std::string out_path = resolve_suite_path(opt);
    if (!opt.out_dir.empty() && opt.out_dir != "out") {
      std::filesystem::create_directories(opt.out_dir);
      out_path = opt.out_dir + "/suite.json";
    }
    save_suite(out_path, suite);
    restrict_permissions(out_path);
    std::cout << "tau " << real_str(suite.tau) << " (quantile "
              << opt.calibrate << " of " << scores.size()
              << " held-out scores) written to " << out_path << "\n";
    return 0;
  }

  if (opt.input_csv.empty())
    throw CLI::ValidationError("detect needs --input CSV or --calibrate");
  std::ifstream in(opt.input_csv);
  if (!in) throw FormatError("cannot open input: " + opt.input_csv);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> x;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) x.push_back(std::stod(cell));
    if (x.size() != model.input_dim())
      throw DimensionError("input row " + std::to_string(row) + " has " +
                           std::to_string(x.size()) + " values, expected " +
                           std::to_string(model.input_dim()));
    const DetectionVerdict v = detect(model, x, suite);
    nlohmann::ordered_json j;
    j["row"] = row;
    j["accepted"] = v.accepted;
    j["best_class"] = v.best_class;
    j["min_d"] = v.per_class_d[static_cast<std::size_t>(v.best_class)];
    j["per_class_d"] = v.per_class_d;
    j["tau"] = v.threshold_used;
    std::cout << j.dump() << "\n";
    ++row;
  }
  return 0;
}

int cmd_svm_demo(const Options& opt) {
  std::filesystem::create_directories(opt.out_dir);
  // Worked example: 1-D points -3, -1 (class -1) and 1, 3 (class +1)
  // with the separator through the origin; margin extrema (1, 3, 1, 3).
  LinearSvm svm;
  svm.w = {1.0};
  svm.b = 0.0;
  const std::vector<double> points{-3.0, -1.0, 1.0, 3.0};
  const std::vector<int> labels{-1, -1, 1, 1};
  const MarginExtrema ex = margin_extrema(svm, points, labels);
  const Theorem1Fingerprints fps = theorem1_fingerprints(svm, ex);

  std::cout << "margin extrema: minus(" << ex.minus_min << ", " << ex.minus_max
            << ") plus(" << ex.plus_min << ", " << ex.plus_max << ")\n";
  for (std::size_t i = 0; i < fps.fp.size(); ++i)
    std::cout << "fingerprint " << i << ": step " << fps.fp[i].dx[0]
              << " along w-hat, expected dy " << fps.fp[i].expected_dy << "\n";

  const std::string csv_path = opt.out_dir + "/svm_demo.csv";
  std::ofstream out(csv_path);
  if (!out) throw FormatError("cannot open for writing: " + csv_path);
  out << "d,adversarial,region\n";
  // Distance grid dodging the five region endpoints (0 and +-1, +-3),
  // where sign responses sit exactly on the boundary.
  for (int i = -45; i <= 45; ++i) {
    const double d = static_cast<double>(i) / 10.0 + 0.05;
    const auto x = point_at_distance(svm, d);
    const LinearVerdict v = detect_linear(svm, ex, x);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    out << buf << ',' << (v.adversarial ? 1 : 0) << ',' << v.region << '\n';
  }
  out.close();

  Manifest m;
  m.command = "svm-demo";
  m.config = {{"example", "margins (1,3) / (1,3)"}};
  m.artifacts = {csv_path};
  write_manifest(opt.out_dir + "/manifest.json", m);
  std::cout << "region grid written to " << csv_path << "\n";
  return 0;
}

int cmd_serve(const Options& opt) {
  MlpClassifier model = MlpClassifier::load(opt.model_path);
  FingerprintSuite suite = load_suite_checked(opt);
  if (opt.stdio) {
    run_serve_loop(std::cin, std::cout, model, suite);
    return 0;
  }
  TcpServer server(model, suite, opt.port);
  std::cout << "listening on 127.0.0.1:" << server.port() << "\n" << std::flush;
  server.start();
  // foreground service: block until stdin closes, then shut down
  std::string line;
  while (std::getline(std::cin, line)) {
  }
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fingerprint-based adversarial input detection"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&opt](CLI::App* c) {
    c->add_option("--seed", opt.seed, "master seed; split per purpose");
    c->add_option("--out", opt.out_dir, "output directory");
  };
  auto add_task = [&opt](CLI::App* c) {
    c->add_option("--task", opt.task, "toy2d | digits");
    c->add_option("--dataset-dir", opt.dataset_dir,
                  "IDX directory (digits task)");
    c->add_option("--train-size", opt.train_size, "training examples");
    c->add_option("--pretest-size", opt.pretest_size,
                  "held-out correctly-classified sample size");
  };
  auto add_model_suite = [&opt](CLI::App* c, bool model_required) {
    auto* mo = c->add_option("--model", opt.model_path, "model checkpoint");
    if (model_required) mo->required();
    c->add_option("--suite", opt.suite_path,
                  "fingerprint suite JSON (private key); falls back to "
                  "NFP_SUITE_PATH");
  };
  auto add_attack = [&opt](CLI::App* c) {
    c->add_option("--attack", opt.attack,
                  "fgsm | bim_a | bim_b | adaptive_fgsm | adaptive_bim_b | "
                  "balanced | eot | eot_known | spsa | cw");
    c->add_option("--bound", opt.bound, "L-infinity bound");
    c->add_option("--steps", opt.steps, "attack iterations");
    c->add_option("--step-size", opt.step_size, "per-iteration step");
    c->add_option("--gamma", opt.gamma, "fingerprint-tradeoff weight");
  };

  CLI::App* train = app.add_subcommand("train",
                                       "train a fingerprinted classifier");
  add_task(train);
  add_common(train);
  train->add_option("--n-fp", opt.n_fp, "number of fingerprint directions");
  train->add_option("--eps", opt.eps, "direction magnitude");
  train->add_option("--tau", opt.tau, "detection threshold");
  train->add_option("--alpha", opt.alpha, "fingerprint loss weight");
  train->add_option("--epochs", opt.epochs, "training epochs");
  train->add_option("--lr", opt.lr, "learning rate");
  train->add_option("--batch", opt.batch, "minibatch size");
  train->add_option("--hidden", opt.hidden, "hidden widths, e.g. 200,200");
  train->add_option("--dy-mode", opt.dy_mode, "structured | random");

  CLI::App* attackc = app.add_subcommand("attack",
                                         "attack a pretest sample");
  add_task(attackc);
  add_common(attackc);
  add_model_suite(attackc, true);
  add_attack(attackc);

  CLI::App* evalc = app.add_subcommand("eval",
                                       "detection experiment with AUC");
  add_task(evalc);
  add_common(evalc);
  add_model_suite(evalc, true);
  add_attack(evalc);
  evalc->add_flag("--keep-unsuccessful", opt.keep_unsuccessful,
                  "score failed attacks too");

  CLI::App* detectc = app.add_subcommand("detect",
                                         "score inputs or calibrate tau");
  add_task(detectc);
  add_common(detectc);
  add_model_suite(detectc, true);
  detectc->add_option("--input", opt.input_csv,
                      "CSV of inputs, one example per line");
  detectc->add_option("--calibrate", opt.calibrate,
                      "set tau to this quantile of held-out min_j D")
      ->expected(0, 1)
      ->default_str("0.99");

  CLI::App* svmc = app.add_subcommand("svm-demo",
                                      "linear-margin fingerprint walkthrough");
  add_common(svmc);

  CLI::App* servec = app.add_subcommand("serve",
                                        "line-protocol detection service");
  add_model_suite(servec, true);
  servec->add_option("--port", opt.port, "TCP port; 0 picks one");
  servec->add_flag("--stdio", opt.stdio, "serve stdin/stdout instead of TCP");

  // --calibrate with no value: CLI11 expected(0,1) gives "" → default 0.99
  detectc->callback([&opt, detectc] {
    if (detectc->count("--calibrate") && opt.calibrate < 0.0) opt.calibrate = 0.99;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(opt);
    if (*attackc) return cmd_attack(opt);
    if (*evalc) return cmd_eval(opt);
    if (*detectc) return cmd_detect(opt);
    if (*svmc) return cmd_svm_demo(opt);
    if (*servec) return cmd_serve(opt);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
