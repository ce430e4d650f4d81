#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nfp/classifier.hpp"
#include "nfp/eval.hpp"

namespace nfp {

// FNV-1a over the file's bytes; FormatError if the file cannot be read.
uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(uint64_t h);  // zero-padded 16-char lowercase hex

// Reproducibility record for one command invocation: the full config
// echo plus an FNV-1a hash per emitted artifact. Deliberately carries no
// timestamps or host data, so identical runs write identical manifests.
struct Manifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> artifacts;  // paths, hashed at write time
};

void write_manifest(const std::string& path, const Manifest& manifest);

// CSV emitters. All reals are printed with %.17g so byte-identical
// inputs produce byte-identical files.
void write_scores_csv(const std::string& path,
                      const std::vector<ScoredExample>& scores);
void write_history_csv(const std::string& path, const TrainHistory& history);
void write_contour_csv(const std::string& path, const ContourGrid& grid);

struct AttackRow {
  std::size_t input_id = 0;
  std::string attack;
  bool success = false;
  double linf = 0.0;
  double l2 = 0.0;
  double fp_loss = 0.0;
  int iters = 0;
  uint64_t seed = 0;
};
void write_attack_csv(const std::string& path,
                      const std::vector<AttackRow>& rows);

// Experiment report as JSON (metrics + config echo; scores go to CSV).
void write_report_json(const std::string& path, const ExperimentReport& report);

}  // namespace nfp
