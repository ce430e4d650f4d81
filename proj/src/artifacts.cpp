#include "nfp/artifacts.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "nfp/errors.hpp"

namespace nfp {

namespace {

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  return out;
}

std::string real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for hashing: " + path);
  uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  nlohmann::ordered_json j;
  j["command"] = manifest.command;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : manifest.config) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::ordered_json arts = nlohmann::ordered_json::array();
  for (const auto& art : manifest.artifacts)
    arts.push_back({{"path", art}, {"fnv1a64", hash_hex(fnv1a64_file(art))}});
  j["artifacts"] = arts;
  auto out = open_for_write(path);
  out << j.dump(1) << "\n";
}

void write_scores_csv(const std::string& path,
                      const std::vector<ScoredExample>& scores) {
  auto out = open_for_write(path);
  out << "input_id,is_adversarial,score\n";
  for (const auto& s : scores)
    out << s.input_id << ',' << (s.is_adversarial ? 1 : 0) << ','
        << real17(s.score) << '\n';
}

void write_history_csv(const std::string& path, const TrainHistory& history) {
  auto out = open_for_write(path);
  out << "epoch,task_loss,fp_loss\n";
  for (std::size_t e = 0; e < history.size(); ++e)
    out << e << ',' << real17(history[e].task_loss) << ','
        << real17(history[e].fp_loss) << '\n';
}

void write_contour_csv(const std::string& path, const ContourGrid& grid) {
  auto out = open_for_write(path);
  out << "x1,x2,loss\n";
  for (std::size_t r = 0; r < grid.resolution; ++r)
    for (std::size_t c = 0; c < grid.resolution; ++c)
      out << real17(grid.x1[c]) << ',' << real17(grid.x2[r]) << ','
          << real17(grid.values[r * grid.resolution + c]) << '\n';
}

void write_attack_csv(const std::string& path,
                      const std::vector<AttackRow>& rows) {
  auto out = open_for_write(path);
  out << "input_id,attack,success,linf,l2,fp_loss,iters,seed\n";
  for (const auto& r : rows)
    out << r.input_id << ',' << r.attack << ',' << (r.success ? 1 : 0) << ','
        << real17(r.linf) << ',' << real17(r.l2) << ',' << real17(r.fp_loss)
        << ',' << r.iters << ',' << r.seed << '\n';
}

void write_report_json(const std::string& path,
                       const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["auc"] = report.auc;
  j["n_real"] = report.n_real;
  j["n_fake"] = report.n_fake;
  j["attacks_attempted"] = report.attacks_attempted;
  j["attacks_successful"] = report.attacks_successful;
  j["degenerate"] = report.degenerate;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.config_echo) cfg[k] = v;
  j["config"] = cfg;
  auto out = open_for_write(path);
  out << j.dump(1) << "\n";
}

}  // namespace nfp
