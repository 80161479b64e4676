#pragma once

// Run manifest: config digest, the design-decision flags in effect, and one
// entry per executed stage with input/output content digests. Rewritten
// atomically; a rerun with identical inputs reproduces identical digests.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/common.hpp"

namespace memlab::report {

inline constexpr const char* kToolVersion = "memlab/1.0";

inline const std::map<std::string, std::string>& decision_flags() {
  static const std::map<std::string, std::string> flags = {
      {"compression_side", "suffix"},
      {"eq4_direction", "divergence"},
      {"similarity_region", "continuation_postproj"},
      {"noise_site", "block_input"},
      {"noise_resample", "per_decode_step"},
      {"freq_divisor", "corpus_total"},
      {"max_jaccard", "over_domain_pairs"},
  };
  return flags;
}

struct StageEntry {
  std::string name;
  std::map<std::string, std::string> inputs;   // path -> digest
  std::map<std::string, std::string> outputs;  // path -> digest
};

class RunManifest {
 public:
  static std::filesystem::path path_for(const std::filesystem::path& out_dir) {
    return out_dir / "run.manifest";
  }

  static RunManifest load_or_empty(const std::filesystem::path& out_dir, const std::string& config_digest) {
    RunManifest m;
    m.out_dir_ = out_dir;
    m.config_digest_ = config_digest;
    auto p = path_for(out_dir);
    if (!std::filesystem::exists(p)) return m;
    std::istringstream in(read_file(p));
    std::string line;
    StageEntry* cur = nullptr;
    while (std::getline(in, line)) {
      if (line.rfind("stage ", 0) == 0) {
        StageEntry e;
        e.name = trim(line.substr(6));
        m.stages_[e.name] = e;
        cur = &m.stages_[e.name];
      } else if (cur && line.rfind("  in ", 0) == 0) {
        auto sp = line.rfind(' ');
        cur->inputs[line.substr(5, sp - 5)] = line.substr(sp + 1);
      } else if (cur && line.rfind("  out ", 0) == 0) {
        auto sp = line.rfind(' ');
        cur->outputs[line.substr(6, sp - 6)] = line.substr(sp + 1);
      }
    }
    return m;
  }

  // Verifies the recorded digest of an artifact this stage consumes. The
  // producing stage's record must match what is on disk now.
  void check_input_fresh(const std::filesystem::path& rel) const {
    for (const auto& [name, e] : stages_) {
      auto it = e.outputs.find(rel.string());
      if (it == e.outputs.end()) continue;
      if (file_digest(out_dir_ / rel) != it->second)
        throw Error("stage digest mismatch on resume: " + rel.string() +
                    " no longer matches the output recorded for stage " + name);
    }
  }

  void record(StageEntry entry) { stages_[entry.name] = std::move(entry); }

  void save() const {
    std::ostringstream out;
    out << "tool=" << kToolVersion << "\n";
    out << "config_digest=" << config_digest_ << "\n";
    for (const auto& [k, v] : decision_flags()) out << "flag " << k << "=" << v << "\n";
    for (const auto& [name, e] : stages_) {
      out << "stage " << name << "\n";
      for (const auto& [p, d] : e.inputs) out << "  in " << p << " " << d << "\n";
      for (const auto& [p, d] : e.outputs) out << "  out " << p << " " << d << "\n";
    }
    write_file_atomic(path_for(out_dir_), out.str());
  }

  const std::map<std::string, StageEntry>& stages() const { return stages_; }

 private:
  std::filesystem::path out_dir_;
  std::string config_digest_;
  std::map<std::string, StageEntry> stages_;
};

}  // namespace memlab::report
