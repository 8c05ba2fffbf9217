#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qfsum/corpus.hpp"
#include "qfsum/hierarchy.hpp"

namespace qfsum {

struct SynthCategory {
  std::string leaf;
  double weight = 1.0;
  std::vector<std::string> overlapping;  // share words with the leaf description
  std::vector<std::string> paraphrased;  // share no TF-IDF term with it
};

/// Generator settings. Ranges are inclusive [min, max].
struct SynthConfig {
  std::size_t patients = 300;
  std::pair<int, int> reports_per_patient{6, 10};
  std::pair<int, int> sentences_per_report{3, 6};
  std::pair<int, int> categories_per_patient{1, 2};
  double rho = 0.9;                     // P(evidence planted | category chosen)
  double paraphrase_probability = 0.5;  // P(paraphrased pool | evidence planted)
  Day span_days = 1500;
  std::vector<SynthCategory> categories;
  std::vector<std::string> distractors;
  std::vector<std::string> decoy_templates;  // "{description}" is replaced
  double decoy_probability = 0.0;            // per report
  int noise_codes_per_patient = 0;           // single, non-persistent code events
  std::filesystem::path hierarchy;           // resolved relative to the config file

  static SynthConfig from_json(const json& doc, const std::filesystem::path& base_dir = {});
  static SynthConfig load(const std::filesystem::path& path);
  json to_json() const;
};

struct SynthResult {
  Corpus corpus;
  EvidenceOracle oracle;
};

/// Deterministic in (config, hierarchy, seed). For every chosen category a
/// radiology report r is designated; with probability rho one evidence
/// sentence is planted in an earlier report and recorded in the oracle with
/// time_point = r.timestamp. The category's code is then emitted twice within
/// the year after r.
SynthResult generate_synthetic(const SynthConfig& config, const DiagnosisHierarchy& hierarchy,
                               std::uint64_t seed);

/// True when `sentence` shares no TF-IDF term with `description`.
bool lexically_disjoint(std::string_view sentence, std::string_view description);

}  // namespace qfsum
