#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qfsum/corpus.hpp"
#include "qfsum/hierarchy.hpp"

namespace qfsum {

struct InstanceSentence {
  std::string text;
  std::string report_id;

  friend bool operator==(const InstanceSentence&, const InstanceSentence&) = default;
};

/// One (patient, time point) pair: sentences before t, queried categories and
/// whether each occurs in the patient's future.
struct TrainingInstance {
  std::string patient_id;
  Day t = 0;
  std::vector<InstanceSentence> sentences;
  std::vector<std::string> queries;
  std::vector<std::uint8_t> labels;  // aligned with queries

  std::string key() const { return patient_id + "@" + std::to_string(t); }
  std::size_t positive_count() const;

  friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

struct ExtractionOptions {
  Day window = 365;
  std::optional<Day> label_horizon;  // unbounded when empty
  /// Corpus-level cohort filter; patients failing it are skipped.
  std::function<bool(const PatientRecord&)> patient_filter;
};

struct ExtractionStats {
  std::size_t patients_seen = 0;
  std::size_t patients_filtered = 0;
  std::size_t candidate_time_points = 0;
  std::size_t dropped_no_positive = 0;
  std::size_t dropped_no_sentences = 0;
  std::size_t instances = 0;
};

/// Leaves whose mapped code events number >= 2, with sorted timestamps.
std::map<std::string, std::vector<Day>> persistent_leaf_codes(const PatientRecord& patient,
                                                              const DiagnosisHierarchy& hierarchy);

/// Instances ordered by (patient_id, t).
std::vector<TrainingInstance> build_instances(const Corpus& corpus, const DiagnosisHierarchy& hierarchy,
                                              const ExtractionOptions& options = {},
                                              ExtractionStats* stats = nullptr);

struct SplitSpec {
  std::array<double, 3> ratios{0.7, 0.15, 0.15};  // train / val / test
  std::array<std::size_t, 3> caps{10000, 1000, 1000};
  std::uint64_t seed = 0;

  void validate() const;
};

struct PatientSplits {
  std::array<std::set<std::string>, 3> groups;  // train / val / test
};

/// Largest-remainder sizes; equal remainders favour the later split.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios);

PatientSplits split_patients(const std::vector<std::string>& patient_ids, const SplitSpec& spec);

/// Uniformly samples `cap` instances (seeded) and restores (patient, t) order.
std::vector<TrainingInstance> truncate_instances(std::vector<TrainingInstance> instances, std::size_t cap,
                                                 std::uint64_t seed);

json instance_to_json(const TrainingInstance& instance);
TrainingInstance instance_from_json(const json& row);
void save_instances(const std::filesystem::path& path, const std::vector<TrainingInstance>& instances);
std::vector<TrainingInstance> load_instances(const std::filesystem::path& path);

}  // namespace qfsum
