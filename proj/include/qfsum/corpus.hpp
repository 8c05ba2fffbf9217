#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qfsum/hierarchy.hpp"

namespace qfsum {

using Day = std::int64_t;  // integer days since epoch

enum class ReportKind { discharge_summary, operative, pathology, progress, radiology, visit };

inline constexpr ReportKind kAllReportKinds[] = {ReportKind::discharge_summary, ReportKind::operative,
                                                 ReportKind::pathology,         ReportKind::progress,
                                                 ReportKind::radiology,         ReportKind::visit};

std::string_view to_string(ReportKind kind);
ReportKind parse_report_kind(std::string_view text);

struct Report {
  std::string id;
  std::string patient_id;
  ReportKind kind = ReportKind::visit;
  Day timestamp = 0;
  std::string text;

  friend bool operator==(const Report&, const Report&) = default;
};

struct CodeEvent {
  std::string patient_id;
  std::string code;
  CodeSystem system = CodeSystem::icd9;
  Day timestamp = 0;

  friend bool operator==(const CodeEvent&, const CodeEvent&) = default;
};

struct PatientRecord {
  std::string id;
  std::vector<Report> reports;         // sorted by (timestamp, id)
  std::vector<CodeEvent> code_events;  // sorted by timestamp, stable

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Corpus {
  std::map<std::string, PatientRecord> patients;

  const PatientRecord& patient(std::string_view id) const;
  std::size_t report_count() const;
  std::size_t code_event_count() const;
  /// Restores the ordering invariants after bulk insertion.
  void sort();

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct IngestOptions {
  double max_malformed_fraction = 0.01;
};

struct IngestStats {
  std::size_t report_lines = 0;
  std::size_t code_lines = 0;
  std::size_t malformed_lines = 0;
};

/// Reads `dir/reports.jsonl` and `dir/codes.jsonl`.
Corpus ingest(const std::filesystem::path& dir, const IngestOptions& options = {},
              IngestStats* stats = nullptr);
void export_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct HistorySentence {
  std::string text;
  std::string report_id;
  std::size_t index = 0;  // position within its report
  Day report_timestamp = 0;
};

/// Sentences of every report dated strictly before `t`, in temporal order.
std::vector<HistorySentence> sentences_before(const PatientRecord& patient, Day t);
std::vector<HistorySentence> sentences_before(const Corpus& corpus, std::string_view patient_id, Day t);
/// Reports dated strictly after `t` (future browsing).
std::vector<Report> reports_after(const PatientRecord& patient, Day t);

// ---------------------------------------------------------------------------

struct OracleEntry {
  std::string patient_id;
  Day time_point = 0;
  std::string category_id;
  std::string sentence;
  bool paraphrased = false;

  friend bool operator==(const OracleEntry&, const OracleEntry&) = default;
};

/// Planted ground-truth evidence.
struct EvidenceOracle {
  std::vector<OracleEntry> entries;

  /// Fingerprints planted for (patient, category), across all time points.
  std::set<std::string> fingerprints(std::string_view patient_id, std::string_view category_id) const;

  void save(const std::filesystem::path& path) const;
  static EvidenceOracle load(const std::filesystem::path& path);
};

}  // namespace qfsum
