#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qfsum/corpus.hpp"
#include "qfsum/metrics.hpp"
#include "qfsum/util.hpp"

namespace qfsum {

enum class AnnotationRound { reference, validation };

std::string_view to_string(AnnotationRound round);
AnnotationRound parse_annotation_round(std::string_view text);

struct AnnotationQuery {
  std::string category_id;         // hierarchy (or runtime custom) category
  std::string custom_text;         // ad-hoc custom query name
  std::string custom_description;  // required with custom_text

  bool is_custom() const { return category_id.empty(); }
  /// Stable identifier: the category id, or "custom:" + text.
  std::string key() const { return is_custom() ? "custom:" + custom_text : category_id; }
  friend bool operator==(const AnnotationQuery&, const AnnotationQuery&) = default;
};

struct AnnotationRecord {
  std::string id;  // assigned by the store
  std::string annotator;
  std::string patient_id;
  Day time_point = 0;
  AnnotationQuery query;
  std::string fingerprint;
  std::string report_id;
  bool relevant = false;
  AnnotationRound round = AnnotationRound::reference;
  std::int64_t created_at = 0;       // seconds since epoch
  std::optional<std::size_t> rank;   // position in the reviewed list (validation round)
  std::string model;                 // which model produced the list; never sent to the UI

  std::string instance_key() const { return patient_id + "@" + std::to_string(time_point); }
  /// Fields that make a record idempotent: re-posting overwrites `relevant`.
  std::string identity() const;
  json to_json() const;
  static AnnotationRecord from_json(const json& doc);
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// Append-only JSONL log materialised last-write-wins. Writes are serialised;
/// reads take a snapshot under the same lock.
class AnnotationStore {
 public:
  using Clock = std::function<std::int64_t()>;

  explicit AnnotationStore(std::filesystem::path path, Clock clock = {});

  /// Stores the record and returns its id. A record with the same identity
  /// keeps its original id and creation time.
  std::string post(AnnotationRecord record);
  std::vector<AnnotationRecord> list(std::optional<AnnotationRound> round = std::nullopt) const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void apply(AnnotationRecord record);

  std::filesystem::path path_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, AnnotationRecord> by_id_;
  std::map<std::string, std::string> id_by_identity_;
  std::size_t next_id_ = 1;
};

/// Validation-round marks for metrics::validated_precision, optionally for
/// one model only.
std::vector<ValidationMark> validation_marks(const std::vector<AnnotationRecord>& records,
                                             const std::string& model = {});

/// Reference-round records grouped per annotator into agreement inputs.
std::map<std::string, AnnotationSet> reference_sets_by_annotator(const std::vector<AnnotationRecord>& records);

}  // namespace qfsum
