#include "qfsum/annotations.hpp"

#include <chrono>
#include <fstream>

namespace qfsum {

std::string_view to_string(AnnotationRound round) {
  return round == AnnotationRound::reference ? "reference" : "validation";
}

AnnotationRound parse_annotation_round(std::string_view text) {
  if (text == "reference") return AnnotationRound::reference;
  if (text == "validation") return AnnotationRound::validation;
  fail(ErrorKind::unprocessable, "unknown annotation round: " + std::string(text));
}

std::string AnnotationRecord::identity() const {
  json key = {annotator, patient_id, time_point, query.key(), fingerprint, std::string(to_string(round))};
  return key.dump();
}

json AnnotationRecord::to_json() const {
  json q = json::object();
  if (query.is_custom()) {
    q["custom_text"] = query.custom_text;
    q["custom_description"] = query.custom_description;
  } else {
    q["category_id"] = query.category_id;
  }
  json out = {{"id", id},
              {"annotator", annotator},
              {"patient_id", patient_id},
              {"time_point", time_point},
              {"query", q},
              {"fingerprint", fingerprint},
              {"report_id", report_id},
              {"relevant", relevant},
              {"round", std::string(to_string(round))},
              {"created_at", created_at}};
  if (rank) out["rank"] = *rank;
  if (!model.empty()) out["model"] = model;
  return out;
}

AnnotationRecord AnnotationRecord::from_json(const json& doc) {
  AnnotationRecord r;
  try {
    r.id = doc.value("id", "");
    r.annotator = doc.at("annotator").get<std::string>();
    r.patient_id = doc.at("patient_id").get<std::string>();
    r.time_point = doc.at("time_point").get<Day>();
    const auto& q = doc.at("query");
    r.query.category_id = q.value("category_id", "");
    r.query.custom_text = q.value("custom_text", "");
    r.query.custom_description = q.value("custom_description", "");
    r.fingerprint = qfsum::fingerprint(doc.at("fingerprint").get<std::string>());
    r.report_id = doc.value("report_id", "");
    r.relevant = doc.at("relevant").get<bool>();
    r.round = parse_annotation_round(doc.at("round").get<std::string>());
    r.created_at = doc.value("created_at", std::int64_t{0});
    if (doc.contains("rank") && !doc.at("rank").is_null()) r.rank = doc.at("rank").get<std::size_t>();
    r.model = doc.value("model", "");
  } catch (const json::exception& e) {
    fail(ErrorKind::unprocessable, std::string("annotation record: ") + e.what());
  }
  if (r.annotator.empty() || r.patient_id.empty() || r.fingerprint.empty())
    fail(ErrorKind::unprocessable, "annotation record needs annotator, patient_id and fingerprint");
  if (r.query.is_custom()) {
    if (r.query.custom_text.empty()) fail(ErrorKind::unprocessable, "annotation query needs a category or custom text");
    if (trim(r.query.custom_description).empty())
      fail(ErrorKind::unprocessable, "custom annotation queries need a description");
  }
  return r;
}

AnnotationStore::AnnotationStore(std::filesystem::path path, Clock clock) : path_(std::move(path)), clock_(std::move(clock)) {
  if (!clock_) {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  for (const auto& row : read_jsonl(path_)) apply(AnnotationRecord::from_json(row));
}

void AnnotationStore::apply(AnnotationRecord record) {
  const auto identity = record.identity();
  id_by_identity_[identity] = record.id;
  if (record.id.size() > 1 && record.id[0] == 'a') {
    try {
      next_id_ = std::max(next_id_, std::stoul(record.id.substr(1)) + 1);
    } catch (const std::exception&) {
    }
  }
  by_id_[record.id] = std::move(record);
}

std::string AnnotationStore::post(AnnotationRecord record) {
  std::lock_guard lock(mutex_);
  const auto existing = id_by_identity_.find(record.identity());
  if (existing != id_by_identity_.end()) {
    const auto& prior = by_id_.at(existing->second);
    record.id = prior.id;
    record.created_at = prior.created_at;
  } else {
    record.id = "a" + std::to_string(next_id_++);
    if (record.created_at == 0) record.created_at = clock_();
  }
  if (!path_.empty()) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) fail(ErrorKind::invalid_argument, "cannot append to " + path_.string());
    out << record.to_json().dump() << '\n';
    out.flush();
  }
  const auto id = record.id;
  apply(std::move(record));
  return id;
}

std::vector<AnnotationRecord> AnnotationStore::list(std::optional<AnnotationRound> round) const {
  std::lock_guard lock(mutex_);
  std::vector<AnnotationRecord> out;
  for (const auto& [_, r] : by_id_)
    if (!round || r.round == *round) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const AnnotationRecord& a, const AnnotationRecord& b) {
    return std::stoul(a.id.substr(1)) < std::stoul(b.id.substr(1));
  });
  return out;
}

std::vector<ValidationMark> validation_marks(const std::vector<AnnotationRecord>& records, const std::string& model) {
  std::vector<ValidationMark> marks;
  for (const auto& r : records) {
    if (r.round != AnnotationRound::validation) continue;
    if (!model.empty() && r.model != model) continue;
    marks.push_back({r.relevant, r.rank});
  }
  return marks;
}

std::map<std::string, AnnotationSet> reference_sets_by_annotator(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, AnnotationSet> out;
  for (const auto& r : records) {
    if (r.round != AnnotationRound::reference || !r.relevant) continue;
    auto& set = out[r.annotator];
    const QueryKey key{r.instance_key(), r.query.key()};
    set.summaries[key].insert(r.fingerprint);
    // Runtime categories from the service carry the "custom-" prefix.
    if (r.query.is_custom() || r.query.category_id.rfind("custom-", 0) == 0) set.custom.insert(key);
  }
  return out;
}

}  // namespace qfsum
