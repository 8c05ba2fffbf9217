#include "qfsum/corpus.hpp"

#include <algorithm>

#include "qfsum/lexical.hpp"

namespace qfsum {

namespace {

void sort_patient(PatientRecord& p) {
  std::stable_sort(p.reports.begin(), p.reports.end(), [](const Report& a, const Report& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
  });
  std::stable_sort(p.code_events.begin(), p.code_events.end(),
                   [](const CodeEvent& a, const CodeEvent& b) { return a.timestamp < b.timestamp; });
}

}  // namespace

std::string_view to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::discharge_summary: return "discharge_summary";
    case ReportKind::operative: return "operative";
    case ReportKind::pathology: return "pathology";
    case ReportKind::progress: return "progress";
    case ReportKind::radiology: return "radiology";
    case ReportKind::visit: return "visit";
  }
  return "visit";
}

ReportKind parse_report_kind(std::string_view text) {
  for (auto k : kAllReportKinds)
    if (to_string(k) == text) return k;
  fail(ErrorKind::data, "unknown report kind '" + std::string(text) + "'");
}

const PatientRecord& Corpus::patient(std::string_view id) const {
  const auto it = patients.find(std::string(id));
  if (it == patients.end()) fail(ErrorKind::not_found, "unknown patient '" + std::string(id) + "'");
  return it->second;
}

std::size_t Corpus::report_count() const {
  std::size_t n = 0;
  for (const auto& [id, p] : patients) n += p.reports.size();
  return n;
}

std::size_t Corpus::code_event_count() const {
  std::size_t n = 0;
  for (const auto& [id, p] : patients) n += p.code_events.size();
  return n;
}

void Corpus::sort() {
  for (auto& [id, p] : patients) sort_patient(p);
}

Corpus ingest(const std::filesystem::path& dir, const IngestOptions& options, IngestStats* stats) {
  IngestStats local;
  Corpus corpus;
  auto malformed = [&](std::size_t, const std::string&) { ++local.malformed_lines; };

  for (const auto& row : read_jsonl(dir / "reports.jsonl", malformed)) {
    try {
      Report r;
      r.id = row.at("id").get<std::string>();
      r.patient_id = row.at("patient_id").get<std::string>();
      r.kind = parse_report_kind(row.at("kind").get<std::string>());
      r.timestamp = row.at("timestamp").get<Day>();
      r.text = row.at("text").get<std::string>();
      auto& p = corpus.patients[r.patient_id];
      p.id = r.patient_id;
      p.reports.push_back(std::move(r));
      ++local.report_lines;
    } catch (const std::exception&) {
      ++local.malformed_lines;
    }
  }
  for (const auto& row : read_jsonl(dir / "codes.jsonl", malformed)) {
    try {
      CodeEvent e;
      e.patient_id = row.at("patient_id").get<std::string>();
      e.code = row.at("code").get<std::string>();
      e.system = parse_code_system(row.at("system").get<std::string>());
      e.timestamp = row.at("timestamp").get<Day>();
      if (e.code.empty()) throw std::runtime_error("empty code");
      auto& p = corpus.patients[e.patient_id];
      p.id = e.patient_id;
      p.code_events.push_back(std::move(e));
      ++local.code_lines;
    } catch (const std::exception&) {
      ++local.malformed_lines;
    }
  }
  const std::size_t total = local.report_lines + local.code_lines + local.malformed_lines;
  if (total > 0 && static_cast<double>(local.malformed_lines) / static_cast<double>(total) >
                       options.max_malformed_fraction)
    fail(ErrorKind::data, "corpus " + dir.string() + ": " + std::to_string(local.malformed_lines) + " of " +
                              std::to_string(total) + " lines malformed");
  corpus.sort();
  if (stats) *stats = local;
  return corpus;
}

void export_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::vector<json> reports;
  std::vector<json> codes;
  for (const auto& [id, p] : corpus.patients) {
    for (const auto& r : p.reports)
      reports.push_back({{"id", r.id},
                         {"patient_id", r.patient_id},
                         {"kind", to_string(r.kind)},
                         {"timestamp", r.timestamp},
                         {"text", r.text}});
    for (const auto& e : p.code_events)
      codes.push_back({{"patient_id", e.patient_id},
                       {"code", e.code},
                       {"system", to_string(e.system)},
                       {"timestamp", e.timestamp}});
  }
  write_jsonl(dir / "reports.jsonl", reports);
  write_jsonl(dir / "codes.jsonl", codes);
}

std::vector<HistorySentence> sentences_before(const PatientRecord& patient, Day t) {
  std::vector<HistorySentence> out;
  for (const auto& r : patient.reports) {
    if (r.timestamp >= t) break;
    std::size_t index = 0;
    for (auto& s : split_sentences(r.text)) out.push_back({std::move(s), r.id, index++, r.timestamp});
  }
  return out;
}

std::vector<HistorySentence> sentences_before(const Corpus& corpus, std::string_view patient_id, Day t) {
  return sentences_before(corpus.patient(patient_id), t);
}

std::vector<Report> reports_after(const PatientRecord& patient, Day t) {
  std::vector<Report> out;
  for (const auto& r : patient.reports)
    if (r.timestamp > t) out.push_back(r);
  return out;
}

std::set<std::string> EvidenceOracle::fingerprints(std::string_view patient_id,
                                                   std::string_view category_id) const {
  std::set<std::string> out;
  for (const auto& e : entries)
    if (e.patient_id == patient_id && e.category_id == category_id) out.insert(fingerprint(e.sentence));
  return out;
}

void EvidenceOracle::save(const std::filesystem::path& path) const {
  std::vector<json> rows;
  for (const auto& e : entries)
    rows.push_back({{"patient_id", e.patient_id},
                    {"time_point", e.time_point},
                    {"category_id", e.category_id},
                    {"sentence", e.sentence},
                    {"paraphrased", e.paraphrased}});
  write_jsonl(path, rows);
}

EvidenceOracle EvidenceOracle::load(const std::filesystem::path& path) {
  EvidenceOracle oracle;
  for (const auto& row : read_jsonl(path)) {
    OracleEntry e;
    e.patient_id = row.at("patient_id").get<std::string>();
    e.time_point = row.at("time_point").get<Day>();
    e.category_id = row.at("category_id").get<std::string>();
    e.sentence = row.at("sentence").get<std::string>();
    e.paraphrased = row.value("paraphrased", false);
    oracle.entries.push_back(std::move(e));
  }
  return oracle;
}

}  // namespace qfsum
