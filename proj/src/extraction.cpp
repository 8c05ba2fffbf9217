#include "qfsum/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace qfsum {

std::size_t TrainingInstance::positive_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::map<std::string, std::vector<Day>> persistent_leaf_codes(const PatientRecord& patient,
                                                              const DiagnosisHierarchy& hierarchy) {
  std::map<std::string, std::vector<Day>> occurrences;
  for (const auto& e : patient.code_events)
    if (auto leaf = hierarchy.map_code(e.code, e.system)) occurrences[*leaf].push_back(e.timestamp);
  for (auto it = occurrences.begin(); it != occurrences.end();) {
    if (it->second.size() < 2) {
      it = occurrences.erase(it);
    } else {
      std::sort(it->second.begin(), it->second.end());
      ++it;
    }
  }
  return occurrences;
}

std::vector<TrainingInstance> build_instances(const Corpus& corpus, const DiagnosisHierarchy& hierarchy,
                                              const ExtractionOptions& options, ExtractionStats* stats) {
  ExtractionStats local;
  std::vector<TrainingInstance> out;
  for (const auto& [pid, patient] : corpus.patients) {
    ++local.patients_seen;
    if (options.patient_filter && !options.patient_filter(patient)) {
      ++local.patients_filtered;
      continue;
    }
    const auto persistent = persistent_leaf_codes(patient, hierarchy);
    std::set<std::string> ever_coded;
    for (const auto& e : patient.code_events)
      if (auto leaf = hierarchy.map_code(e.code, e.system)) ever_coded.insert(*leaf);

    std::set<Day> time_points;
    for (const auto& [leaf, days] : persistent) {
      const Day onset = days.front();
      for (const auto& r : patient.reports)
        if (r.kind == ReportKind::radiology && r.timestamp >= onset - options.window && r.timestamp < onset)
          time_points.insert(r.timestamp);
    }
    local.candidate_time_points += time_points.size();

    for (const Day t : time_points) {
      std::map<std::string, LeafLabel> leaf_labels;
      for (const auto& [leaf, days] : persistent) {
        const bool future = std::any_of(days.begin(), days.end(), [&](Day d) {
          return d > t && (!options.label_horizon || d <= t + *options.label_horizon);
        });
        if (future) leaf_labels[leaf] = LeafLabel::positive;
      }
      if (leaf_labels.empty()) {
        ++local.dropped_no_positive;
        continue;
      }
      for (const auto& n : hierarchy.nodes())
        if (n.is_leaf() && !n.custom && !ever_coded.count(n.id)) leaf_labels[n.id] = LeafLabel::negative;

      TrainingInstance inst;
      inst.patient_id = pid;
      inst.t = t;
      for (auto& s : sentences_before(patient, t)) inst.sentences.push_back({std::move(s.text), s.report_id});
      if (inst.sentences.empty()) {
        ++local.dropped_no_sentences;
        continue;
      }
      const auto labels = hierarchy.propagate_labels(leaf_labels);
      for (const auto& n : hierarchy.nodes()) {
        const auto it = labels.find(n.id);
        if (it == labels.end() || it->second == CategoryLabel::excluded) continue;
        inst.queries.push_back(n.id);
        inst.labels.push_back(it->second == CategoryLabel::positive ? 1 : 0);
      }
      out.push_back(std::move(inst));
    }
  }
  local.instances = out.size();
  if (stats) *stats = local;
  return out;
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorKind::invalid_argument, "split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::invalid_argument, "split ratios must sum to 1");
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = ratios[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(quota));
    remainders[i] = quota - std::floor(quota);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{2, 1, 0};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
  return sizes;
}

PatientSplits split_patients(const std::vector<std::string>& patient_ids, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::string> ids = patient_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::mt19937_64 rng(spec.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto sizes = split_sizes(ids.size(), spec.ratios);
  PatientSplits splits;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t i = 0; i < sizes[g]; ++i) splits.groups[g].insert(ids[pos++]);
  return splits;
}

std::vector<TrainingInstance> truncate_instances(std::vector<TrainingInstance> instances, std::size_t cap,
                                                 std::uint64_t seed) {
  const auto by_key = [](const TrainingInstance& a, const TrainingInstance& b) {
    return a.patient_id != b.patient_id ? a.patient_id < b.patient_id : a.t < b.t;
  };
  if (instances.size() > cap) {
    std::mt19937_64 rng(seed);
    std::shuffle(instances.begin(), instances.end(), rng);
    instances.resize(cap);
  }
  std::sort(instances.begin(), instances.end(), by_key);
  return instances;
}

json instance_to_json(const TrainingInstance& instance) {
  json sentences = json::array();
  for (const auto& s : instance.sentences) sentences.push_back({{"text", s.text}, {"report_id", s.report_id}});
  return {{"patient_id", instance.patient_id},
          {"t", instance.t},
          {"sentences", sentences},
          {"queries", instance.queries},
          {"labels", instance.labels}};
}

TrainingInstance instance_from_json(const json& row) {
  TrainingInstance inst;
  inst.patient_id = row.at("patient_id").get<std::string>();
  inst.t = row.at("t").get<Day>();
  for (const auto& s : row.at("sentences"))
    inst.sentences.push_back({s.at("text").get<std::string>(), s.value("report_id", std::string())});
  inst.queries = row.at("queries").get<std::vector<std::string>>();
  inst.labels = row.at("labels").get<std::vector<std::uint8_t>>();
  if (inst.queries.size() != inst.labels.size())
    fail(ErrorKind::data, "instance " + inst.key() + ": queries and labels differ in length");
  return inst;
}

void save_instances(const std::filesystem::path& path, const std::vector<TrainingInstance>& instances) {
  std::vector<json> rows;
  rows.reserve(instances.size());
  for (const auto& inst : instances) rows.push_back(instance_to_json(inst));
  write_jsonl(path, rows);
}

std::vector<TrainingInstance> load_instances(const std::filesystem::path& path) {
  std::vector<TrainingInstance> out;
  for (const auto& row : read_jsonl(path)) out.push_back(instance_from_json(row));
  return out;
}

}  // namespace qfsum
