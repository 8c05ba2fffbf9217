#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qfsum/extraction.hpp"
#include "qfsum/hierarchy.hpp"
#include "qfsum/scoring.hpp"
#include "qfsum/training.hpp"

namespace qfsum::testing {

inline CategoryNode make_node(std::string id, std::optional<std::string> parent, std::string description,
                              std::vector<std::string> codes = {}) {
  CategoryNode n;
  n.id = id;
  n.name = id;
  n.description = std::move(description);
  n.parent = std::move(parent);
  n.codes = std::move(codes);
  return n;
}

// 7 nodes:  neuro -> {vascular -> {stroke, bleed}, tumor -> {glioma}}, infection
inline DiagnosisHierarchy seven_node_tree() {
  return DiagnosisHierarchy::from_nodes({
      make_node("neuro", std::nullopt, "neurologic disease"),
      make_node("vascular", "neuro", "cerebrovascular disease"),
      make_node("stroke", "vascular", "ischemic stroke infarct", {"434.91"}),
      make_node("bleed", "vascular", "intracranial hemorrhage", {"430-432"}),
      make_node("tumor", "neuro", "brain tumor"),
      make_node("glioma", "tumor", "glioma of the brain", {"191.9"}),
      make_node("infection", std::nullopt, "infection", {"320-326"}),
  });
}

// Three-patient extraction fixture over seven_node_tree plus one GEM line.
inline DiagnosisHierarchy hand_hierarchy() {
  auto h = testing::seven_node_tree();
  h.parse_gem("I61.9\t431\n");
  return h;
}

inline void add_report(Corpus& c, const std::string& pid, const std::string& id, ReportKind kind, Day day,
                const std::string& text) {
  auto& p = c.patients[pid];
  p.id = pid;
  p.reports.push_back({id, pid, kind, day, text});
}

inline void add_code(Corpus& c, const std::string& pid, const std::string& code, CodeSystem system, Day day) {
  auto& p = c.patients[pid];
  p.id = pid;
  p.code_events.push_back({pid, code, system, day});
}

// a: stroke coded at 400 and 500; radiology at 10 (outside the window) and 200.
// b: bleed via ICD-9 and its ICD-10 twin, glioma twice, both onsets sharing the
//    radiology report at 250; infection coded once.
// c: infection persistent, but its only in-window radiology report is the first report.
inline Corpus hand_corpus() {
  Corpus c;
  add_report(c, "a", "a1", ReportKind::radiology, 10, "Baseline scan. Normal.");
  add_report(c, "a", "a2", ReportKind::visit, 100, "Headache reported.");
  add_report(c, "a", "a3", ReportKind::radiology, 200, "Small infarct.");
  add_report(c, "a", "a4", ReportKind::radiology, 450, "Follow up.");
  add_code(c, "a", "434.91", CodeSystem::icd9, 400);
  add_code(c, "a", "434.91", CodeSystem::icd9, 500);

  add_report(c, "b", "b1", ReportKind::visit, 100, "Confusion noted.");
  add_report(c, "b", "b2", ReportKind::radiology, 250, "Mass with bleeding.");
  add_code(c, "b", "431", CodeSystem::icd9, 300);
  add_code(c, "b", "I61.9", CodeSystem::icd10, 320);
  add_code(c, "b", "191.9", CodeSystem::icd9, 310);
  add_code(c, "b", "191.9", CodeSystem::icd9, 330);
  add_code(c, "b", "320", CodeSystem::icd9, 50);

  add_report(c, "c", "c1", ReportKind::radiology, 50, "Chest film.");
  add_report(c, "c", "c2", ReportKind::progress, 90, "Fever.");
  add_code(c, "c", "320", CodeSystem::icd9, 100);
  add_code(c, "c", "321", CodeSystem::icd9, 200);
  c.sort();
  return c;
}


inline TrainingInstance make_instance(std::string patient, Day t, std::vector<std::string> sentences,
                                      std::vector<std::string> queries, std::vector<std::uint8_t> labels) {
  TrainingInstance inst;
  inst.patient_id = std::move(patient);
  inst.t = t;
  for (std::size_t i = 0; i < sentences.size(); ++i)
    inst.sentences.push_back({std::move(sentences[i]), "r" + std::to_string(i)});
  inst.queries = std::move(queries);
  inst.labels = std::move(labels);
  return inst;
}

inline std::vector<TrainingInstance> gradient_fixture_batch() {
  return {
      make_instance("p1", 10, {"MRI shows an acute infarct.", "No bleeding seen.", "Patient is stable."},
                    {"stroke", "vascular", "neuro", "glioma", "infection"}, {1, 1, 1, 0, 0}),
      make_instance("p2", 20, {"Enhancing mass in the left lobe.", "Follow up imaging."},
                    {"glioma", "tumor", "stroke"}, {1, 1, 0}),
  };
}

inline EncoderConfig tiny_config(std::size_t vocab_size, std::size_t categories) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.d_hidden = 4;
  c.max_tokens_per_sentence = 16;
  c.max_query_tokens = 24;
  c.num_categories = categories;
  return c;
}

/// Parameters drawn large enough that every tensor carries a visible gradient.
inline ModelParameters<double> random_parameters(const EncoderConfig& config, std::uint64_t seed, double scale = 0.4) {
  auto p = ModelParameters<double>::zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  p.for_each([&](const std::string& name, Matrix<double>& m) {
    const bool gain = name.find("gamma") != std::string::npos;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (gain ? 1.0 : 0.0) + normal(rng);
  });
  return p;
}

inline std::vector<const TrainingInstance*> pointers(const std::vector<TrainingInstance>& v) {
  std::vector<const TrainingInstance*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("qfsum-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace qfsum::testing
