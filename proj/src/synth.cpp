#include "qfsum/synth.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "qfsum/lexical.hpp"

namespace qfsum {

namespace {

std::pair<int, int> read_range(const json& doc, const char* key, std::pair<int, int> fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc[key];
  if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
  return {v.at(0).get<int>(), v.at(1).get<int>()};
}

void check_range(std::pair<int, int> r, int lowest, const char* what) {
  if (r.first < lowest || r.second < r.first)
    fail(ErrorKind::invalid_argument, std::string("invalid range for ") + what);
}

void check_single_sentence(const std::string& s, const char* pool) {
  const auto split = split_sentences(s);
  if (split.size() != 1 || split.front() != collapse_whitespace(s))
    fail(ErrorKind::invalid_argument, std::string(pool) + " entry is not a single sentence: '" + s + "'");
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items) {
  return items[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(items.size()) - 1))];
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

std::string lowercase_first(std::string s) {
  if (!s.empty() && s[0] >= 'A' && s[0] <= 'Z' && !(s.size() > 1 && s[1] >= 'A' && s[1] <= 'Z'))
    s[0] = static_cast<char>(s[0] - 'A' + 'a');
  return s;
}

// A concrete code string for a leaf: the exact code, or a member of its range.
std::string representative_code(const CategoryNode& leaf, std::mt19937_64& rng) {
  const auto& pattern = leaf.codes.front();
  const auto dash = pattern.find('-');
  if (dash == std::string::npos) return pattern;
  const auto lo = std::stoi(pattern.substr(0, dash));
  const auto hi = std::stoi(pattern.substr(dash + 1));
  auto s = std::to_string(uniform(rng, lo, hi));
  if (s.size() < dash) s.insert(0, dash - s.size(), '0');
  return s;
}

}  // namespace

bool lexically_disjoint(std::string_view sentence, std::string_view description) {
  const auto a = tfidf_terms(sentence);
  const auto b = tfidf_terms(description);
  const std::set<std::string> bs(b.begin(), b.end());
  return std::none_of(a.begin(), a.end(), [&](const std::string& t) { return bs.count(t) > 0; });
}

SynthConfig SynthConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
  SynthConfig c;
  c.patients = doc.value("patients", c.patients);
  c.reports_per_patient = read_range(doc, "reports_per_patient", c.reports_per_patient);
  c.sentences_per_report = read_range(doc, "sentences_per_report", c.sentences_per_report);
  c.categories_per_patient = read_range(doc, "categories_per_patient", c.categories_per_patient);
  c.rho = doc.value("rho", c.rho);
  c.paraphrase_probability = doc.value("paraphrase_probability", c.paraphrase_probability);
  c.span_days = doc.value("span_days", c.span_days);
  c.decoy_probability = doc.value("decoy_probability", c.decoy_probability);
  c.noise_codes_per_patient = doc.value("noise_codes_per_patient", c.noise_codes_per_patient);
  c.distractors = doc.value("distractors", std::vector<std::string>{});
  c.decoy_templates = doc.value("decoy_templates", std::vector<std::string>{});
  if (doc.contains("hierarchy")) {
    std::filesystem::path h = doc["hierarchy"].get<std::string>();
    c.hierarchy = h.is_relative() && !base_dir.empty() ? base_dir / h : h;
  }
  for (const auto& row : doc.value("categories", json::array())) {
    SynthCategory cat;
    cat.leaf = row.at("leaf").get<std::string>();
    cat.weight = row.value("weight", 1.0);
    cat.overlapping = row.value("overlapping", std::vector<std::string>{});
    cat.paraphrased = row.value("paraphrased", std::vector<std::string>{});
    c.categories.push_back(std::move(cat));
  }
  return c;
}

SynthConfig SynthConfig::load(const std::filesystem::path& path) {
  const auto doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) fail(ErrorKind::data, "malformed synth config " + path.string());
  return from_json(doc, path.parent_path());
}

json SynthConfig::to_json() const {
  json cats = json::array();
  for (const auto& c : categories)
    cats.push_back({{"leaf", c.leaf},
                    {"weight", c.weight},
                    {"overlapping", c.overlapping},
                    {"paraphrased", c.paraphrased}});
  return {{"patients", patients},
          {"reports_per_patient", {reports_per_patient.first, reports_per_patient.second}},
          {"sentences_per_report", {sentences_per_report.first, sentences_per_report.second}},
          {"categories_per_patient", {categories_per_patient.first, categories_per_patient.second}},
          {"rho", rho},
          {"paraphrase_probability", paraphrase_probability},
          {"span_days", span_days},
          {"decoy_probability", decoy_probability},
          {"noise_codes_per_patient", noise_codes_per_patient},
          {"distractors", distractors},
          {"decoy_templates", decoy_templates},
          {"categories", cats}};
}

SynthResult generate_synthetic(const SynthConfig& config, const DiagnosisHierarchy& hierarchy,
                               std::uint64_t seed) {
  if (!(config.rho >= 0.0 && config.rho <= 1.0))
    fail(ErrorKind::invalid_argument, "rho must lie in [0, 1]");
  if (!(config.paraphrase_probability >= 0.0 && config.paraphrase_probability <= 1.0))
    fail(ErrorKind::invalid_argument, "paraphrase_probability must lie in [0, 1]");
  if (config.categories.empty()) fail(ErrorKind::invalid_argument, "synth config has no categories");
  if (config.distractors.empty()) fail(ErrorKind::invalid_argument, "empty distractor pool");
  check_range(config.reports_per_patient, 1, "reports_per_patient");
  check_range(config.sentences_per_report, 0, "sentences_per_report");
  check_range(config.categories_per_patient, 0, "categories_per_patient");
  if (config.span_days < 2) fail(ErrorKind::invalid_argument, "span_days must be at least 2");
  for (const auto& d : config.distractors) check_single_sentence(d, "distractor");

  std::vector<const CategoryNode*> leaves;
  std::vector<double> weights;
  for (const auto& cat : config.categories) {
    const auto& node = hierarchy.node(cat.leaf);
    if (!node.is_leaf() || node.codes.empty())
      fail(ErrorKind::invalid_argument, "synth category '" + cat.leaf + "' is not a coded leaf");
    if (cat.overlapping.empty() && cat.paraphrased.empty())
      fail(ErrorKind::invalid_argument, "empty evidence template pools for '" + cat.leaf + "'");
    if ((cat.overlapping.empty() && config.paraphrase_probability < 1.0) ||
        (cat.paraphrased.empty() && config.paraphrase_probability > 0.0))
      fail(ErrorKind::invalid_argument, "evidence pool for '" + cat.leaf + "' needs both variants");
    for (const auto& s : cat.overlapping) check_single_sentence(s, "evidence");
    for (const auto& s : cat.paraphrased) {
      check_single_sentence(s, "evidence");
      if (!lexically_disjoint(s, node.description))
        fail(ErrorKind::invalid_argument,
             "paraphrased evidence for '" + cat.leaf + "' shares words with its description: '" + s + "'");
    }
    if (!(cat.weight > 0.0)) fail(ErrorKind::invalid_argument, "category weights must be positive");
    leaves.push_back(&node);
    weights.push_back(cat.weight);
  }
  std::vector<const CategoryNode*> coded_leaves;
  for (const auto& n : hierarchy.nodes())
    if (n.is_leaf() && !n.codes.empty()) coded_leaves.push_back(&n);

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution plant(config.rho);
  std::bernoulli_distribution paraphrase(config.paraphrase_probability);
  std::bernoulli_distribution decoy(config.decoy_probability);

  SynthResult out;
  const int width = static_cast<int>(std::to_string(config.patients).size());
  for (std::size_t p = 0; p < config.patients; ++p) {
    auto pid = std::to_string(p + 1);
    pid = "p" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(pid.size()))), '0') + pid;
    PatientRecord patient;
    patient.id = pid;

    const int n_reports = uniform(rng, config.reports_per_patient.first, config.reports_per_patient.second);
    std::vector<Day> days(static_cast<std::size_t>(n_reports));
    for (auto& d : days) d = uniform(rng, 0, static_cast<int>(config.span_days));
    std::sort(days.begin(), days.end());

    struct Draft {
      Day day;
      ReportKind kind;
      std::vector<std::string> sentences;
    };
    std::vector<Draft> drafts;
    for (auto d : days) {
      Draft draft{d, kAllReportKinds[uniform(rng, 0, 5)], {}};
      const int n_sent = uniform(rng, config.sentences_per_report.first, config.sentences_per_report.second);
      for (int s = 0; s < n_sent; ++s) draft.sentences.push_back(pick(rng, config.distractors));
      drafts.push_back(std::move(draft));
    }
    const auto has_kind = [&](ReportKind k) {
      return std::any_of(drafts.begin(), drafts.end(), [&](const Draft& d) { return d.kind == k; });
    };
    if (!has_kind(ReportKind::radiology))
      drafts[static_cast<std::size_t>(uniform(rng, n_reports > 1 ? 1 : 0, n_reports - 1))].kind =
          ReportKind::radiology;

    // Categories for this patient, weighted, without replacement.
    const int k = std::min<int>(uniform(rng, config.categories_per_patient.first, config.categories_per_patient.second),
                                static_cast<int>(leaves.size()));
    std::vector<double> w = weights;
    std::vector<std::size_t> chosen;
    for (int i = 0; i < k; ++i) {
      std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
      const auto c = dist(rng);
      chosen.push_back(c);
      w[c] = 0.0;
      if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) break;
    }
    std::set<std::string> used_leaves;
    for (auto c : chosen) used_leaves.insert(leaves[c]->id);

    for (auto c : chosen) {
      const auto& cat = config.categories[c];
      const auto& leaf = *leaves[c];
      // A radiology report with at least one strictly earlier report.
      std::vector<std::size_t> anchors;
      for (std::size_t i = 0; i < drafts.size(); ++i)
        if (drafts[i].kind == ReportKind::radiology && drafts[i].day > drafts.front().day) anchors.push_back(i);
      if (anchors.empty()) {
        for (std::size_t i = 0; i < drafts.size(); ++i)
          if (drafts[i].day > drafts.front().day) anchors.push_back(i);
        if (anchors.empty()) continue;
        const auto a = pick(rng, anchors);
        drafts[a].kind = ReportKind::radiology;
        anchors = {a};
      }
      const auto anchor = pick(rng, anchors);
      const Day t = drafts[anchor].day;

      if (plant(rng)) {
        const bool para = cat.overlapping.empty() || (!cat.paraphrased.empty() && paraphrase(rng));
        const auto& sentence = pick(rng, para ? cat.paraphrased : cat.overlapping);
        std::vector<std::size_t> earlier;
        for (std::size_t i = 0; i < drafts.size(); ++i)
          if (drafts[i].day < t) earlier.push_back(i);
        auto& host = drafts[pick(rng, earlier)].sentences;
        host.insert(host.begin() + uniform(rng, 0, static_cast<int>(host.size())), sentence);
        out.oracle.entries.push_back(
            {pid, t, leaf.id, collapse_whitespace(sentence), lexically_disjoint(sentence, leaf.description)});
      }
      const auto code = representative_code(leaf, rng);
      const Day onset = t + uniform(rng, 1, 364);
      const Day again = onset + uniform(rng, 1, 180);
      patient.code_events.push_back({pid, code, CodeSystem::icd9, onset});
      patient.code_events.push_back({pid, code, CodeSystem::icd9, again});
    }

    for (int i = 0; i < config.noise_codes_per_patient; ++i) {
      const auto* leaf = pick(rng, coded_leaves);
      if (!used_leaves.insert(leaf->id).second) continue;
      patient.code_events.push_back(
          {pid, representative_code(*leaf, rng), CodeSystem::icd9, uniform(rng, 0, static_cast<int>(config.span_days))});
    }

    if (!config.decoy_templates.empty()) {
      for (auto& draft : drafts) {
        if (!decoy(rng)) continue;
        const auto* leaf = pick(rng, coded_leaves);
        if (used_leaves.count(leaf->id)) continue;
        auto s = replace_all(pick(rng, config.decoy_templates), "{description}", lowercase_first(leaf->description));
        draft.sentences.insert(draft.sentences.begin() + uniform(rng, 0, static_cast<int>(draft.sentences.size())),
                               std::move(s));
      }
    }

    for (std::size_t i = 0; i < drafts.size(); ++i) {
      std::string text;
      for (const auto& s : drafts[i].sentences) {
        if (!text.empty()) text += ' ';
        text += s;
      }
      auto rid = std::to_string(i + 1);
      if (rid.size() < 2) rid.insert(0, 1, '0');
      patient.reports.push_back({pid + "-r" + rid, pid, drafts[i].kind, drafts[i].day, std::move(text)});
    }
    out.corpus.patients.emplace(pid, std::move(patient));
  }
  out.corpus.sort();
  return out;
}

}  // namespace qfsum
