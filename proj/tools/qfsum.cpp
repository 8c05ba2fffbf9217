// qfsum command-line driver.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qfsum/annotations.hpp"
#include "qfsum/corpus.hpp"
#include "qfsum/evaluation.hpp"
#include "qfsum/extraction.hpp"
#include "qfsum/hierarchy.hpp"
#include "qfsum/lexical.hpp"
#include "qfsum/metrics.hpp"
#include "qfsum/scoring.hpp"
#include "qfsum/service.hpp"
#include "qfsum/synth.hpp"
#include "qfsum/training.hpp"

namespace fs = std::filesystem;
using namespace qfsum;

namespace {

constexpr const char* kToolVersion = "qfsum 0.1.0";

// Manifest written beside every run's outputs. Paths are recorded as given so
// that two runs with identical flags produce identical manifests.
struct Manifest {
  std::string subcommand;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::object();

  void input(const fs::path& p) {
    if (fs::is_directory(p)) {
      for (const char* name : {"reports.jsonl", "codes.jsonl"})
        if (fs::exists(p / name)) inputs[(p / name).string()] = sha256_file(p / name);
    } else {
      inputs[p.string()] = sha256_file(p);
    }
  }
  void output(const fs::path& p) { outputs[p.string()] = sha256_file(p); }

  void write(const fs::path& path) const {
    json doc = {{"subcommand", subcommand}, {"tool_version", kToolVersion}, {"config", config},
                {"seeds", seeds},           {"inputs", inputs},            {"outputs", outputs}};
    write_file(path, doc.dump(2) + "\n");
  }
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
      return 2;
    case ErrorKind::numeric:
      return 4;
    default:
      return 3;
  }
}

DiagnosisHierarchy load_hierarchy(const fs::path& path, const std::string& gem) {
  auto h = DiagnosisHierarchy::load(path);
  if (!gem.empty()) h.load_gem(gem);
  return h;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::invalid_argument, what);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::size_t> patients;
  std::optional<double> rho;
  std::optional<double> paraphrase_probability;
};

int run_synth(const SynthArgs& a) {
  auto config = SynthConfig::load(a.config);
  if (a.patients) config.patients = *a.patients;
  if (a.rho) config.rho = *a.rho;
  if (a.paraphrase_probability) config.paraphrase_probability = *a.paraphrase_probability;
  const auto hierarchy = DiagnosisHierarchy::load(config.hierarchy);
  const auto result = generate_synthetic(config, hierarchy, a.seed);

  const fs::path out(a.out);
  fs::create_directories(out);
  export_corpus(result.corpus, out);
  result.oracle.save(out / "oracle.jsonl");
  hierarchy.save(out / "hierarchy.jsonl");

  Manifest m{"synth-data"};
  m.config = config.to_json();
  m.seeds["seed"] = a.seed;
  m.input(a.config);
  m.input(config.hierarchy);
  for (const char* name : {"reports.jsonl", "codes.jsonl", "oracle.jsonl", "hierarchy.jsonl"}) m.output(out / name);
  m.write(out / "manifest.json");
  spdlog::info("synth-data: {} patients, {} reports, {} oracle sentences", result.corpus.patients.size(),
               result.corpus.report_count(), result.oracle.entries.size());
  return 0;
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  std::string corpus, hierarchy, gem, out;
  Day window = 365;
  std::optional<Day> horizon;
  std::vector<double> splits{0.7, 0.15, 0.15};
  std::vector<std::size_t> caps{10000, 1000, 1000};
  std::uint64_t seed = 0;
};

int run_build(const BuildArgs& a) {
  require(a.splits.size() == 3 && a.caps.size() == 3, "--splits and --caps take three values");
  const auto corpus = ingest(a.corpus);
  const auto hierarchy = load_hierarchy(a.hierarchy, a.gem);

  ExtractionOptions options;
  options.window = a.window;
  options.label_horizon = a.horizon;
  ExtractionStats stats;
  const auto instances = build_instances(corpus, hierarchy, options, &stats);

  SplitSpec spec;
  spec.ratios = {a.splits[0], a.splits[1], a.splits[2]};
  spec.caps = {a.caps[0], a.caps[1], a.caps[2]};
  spec.seed = a.seed;
  spec.validate();

  std::vector<std::string> patients;
  for (const auto& inst : instances)
    if (patients.empty() || patients.back() != inst.patient_id) patients.push_back(inst.patient_id);
  const auto groups = split_patients(patients, spec);

  const fs::path out(a.out);
  fs::create_directories(out);
  const char* names[] = {"train.jsonl", "val.jsonl", "test.jsonl"};
  std::vector<TrainingInstance> train_split;
  json counts = json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<TrainingInstance> part;
    for (const auto& inst : instances)
      if (groups.groups[s].count(inst.patient_id)) part.push_back(inst);
    part = truncate_instances(std::move(part), spec.caps[s], spec.seed + s);
    save_instances(out / names[s], part);
    counts[names[s]] = part.size();
    if (s == 0) train_split = std::move(part);
  }

  // TF-IDF documents: every sentence of a training patient's reports plus
  // every category description.
  std::vector<std::string> documents;
  for (const auto& pid : groups.groups[0])
    for (const auto& report : corpus.patient(pid).reports)
      for (auto& sentence : split_sentences(report.text)) documents.push_back(std::move(sentence));
  for (const auto& node : hierarchy.nodes()) documents.push_back(node.description);
  TfidfModel::fit(documents).save(out / "tfidf.tsv");
  write_file(out / "category_stats.json", compute_category_stats(train_split).to_json().dump(2) + "\n");

  Manifest m{"build-instances"};
  m.config = {{"window", a.window},
              {"horizon", a.horizon ? json(*a.horizon) : json(nullptr)},
              {"splits", a.splits},
              {"caps", a.caps},
              {"gem", a.gem},
              {"counts", counts},
              {"extraction",
               {{"patients_seen", stats.patients_seen},
                {"candidate_time_points", stats.candidate_time_points},
                {"dropped_no_positive", stats.dropped_no_positive},
                {"dropped_no_sentences", stats.dropped_no_sentences},
                {"instances", stats.instances}}}};
  m.seeds["seed"] = a.seed;
  m.input(a.corpus);
  m.input(a.hierarchy);
  if (!a.gem.empty()) m.input(a.gem);
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl", "tfidf.tsv", "category_stats.json"})
    m.output(out / name);
  m.write(out / "manifest.json");
  spdlog::info("build-instances: {} instances ({} train / {} val / {} test)", instances.size(),
               counts["train.jsonl"].get<std::size_t>(), counts["val.jsonl"].get<std::size_t>(),
               counts["test.jsonl"].get<std::size_t>());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string instances, hierarchy, gem, category_stats, out;
  std::string query_mode = "description";
  TrainConfig train;
  EncoderConfig encoder;
  bool no_resample = false;
  bool no_weight = false;
};

int run_train(TrainArgs a) {
  a.train.query_mode = parse_query_mode(a.query_mode);
  require(a.train.query_mode != QueryMode::free_text, "--query-mode must be indicator, description or hierarchy");
  a.train.resample = !a.no_resample;
  a.train.weight_negatives = !a.no_weight;
  a.train.validate();

  const auto instances = load_instances(a.instances);
  if (instances.empty()) fail(ErrorKind::data, "no training instances in " + a.instances);
  const auto hierarchy = load_hierarchy(a.hierarchy, a.gem);
  const auto stats = a.category_stats.empty()
                         ? compute_category_stats(instances)
                         : CategoryStats::from_json(json::parse(read_file(a.category_stats)));

  auto initial = initialize_model(instances, hierarchy, a.encoder, a.train.query_mode, a.train.seed);
  initial.meta["train"] = a.train.to_json();

  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<fs::path> written;
  const auto result = train(instances, hierarchy, std::move(initial), a.train, stats,
                            [&](std::size_t epoch, const TrainedModel& model) {
                              const auto path = out / ("epoch_" + std::to_string(epoch) + ".ckpt");
                              save_checkpoint(path, model);
                              written.push_back(path);
                            });
  save_checkpoint(out / "checkpoint.ckpt", result.model);
  write_file(out / "loss.tsv", format_loss_log(result.log));
  written.push_back(out / "checkpoint.ckpt");
  written.push_back(out / "loss.tsv");

  Manifest m{"train"};
  m.config = {{"train", a.train.to_json()}, {"encoder", result.model.params.config.to_json()}};
  m.seeds["seed"] = a.train.seed;
  m.input(a.instances);
  m.input(a.hierarchy);
  if (!a.category_stats.empty()) m.input(a.category_stats);
  for (const auto& p : written) m.output(p);
  m.write(out / "manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string results, checkpoint, baseline;
  std::string references = "oracle";
  std::string instances, oracle, annotations, corpus, hierarchy, gem, tfidf, out, name;
  std::string subset = "all";
  std::string threshold_source = "percentile";
  std::size_t k = 20;
  std::uint64_t seed = 0;
  bool include_ancestors = false;
  bool keep_encoder = false;
};

int run_evaluate(const EvalArgs& a) {
  const int sources = !a.results.empty() + (!a.checkpoint.empty() && a.baseline.empty()) + !a.baseline.empty();
  require(sources == 1, "give exactly one of --results, --checkpoint or --baseline");
  require(a.references == "oracle" || a.references == "annotations", "--references must be oracle or annotations");
  require(a.threshold_source == "percentile" || a.threshold_source == "attention",
          "--threshold-source must be percentile or attention");
  require(a.k >= 1, "--k must be at least 1");
  const auto subset = Subset::parse(a.subset);
  const auto source = a.threshold_source == "percentile" ? ThresholdSource::percentile : ThresholdSource::attention;

  const auto hierarchy = load_hierarchy(a.hierarchy, a.gem);
  Manifest m{"evaluate"};
  m.input(a.hierarchy);

  std::vector<AnnotationRecord> records;
  EvaluationPlan plan;
  if (a.references == "oracle") {
    require(!a.instances.empty() && !a.oracle.empty(), "oracle references need --instances and --oracle");
    plan = plan_from_oracle(load_instances(a.instances), EvidenceOracle::load(a.oracle), hierarchy,
                            a.include_ancestors);
    m.input(a.instances);
    m.input(a.oracle);
  } else {
    require(!a.annotations.empty() && !a.corpus.empty(), "annotation references need --annotations and --corpus");
    const AnnotationStore store(a.annotations, {});
    records = store.list(std::nullopt);
    plan = plan_from_annotations(records, ingest(a.corpus), hierarchy);
    m.input(a.annotations);
    m.input(a.corpus);
  }

  std::optional<TfidfModel> tfidf;
  if (!a.tfidf.empty()) {
    tfidf = TfidfModel::load(a.tfidf);
    m.input(a.tfidf);
  }

  std::optional<TrainedModel> model;
  if (!a.checkpoint.empty()) {
    model = load_checkpoint(a.checkpoint);
    m.input(a.checkpoint);
  }

  std::string name = a.name;
  std::vector<RankedResult> results;
  References references = plan.references;
  std::optional<CodePredictions> codes;
  if (!a.results.empty()) {
    results = load_results(a.results);
    m.input(a.results);
    if (name.empty()) name = "results";
  } else if (!a.baseline.empty()) {
    ScoreFn scorer;
    if (a.baseline == "tfidf") {
      require(tfidf.has_value(), "--baseline tfidf needs --tfidf");
      scorer = tfidf_scorer(*tfidf, hierarchy);
    } else if (a.baseline == "contextual") {
      require(model.has_value(), "--baseline contextual needs --checkpoint for its vocabulary");
      if (!a.keep_encoder) model->params = ModelParameters<float>::initialized(model->params.config, a.seed);
      scorer = contextual_scorer(model->params, model->vocab, hierarchy);
    } else {
      fail(ErrorKind::invalid_argument, "--baseline must be tfidf or contextual");
    }
    std::tie(results, references) = run_plan(plan, scorer, hierarchy);
    if (name.empty()) name = a.baseline;
  } else {
    std::tie(results, references) = run_plan(plan, model_scorer(*model, hierarchy), hierarchy);
    if (name.empty()) name = std::string(to_string(model->query_mode));
    if (a.references == "oracle") codes = predict_codes(plan.instances, *model, hierarchy);
  }

  auto report = compute_report(name, results, references, subset, source, a.k, tfidf ? &*tfidf : nullptr);
  if (codes) {
    const auto curve = code_prediction_metrics(codes->probabilities, codes->labels);
    report.code_auroc = curve.auroc;
    report.code_avg_precision = curve.average_precision;
  }
  if (!records.empty()) {
    const auto marks = validation_marks(records, name);
    if (!marks.empty()) report.validated_p = validated_precision(marks, a.k);
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  write_file(out / "metrics.json", report.to_json().dump(2) + "\n");
  write_file(out / "curve.csv", curve_csv(report.curve));
  m.output(out / "metrics.json");
  m.output(out / "curve.csv");
  if (a.results.empty()) {
    save_results(out / "results.jsonl", results);
    m.output(out / "results.jsonl");
  }
  m.config = {{"references", a.references},       {"subset", report.subset},
              {"threshold_source", a.threshold_source}, {"k", a.k},
              {"model", name},                     {"include_ancestors", a.include_ancestors},
              {"keep_encoder", a.keep_encoder}};
  m.seeds["seed"] = a.seed;
  m.write(out / "manifest.json");
  std::cout << report.to_json().dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RankArgs {
  std::string checkpoint, baseline, corpus, hierarchy, gem, tfidf, patient, category, text, manifest;
  Day time_point = 0;
  std::size_t top_k = 20;
  std::uint64_t seed = 0;
};

int run_rank(const RankArgs& a) {
  require(!a.checkpoint.empty() || !a.baseline.empty(), "give --checkpoint or --baseline");
  require(a.category.empty() != a.text.empty(), "give exactly one of --query or --text");
  std::optional<TfidfModel> tfidf;
  if (!a.tfidf.empty()) tfidf = TfidfModel::load(a.tfidf);

  Service::Options options;
  options.annotations_path.clear();
  options.contextual_seed = a.seed;
  Service service(ingest(a.corpus), load_hierarchy(a.hierarchy, a.gem), std::move(tfidf), options);
  std::string selector = a.baseline;
  if (!a.checkpoint.empty()) {
    auto model = load_checkpoint(a.checkpoint);
    if (selector.empty()) selector = std::string(to_string(model.query_mode));
    service.register_model(std::move(model));
  }

  json request = {{"patient_id", a.patient}, {"time_point", a.time_point}, {"model", selector}, {"top_k", a.top_k}};
  request["query"] = a.text.empty() ? json{{"category_id", a.category}} : json{{"text", a.text}};
  const auto response = service.rank(request);
  std::cout << response.dump(2) << "\n";

  if (!a.manifest.empty()) {
    Manifest m{"rank"};
    m.config = request;
    m.seeds["seed"] = a.seed;
    m.input(a.corpus);
    m.input(a.hierarchy);
    if (!a.checkpoint.empty()) m.input(a.checkpoint);
    if (!a.tfidf.empty()) m.input(a.tfidf);
    m.write(a.manifest);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string corpus, hierarchy, gem, tfidf, annotations_path = "annotations.jsonl", host = "127.0.0.1";
  std::vector<std::string> checkpoints;
  int port = 8080;
  std::uint64_t contextual_seed = 0;
};

int run_serve(const ServeArgs& a) {
  std::optional<TfidfModel> tfidf;
  if (!a.tfidf.empty()) tfidf = TfidfModel::load(a.tfidf);
  Service::Options options;
  options.annotations_path = a.annotations_path;
  options.contextual_seed = a.contextual_seed;
  Service service(ingest(a.corpus), load_hierarchy(a.hierarchy, a.gem), std::move(tfidf), options);
  for (const auto& path : a.checkpoints) service.register_model(load_checkpoint(path));
  spdlog::info("serving on {}:{}", a.host, a.port);
  service.listen(a.host, a.port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-focused extractive summaries of clinical history, trained from future diagnosis codes."};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--settings", "", "TOML file of option defaults; [subcommand] sections, flags take precedence");
  app.set_version_flag("--version", kToolVersion);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Only log warnings and errors");

  std::function<int()> command;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Generate a synthetic corpus with a planted-evidence oracle");
  s->add_option("--config", synth.config, "Generator config (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--patients", synth.patients, "Override the patient count");
  s->add_option("--rho", synth.rho, "Override P(evidence planted)")->check(CLI::Range(0.0, 1.0));
  s->add_option("--paraphrase-probability", synth.paraphrase_probability, "Override P(paraphrased evidence)")
      ->check(CLI::Range(0.0, 1.0));
  s->callback([&] { command = [&] { return run_synth(synth); }; });

  BuildArgs build;
  auto* b = app.add_subcommand("build-instances", "Extract (x, q, y) instances and patient splits");
  b->add_option("--corpus", build.corpus, "Corpus directory (reports.jsonl, codes.jsonl)")
      ->required()
      ->check(CLI::ExistingDirectory);
  b->add_option("--hierarchy", build.hierarchy, "Hierarchy file")->required()->check(CLI::ExistingFile);
  b->add_option("--gem", build.gem, "ICD-10 to ICD-9 GEM table")->check(CLI::ExistingFile);
  b->add_option("--window", build.window, "Days before a persistent code searched for radiology reports")
      ->check(CLI::PositiveNumber);
  b->add_option("--horizon", build.horizon, "Label horizon in days (unbounded when absent)")
      ->check(CLI::PositiveNumber);
  b->add_option("--splits", build.splits, "Train/val/test patient ratios")->delimiter(',')->expected(3);
  b->add_option("--caps", build.caps, "Train/val/test instance caps")->delimiter(',')->expected(3);
  b->add_option("--seed", build.seed, "Split and truncation seed");
  b->add_option("--out", build.out, "Output directory")->required();
  b->callback([&] { command = [&] { return run_build(build); }; });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the attention model");
  t->add_option("--instances", tr.instances, "Training instances (JSONL)")->required()->check(CLI::ExistingFile);
  t->add_option("--hierarchy", tr.hierarchy, "Hierarchy file")->required()->check(CLI::ExistingFile);
  t->add_option("--gem", tr.gem, "ICD-10 to ICD-9 GEM table")->check(CLI::ExistingFile);
  t->add_option("--category-stats", tr.category_stats, "Category counts (defaults to counting --instances)")
      ->check(CLI::ExistingFile);
  t->add_option("--query-mode", tr.query_mode, "indicator, description or hierarchy");
  t->add_option("--epochs", tr.train.epochs, "Passes over the training instances");
  t->add_option("--lr", tr.train.learning_rate, "Adam learning rate");
  t->add_option("--batch-size", tr.train.batch_size, "Instances per optimizer step");
  t->add_option("--seed", tr.train.seed, "Initialization, shuffle and resampling seed");
  t->add_option("--downsample-p", tr.train.downsample_p, "Binomial rate for resampled negatives");
  t->add_option("--max-grad-norm", tr.train.max_grad_norm, "Global gradient-norm clip (<= 0 disables)");
  t->add_flag("--no-resample", tr.no_resample, "Keep the original negatives");
  t->add_flag("--no-weight", tr.no_weight, "Disable the neg/pos loss weight");
  t->add_option("--d-model", tr.encoder.d_model, "Encoder width");
  t->add_option("--layers", tr.encoder.n_layers, "Encoder layers");
  t->add_option("--heads", tr.encoder.n_heads, "Attention heads");
  t->add_option("--d-ff", tr.encoder.d_ff, "Feed-forward width");
  t->add_option("--d-hidden", tr.encoder.d_hidden, "Head hidden width");
  t->add_option("--max-tokens", tr.encoder.max_tokens_per_sentence, "Tokens kept per sentence");
  t->add_option("--max-sentences", tr.encoder.max_sentences_per_instance, "Most recent sentences kept per instance");
  t->add_option("--max-query-tokens", tr.encoder.max_query_tokens, "Tokens kept per query");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->callback([&] { command = [&] { return run_train(tr); }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Retrieval metrics against oracle or annotated references");
  e->add_option("--results", ev.results, "Precomputed rankings (JSONL)")->check(CLI::ExistingFile);
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  e->add_option("--baseline", ev.baseline, "tfidf or contextual");
  e->add_option("--references", ev.references, "oracle or annotations");
  e->add_option("--instances", ev.instances, "Evaluation instances (oracle references)")->check(CLI::ExistingFile);
  e->add_option("--oracle", ev.oracle, "Oracle file (oracle references)")->check(CLI::ExistingFile);
  e->add_option("--annotations", ev.annotations, "Annotation log (annotation references)")
      ->check(CLI::ExistingFile);
  e->add_option("--corpus", ev.corpus, "Corpus directory (annotation references)")
      ->check(CLI::ExistingDirectory);
  e->add_option("--hierarchy", ev.hierarchy, "Hierarchy file")->required()->check(CLI::ExistingFile);
  e->add_option("--gem", ev.gem, "ICD-10 to ICD-9 GEM table")->check(CLI::ExistingFile);
  e->add_option("--tfidf", ev.tfidf, "TF-IDF model (tfidf baseline, tfidf_zero subset)")->check(CLI::ExistingFile);
  e->add_option("--subset", ev.subset, "all, tfidf_zero, custom or depth=N");
  e->add_option("--threshold-source", ev.threshold_source, "percentile or attention");
  e->add_option("--k", ev.k, "Cutoff for top-k metrics");
  e->add_option("--seed", ev.seed, "Seed of the contextual baseline encoder");
  e->add_option("--name", ev.name, "Model name in the report and for validation annotations");
  e->add_flag("--include-ancestors", ev.include_ancestors, "Also query positive non-leaf categories");
  e->add_flag("--keep-encoder", ev.keep_encoder, "Contextual baseline uses the checkpoint weights as-is");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->callback([&] { command = [&] { return run_evaluate(ev); }; });

  RankArgs rk;
  auto* r = app.add_subcommand("rank", "Rank one patient's history against a query");
  r->add_option("--checkpoint", rk.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  r->add_option("--baseline", rk.baseline, "tfidf or contextual");
  r->add_option("--corpus", rk.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  r->add_option("--hierarchy", rk.hierarchy, "Hierarchy file")->required()->check(CLI::ExistingFile);
  r->add_option("--gem", rk.gem, "ICD-10 to ICD-9 GEM table")->check(CLI::ExistingFile);
  r->add_option("--tfidf", rk.tfidf, "TF-IDF model")->check(CLI::ExistingFile);
  r->add_option("--patient", rk.patient, "Patient id")->required();
  r->add_option("--time-point", rk.time_point, "Only sentences before this day are ranked")->required();
  r->add_option("--query", rk.category, "Category id");
  r->add_option("--text", rk.text, "Free-text query");
  r->add_option("--top-k", rk.top_k, "Sentences printed")->check(CLI::PositiveNumber);
  r->add_option("--seed", rk.seed, "Seed of the contextual baseline encoder");
  r->add_option("--manifest", rk.manifest, "Where to write the run manifest");
  r->callback([&] { command = [&] { return run_rank(rk); }; });

  ServeArgs sv;
  auto* v = app.add_subcommand("serve", "Run the HTTP service");
  v->add_option("--corpus", sv.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  v->add_option("--hierarchy", sv.hierarchy, "Hierarchy file")->required()->check(CLI::ExistingFile);
  v->add_option("--gem", sv.gem, "ICD-10 to ICD-9 GEM table")->check(CLI::ExistingFile);
  v->add_option("--checkpoint", sv.checkpoints, "Checkpoint to load (repeatable)")->check(CLI::ExistingFile);
  v->add_option("--tfidf", sv.tfidf, "TF-IDF model")->check(CLI::ExistingFile);
  v->add_option("--annotations-path", sv.annotations_path, "Annotation log");
  v->add_option("--host", sv.host, "Bind address");
  v->add_option("--port", sv.port, "Port")->check(CLI::Range(0, 65535));
  v->add_option("--contextual-seed", sv.contextual_seed, "Seed of the contextual baseline encoder");
  v->callback([&] { command = [&] { return run_serve(sv); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("qfsum"));
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    return command();
  } catch (const Error& err) {
    std::cerr << "qfsum: " << err.what() << "\n";
    return exit_code_for(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "qfsum: " << err.what() << "\n";
    return 3;
  }
}
