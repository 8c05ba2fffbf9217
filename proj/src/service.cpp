#include "qfsum/service.hpp"

#include <fstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "qfsum/metrics.hpp"

namespace qfsum {

namespace {

constexpr std::string_view kBaselines[] = {"tfidf", "contextual"};

Day parse_day(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::invalid_argument, std::string("bad ") + what + ": " + text);
}

json node_json(const CategoryNode& n) {
  return {{"id", n.id},
          {"name", n.name},
          {"description", n.description},
          {"parent", n.parent ? json(*n.parent) : json(nullptr)},
          {"children", n.children},
          {"codes", n.codes},
          {"depth", n.depth},
          {"custom", n.custom}};
}

json parse_body(const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorKind::invalid_argument, "request body must be a JSON object");
  return doc;
}

}  // namespace

int Service::status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::unprocessable: return 422;
    case ErrorKind::numeric: return 500;
    case ErrorKind::invalid_argument:
    case ErrorKind::data: return 400;
  }
  return 500;
}

Service::Service(Corpus corpus, DiagnosisHierarchy hierarchy, std::optional<TfidfModel> tfidf, Options options)
    : corpus_(std::move(corpus)),
      tfidf_(std::move(tfidf)),
      options_(std::move(options)),
      store_(options_.annotations_path, options_.clock) {
  // Replay categories added in earlier sessions so stored annotations resolve.
  if (!options_.annotations_path.empty() && std::filesystem::exists(custom_path()))
    for (const auto& row : read_jsonl(custom_path()))
      hierarchy.add_custom(row.at("name").get<std::string>(), row.at("description").get<std::string>());
  hierarchy_ = std::make_shared<const DiagnosisHierarchy>(std::move(hierarchy));
}

Service::~Service() { stop(); }

std::filesystem::path Service::custom_path() const {
  auto p = options_.annotations_path;
  p += ".custom.jsonl";
  return p;
}

void Service::register_model(TrainedModel model) {
  const auto mode = model.query_mode;
  auto ptr = std::make_shared<const TrainedModel>(std::move(model));
  std::lock_guard lock(mutex_);
  models_[mode] = std::move(ptr);
  spdlog::info("registered {} checkpoint", to_string(mode));
}

void Service::set_contextual_encoder(TrainedModel model) {
  auto ptr = std::make_shared<const TrainedModel>(std::move(model));
  std::lock_guard lock(mutex_);
  contextual_ = std::move(ptr);
}

std::shared_ptr<const DiagnosisHierarchy> Service::hierarchy() const {
  std::lock_guard lock(mutex_);
  return hierarchy_;
}

std::shared_ptr<const TrainedModel> Service::model_for(QueryMode mode) const {
  std::lock_guard lock(mutex_);
  const auto it = models_.find(mode);
  if (it == models_.end()) fail(ErrorKind::conflict, std::string("no ") + std::string(to_string(mode)) + " checkpoint loaded");
  return it->second;
}

std::shared_ptr<const TrainedModel> Service::contextual() const {
  std::lock_guard lock(mutex_);
  if (contextual_) return contextual_;
  if (models_.empty()) fail(ErrorKind::conflict, "contextual baseline needs a loaded checkpoint for its vocabulary");
  const auto& first = *models_.begin()->second;
  auto fresh = std::make_shared<TrainedModel>();
  fresh->vocab = first.vocab;
  fresh->categories = first.categories;
  fresh->params = ModelParameters<float>::initialized(first.params.config, options_.contextual_seed);
  contextual_ = std::move(fresh);
  return contextual_;
}

json Service::hierarchy_json() const {
  const auto h = hierarchy();
  json nodes = json::array();
  for (const auto& n : h->nodes()) nodes.push_back(node_json(n));
  return {{"top_level", h->top_level()}, {"nodes", nodes}, {"max_depth", h->max_depth()}};
}

json Service::patients_json() const {
  json ids = json::array();
  for (const auto& [id, p] : corpus_.patients) ids.push_back({{"id", id}, {"reports", p.reports.size()}});
  return {{"patients", ids}};
}

json Service::reports(const std::string& patient_id, std::optional<Day> before, std::optional<Day> after) const {
  const auto& patient = corpus_.patient(patient_id);
  json list = json::array();
  for (const auto& r : patient.reports) {
    if (before && !(r.timestamp < *before)) continue;
    if (after && !(r.timestamp > *after)) continue;
    json sentences = json::array();
    for (const auto& s : split_sentences(r.text)) sentences.push_back({{"text", s}, {"fingerprint", fingerprint(s)}});
    list.push_back({{"id", r.id},
                    {"kind", std::string(to_string(r.kind))},
                    {"timestamp", r.timestamp},
                    {"text", r.text},
                    {"sentences", sentences}});
  }
  return {{"patient_id", patient_id}, {"reports", list}};
}

json Service::rank(const json& request) const {
  std::string patient_id, selector;
  Day t = 0;
  std::size_t top_k = 20;
  json query;
  try {
    patient_id = request.at("patient_id").get<std::string>();
    t = request.at("time_point").get<Day>();
    selector = request.at("model").get<std::string>();
    query = request.at("query");
    if (request.contains("top_k")) {
      const auto k = request.at("top_k").get<long long>();
      if (k < 1) fail(ErrorKind::unprocessable, "top_k must be >= 1");
      top_k = static_cast<std::size_t>(k);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::unprocessable, std::string("rank request: ") + e.what());
  }
  const auto& patient = corpus_.patient(patient_id);
  const auto h = hierarchy();

  // Resolve the query: a hierarchy category or ad-hoc text.
  std::string category = query.is_object() ? query.value("category_id", "") : "";
  std::string text;
  if (category.empty() && query.is_object()) {
    text = query.value("custom_description", "");
    if (trim(text).empty()) text = query.value("text", "");
    if (trim(text).empty()) text = query.value("custom_text", "");
  }
  if (category.empty() && trim(text).empty()) fail(ErrorKind::unprocessable, "query needs category_id or text");
  if (!category.empty() && !h->contains(category)) fail(ErrorKind::not_found, "unknown category " + category);

  const bool baseline = std::find(std::begin(kBaselines), std::end(kBaselines), selector) != std::end(kBaselines);
  std::optional<QueryMode> mode;
  if (!baseline) {
    mode = parse_query_mode(selector == "hierarchy" ? "hierarchy_path" : selector);
    if (*mode == QueryMode::free_text) fail(ErrorKind::invalid_argument, "free_text is not a model selector");
    const bool custom = category.empty() || h->node(category).custom;
    if (*mode == QueryMode::indicator && custom)
      fail(ErrorKind::unprocessable, "the indicator model cannot answer custom queries");
  }
  const QuerySpec spec = category.empty() ? QuerySpec::free_text(text) : QuerySpec::category(mode.value_or(QueryMode::description), category);

  const auto history = sentences_before(patient, t);
  std::vector<std::string> sentences;
  sentences.reserve(history.size());
  for (const auto& s : history) sentences.push_back(s.text);

  std::vector<double> scores;
  std::optional<double> probability;
  std::size_t truncated = 0;
  if (selector == "tfidf") {
    if (!tfidf_) fail(ErrorKind::conflict, "no TF-IDF model loaded");
    scores = tfidf_scores(sentences, query_description(spec, *h), *tfidf_);
  } else if (selector == "contextual") {
    const auto enc = contextual();
    scores = contextual_scores(sentences, query_description(spec, *h), enc->params, enc->vocab);
  } else {
    const auto model = model_for(*mode);
    if (!sentences.empty()) {
      auto ranking = score_instance(*model, sentences, spec, *h);
      scores = std::move(ranking.scores);
      probability = ranking.probability;
      truncated = ranking.truncated;
    }
  }

  json results = json::array();
  if (!sentences.empty()) {
    const auto pct = percentiles(sentences, scores);
    const auto order = ranking_order(scores);
    for (std::size_t i = 0; i < order.size() && i < top_k; ++i) {
      const auto& s = history[order[i]];
      results.push_back({{"sentence", s.text},
                         {"fingerprint", fingerprint(s.text)},
                         {"report_id", s.report_id},
                         {"report_timestamp", s.report_timestamp},
                         {"position", order[i]},
                         {"score", scores[order[i]]},
                         {"percentile", pct[order[i]]}});
    }
  }
  json out = {{"patient_id", patient_id}, {"time_point", t}, {"model", selector}, {"results", results}};
  if (probability) out["probability"] = *probability;
  if (truncated) out["truncated"] = truncated;
  return out;
}

json Service::post_annotation(const json& body) {
  auto record = AnnotationRecord::from_json(body);
  const auto& patient = corpus_.patient(record.patient_id);
  bool found = false;
  for (const auto& s : sentences_before(patient, record.time_point)) {
    if (fingerprint(s.text) == record.fingerprint && (record.report_id.empty() || record.report_id == s.report_id)) {
      found = true;
      if (record.report_id.empty()) record.report_id = s.report_id;
      break;
    }
  }
  if (!found) fail(ErrorKind::unprocessable, "fingerprint does not resolve to a sentence before the time point");
  if (!record.query.is_custom() && !hierarchy()->contains(record.query.category_id))
    fail(ErrorKind::not_found, "unknown category " + record.query.category_id);
  return {{"id", store_.post(std::move(record))}};
}

json Service::list_annotations(std::optional<AnnotationRound> round) const {
  json list = json::array();
  for (const auto& r : store_.list(round)) {
    auto row = r.to_json();
    row.erase("model");  // blind review: the UI never learns which model produced a list
    list.push_back(std::move(row));
  }
  return {{"annotations", list}};
}

json Service::add_custom(const json& body) {
  std::string name, description;
  try {
    name = body.at("name").get<std::string>();
    description = body.at("description").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::unprocessable, std::string("custom category: ") + e.what());
  }
  std::lock_guard writer(custom_mutex_);
  auto next = std::make_shared<DiagnosisHierarchy>(*hierarchy());
  const auto id = next->add_custom(name, description);
  if (!options_.annotations_path.empty()) {
    std::ofstream out(custom_path(), std::ios::binary | std::ios::app);
    out << json{{"id", id}, {"name", name}, {"description", description}}.dump() << '\n';
  }
  std::lock_guard lock(mutex_);
  hierarchy_ = std::move(next);
  return {{"id", id}};
}

json Service::validated_precision(const std::string& model, std::size_t k) const {
  const auto marks = validation_marks(store_.list(AnnotationRound::validation), model);
  std::size_t reviewed = 0;
  for (const auto& m : marks) reviewed += (!m.rank || *m.rank < k) ? 1 : 0;
  return {{"model", model}, {"k", k}, {"reviewed", reviewed}, {"validated_precision", qfsum::validated_precision(marks, k)}};
}

void Service::bind(httplib::Server& server) {
  auto wrap = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(fn(req).dump(), "application/json");
      } catch (const Error& e) {
        res.status = status_for(e.kind());
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    };
  };
  auto optional_day = [](const httplib::Request& req, const char* key) -> std::optional<Day> {
    if (!req.has_param(key)) return std::nullopt;
    return parse_day(req.get_param_value(key), key);
  };

  server.Get("/health", wrap([](const httplib::Request&) { return json{{"status", "ok"}}; }));
  server.Get("/hierarchy", wrap([this](const httplib::Request&) { return hierarchy_json(); }));
  server.Get("/patients", wrap([this](const httplib::Request&) { return patients_json(); }));
  server.Get("/patients/:id/reports", wrap([this, optional_day](const httplib::Request& req) {
               return reports(req.path_params.at("id"), optional_day(req, "before"), optional_day(req, "after"));
             }));
  server.Post("/rank", wrap([this](const httplib::Request& req) { return rank(parse_body(req.body)); }));
  server.Post("/annotations", wrap([this](const httplib::Request& req) { return post_annotation(parse_body(req.body)); }));
  server.Get("/annotations", wrap([this](const httplib::Request& req) {
               std::optional<AnnotationRound> round;
               if (req.has_param("round")) round = parse_annotation_round(req.get_param_value("round"));
               return list_annotations(round);
             }));
  server.Post("/hierarchy/custom", wrap([this](const httplib::Request& req) { return add_custom(parse_body(req.body)); }));
  server.Get("/metrics/validated_precision", wrap([this](const httplib::Request& req) {
               const std::size_t k = req.has_param("k") ? std::stoul(req.get_param_value("k")) : 20;
               return validated_precision(req.has_param("model") ? req.get_param_value("model") : "", k);
             }));
  server.Post("/checkpoints", wrap([this](const httplib::Request& req) {
                const auto body = parse_body(req.body);
                auto model = load_checkpoint(body.at("path").get<std::string>());
                const std::string mode(to_string(model.query_mode));
                register_model(std::move(model));
                return json{{"registered", mode}};
              }));
}

void Service::listen(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  bind(*server_);
  spdlog::info("listening on {}:{}", host, port);
  if (!server_->listen(host, port)) fail(ErrorKind::invalid_argument, "cannot listen on " + host + ":" + std::to_string(port));
}

int Service::start_background(const std::string& host) {
  server_ = std::make_unique<httplib::Server>();
  bind(*server_);
  const int port = server_->bind_to_any_port(host);
  if (port < 0) fail(ErrorKind::invalid_argument, "cannot bind " + host);
  thread_ = std::make_unique<std::thread>([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_ && thread_->joinable()) thread_->join();
  thread_.reset();
}

}  // namespace qfsum
