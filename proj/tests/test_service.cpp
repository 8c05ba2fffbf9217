#include <doctest.h>

#include "qfsum/service.hpp"
#include "qfsum/training.hpp"
#include "support.hpp"

// After the Eigen headers: <resolv.h> defines a `_res` macro.
#include <httplib.h>

using namespace qfsum;
using namespace qfsum::testing;

namespace {

Corpus service_corpus() {
  Corpus c;
  auto& p = c.patients["p1"];
  p.id = "p1";
  p.reports = {{"r1", "p1", ReportKind::visit, 1, "Acute infarct in the left hemisphere."},
               {"r2", "p1", ReportKind::progress, 5, "Patient is stable. No bleeding seen."},
               {"r3", "p1", ReportKind::radiology, 10, "Enhancing mass in the left lobe."},
               {"r4", "p1", ReportKind::radiology, 20, "Future finding."}};
  auto& q = c.patients["p2"];
  q.id = "p2";
  q.reports = {{"s1", "p2", ReportKind::visit, 3, "Chest pain resolved."}};
  return c;
}

TrainedModel service_model(QueryMode mode, const DiagnosisHierarchy& h) {
  std::vector<TrainingInstance> instances = {
      make_instance("p1", 20, {"Acute infarct in the left hemisphere.", "Patient is stable.", "No bleeding seen.",
                               "Enhancing mass in the left lobe.", "Chest pain resolved.", "headache"},
                    {"stroke"}, {1})};
  return initialize_model(instances, h, tiny_config(0, 0), mode, 12);
}

struct ServiceFixture {
  std::filesystem::path dir;
  DiagnosisHierarchy hierarchy = seven_node_tree();

  explicit ServiceFixture(const std::string& name) : dir(scratch_dir(name)) {}

  std::unique_ptr<Service> make(bool with_models = true) {
    Service::Options opts;
    opts.annotations_path = dir / "annotations.jsonl";
    opts.clock = [] { return std::int64_t{1700000000}; };
    std::vector<std::string> docs = {"Acute infarct in the left hemisphere.", "Patient is stable.",
                                     "Enhancing mass in the left lobe.", "Chest pain resolved."};
    for (const auto& n : hierarchy.nodes()) docs.push_back(n.description);
    auto s = std::make_unique<Service>(service_corpus(), hierarchy, TfidfModel::fit(docs), opts);
    if (with_models) {
      s->register_model(service_model(QueryMode::description, hierarchy));
      s->register_model(service_model(QueryMode::indicator, hierarchy));
    }
    return s;
  }
};

json post(httplib::Client& client, const std::string& path, const json& body, int* status) {
  auto res = client.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  *status = res->status;
  return json::parse(res->body);
}

json get(httplib::Client& client, const std::string& path, int* status = nullptr) {
  auto res = client.Get(path);
  REQUIRE(res);
  if (status) *status = res->status;
  return json::parse(res->body);
}

json rank_request(const std::string& model, json query, Day t = 5, std::string patient = "p1") {
  return {{"patient_id", patient}, {"time_point", t}, {"model", model}, {"query", std::move(query)}, {"top_k", 10}};
}

json mark(const std::string& fp, bool relevant, AnnotationRound round, std::optional<std::size_t> rank = {},
          const std::string& annotator = "ann1") {
  json doc = {{"annotator", annotator}, {"patient_id", "p1"},   {"time_point", 20},
              {"query", {{"category_id", "stroke"}}},           {"fingerprint", fp},
              {"relevant", relevant},   {"round", std::string(to_string(round))}};
  if (rank) doc["rank"] = *rank;
  return doc;
}

}  // namespace

TEST_CASE("service: browsing endpoints") {
  ServiceFixture f("svc-browse");
  auto service = f.make();
  httplib::Client client("127.0.0.1", service->start_background());

  int status = 0;
  const auto h = get(client, "/hierarchy", &status);
  CHECK(status == 200);
  CHECK(h["nodes"].size() == 7);
  CHECK(h["max_depth"] == 3);
  CHECK(get(client, "/patients")["patients"].size() == 2);

  const auto before = get(client, "/patients/p1/reports?before=10");
  REQUIRE(before["reports"].size() == 2);
  CHECK(before["reports"][1]["sentences"].size() == 2);
  CHECK(get(client, "/patients/p1/reports?after=10")["reports"].size() == 1);
  get(client, "/patients/nobody/reports", &status);
  CHECK(status == 404);
  get(client, "/patients/p1/reports?before=abc", &status);
  CHECK(status == 400);
  service->stop();
}

TEST_CASE("service: /rank contract") {
  ServiceFixture f("svc-rank");
  auto service = f.make();
  httplib::Client client("127.0.0.1", service->start_background());
  int status = 0;

  // One-sentence history: that sentence with attention 1.
  auto one = post(client, "/rank", rank_request("description", {{"category_id", "stroke"}}, 3), &status);
  CHECK(status == 200);
  REQUIRE(one["results"].size() == 1);
  CHECK(one["results"][0]["sentence"] == "Acute infarct in the left hemisphere.");
  CHECK(one["results"][0]["score"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(one["results"][0]["percentile"] == 0.0);
  CHECK(one.contains("probability"));

  // Sorted by score, no future sentences.
  const auto three = post(client, "/rank", rank_request("description", {{"category_id", "glioma"}}, 15), &status);
  REQUIRE(three["results"].size() == 4);
  for (std::size_t i = 1; i < 4; ++i)
    CHECK(three["results"][i - 1]["score"].get<double>() >= three["results"][i]["score"].get<double>());
  for (const auto& r : three["results"]) CHECK(r["report_timestamp"].get<Day>() < 15);

  // Free text against TF-IDF: cosine scores, no probability.
  const auto lexical = post(client, "/rank", rank_request("tfidf", {{"text", "left hemisphere infarct"}}, 15), &status);
  CHECK(status == 200);
  CHECK(!lexical.contains("probability"));
  CHECK(lexical["results"][0]["sentence"] == "Acute infarct in the left hemisphere.");
  CHECK(lexical["results"][0]["score"].get<double>() > 0.5);
  CHECK(lexical["results"][2]["score"] == 0.0);

  post(client, "/rank", rank_request("contextual", {{"category_id", "stroke"}}), &status);
  CHECK(status == 200);

  post(client, "/rank", rank_request("indicator", {{"text", "headache"}}), &status);
  CHECK(status == 422);
  post(client, "/rank", rank_request("description", {{"category_id", "nope"}}), &status);
  CHECK(status == 404);
  post(client, "/rank", rank_request("description", {{"category_id", "stroke"}}, 5, "nobody"), &status);
  CHECK(status == 404);
  post(client, "/rank", rank_request("hierarchy", {{"category_id", "stroke"}}), &status);
  CHECK(status == 409);
  auto bad_k = rank_request("description", {{"category_id", "stroke"}});
  bad_k["top_k"] = 0;
  post(client, "/rank", bad_k, &status);
  CHECK(status == 422);
  post(client, "/rank", json{{"patient_id", "p1"}}, &status);
  CHECK(status == 422);
  service->stop();
}

TEST_CASE("service: missing model and read-only rank") {
  ServiceFixture f("svc-nomodel");
  auto service = f.make(false);
  CHECK_THROWS_AS(service->rank(rank_request("description", {{"category_id", "stroke"}})), Error);
  try {
    service->rank(rank_request("contextual", {{"category_id", "stroke"}}));
  } catch (const Error& e) {
    CHECK(Service::status_for(e.kind()) == 409);
  }

  auto loaded = f.make();
  const auto before = loaded->hierarchy_json().dump();
  const auto a = loaded->rank(rank_request("description", {{"category_id", "bleed"}}, 8));
  const auto b = loaded->rank(rank_request("description", {{"category_id", "bleed"}}, 8));
  CHECK(a == b);
  CHECK(loaded->hierarchy_json().dump() == before);
}

TEST_CASE("service: annotations persist and are idempotent") {
  ServiceFixture f("svc-annotations");
  {
    auto service = f.make();
    httplib::Client client("127.0.0.1", service->start_background());
    int status = 0;
    const auto id1 = post(client, "/annotations", mark("Patient is stable.", false, AnnotationRound::reference), &status);
    CHECK(status == 200);
    const auto id2 = post(client, "/annotations", mark("patient  is STABLE.", true, AnnotationRound::reference), &status);
    CHECK(id1 == id2);
    post(client, "/annotations", mark("No bleeding seen.", true, AnnotationRound::validation, 0), &status);
    post(client, "/annotations", mark("Enhancing mass in the left lobe.", false, AnnotationRound::validation, 1), &status);
    CHECK(status == 200);

    post(client, "/annotations", mark("Future finding.", true, AnnotationRound::reference), &status);
    CHECK(status == 422);
    auto custom_without_description = mark("Patient is stable.", true, AnnotationRound::reference);
    custom_without_description["query"] = {{"custom_text", "headache"}};
    post(client, "/annotations", custom_without_description, &status);
    CHECK(status == 422);

    const auto all = get(client, "/annotations");
    REQUIRE(all["annotations"].size() == 3);
    CHECK(all["annotations"][0]["relevant"] == true);
    CHECK(all["annotations"][0]["report_id"] == "r2");
    CHECK(all["annotations"][0]["created_at"] == 1700000000);
    CHECK(get(client, "/annotations?round=validation")["annotations"].size() == 2);
    CHECK(get(client, "/annotations?round=reference")["annotations"].size() == 1);
    get(client, "/annotations?round=bogus", &status);
    CHECK(status == 422);
    service->stop();
  }
  auto again = f.make();
  CHECK(again->list_annotations(std::nullopt)["annotations"].size() == 3);
  httplib::Client client("127.0.0.1", again->start_background());
  const auto listed = get(client, "/annotations");
  CHECK(listed["annotations"][0]["fingerprint"] == "patient is stable.");
  again->stop();
}

TEST_CASE("service: validated precision matches the metrics module") {
  ServiceFixture f("svc-validated");
  auto service = f.make();
  const std::vector<std::string> sentences = {"Acute infarct in the left hemisphere.", "Patient is stable.",
                                              "No bleeding seen.", "Enhancing mass in the left lobe."};
  std::vector<ValidationMark> expected;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const bool relevant = i % 2 == 0;
    auto doc = mark(sentences[i], relevant, AnnotationRound::validation, i);
    doc["model"] = "description";
    service->post_annotation(doc);
    expected.push_back({relevant, i});
  }
  auto other = mark(sentences[1], true, AnnotationRound::validation, 0, "ann2");
  other["model"] = "tfidf";
  service->post_annotation(other);

  httplib::Client client("127.0.0.1", service->start_background());
  const auto res = get(client, "/metrics/validated_precision?model=description&k=20");
  CHECK(res["validated_precision"].get<double>() == validated_precision(expected, 20));
  CHECK(res["reviewed"] == 4);
  auto all_marks = expected;
  all_marks.push_back({true, 0});
  CHECK(get(client, "/metrics/validated_precision")["validated_precision"].get<double>() ==
        validated_precision(all_marks, 20));
  // The listing is blind to model identity.
  const auto listing = get(client, "/annotations");
  REQUIRE(listing["annotations"].size() == 5);
  for (const auto& r : listing["annotations"]) CHECK(!r.contains("model"));
  service->stop();
}

TEST_CASE("service: custom categories") {
  ServiceFixture f("svc-custom");
  {
    auto service = f.make();
    httplib::Client client("127.0.0.1", service->start_background());
    int status = 0;
    const auto created = post(client, "/hierarchy/custom", {{"name", "Headache"}, {"description", "left hemisphere headache"}}, &status);
    CHECK(status == 200);
    const auto id = created["id"].get<std::string>();
    post(client, "/hierarchy/custom", {{"name", "Headache"}, {"description", "again"}}, &status);
    CHECK(status == 409);
    post(client, "/hierarchy/custom", {{"name", "Empty"}}, &status);
    CHECK(status == 422);

    bool listed = false;
    const auto tree = get(client, "/hierarchy");
    for (const auto& n : tree["nodes"]) listed |= n["id"] == id && n["custom"] == true;
    CHECK(listed);

    // A custom category ranks exactly like its description as free text.
    for (const std::string model : {"description", "tfidf", "contextual"}) {
      const auto by_id = post(client, "/rank", rank_request(model, {{"category_id", id}}, 15), &status);
      CHECK(status == 200);
      const auto by_text = post(client, "/rank", rank_request(model, {{"text", "left hemisphere headache"}}, 15), &status);
      CHECK(by_id["results"] == by_text["results"]);
    }
    post(client, "/rank", rank_request("indicator", {{"category_id", id}}), &status);
    CHECK(status == 422);

    auto m = mark("Patient is stable.", true, AnnotationRound::reference);
    m["query"] = {{"category_id", id}};
    post(client, "/annotations", m, &status);
    CHECK(status == 200);
    service->stop();
  }
  // Restart: the category is replayed before stored annotations are served.
  auto again = f.make();
  CHECK(again->hierarchy_json()["nodes"].size() == 8);
  CHECK(again->list_annotations(std::nullopt)["annotations"].size() == 1);
}

TEST_CASE("service: in-memory mode writes nothing") {
  Service::Options opts;
  opts.annotations_path.clear();
  Service service(service_corpus(), seven_node_tree(), std::nullopt, opts);
  service.register_model(service_model(QueryMode::description, seven_node_tree()));
  service.add_custom({{"name", "Vision"}, {"description", "blurry vision"}});
  service.post_annotation(mark("Patient is stable.", true, AnnotationRound::reference));
  CHECK(service.list_annotations(std::nullopt)["annotations"].size() == 1);
  CHECK_THROWS_AS(service.rank(rank_request("tfidf", {{"category_id", "stroke"}})), Error);
}
