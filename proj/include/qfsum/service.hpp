#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "qfsum/annotations.hpp"
#include "qfsum/corpus.hpp"
#include "qfsum/hierarchy.hpp"
#include "qfsum/scoring.hpp"

namespace httplib {
class Server;
}

namespace qfsum {

/// HTTP facade over the corpus, hierarchy, loaded checkpoints and the
/// annotation store. Every handler is also callable directly; failures are
/// qfsum::Error whose kind maps onto the HTTP status.
class Service {
 public:
  struct Options {
    std::filesystem::path annotations_path = "annotations.jsonl";  // empty: keep everything in memory
    std::uint64_t contextual_seed = 0;
    AnnotationStore::Clock clock;
  };

  Service(Corpus corpus, DiagnosisHierarchy hierarchy, std::optional<TfidfModel> tfidf, Options options);
  ~Service();

  /// Registers (or hot-swaps) a checkpoint under its query mode.
  void register_model(TrainedModel model);
  /// Encoder used by the contextual baseline. Defaults to a freshly seeded
  /// encoder over the vocabulary of the first registered checkpoint.
  void set_contextual_encoder(TrainedModel model);

  json hierarchy_json() const;
  json patients_json() const;
  json reports(const std::string& patient_id, std::optional<Day> before, std::optional<Day> after) const;
  json rank(const json& request) const;
  json post_annotation(const json& body);
  json list_annotations(std::optional<AnnotationRound> round) const;
  json add_custom(const json& body);
  json validated_precision(const std::string& model, std::size_t k) const;

  /// Installs every route on `server`.
  void bind(httplib::Server& server);
  /// Blocks serving on host:port until stop().
  void listen(const std::string& host, int port);
  /// Binds to an ephemeral port and serves on a background thread; returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

  static int status_for(ErrorKind kind);

 private:
  std::shared_ptr<const DiagnosisHierarchy> hierarchy() const;
  std::shared_ptr<const TrainedModel> model_for(QueryMode mode) const;
  std::shared_ptr<const TrainedModel> contextual() const;
  std::filesystem::path custom_path() const;

  Corpus corpus_;
  std::optional<TfidfModel> tfidf_;
  Options options_;
  AnnotationStore store_;

  mutable std::mutex mutex_;  // guards the shared pointers below
  std::shared_ptr<const DiagnosisHierarchy> hierarchy_;
  std::map<QueryMode, std::shared_ptr<const TrainedModel>> models_;
  mutable std::shared_ptr<const TrainedModel> contextual_;
  std::mutex custom_mutex_;  // serialises hierarchy extensions

  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<std::thread> thread_;
};

}  // namespace qfsum
