#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "qfsum/extraction.hpp"
#include "qfsum/hierarchy.hpp"
#include "qfsum/model.hpp"
#include "qfsum/scoring.hpp"

namespace qfsum {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 5;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  double downsample_p = 0.01;
  bool resample = true;          // negative resampling on/off
  bool weight_negatives = true;  // w_b = neg/pos on/off
  double probability_clamp = 1e-7;
  double max_grad_norm = 1.0;    // <= 0 disables clipping
  QueryMode query_mode = QueryMode::description;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& doc);
};

struct CategoryCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  friend bool operator==(const CategoryCounts&, const CategoryCounts&) = default;
};

struct CategoryStats {
  std::map<std::string, CategoryCounts> counts;

  CategoryCounts at(const std::string& category) const;
  std::size_t total_positive() const;
  json to_json() const;
  static CategoryStats from_json(const json& doc);
};

CategoryStats compute_category_stats(const std::vector<TrainingInstance>& instances);

/// Negatively labelled queries of an instance, in query order.
std::vector<std::string> original_negatives(const TrainingInstance& instance);

/// Target distribution over `original_negatives(instance)`:
/// (pos_c / sum pos) * (1 / neg_c), normalised; zero when pos_c or neg_c is 0.
/// All-zero when no category has positive weight.
std::vector<double> resampling_distribution(const TrainingInstance& instance, const CategoryStats& stats);

/// n ~ Binomial(#negatives, p) categories drawn with replacement from the
/// target distribution.
std::vector<std::string> resample_negatives(const TrainingInstance& instance, const CategoryStats& stats, double p,
                                            std::mt19937_64& rng);

/// Positives kept in order, negatives replaced by a fresh resample.
TrainingInstance rebalance(const TrainingInstance& instance, const CategoryStats& stats, double p,
                           std::mt19937_64& rng);

/// neg / pos, or 1 when there are no positives.
double negative_weight(std::size_t positives, std::size_t negatives);

/// How query categories map to embeddings during training.
struct QueryContext {
  QueryMode mode = QueryMode::description;
  const DiagnosisHierarchy* hierarchy = nullptr;
  std::map<std::string, std::size_t> indicator_rows;
  std::size_t row(const std::string& category) const;
};

QueryContext make_query_context(const TrainedModel& model, const DiagnosisHierarchy& hierarchy);

struct LossOptions {
  bool weight_negatives = true;
  double probability_clamp = 1e-7;
};

struct BatchInfo {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double negative_weight = 1.0;
};

/// Weighted BCE averaged over each instance's queries, then over instances.
/// When `grads` is non-null the analytic gradient is accumulated into it.
template <class S>
double batch_loss(const std::vector<const TrainingInstance*>& batch, const ModelParameters<S>& params,
                  const Vocabulary& vocab, const QueryContext& queries, const LossOptions& options,
                  ModelParameters<S>* grads = nullptr, BatchInfo* info = nullptr);

template <class S>
struct AdamState {
  ModelParameters<S> m, v;
  std::size_t steps = 0;
  explicit AdamState(const EncoderConfig& config)
      : m(ModelParameters<S>::zeros(config)), v(ModelParameters<S>::zeros(config)) {}
};

template <class S>
void adam_step(ModelParameters<S>& params, const ModelParameters<S>& grads, AdamState<S>& state,
               const TrainConfig& config);

/// Scales `grads` so that its global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
template <class S>
double clip_gradients(ModelParameters<S>& grads, double max_norm);

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0;
  double negative_weight = 1;
  std::size_t sampled_negatives = 0;
};

std::string format_loss_log(const std::vector<LossRecord>& log);

/// Vocabulary from training sentences plus every category description, and
/// seeded parameters sized for it.
TrainedModel initialize_model(const std::vector<TrainingInstance>& train_instances,
                              const DiagnosisHierarchy& hierarchy, EncoderConfig config, QueryMode mode,
                              std::uint64_t seed);

struct TrainResult {
  TrainedModel model;
  std::vector<LossRecord> log;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, const TrainedModel& model)>;

/// Deterministic given config.seed. Aborts with a numeric error on a
/// non-finite loss or gradient.
TrainResult train(const std::vector<TrainingInstance>& instances, const DiagnosisHierarchy& hierarchy,
                  TrainedModel initial, const TrainConfig& config, const CategoryStats& stats,
                  const EpochCallback& on_epoch = {});

struct GradientCheckResult {
  double max_relative_error = 0;
  std::string worst_tensor;
  std::map<std::string, double> per_tensor;
};

/// Central differences for every entry of every tensor, compared with the
/// analytic gradient. `mutate` may alter the analytic gradient before the
/// comparison (mutation testing).
GradientCheckResult gradient_check(const ModelParameters<double>& params,
                                   const std::vector<const TrainingInstance*>& batch, const Vocabulary& vocab,
                                   const QueryContext& queries, const LossOptions& options, double epsilon = 1e-4,
                                   const std::function<void(ModelParameters<double>&)>& mutate = {});

}  // namespace qfsum
