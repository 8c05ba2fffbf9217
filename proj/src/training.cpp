#include "qfsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

namespace qfsum {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) fail(ErrorKind::invalid_argument, "learning_rate must be > 0");
  if (!(downsample_p > 0 && downsample_p <= 1)) fail(ErrorKind::invalid_argument, "downsample_p must be in (0, 1]");
  if (batch_size == 0) fail(ErrorKind::invalid_argument, "batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_epsilon > 0))
    fail(ErrorKind::invalid_argument, "invalid Adam hyperparameters");
  if (!(probability_clamp >= 0 && probability_clamp < 0.5))
    fail(ErrorKind::invalid_argument, "probability_clamp must be in [0, 0.5)");
  if (query_mode == QueryMode::free_text) fail(ErrorKind::invalid_argument, "cannot train with free-text queries");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},   {"beta1", beta1},
          {"beta2", beta2},                   {"adam_epsilon", adam_epsilon},
          {"epochs", epochs},                 {"batch_size", batch_size},
          {"seed", seed},                     {"downsample_p", downsample_p},
          {"resample", resample},             {"weight_negatives", weight_negatives},
          {"probability_clamp", probability_clamp}, {"max_grad_norm", max_grad_norm},
          {"query_mode", std::string(to_string(query_mode))}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = doc.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("learning_rate", c.learning_rate);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_epsilon", c.adam_epsilon);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("seed", c.seed);
  get("downsample_p", c.downsample_p);
  get("resample", c.resample);
  get("weight_negatives", c.weight_negatives);
  get("probability_clamp", c.probability_clamp);
  get("max_grad_norm", c.max_grad_norm);
  if (doc.contains("query_mode")) c.query_mode = parse_query_mode(doc.at("query_mode").get<std::string>());
  return c;
}

// ---------------------------------------------------------------------------

CategoryCounts CategoryStats::at(const std::string& category) const {
  const auto it = counts.find(category);
  return it == counts.end() ? CategoryCounts{} : it->second;
}

std::size_t CategoryStats::total_positive() const {
  std::size_t n = 0;
  for (const auto& [_, c] : counts) n += c.positive;
  return n;
}

json CategoryStats::to_json() const {
  json out = json::object();
  for (const auto& [id, c] : counts) out[id] = {{"positive", c.positive}, {"negative", c.negative}};
  return out;
}

CategoryStats CategoryStats::from_json(const json& doc) {
  CategoryStats s;
  for (const auto& [id, c] : doc.items())
    s.counts[id] = {c.at("positive").get<std::size_t>(), c.at("negative").get<std::size_t>()};
  return s;
}

CategoryStats compute_category_stats(const std::vector<TrainingInstance>& instances) {
  CategoryStats s;
  for (const auto& inst : instances)
    for (std::size_t j = 0; j < inst.queries.size(); ++j) {
      auto& c = s.counts[inst.queries[j]];
      (inst.labels[j] ? c.positive : c.negative) += 1;
    }
  return s;
}

std::vector<std::string> original_negatives(const TrainingInstance& instance) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < instance.queries.size(); ++j)
    if (!instance.labels[j]) out.push_back(instance.queries[j]);
  return out;
}

std::vector<double> resampling_distribution(const TrainingInstance& instance, const CategoryStats& stats) {
  const auto negatives = original_negatives(instance);
  const double total_pos = static_cast<double>(stats.total_positive());
  std::vector<double> w(negatives.size(), 0.0);
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    const auto c = stats.at(negatives[i]);
    if (c.positive == 0 || c.negative == 0) continue;
    w[i] = (static_cast<double>(c.positive) / total_pos) / static_cast<double>(c.negative);
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (sum > 0)
    for (auto& x : w) x /= sum;
  return w;
}

std::vector<std::string> resample_negatives(const TrainingInstance& instance, const CategoryStats& stats, double p,
                                            std::mt19937_64& rng) {
  const auto negatives = original_negatives(instance);
  if (negatives.empty()) return {};
  std::binomial_distribution<std::size_t> binom(negatives.size(), p);
  const std::size_t n = binom(rng);
  const auto weights = resampling_distribution(instance, stats);
  if (n == 0 || std::all_of(weights.begin(), weights.end(), [](double x) { return x == 0.0; })) return {};
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(negatives[pick(rng)]);
  return out;
}

TrainingInstance rebalance(const TrainingInstance& instance, const CategoryStats& stats, double p,
                           std::mt19937_64& rng) {
  TrainingInstance out;
  out.patient_id = instance.patient_id;
  out.t = instance.t;
  out.sentences = instance.sentences;
  for (std::size_t j = 0; j < instance.queries.size(); ++j)
    if (instance.labels[j]) {
      out.queries.push_back(instance.queries[j]);
      out.labels.push_back(1);
    }
  for (auto& c : resample_negatives(instance, stats, p, rng)) {
    out.queries.push_back(std::move(c));
    out.labels.push_back(0);
  }
  return out;
}

double negative_weight(std::size_t positives, std::size_t negatives) {
  if (positives == 0) return 1.0;
  return static_cast<double>(negatives) / static_cast<double>(positives);
}

std::size_t QueryContext::row(const std::string& category) const {
  const auto it = indicator_rows.find(category);
  if (it == indicator_rows.end()) fail(ErrorKind::not_found, "category not in the indicator table: " + category);
  return it->second;
}

QueryContext make_query_context(const TrainedModel& model, const DiagnosisHierarchy& hierarchy) {
  QueryContext ctx;
  ctx.mode = model.query_mode;
  ctx.hierarchy = &hierarchy;
  for (std::size_t i = 0; i < model.categories.size(); ++i) ctx.indicator_rows[model.categories[i]] = i;
  return ctx;
}

// ---------------------------------------------------------------------------
// Loss and gradient
// ---------------------------------------------------------------------------

template <class S>
double batch_loss(const std::vector<const TrainingInstance*>& batch, const ModelParameters<S>& params,
                  const Vocabulary& vocab, const QueryContext& queries, const LossOptions& options,
                  ModelParameters<S>* grads, BatchInfo* info) {
  const auto& cfg = params.config;
  BatchInfo counts;
  std::size_t active = 0;
  for (const auto* inst : batch) {
    if (!inst->queries.empty() && !inst->sentences.empty()) ++active;
    for (auto y : inst->labels) (y ? counts.positives : counts.negatives) += 1;
  }
  if (counts.positives + counts.negatives == 0 || active == 0)
    fail(ErrorKind::invalid_argument, "batch has no queries");
  counts.negative_weight = options.weight_negatives ? negative_weight(counts.positives, counts.negatives) : 1.0;
  if (info) *info = counts;

  // Pack every distinct sentence and query sequence once.
  PackedSequences packed;
  std::map<std::vector<int>, std::size_t> slots;
  auto slot_of = [&](std::vector<int> seq) {
    auto [it, inserted] = slots.emplace(std::move(seq), slots.size());
    if (inserted) packed.add(it->first);
    return it->second;
  };
  std::vector<std::vector<std::size_t>> sentence_slots(batch.size());
  std::vector<std::vector<std::size_t>> query_slots(batch.size());
  const bool text_queries = queries.mode != QueryMode::indicator;
  std::map<std::string, std::size_t> query_cache;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& sents = batch[b]->sentences;
    const std::size_t keep = std::min(sents.size(), cfg.max_sentences_per_instance);
    for (std::size_t i = sents.size() - keep; i < sents.size(); ++i)
      sentence_slots[b].push_back(slot_of(sentence_sequence(sents[i].text, vocab, cfg)));
    for (const auto& q : batch[b]->queries) {
      if (!text_queries) {
        query_slots[b].push_back(queries.row(q));
        continue;
      }
      auto it = query_cache.find(q);
      if (it == query_cache.end()) {
        const auto seq = query_sequence(QuerySpec::category(queries.mode, q), *queries.hierarchy, vocab, cfg);
        it = query_cache.emplace(q, slot_of(seq)).first;
      }
      query_slots[b].push_back(it->second);
    }
  }

  EncoderCache<S> cache;
  const Matrix<S> encoded = encoder_forward(params, packed, grads ? &cache : nullptr);
  const Matrix<S> cls = first_rows(encoded, packed);
  const Matrix<S> B = project(params, cls);
  Matrix<S> dB;
  if (grads) dB.setZero(B.rows(), B.cols());

  const S lo = static_cast<S>(options.probability_clamp);
  const S hi = S(1) - lo;
  const auto h = static_cast<Eigen::Index>(cfg.d_hidden);
  double total = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& inst = *batch[b];
    if (inst.queries.empty() || sentence_slots[b].empty()) continue;
    const auto m = static_cast<Eigen::Index>(sentence_slots[b].size());
    Matrix<S> Sb(m, h);
    for (Eigen::Index i = 0; i < m; ++i) Sb.row(i) = B.row(static_cast<Eigen::Index>(sentence_slots[b][i]));
    Matrix<S> dSb;
    if (grads) dSb.setZero(m, h);
    const double nq = static_cast<double>(inst.queries.size());
    double inst_loss = 0;
    for (std::size_t j = 0; j < inst.queries.size(); ++j) {
      const auto slot = static_cast<Eigen::Index>(query_slots[b][j]);
      const RowVector<S> e = text_queries ? RowVector<S>(B.row(slot)) : RowVector<S>(params.indicator.row(slot));
      const auto st = head_forward(params, Sb, e);
      const bool y = inst.labels[j] != 0;
      const double weight = y ? 1.0 : counts.negative_weight;
      const S p = st.probability;
      const S pc = std::clamp(p, lo, hi);
      inst_loss += -weight * static_cast<double>(y ? std::log(pc) : std::log(S(1) - pc));
      if (!grads) continue;
      const bool clamped = p < lo || p > hi;
      const double scale = weight / (nq * static_cast<double>(active));
      const S d_logit = clamped ? S(0) : static_cast<S>(scale) * (p - (y ? S(1) : S(0)));
      if (d_logit == S(0)) continue;
      RowVector<S> de = RowVector<S>::Zero(h);
      head_backward(params, Sb, e, st, d_logit, *grads, dSb, de);
      if (text_queries)
        dB.row(slot) += de;
      else
        grads->indicator.row(slot) += de;
    }
    total += inst_loss / nq;
    if (grads)
      for (Eigen::Index i = 0; i < m; ++i) dB.row(static_cast<Eigen::Index>(sentence_slots[b][i])) += dSb.row(i);
  }
  total /= static_cast<double>(active);

  if (grads) {
    grads->proj_w.noalias() += cls.transpose() * dB;
    grads->proj_b.row(0) += dB.colwise().sum();
    const Matrix<S> d_cls = dB * params.proj_w.transpose();
    Matrix<S> d_out = Matrix<S>::Zero(encoded.rows(), encoded.cols());
    for (std::size_t s = 0; s < packed.count(); ++s)
      d_out.row(static_cast<Eigen::Index>(packed.offsets[s])) = d_cls.row(static_cast<Eigen::Index>(s));
    encoder_backward(params, packed, cache, d_out, *grads);
  }
  return total;
}

template double batch_loss<float>(const std::vector<const TrainingInstance*>&, const ModelParameters<float>&,
                                  const Vocabulary&, const QueryContext&, const LossOptions&,
                                  ModelParameters<float>*, BatchInfo*);
template double batch_loss<double>(const std::vector<const TrainingInstance*>&, const ModelParameters<double>&,
                                   const Vocabulary&, const QueryContext&, const LossOptions&,
                                   ModelParameters<double>*, BatchInfo*);

// ---------------------------------------------------------------------------
// Optimiser
// ---------------------------------------------------------------------------

template <class S>
void adam_step(ModelParameters<S>& params, const ModelParameters<S>& grads, AdamState<S>& state,
               const TrainConfig& config) {
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const S b1 = static_cast<S>(config.beta1), b2 = static_cast<S>(config.beta2);
  const S c1 = static_cast<S>(1.0 - std::pow(config.beta1, t));
  const S c2 = static_cast<S>(1.0 - std::pow(config.beta2, t));
  const S lr = static_cast<S>(config.learning_rate);
  const S eps = static_cast<S>(config.adam_epsilon);

  std::vector<Matrix<S>*> p, m, v;
  std::vector<const Matrix<S>*> g;
  params.for_each([&](const std::string&, Matrix<S>& x) { p.push_back(&x); });
  state.m.for_each([&](const std::string&, Matrix<S>& x) { m.push_back(&x); });
  state.v.for_each([&](const std::string&, Matrix<S>& x) { v.push_back(&x); });
  grads.for_each([&](const std::string&, const Matrix<S>& x) { g.push_back(&x); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = b1 * m[i]->array() + (S(1) - b1) * g[i]->array();
    v[i]->array() = b2 * v[i]->array() + (S(1) - b2) * g[i]->array().square();
    p[i]->array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps);
  }
}

template <class S>
double clip_gradients(ModelParameters<S>& grads, double max_norm) {
  double sq = 0;
  grads.for_each([&](const std::string&, const Matrix<S>& x) { sq += static_cast<double>(x.squaredNorm()); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    grads.for_each([&](const std::string&, Matrix<S>& x) { x *= scale; });
  }
  return norm;
}

template void adam_step<float>(ModelParameters<float>&, const ModelParameters<float>&, AdamState<float>&,
                               const TrainConfig&);
template void adam_step<double>(ModelParameters<double>&, const ModelParameters<double>&, AdamState<double>&,
                                const TrainConfig&);
template double clip_gradients<float>(ModelParameters<float>&, double);
template double clip_gradients<double>(ModelParameters<double>&, double);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

std::string format_loss_log(const std::vector<LossRecord>& log) {
  std::ostringstream out;
  out << "epoch\tstep\tloss\tw_b\tn_sampled_negatives\n";
  for (const auto& r : log)
    out << r.epoch << '\t' << r.step << '\t' << format_float(r.loss) << '\t' << format_float(r.negative_weight)
        << '\t' << r.sampled_negatives << '\n';
  return out.str();
}

TrainedModel initialize_model(const std::vector<TrainingInstance>& train_instances,
                              const DiagnosisHierarchy& hierarchy, EncoderConfig config, QueryMode mode,
                              std::uint64_t seed) {
  std::vector<std::string> texts;
  for (const auto& inst : train_instances)
    for (const auto& s : inst.sentences) texts.push_back(s.text);
  for (const auto& node : hierarchy.nodes())
    if (!node.custom) texts.push_back(node.description);
  TrainedModel model;
  model.vocab = Vocabulary::build(texts);
  model.query_mode = mode;
  for (const auto& node : hierarchy.nodes())
    if (!node.custom) model.categories.push_back(node.id);
  config.vocab_size = model.vocab.size();
  config.num_categories = model.categories.size();
  model.params = ModelParameters<float>::initialized(config, seed);
  return model;
}

TrainResult train(const std::vector<TrainingInstance>& instances, const DiagnosisHierarchy& hierarchy,
                  TrainedModel initial, const TrainConfig& config, const CategoryStats& stats,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (instances.empty()) fail(ErrorKind::invalid_argument, "no training instances");
  TrainResult result;
  result.model = std::move(initial);
  result.model.query_mode = config.query_mode;
  auto& params = result.model.params;
  const auto ctx = make_query_context(result.model, hierarchy);
  const LossOptions options{config.weight_negatives, config.probability_clamp};

  std::mt19937_64 rng(config.seed);
  AdamState<float> adam(params.config);
  auto grads = ModelParameters<float>::zeros(params.config);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<TrainingInstance> epoch_data;
    epoch_data.reserve(order.size());
    for (auto i : order)
      epoch_data.push_back(config.resample ? rebalance(instances[i], stats, config.downsample_p, rng) : instances[i]);

    double epoch_sum = 0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < epoch_data.size(); start += config.batch_size) {
      const std::size_t end = std::min(epoch_data.size(), start + config.batch_size);
      std::vector<const TrainingInstance*> batch;
      std::size_t sampled = 0;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&epoch_data[i]);
        for (auto y : epoch_data[i].labels) sampled += y ? 0 : 1;
      }
      grads.set_zero();
      BatchInfo info;
      const double loss = batch_loss(batch, params, result.model.vocab, ctx, options, &grads, &info);
      const double norm = clip_gradients(grads, config.max_grad_norm);
      if (!std::isfinite(loss) || !std::isfinite(norm)) {
        fail(ErrorKind::numeric, "non-finite " + std::string(std::isfinite(loss) ? "gradient" : "loss") +
                                     " at epoch " + std::to_string(epoch) + " step " + std::to_string(step + 1) +
                                     " (first instance " + batch.front()->key() + ", w_b " +
                                     format_float(info.negative_weight) + ")");
      }
      adam_step(params, grads, adam, config);
      ++step;
      result.log.push_back({epoch, step, loss, info.negative_weight, sampled});
      epoch_sum += loss;
      ++epoch_batches;
    }
    const double mean = epoch_sum / static_cast<double>(std::max<std::size_t>(1, epoch_batches));
    result.epoch_loss.push_back(mean);
    spdlog::info("epoch {}: mean loss {:.5f} over {} steps", epoch, mean, epoch_batches);
    if (on_epoch) on_epoch(epoch, result.model);
  }
  return result;
}

// ---------------------------------------------------------------------------

GradientCheckResult gradient_check(const ModelParameters<double>& params,
                                   const std::vector<const TrainingInstance*>& batch, const Vocabulary& vocab,
                                   const QueryContext& queries, const LossOptions& options, double epsilon,
                                   const std::function<void(ModelParameters<double>&)>& mutate) {
  auto analytic = ModelParameters<double>::zeros(params.config);
  batch_loss(batch, params, vocab, queries, options, &analytic);
  if (mutate) mutate(analytic);

  GradientCheckResult result;
  auto probe = params;
  std::vector<std::pair<std::string, Matrix<double>*>> tensors;
  probe.for_each([&](const std::string& name, Matrix<double>& m) { tensors.emplace_back(name, &m); });
  std::vector<const Matrix<double>*> grads;
  analytic.for_each([&](const std::string&, const Matrix<double>& m) { grads.push_back(&m); });

  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& [name, m] = tensors[k];
    Matrix<double> numeric(m->rows(), m->cols());
    for (Eigen::Index i = 0; i < m->size(); ++i) {
      const double saved = m->data()[i];
      m->data()[i] = saved + epsilon;
      const double up = batch_loss(batch, probe, vocab, queries, options);
      m->data()[i] = saved - epsilon;
      const double down = batch_loss(batch, probe, vocab, queries, options);
      m->data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * epsilon);
    }
    const double diff = (*grads[k] - numeric).norm();
    const double scale = std::max(grads[k]->norm() + numeric.norm(), 1e-6);
    const double rel = diff / scale;
    result.per_tensor[name] = rel;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_tensor = name;
    }
  }
  return result;
}

}  // namespace qfsum
