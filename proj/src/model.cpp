#include "qfsum/model.hpp"

namespace qfsum {

void EncoderConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || d_hidden == 0)
    fail(ErrorKind::invalid_argument, "encoder widths must be positive");
  if (d_model % n_heads != 0) fail(ErrorKind::invalid_argument, "d_model must be divisible by n_heads");
  if (vocab_size < static_cast<std::size_t>(SpecialTokens::count))
    fail(ErrorKind::invalid_argument, "vocab_size smaller than the special-token block");
  if (max_tokens_per_sentence == 0 || max_sentences_per_instance == 0 || max_query_tokens < 2)
    fail(ErrorKind::invalid_argument, "sequence caps must be positive");
  if (!(layer_norm_eps > 0)) fail(ErrorKind::invalid_argument, "layer_norm_eps must be positive");
}

json EncoderConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"d_model", d_model},
          {"n_layers", n_layers},
          {"n_heads", n_heads},
          {"d_ff", d_ff},
          {"d_hidden", d_hidden},
          {"max_tokens_per_sentence", max_tokens_per_sentence},
          {"max_sentences_per_instance", max_sentences_per_instance},
          {"max_query_tokens", max_query_tokens},
          {"num_categories", num_categories},
          {"layer_norm_eps", layer_norm_eps}};
}

EncoderConfig EncoderConfig::from_json(const json& doc) {
  EncoderConfig c;
  auto get = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = doc.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("vocab_size", c.vocab_size);
  get("d_model", c.d_model);
  get("n_layers", c.n_layers);
  get("n_heads", c.n_heads);
  c.d_ff = 4 * c.d_model;
  get("d_ff", c.d_ff);
  get("d_hidden", c.d_hidden);
  get("max_tokens_per_sentence", c.max_tokens_per_sentence);
  get("max_sentences_per_instance", c.max_sentences_per_instance);
  get("max_query_tokens", c.max_query_tokens);
  get("num_categories", c.num_categories);
  get("layer_norm_eps", c.layer_norm_eps);
  return c;
}

template struct ModelParameters<float>;
template struct ModelParameters<double>;

}  // namespace qfsum
