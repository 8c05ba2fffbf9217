#include <charconv>
#include <map>

#include "qfsum/scoring.hpp"

namespace qfsum {

namespace {

constexpr std::string_view kMagic = "#qfsum-checkpoint\t1";

std::string_view next_field(std::string_view& line) {
  const auto pos = line.find(' ');
  std::string_view field = line.substr(0, pos);
  line = pos == std::string_view::npos ? std::string_view{} : line.substr(pos + 1);
  return field;
}

template <class T>
T parse_number(std::string_view text, const std::string& context) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorKind::data, "checkpoint: bad number '" + std::string(text) + "' in " + context);
  return value;
}

}  // namespace

std::size_t TrainedModel::category_row(std::string_view id) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == id) return i;
  fail(ErrorKind::not_found, "category not in the indicator table: " + std::string(id));
}

std::string serialize_checkpoint(const TrainedModel& model) {
  json header = {{"config", model.params.config.to_json()},
                 {"query_mode", std::string(to_string(model.query_mode))},
                 {"categories", model.categories},
                 {"vocabulary", model.vocab.tokens()},
                 {"meta", model.meta}};
  std::string out(kMagic);
  out += '\n';
  out += header.dump();
  out += '\n';
  model.params.for_each([&](const std::string& name, const Matrix<float>& m) {
    out += name;
    out += ' ';
    out += std::to_string(m.rows());
    out += ' ';
    out += std::to_string(m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      out += ' ';
      out += format_float(m.data()[i]);
    }
    out += '\n';
  });
  return out;
}

TrainedModel parse_checkpoint(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto pos = text.find('\n');
    lines.push_back(text.substr(0, pos));
    text = pos == std::string_view::npos ? std::string_view{} : text.substr(pos + 1);
  }
  if (lines.size() < 2 || lines[0] != kMagic) fail(ErrorKind::data, "not a qfsum checkpoint (or unsupported version)");
  const json header = json::parse(lines[1], nullptr, false);
  if (header.is_discarded() || !header.is_object()) fail(ErrorKind::data, "checkpoint: malformed header");

  TrainedModel model;
  try {
    model.vocab = Vocabulary::from_tokens(header.at("vocabulary").get<std::vector<std::string>>());
    model.categories = header.at("categories").get<std::vector<std::string>>();
    model.query_mode = parse_query_mode(header.at("query_mode").get<std::string>());
    model.meta = header.value("meta", json::object());
    model.params = ModelParameters<float>::zeros(EncoderConfig::from_json(header.at("config")));
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("checkpoint header: ") + e.what());
  }
  if (model.vocab.size() != model.params.config.vocab_size)
    fail(ErrorKind::data, "checkpoint: vocabulary size does not match config");

  std::map<std::string, std::string_view> rows;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string_view rest = lines[i];
    const std::string name(next_field(rest));
    rows[name] = lines[i];
  }
  model.params.for_each([&](const std::string& name, Matrix<float>& m) {
    const auto it = rows.find(name);
    if (it == rows.end()) fail(ErrorKind::data, "checkpoint: missing tensor " + name);
    std::string_view rest = it->second;
    next_field(rest);
    const auto r = parse_number<long>(next_field(rest), name);
    const auto c = parse_number<long>(next_field(rest), name);
    if (r != m.rows() || c != m.cols()) fail(ErrorKind::data, "checkpoint: shape mismatch for " + name);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (rest.empty()) fail(ErrorKind::data, "checkpoint: truncated tensor " + name);
      m.data()[i] = parse_number<float>(next_field(rest), name);
    }
    if (!rest.empty()) fail(ErrorKind::data, "checkpoint: trailing values in " + name);
    rows.erase(it);
  });
  if (!rows.empty()) fail(ErrorKind::data, "checkpoint: unknown tensor " + rows.begin()->first);
  if (!model.params.all_finite()) fail(ErrorKind::numeric, "checkpoint contains non-finite values");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  write_file(path, serialize_checkpoint(model));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace qfsum
