#include "qfsum/hierarchy.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

#include <spdlog/spdlog.h>

namespace qfsum {

namespace {

constexpr int kHierarchyVersion = 1;

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

struct CodeRange {
  long lo = 0;
  long hi = 0;
  std::size_t width = 0;
};

std::optional<CodeRange> parse_range(std::string_view pattern) {
  const auto dash = pattern.find('-');
  if (dash == std::string_view::npos) return std::nullopt;
  const auto lo = pattern.substr(0, dash);
  const auto hi = pattern.substr(dash + 1);
  if (!all_digits(lo) || !all_digits(hi))
    fail(ErrorKind::data, "code range '" + std::string(pattern) + "' must be integer-prefixed");
  CodeRange r{std::stol(std::string(lo)), std::stol(std::string(hi)), std::max(lo.size(), hi.size())};
  if (r.lo > r.hi || r.hi - r.lo > 100000)
    fail(ErrorKind::data, "invalid code range '" + std::string(pattern) + "'");
  return r;
}

std::string pad(long value, std::size_t width) {
  auto s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

}  // namespace

std::string_view to_string(CodeSystem system) { return system == CodeSystem::icd9 ? "ICD9" : "ICD10"; }

CodeSystem parse_code_system(std::string_view text) {
  std::string s;
  for (char c : text)
    if (c != '-' && c != '_' && c != ' ') s += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s == "ICD9" || s == "ICD9CM") return CodeSystem::icd9;
  if (s == "ICD10" || s == "ICD10CM") return CodeSystem::icd10;
  fail(ErrorKind::data, "unknown code system '" + std::string(text) + "'");
}

std::string_view to_string(CategoryLabel label) {
  switch (label) {
    case CategoryLabel::positive: return "positive";
    case CategoryLabel::negative: return "negative";
    case CategoryLabel::excluded: return "excluded";
  }
  return "excluded";
}

std::string normalize_code(std::string_view code) {
  auto s = trim(code);
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

DiagnosisHierarchy DiagnosisHierarchy::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

DiagnosisHierarchy DiagnosisHierarchy::parse(std::string_view document) {
  std::vector<CategoryNode> nodes;
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < document.size()) {
    auto eol = document.find('\n', pos);
    if (eol == std::string_view::npos) eol = document.size();
    const auto line = trim(document.substr(pos, eol - pos));
    pos = eol + 1;
    ++lineno;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object())
      fail(ErrorKind::data, "hierarchy line " + std::to_string(lineno) + ": malformed record");
    if (!row.contains("id")) {
      // Header record.
      if (row.value("version", kHierarchyVersion) > kHierarchyVersion)
        fail(ErrorKind::data, "hierarchy format version " + row["version"].dump() + " is not supported");
      continue;
    }
    CategoryNode node;
    node.id = row.at("id").get<std::string>();
    node.name = row.value("name", node.id);
    node.description = row.value("description", std::string());
    if (node.description.empty()) node.description = node.name;
    if (row.contains("parent") && !row["parent"].is_null()) node.parent = row["parent"].get<std::string>();
    if (row.contains("codes"))
      for (const auto& c : row["codes"]) node.codes.push_back(normalize_code(c.get<std::string>()));
    node.custom = row.value("custom", false);
    for (auto it = row.begin(); it != row.end(); ++it) {
      static const std::vector<std::string> known = {"id", "name", "description", "parent", "codes", "custom"};
      if (std::find(known.begin(), known.end(), it.key()) == known.end()) node.extra[it.key()] = it.value();
    }
    nodes.push_back(std::move(node));
  }
  return from_nodes(std::move(nodes));
}

DiagnosisHierarchy DiagnosisHierarchy::from_nodes(std::vector<CategoryNode> nodes) {
  DiagnosisHierarchy h;
  h.nodes_ = std::move(nodes);
  h.build();
  return h;
}

void DiagnosisHierarchy::build() {
  index_.clear();
  top_level_.clear();
  code_index_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (n.id.empty()) fail(ErrorKind::data, "hierarchy node with empty id");
    if (!index_.emplace(n.id, i).second) fail(ErrorKind::data, "duplicate category id '" + n.id + "'");
    n.children.clear();
    n.depth = 0;
  }
  for (auto& n : nodes_) {
    if (!n.parent) {
      top_level_.push_back(n.id);
      continue;
    }
    const auto it = index_.find(*n.parent);
    if (it == index_.end())
      fail(ErrorKind::data, "category '" + n.id + "' has unknown parent '" + *n.parent + "'");
    nodes_[it->second].children.push_back(n.id);
  }

  // Depths by walking down from the roots; anything unreached sits on a cycle.
  std::vector<std::size_t> stack;
  for (const auto& id : top_level_) {
    nodes_[index_.at(id)].depth = 1;
    stack.push_back(index_.at(id));
  }
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    for (const auto& child : nodes_[i].children) {
      const auto c = index_.at(child);
      nodes_[c].depth = nodes_[i].depth + 1;
      stack.push_back(c);
    }
  }
  for (const auto& n : nodes_)
    if (n.depth == 0) fail(ErrorKind::data, "cycle detected at category '" + n.id + "'");

  struct RangeOwner {
    CodeRange range;
    std::string leaf;
    std::string pattern;
  };
  std::vector<RangeOwner> ranges;
  std::map<std::string, std::string> exact;
  for (const auto& n : nodes_) {
    if (!n.codes.empty() && !n.is_leaf())
      fail(ErrorKind::data, "non-leaf category '" + n.id + "' carries codes");
    for (const auto& pattern : n.codes) {
      if (auto r = parse_range(pattern)) {
        for (const auto& other : ranges)
          if (other.leaf != n.id && r->lo <= other.range.hi && other.range.lo <= r->hi)
            fail(ErrorKind::data, "code range '" + pattern + "' of '" + n.id + "' overlaps '" +
                                      other.pattern + "' of '" + other.leaf + "'");
        ranges.push_back({*r, n.id, pattern});
      } else {
        const auto [it, inserted] = exact.emplace(pattern, n.id);
        if (!inserted && it->second != n.id)
          fail(ErrorKind::data, "code '" + pattern + "' claimed by '" + it->second + "' and '" + n.id + "'");
      }
    }
  }
  for (const auto& r : ranges)
    for (long v = r.range.lo; v <= r.range.hi; ++v) code_index_[pad(v, r.range.width)] = {r.leaf, true};
  for (const auto& [code, leaf] : exact) {
    const auto integer = code.substr(0, code.find('.'));
    const auto clash = code_index_.find(integer);
    if (clash != code_index_.end() && clash->second.from_range && clash->second.leaf != leaf)
      fail(ErrorKind::data, "code '" + code + "' of '" + leaf + "' falls inside a range of '" +
                                clash->second.leaf + "'");
    const auto own = code_index_.find(code);
    if (own != code_index_.end() && own->second.leaf != leaf)
      fail(ErrorKind::data, "code '" + code + "' claimed by '" + own->second.leaf + "' and '" + leaf + "'");
    code_index_[code] = {leaf, false};
  }
}

std::string DiagnosisHierarchy::serialize() const {
  std::string out = json{{"format", "qfsum-hierarchy"}, {"version", kHierarchyVersion}}.dump() + '\n';
  for (const auto& n : nodes_) {
    json row = n.extra;
    row["id"] = n.id;
    row["name"] = n.name;
    row["description"] = n.description;
    row["parent"] = n.parent ? json(*n.parent) : json(nullptr);
    row["codes"] = n.codes;
    if (n.custom) row["custom"] = true;
    out += row.dump() + '\n';
  }
  return out;
}

void DiagnosisHierarchy::load_gem(const std::filesystem::path& path) { parse_gem(read_file(path)); }

void DiagnosisHierarchy::parse_gem(std::string_view document) {
  std::size_t pos = 0;
  while (pos < document.size()) {
    auto eol = document.find('\n', pos);
    if (eol == std::string_view::npos) eol = document.size();
    const auto line = trim(document.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_delimited(line, "\t, ");
    if (fields.size() < 2) fail(ErrorKind::data, "malformed GEM line: " + line);
    const auto source = normalize_code(fields[0]);
    const auto target = normalize_code(fields[1]);
    const auto [it, inserted] = gem_.emplace(source, target);
    if (!inserted && it->second != target)
      spdlog::warn("GEM entry {} -> {} ignored; keeping first mapping {} -> {}", source, target, source,
                   it->second);
  }
}

std::optional<std::string> DiagnosisHierarchy::map_code(std::string_view code, CodeSystem system) const {
  auto normalized = normalize_code(code);
  if (normalized.empty()) return std::nullopt;
  if (system == CodeSystem::icd10) {
    const auto g = gem_.find(normalized);
    if (g != gem_.end()) normalized = g->second;
  }
  if (const auto it = code_index_.find(normalized); it != code_index_.end()) {
    if (!it->second.from_range || all_digits(normalized)) return it->second.leaf;
  }
  const auto integer = normalized.substr(0, normalized.find('.'));
  if (!all_digits(integer)) return std::nullopt;
  if (const auto it = code_index_.find(integer); it != code_index_.end() && it->second.from_range)
    return it->second.leaf;
  return std::nullopt;
}

const CategoryNode& DiagnosisHierarchy::node(std::string_view id) const { return nodes_[index_of(id)]; }

std::size_t DiagnosisHierarchy::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) fail(ErrorKind::not_found, "unknown category '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> DiagnosisHierarchy::path_to(std::string_view id) const {
  std::vector<std::string> path;
  const CategoryNode* n = &node(id);
  path.push_back(n->id);
  while (n->parent) {
    n = &node(*n->parent);
    path.push_back(n->id);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::map<std::string, CategoryLabel> DiagnosisHierarchy::propagate_labels(
    const std::map<std::string, LeafLabel>& leaf_labels) const {
  for (const auto& [id, label] : leaf_labels)
    if (!node(id).is_leaf()) fail(ErrorKind::invalid_argument, "label given for non-leaf '" + id + "'");

  std::map<std::string, CategoryLabel> out;
  std::function<CategoryLabel(const CategoryNode&)> visit = [&](const CategoryNode& n) {
    CategoryLabel label = CategoryLabel::excluded;
    if (n.is_leaf()) {
      if (const auto it = leaf_labels.find(n.id); it != leaf_labels.end())
        label = it->second == LeafLabel::positive ? CategoryLabel::positive : CategoryLabel::negative;
    } else {
      bool any_positive = false;
      bool any_negative = false;
      for (const auto& child : n.children) {
        const auto c = visit(node(child));
        any_positive |= c == CategoryLabel::positive;
        any_negative |= c == CategoryLabel::negative;
      }
      if (any_positive)
        label = CategoryLabel::positive;
      else if (any_negative)
        label = CategoryLabel::negative;
    }
    out[n.id] = label;
    return label;
  };
  for (const auto& root : top_level_) visit(node(root));
  return out;
}

int DiagnosisHierarchy::max_depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::vector<std::size_t> DiagnosisHierarchy::depth_histogram() const {
  std::vector<std::size_t> hist(static_cast<std::size_t>(max_depth()), 0);
  for (const auto& n : nodes_) ++hist[static_cast<std::size_t>(n.depth - 1)];
  return hist;
}

std::string DiagnosisHierarchy::add_custom(const std::string& name, const std::string& description) {
  const auto clean = trim(name);
  if (clean.empty()) fail(ErrorKind::unprocessable, "custom category needs a name");
  if (trim(description).empty()) fail(ErrorKind::unprocessable, "custom category needs a description");
  for (const auto& n : nodes_)
    if (n.name == clean) fail(ErrorKind::conflict, "category named '" + clean + "' already exists");
  std::size_t serial = 1;
  for (const auto& n : nodes_) serial += n.custom;
  std::string id = "custom-" + std::to_string(serial);
  while (contains(id)) id = "custom-" + std::to_string(++serial);
  CategoryNode node;
  node.id = id;
  node.name = clean;
  node.description = trim(description);
  node.custom = true;
  nodes_.push_back(std::move(node));
  build();
  return id;
}

}  // namespace qfsum
