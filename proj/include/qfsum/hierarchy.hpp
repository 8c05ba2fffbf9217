#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qfsum/util.hpp"

namespace qfsum {

enum class CodeSystem { icd9, icd10 };

std::string_view to_string(CodeSystem system);
CodeSystem parse_code_system(std::string_view text);

struct CategoryNode {
  std::string id;
  std::string name;
  std::string description;  // falls back to `name` when the file leaves it empty
  std::optional<std::string> parent;
  std::vector<std::string> children;
  std::vector<std::string> codes;  // exact ("432.0") or inclusive integer range ("420-429")
  int depth = 0;                   // top-level nodes have depth 1
  bool custom = false;             // added at runtime by an annotator
  json extra = json::object();     // unknown fields, kept for round-tripping

  bool is_leaf() const { return children.empty(); }
};

enum class CategoryLabel { positive, negative, excluded };
enum class LeafLabel { positive, negative };

std::string_view to_string(CategoryLabel label);

/// Diagnosis-category forest. Immutable after load except for `add_custom`,
/// which callers must serialise themselves (the service copies on write).
class DiagnosisHierarchy {
 public:
  struct CodeTarget {
    std::string leaf;
    bool from_range = false;  // range entries also match sub-codes by integer prefix
  };

  static DiagnosisHierarchy load(const std::filesystem::path& path);
  static DiagnosisHierarchy parse(std::string_view document);
  static DiagnosisHierarchy from_nodes(std::vector<CategoryNode> nodes);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const { write_file(path, serialize()); }

  /// Loads a two-column GEM table (ICD-10 source, ICD-9 target).
  void load_gem(const std::filesystem::path& path);
  void parse_gem(std::string_view document);
  const std::map<std::string, std::string>& gem_map() const { return gem_; }

  std::optional<std::string> map_code(std::string_view code, CodeSystem system) const;
  std::vector<std::string> path_to(std::string_view id) const;
  std::map<std::string, CategoryLabel> propagate_labels(
      const std::map<std::string, LeafLabel>& leaf_labels) const;

  bool contains(std::string_view id) const { return index_.count(std::string(id)) > 0; }
  const CategoryNode& node(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;
  const std::vector<CategoryNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::string>& top_level() const { return top_level_; }
  const std::map<std::string, CodeTarget>& code_index() const { return code_index_; }
  int max_depth() const;
  std::vector<std::size_t> depth_histogram() const;  // [i] = nodes at depth i+1

  /// Adds a custom top-level category; returns its id. Conflict on duplicate name.
  std::string add_custom(const std::string& name, const std::string& description);

 private:
  void build();

  std::vector<CategoryNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> top_level_;
  std::map<std::string, CodeTarget> code_index_;
  std::map<std::string, std::string> gem_;
};

/// Uppercase, trimmed.
std::string normalize_code(std::string_view code);

}  // namespace qfsum
