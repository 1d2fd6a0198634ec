#include "formtree/template.h"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "formtree/errors.h"
#include "json.hpp"

namespace formtree {

using json = nlohmann::ordered_json;

const char* to_string(NodeType type) {
  return type == NodeType::kTable ? "Table" : "KeyValue";
}

NodeType node_type_from_string(const std::string& s) {
  if (s == "Table") return NodeType::kTable;
  if (s == "KeyValue") return NodeType::kKeyValue;
  throw ValidationError("unknown node type '" + s + "'");
}

Template::Template(std::vector<TemplateNode> nodes, std::vector<int> root_children)
    : nodes_(std::move(nodes)), root_children_(std::move(root_children)) {
  int max_id = 0;
  for (const auto& n : nodes_) {
    if (n.id <= 0) throw ValidationError("template node ids must be positive");
    max_id = std::max(max_id, n.id);
  }
  slot_.assign(static_cast<std::size_t>(max_id) + 1, SIZE_MAX);
  parent_.assign(static_cast<std::size_t>(max_id) + 1, -1);
  std::set<std::pair<NodeType, std::vector<std::string>>> signatures;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (slot_[n.id] != SIZE_MAX) throw ValidationError("duplicate template node id " + std::to_string(n.id));
    slot_[n.id] = i;
    if (n.fields.empty()) throw ValidationError("template node " + std::to_string(n.id) + " has no fields");
    if (!signatures.insert({n.type, n.fields}).second) {
      throw ValidationError("template nodes share type and fields (node " + std::to_string(n.id) + ")");
    }
  }
  std::function<void(int, int)> visit = [&](int id, int parent) {
    if (id <= 0 || static_cast<std::size_t>(id) >= slot_.size() || slot_[id] == SIZE_MAX) {
      throw ValidationError("template references unknown node " + std::to_string(id));
    }
    if (parent_[id] != -1) throw ValidationError("template node " + std::to_string(id) + " has two parents");
    parent_[id] = parent;
    pre_order_.push_back(id);
    for (int c : nodes_[slot_[id]].children) visit(c, id);
  };
  for (int c : root_children_) visit(c, kRootId);
  if (pre_order_.size() != nodes_.size()) throw ValidationError("template has unreachable nodes");
}

const TemplateNode& Template::node(int id) const {
  if (id <= 0 || static_cast<std::size_t>(id) >= slot_.size() || slot_[id] == SIZE_MAX) {
    throw ValidationError("unknown template node " + std::to_string(id));
  }
  return nodes_[slot_[id]];
}

std::optional<int> Template::parent_of(int id) const {
  node(id);
  if (parent_[id] == kRootId) return std::nullopt;
  return parent_[id];
}

bool Template::isomorphic_to(const Template& other) const {
  std::function<bool(const std::vector<int>&, const Template&, const std::vector<int>&)> same =
      [&](const std::vector<int>& a, const Template& ot, const std::vector<int>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
          const auto& na = node(a[i]);
          const auto& nb = ot.node(b[i]);
          if (na.type != nb.type || na.fields != nb.fields) return false;
          if (!same(na.children, ot, nb.children)) return false;
        }
        return true;
      };
  return same(root_children_, other, other.root_children_);
}

std::vector<std::string> Template::lint() const {
  std::vector<std::string> warnings;
  for (const auto& a : nodes_) {
    std::set<std::string> fa(a.fields.begin(), a.fields.end());
    for (const auto& b : nodes_) {
      if (a.id == b.id) continue;
      bool subset = std::all_of(b.fields.begin(), b.fields.end(),
                                [&](const std::string& f) { return fa.count(f) > 0; });
      if (subset) {
        warnings.push_back("fields of node " + std::to_string(b.id) + " are contained in node " +
                           std::to_string(a.id) + "; record boundaries may close early");
      }
    }
  }
  return warnings;
}

namespace {

struct Occurrence {
  NodeType type;
  std::vector<std::string> fields;
  std::size_t start = 0;
  std::size_t end = 0;
  int node_id = 0;
};

std::vector<std::string> distinct(const std::vector<std::string>& texts) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& t : texts) {
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

// Closest preceding K row aligned with row i, if any.
std::optional<std::size_t> closest_aligned_key(std::span<const Row> rows,
                                               std::span<const RowLabel> labels, std::size_t i) {
  for (std::size_t j = i; j-- > 0;) {
    if (labels[j] == RowLabel::K && rows_well_aligned(rows[j], rows[i])) return j;
  }
  return std::nullopt;
}

}  // namespace

TemplateInferenceResult infer_template_detailed(std::span<const Row> rows,
                                                std::span<const RowLabel> input_labels,
                                                const FieldSet& fields) {
  TemplateInferenceResult result;
  result.labels.assign(input_labels.begin(), input_labels.end());
  auto& labels = result.labels;
  const std::size_t n = rows.size();

  std::vector<Occurrence> occurrences;
  std::map<std::size_t, std::size_t> table_occurrence;  // K row -> occurrence
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == RowLabel::K) {
      table_occurrence[i] = occurrences.size();
      occurrences.push_back({NodeType::kTable, distinct(rows[i].texts()), i, i, 0});
    } else if (labels[i] == RowLabel::V) {
      auto key = closest_aligned_key(rows, labels, i);
      if (!key) {
        spdlog::warn("value row {} has no aligned key row; treating it as metadata", i);
        labels[i] = RowLabel::M;
        continue;
      }
      auto& occ = occurrences[table_occurrence.at(*key)];
      occ.end = std::max(occ.end, i);
    } else if (labels[i] == RowLabel::KV && (i == 0 || labels[i - 1] != RowLabel::KV)) {
      std::size_t j = i;
      std::vector<std::string> run_fields;
      while (j < n && labels[j] == RowLabel::KV) {
        for (const auto& p : rows[j].phrases) {
          if (fields.count(p.text)) run_fields.push_back(p.text);
        }
        ++j;
      }
      run_fields = distinct(run_fields);
      if (run_fields.empty()) {
        spdlog::warn("key-value rows {}..{} hold no predicted field", i, j - 1);
        continue;
      }
      occurrences.push_back({NodeType::kKeyValue, std::move(run_fields), i, j - 1, 0});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == RowLabel::M) result.metadata_rows.push_back(i);
  }
  if (occurrences.empty()) throw PipelineError("no structure found");

  std::sort(occurrences.begin(), occurrences.end(),
            [](const Occurrence& a, const Occurrence& b) { return a.start < b.start; });

  // Deduplicate by (type, fields); ids follow first appearance.
  std::map<std::pair<NodeType, std::vector<std::string>>, int> ids;
  std::vector<TemplateNode> nodes;
  for (auto& occ : occurrences) {
    auto [it, inserted] = ids.try_emplace({occ.type, occ.fields}, static_cast<int>(nodes.size()) + 1);
    if (inserted) nodes.push_back({it->second, occ.type, occ.fields, {}});
    occ.node_id = it->second;
  }

  // A node's parent is the node of the innermost occurrence whose span
  // brackets one of its occurrences.
  std::vector<int> parent(nodes.size() + 1, Template::kRootId);
  std::vector<bool> decided(nodes.size() + 1, false);
  auto is_ancestor = [&](int candidate, int id) {
    for (int p = parent[candidate]; p != Template::kRootId; p = parent[p]) {
      if (p == id) return true;
    }
    return candidate == id;
  };
  for (const auto& child : occurrences) {
    if (decided[child.node_id]) continue;
    const Occurrence* best = nullptr;
    for (const auto& outer : occurrences) {
      if (outer.start < child.start && outer.end > child.end && outer.node_id != child.node_id) {
        if (!best || outer.start > best->start) best = &outer;
      }
    }
    if (best && !is_ancestor(best->node_id, child.node_id)) {
      parent[child.node_id] = best->node_id;
      decided[child.node_id] = true;
    }
  }

  std::vector<int> root_children;
  for (const auto& node : nodes) {
    // nodes are already in first-appearance order
    if (parent[node.id] == Template::kRootId) {
      root_children.push_back(node.id);
    } else {
      nodes[parent[node.id] - 1].children.push_back(node.id);
    }
  }
  result.tmpl = Template(std::move(nodes), std::move(root_children));
  for (const auto& w : result.tmpl.lint()) spdlog::warn("template lint: {}", w);
  return result;
}

Template infer_template(const InferenceWindow& window, const LabelAssignment& labels,
                        const FieldSet& fields) {
  return infer_template_detailed(window.rows, labels.labels, fields).tmpl;
}

FieldSet refine_fields(std::span<const Row> rows, std::span<const RowLabel> labels,
                       const FieldSet& fields) {
  FieldSet refined = fields;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (labels[i] != RowLabel::V) continue;
    for (const auto& p : rows[i].phrases) refined.erase(p.text);
  }
  return refined;
}

std::string serialize_template(const Template& t) {
  json j;
  j["nodes"] = json::array();
  for (int id : t.pre_order()) {
    const auto& n = t.node(id);
    json node;
    node["id"] = n.id;
    node["type"] = to_string(n.type);
    node["fields"] = n.fields;
    node["children"] = n.children;
    j["nodes"].push_back(std::move(node));
  }
  j["root"] = t.root_children();
  return j.dump(2) + "\n";
}

Template parse_template(const std::string& text) {
  try {
    const auto j = json::parse(text);
    std::vector<TemplateNode> nodes;
    for (const auto& n : j.at("nodes")) {
      TemplateNode node;
      node.id = n.at("id").get<int>();
      node.type = node_type_from_string(n.at("type").get<std::string>());
      node.fields = n.at("fields").get<std::vector<std::string>>();
      node.children = n.value("children", std::vector<int>{});
      nodes.push_back(std::move(node));
    }
    return Template(std::move(nodes), j.at("root").get<std::vector<int>>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed template: ") + e.what());
  }
}

Template load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read template " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_template(ss.str());
}

void save_template(const Template& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write template " + path);
  out << serialize_template(t);
}

}  // namespace formtree
