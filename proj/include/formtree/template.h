#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "formtree/fields.h"
#include "formtree/labeling.h"

namespace formtree {

enum class NodeType { kTable, kKeyValue };

const char* to_string(NodeType type);
NodeType node_type_from_string(const std::string& s);  // throws ValidationError

struct TemplateNode {
  int id = 0;
  NodeType type = NodeType::kTable;
  std::vector<std::string> fields;  // ordered, distinct
  std::vector<int> children;        // ordered by first appearance

  friend bool operator==(const TemplateNode&, const TemplateNode&) = default;
};

// Ordered tree under an artificial root. Node ids are 1..n; the root has
// id 0 and is not stored in `nodes`.
class Template {
 public:
  static constexpr int kRootId = 0;

  Template() = default;

  // Validates tree shape: unique ids, every node reachable exactly once,
  // non-empty field sets, no duplicate (type, fields). Throws ValidationError.
  Template(std::vector<TemplateNode> nodes, std::vector<int> root_children);

  const std::vector<TemplateNode>& nodes() const { return nodes_; }
  const std::vector<int>& root_children() const { return root_children_; }
  const TemplateNode& node(int id) const;
  std::optional<int> parent_of(int id) const;
  bool has_children(int id) const { return !node(id).children.empty(); }
  bool empty() const { return nodes_.empty(); }

  // Node ids in pre-order.
  const std::vector<int>& pre_order() const { return pre_order_; }

  // Same types, field lists and shape, compared child by child in order.
  bool isomorphic_to(const Template& other) const;

  // Field sets that are subsets of another node's; these can confuse record
  // separation.
  std::vector<std::string> lint() const;

  friend bool operator==(const Template& a, const Template& b) {
    return a.nodes_ == b.nodes_ && a.root_children_ == b.root_children_;
  }

 private:
  std::vector<TemplateNode> nodes_;
  std::vector<int> root_children_;
  std::vector<int> pre_order_;
  std::vector<int> parent_;  // indexed by id
  std::vector<std::size_t> slot_;  // id -> position in nodes_
};

struct TemplateInferenceResult {
  Template tmpl;
  std::vector<RowLabel> labels;  // after V rows without a key were demoted to M
  std::vector<std::size_t> metadata_rows;  // window row positions labeled M
};

// Builds the template from labeled window rows. Throws PipelineError
// ("no structure found") when no K or KV row exists.
TemplateInferenceResult infer_template_detailed(std::span<const Row> rows,
                                                std::span<const RowLabel> labels,
                                                const FieldSet& fields);

Template infer_template(const InferenceWindow& window, const LabelAssignment& labels,
                        const FieldSet& fields);

// Optional feedback pass: predicted fields that occur in V-labeled rows are
// treated as false positives and removed.
FieldSet refine_fields(std::span<const Row> rows, std::span<const RowLabel> labels,
                       const FieldSet& fields);

// {"nodes":[{"id","type","fields","children"}],"root":[ids]}
std::string serialize_template(const Template& t);
Template parse_template(const std::string& text);  // throws ValidationError
Template load_template(const std::string& path);
void save_template(const Template& t, const std::string& path);

}  // namespace formtree
