#include "formtree/harness.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "formtree/errors.h"
#include "formtree/oracle.h"
#include "json.hpp"

namespace formtree {

using json = nlohmann::ordered_json;

namespace {

constexpr double kPageWidth = 1000;
constexpr double kPageHeight = 1000;
constexpr double kMargin = 20;
constexpr double kUsable = kPageWidth - 2 * kMargin;
constexpr double kRowHeight = 12;
constexpr double kRowPitch = 20;
constexpr std::size_t kMaxTableColumns = 8;

const NodeSpec kDefaultNodeSpec{};

double text_width(const std::string& text) { return 7.0 * static_cast<double>(text.size()) + 4; }

const char* to_string(ValueStyle s) {
  switch (s) {
    case ValueStyle::kCode: return "code";
    case ValueStyle::kNumber: return "number";
    case ValueStyle::kDate: return "date";
    case ValueStyle::kAmount: return "amount";
  }
  return "code";
}

ValueStyle value_style_from(const std::string& s) {
  if (s == "code") return ValueStyle::kCode;
  if (s == "number") return ValueStyle::kNumber;
  if (s == "date") return ValueStyle::kDate;
  if (s == "amount") return ValueStyle::kAmount;
  throw ValidationError("unknown value style '" + s + "'");
}

std::string node_label(const TemplateNode& n) { return "node " + std::to_string(n.id); }

bool always_missing(const NodeSpec& ns, const std::string& field) {
  auto it = ns.missing.find(field);
  return it != ns.missing.end() && it->second >= 0.5;
}

double missing_probability(const NodeSpec& ns, const std::string& field) {
  auto it = ns.missing.find(field);
  return it == ns.missing.end() ? 0.0 : it->second;
}

void check_siblings(const Template& t, const std::vector<int>& ids, const std::string& where) {
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (t.node(ids[i - 1]).type == NodeType::kKeyValue && t.node(ids[i]).type == NodeType::kKeyValue) {
      throw ValidationError(where + ": key-value nodes " + std::to_string(ids[i - 1]) + " and " +
                            std::to_string(ids[i]) + " would be laid out adjacently");
    }
  }
}

}  // namespace

const NodeSpec& GeneratorSpec::node_spec(int id) const {
  auto it = nodes.find(id);
  return it == nodes.end() ? kDefaultNodeSpec : it->second;
}

void validate_spec(const GeneratorSpec& spec) {
  const Template& t = spec.tmpl;
  if (t.empty()) throw ValidationError("generator template has no nodes");
  if (spec.documents < 1) throw ValidationError("documents must be at least 1");
  if (spec.records < 1) throw ValidationError("records must be at least 1");
  if (spec.metadata_rows < 0) throw ValidationError("metadata rows must be non-negative");
  if (spec.kv_pairs_per_row < 1) throw ValidationError("kv_pairs_per_row must be at least 1");
  if (spec.noncompliance_rate < 0 || spec.noncompliance_rate > 1) {
    throw ValidationError("noncompliance_rate must lie in [0, 1]");
  }
  if (spec.compliant && spec.noncompliance_rate > 0) {
    throw ValidationError("a compliant spec cannot inject non-compliant phrases");
  }
  for (const auto& [id, ns] : spec.nodes) {
    t.node(id);  // throws on unknown ids
    if (!t.parent_of(id) && ns.repeat != std::pair<int, int>{1, 1}) {
      throw ValidationError("node " + std::to_string(id) +
                            " sets a repetition range but is not nested under another node");
    }
  }

  for (const auto& n : t.nodes()) {
    const auto& ns = spec.node_spec(n.id);
    const std::string where = node_label(n);
    if (n.fields.size() < 2) throw ValidationError(where + " needs at least two fields");
    if (std::set<std::string>(n.fields.begin(), n.fields.end()).size() != n.fields.size()) {
      throw ValidationError(where + " repeats a field");
    }
    for (const auto& f : n.fields) {
      if (!looks_like_field(f)) {
        throw ValidationError(where + ": field '" + f + "' must be alphabetic, without digits");
      }
    }
    for (const auto& [f, p] : ns.missing) {
      if (std::find(n.fields.begin(), n.fields.end(), f) == n.fields.end()) {
        throw ValidationError(where + ": missing probability for unknown field '" + f + "'");
      }
      if (p < 0 || p > 1) throw ValidationError(where + ": missing probability out of [0, 1]");
    }
    if (ns.tuples.first < 1 || ns.tuples.first > ns.tuples.second) {
      throw ValidationError(where + ": tuple range must satisfy 1 <= min <= max");
    }
    if (ns.repeat.first < 1 || ns.repeat.first > ns.repeat.second) {
      throw ValidationError(where + ": repetition range must satisfy 1 <= min <= max");
    }

    if (n.type == NodeType::kTable) {
      if (n.fields.size() > kMaxTableColumns) {
        throw ValidationError(where + ": tables hold at most " + std::to_string(kMaxTableColumns) + " fields");
      }
      if (!n.children.empty()) {
        if (ns.tuples.first < 2) {
          throw ValidationError(where + ": a table with nested nodes needs at least two tuples");
        }
        if (missing_probability(ns, n.fields.front()) > 0) {
          throw ValidationError(where + ": the first field of a table with nested nodes is never missing");
        }
        for (int c : n.children) {
          const auto& child = t.node(c);
          if (child.type == NodeType::kTable && child.fields.size() <= n.fields.size()) {
            throw ValidationError("node " + std::to_string(c) + " must have more fields than its parent table");
          }
        }
        check_siblings(t, n.children, where);
      }
      continue;
    }

    // Key-value node.
    if (!n.children.empty()) throw ValidationError(where + ": key-value nodes cannot have children");
    if (ns.repeat.second != 1) throw ValidationError(where + ": key-value blocks cannot repeat within a gap");
    bool seen_missing = false;
    for (const auto& f : n.fields) {
      const double p = missing_probability(ns, f);
      if (p != 0 && p != 1) {
        throw ValidationError(where + ": key-value missing probabilities must be 0 or 1");
      }
      if (p == 1) seen_missing = true;
      else if (seen_missing) {
        throw ValidationError(where + ": always-missing key-value fields must come last");
      }
    }
    const auto per_row = static_cast<std::size_t>(spec.kv_pairs_per_row);
    for (std::size_t begin = 0; begin < n.fields.size(); begin += per_row) {
      std::size_t present = 0;
      std::size_t missing = 0;
      for (std::size_t i = begin; i < std::min(n.fields.size(), begin + per_row); ++i) {
        (always_missing(ns, n.fields[i]) ? missing : present)++;
      }
      if (present == 0 || present < missing) {
        throw ValidationError(where + ": each key-value row needs at least as many values as missing values");
      }
    }
  }

  check_siblings(t, t.root_children(), "root");
  const auto& root = t.root_children();
  const bool wraps = spec.records > 1 || (spec.documents > 1 && !spec.title);
  if (spec.metadata_rows == 0 && wraps && t.node(root.front()).type == NodeType::kKeyValue &&
      t.node(root.back()).type == NodeType::kKeyValue) {
    throw ValidationError("key-value blocks of consecutive records would be adjacent; add metadata rows");
  }
}

GeneratorSpec parse_spec(const std::string& text) {
  static const std::set<std::string> kKeys = {"seed", "documents", "records", "compliant",
                                              "noncompliance_rate", "metadata", "kv_pairs_per_row",
                                              "template", "nodes"};
  try {
    const auto j = json::parse(text);
    for (const auto& [k, v] : j.items()) {
      if (!kKeys.count(k)) throw ValidationError("unknown generator spec key '" + k + "'");
    }
    GeneratorSpec spec;
    spec.tmpl = parse_template(j.at("template").dump());
    spec.seed = j.value("seed", std::uint64_t{1});
    spec.documents = j.value("documents", 1);
    spec.records = j.value("records", 2);
    spec.compliant = j.value("compliant", true);
    spec.noncompliance_rate = j.value("noncompliance_rate", 0.0);
    spec.kv_pairs_per_row = j.value("kv_pairs_per_row", 2);
    if (j.contains("metadata")) {
      const auto& m = j.at("metadata");
      spec.metadata_rows = m.value("rows", 1);
      const auto policy = m.value("policy", std::string("unaligned"));
      if (policy == "unaligned") spec.metadata_policy = MetadataPolicy::kUnaligned;
      else if (policy == "aligned") spec.metadata_policy = MetadataPolicy::kAligned;
      else throw ValidationError("unknown metadata policy '" + policy + "'");
      spec.title = m.value("title", true);
    }
    if (j.contains("nodes")) {
      for (const auto& [key, v] : j.at("nodes").items()) {
        NodeSpec ns;
        int id = 0;
        try {
          id = std::stoi(key);
        } catch (const std::exception&) {
          throw ValidationError("node settings key '" + key + "' is not a node id");
        }
        if (v.contains("missing")) ns.missing = v.at("missing").get<std::map<std::string, double>>();
        if (v.contains("tuples")) ns.tuples = v.at("tuples").get<std::pair<int, int>>();
        if (v.contains("repeat")) ns.repeat = v.at("repeat").get<std::pair<int, int>>();
        if (v.contains("values")) ns.values = value_style_from(v.at("values").get<std::string>());
        spec.nodes[id] = std::move(ns);
      }
    }
    validate_spec(spec);
    return spec;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed generator spec: ") + e.what());
  }
}

GeneratorSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read generator spec " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

std::string serialize_spec(const GeneratorSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["documents"] = spec.documents;
  j["records"] = spec.records;
  j["compliant"] = spec.compliant;
  j["noncompliance_rate"] = spec.noncompliance_rate;
  j["metadata"] = {{"rows", spec.metadata_rows},
                   {"policy", spec.metadata_policy == MetadataPolicy::kAligned ? "aligned" : "unaligned"},
                   {"title", spec.title}};
  j["kv_pairs_per_row"] = spec.kv_pairs_per_row;
  j["template"] = json::parse(serialize_template(spec.tmpl));
  json nodes = json::object();
  for (const auto& [id, ns] : spec.nodes) {
    json n;
    n["missing"] = json::object();
    for (const auto& [f, p] : ns.missing) n["missing"][f] = p;
    n["tuples"] = {ns.tuples.first, ns.tuples.second};
    n["repeat"] = {ns.repeat.first, ns.repeat.second};
    n["values"] = to_string(ns.values);
    nodes[std::to_string(id)] = std::move(n);
  }
  j["nodes"] = std::move(nodes);
  return j.dump(2) + "\n";
}

namespace {

class Generator {
 public:
  explicit Generator(const GeneratorSpec& spec) : spec_(spec), rng_(spec.seed) {}

  GeneratedCorpus run() {
    GeneratedCorpus out;
    for (int d = 1; d <= spec_.documents; ++d) {
      std::ostringstream name;
      name << "doc_" << std::setw(4) << std::setfill('0') << d << ".jsonl";
      phrases_.clear();
      next_index_ = 1;
      page_ = 1;
      y_ = kMargin;

      DocumentExtraction truth;
      truth.source_id = name.str();
      if (spec_.title) metadata_row();
      for (int r = 1; r <= spec_.records; ++r) truth.records.push_back(record(static_cast<std::size_t>(r)));
      out.documents.emplace_back(std::move(phrases_), truth.source_id);
      out.truth.documents.push_back(std::move(truth));
    }
    return out;
  }

 private:
  struct Placed {
    std::string text;
    double x1;
    double x2;
  };

  bool chance(double p) { return p > 0 && std::uniform_real_distribution<double>(0, 1)(rng_) < p; }
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  int digits(int n) {
    int lo = 1;
    for (int i = 1; i < n; ++i) lo *= 10;
    return uniform(lo, lo * 10 - 1);
  }

  std::string draw(ValueStyle style) {
    switch (style) {
      case ValueStyle::kNumber: return std::to_string(digits(uniform(3, 7)));
      case ValueStyle::kDate: {
        std::ostringstream s;
        s << std::setfill('0') << std::setw(2) << uniform(1, 12) << '-' << std::setw(2) << uniform(1, 28)
          << '-' << uniform(1990, 2030);
        return s.str();
      }
      case ValueStyle::kAmount: {
        std::ostringstream s;
        s << '$' << digits(uniform(2, 5)) << '.' << std::setfill('0') << std::setw(2) << uniform(0, 99);
        return s.str();
      }
      case ValueStyle::kCode: {
        static const std::string letters = "ABCDEFGHJKLMNPRSTUVWXYZ";
        std::string s;
        s += letters[static_cast<std::size_t>(uniform(0, static_cast<int>(letters.size()) - 1))];
        s += letters[static_cast<std::size_t>(uniform(0, static_cast<int>(letters.size()) - 1))];
        return s + "-" + std::to_string(digits(uniform(3, 5)));
      }
    }
    return {};
  }

  // Values and metadata never repeat anywhere in the corpus, so no two of
  // them can move in lockstep with a field.
  std::string fresh(ValueStyle style) {
    for (;;) {
      auto s = draw(style);
      if (used_.insert(s).second) return s;
    }
  }

  std::string fresh_metadata() {
    for (;;) {
      auto s = "Ref " + std::to_string(digits(6));
      if (used_.insert(s).second) return s;
    }
  }

  void emit_row(const std::vector<Placed>& row) {
    if (y_ + kRowHeight > kPageHeight - kMargin) {
      ++page_;
      y_ = kMargin;
    }
    for (const auto& p : row) {
      phrases_.push_back({p.text, next_index_++, page_, {p.x1, y_, p.x2, y_ + kRowHeight}});
    }
    y_ += kRowPitch;
  }

  std::int64_t last_index() const { return next_index_ - 1; }

  void metadata_row() {
    if (spec_.metadata_policy == MetadataPolicy::kAligned) {
      emit_row({{fresh_metadata(), kMargin + 2, kMargin + 40}});
    } else {
      // Two stacked full-width phrases: never well aligned with a row of two
      // or more phrases, above or below.
      emit_row({{fresh_metadata(), kMargin, kPageWidth - kMargin},
                {fresh_metadata(), kMargin + 10, kPageWidth - kMargin - 10}});
    }
  }

  RecordExtraction record(std::size_t ordinal) {
    RecordExtraction rec;
    rec.ordinal = ordinal;
    rec.first_index = next_index_;
    const auto& root = spec_.tmpl.root_children();
    std::vector<int> after(root.size(), 0);
    if (spec_.metadata_rows > 0) {
      after.back() = 1;
      for (int m = 1; m < spec_.metadata_rows; ++m) {
        ++after[static_cast<std::size_t>(uniform(0, static_cast<int>(root.size()) - 1))];
      }
    }
    for (std::size_t i = 0; i < root.size(); ++i) {
      rec.objects.push_back(block(root[i]));
      for (int m = 0; m < after[i]; ++m) metadata_row();
    }
    rec.last_index = last_index();
    return rec;
  }

  ExtractionObject block(int id) {
    const auto& n = spec_.tmpl.node(id);
    return n.type == NodeType::kTable ? table(n) : key_value(n);
  }

  ExtractionObject table(const TemplateNode& n) {
    const auto& ns = spec_.node_spec(n.id);
    ExtractionObject obj;
    obj.node_id = n.id;
    obj.type = NodeType::kTable;
    obj.fields = n.fields;

    const std::size_t cols = n.fields.size();
    const double slot = kUsable / static_cast<double>(cols);
    const bool nests = !n.children.empty();
    std::vector<double> header_right(cols);
    std::vector<Placed> header;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x0 = kMargin + static_cast<double>(c) * slot;
      const double w = std::min(0.45 * slot, text_width(n.fields[c]));
      header.push_back({n.fields[c], x0 + 2, x0 + 2 + w});
      header_right[c] = x0 + 2 + w;
    }
    emit_row(header);

    const int tuples = uniform(ns.tuples.first, ns.tuples.second);
    for (int t = 0; t < tuples; ++t) {
      std::vector<bool> present(cols);
      for (std::size_t c = 0; c < cols; ++c) present[c] = !chance(missing_probability(ns, n.fields[c]));
      if (nests) present[0] = true;
      // A value row keeps two cells so it can never pass for a lone key row.
      while (std::count(present.begin(), present.end(), true) < 2) {
        present[static_cast<std::size_t>(uniform(0, static_cast<int>(cols) - 1))] = true;
      }
      std::vector<Cell> tuple(cols);
      std::vector<Placed> row;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!present[c]) continue;
        const double x0 = kMargin + static_cast<double>(c) * slot;
        auto text = fresh(ns.values);
        tuple[c] = text;
        if (nests && c == 0) {
          // Spans its whole slot so it straddles two columns of any wider
          // nested header.
          row.push_back({text, x0 + 2, x0 + slot - 8});
          continue;
        }
        const double w = std::min(slot - 12, text_width(text));
        if (!spec_.compliant && chance(spec_.noncompliance_rate)) {
          // Shifted into the gap right of its header: aligned with no field.
          const double x1 = header_right[c] + 3;
          row.push_back({text, x1, std::min(x1 + w, x0 + slot - 2)});
        } else {
          row.push_back({text, x0 + 2, x0 + 2 + w});
        }
      }
      emit_row(row);
      obj.tuples.push_back(std::move(tuple));

      if (nests && t + 1 < tuples) {
        for (int c : n.children) {
          const auto& cs = spec_.node_spec(c);
          const int reps = uniform(cs.repeat.first, cs.repeat.second);
          for (int k = 0; k < reps; ++k) obj.children.push_back(block(c));
        }
      }
    }
    return obj;
  }

  ExtractionObject key_value(const TemplateNode& n) {
    const auto& ns = spec_.node_spec(n.id);
    ExtractionObject obj;
    obj.node_id = n.id;
    obj.type = NodeType::kKeyValue;
    obj.fields = n.fields;

    const auto per_row = static_cast<std::size_t>(spec_.kv_pairs_per_row);
    const double slot = kUsable / static_cast<double>(per_row);
    std::size_t values = 0;
    std::vector<Placed> row;
    double last_x0 = kMargin;
    bool last_has_value = false;
    for (std::size_t i = 0; i < n.fields.size(); ++i) {
      const std::size_t j = i % per_row;
      if (j == 0 && !row.empty()) {
        emit_row(row);
        row.clear();
      }
      const double x0 = kMargin + static_cast<double>(j) * slot;
      const auto& f = n.fields[i];
      row.push_back({f, x0 + 2, x0 + 2 + std::min(0.4 * slot, text_width(f))});
      last_x0 = x0;
      last_has_value = !always_missing(ns, f);
      if (last_has_value) {
        auto text = fresh(ns.values);
        row.push_back({text, x0 + 0.45 * slot, x0 + 0.45 * slot + std::min(0.42 * slot, text_width(text))});
        obj.pairs.emplace_back(f, std::move(text));
        ++values;
      } else {
        obj.pairs.emplace_back(f, std::nullopt);
      }
    }
    if (!spec_.compliant && values > 0 &&
        chance(1 - std::pow(1 - spec_.noncompliance_rate, static_cast<double>(values)))) {
      // A trailing value no field precedes.
      const double x1 = last_x0 + (last_has_value ? 0.9 : 0.45) * slot;
      row.push_back({fresh(ns.values), x1, x1 + 0.08 * slot});
    }
    emit_row(row);
    return obj;
  }

  const GeneratorSpec& spec_;
  std::mt19937_64 rng_;
  std::unordered_set<std::string> used_;
  std::vector<Phrase> phrases_;
  std::int64_t next_index_ = 1;
  int page_ = 1;
  double y_ = kMargin;
};

const std::vector<std::string>& field_words() {
  static const std::vector<std::string> words = {
      "Date", "Number", "Investigator", "Status", "Agency", "Officer", "Incident", "Location",
      "Complaint", "Disposition", "Allegation", "Finding", "Action", "Completed", "Received",
      "Category", "Rank", "Badge", "Unit", "District", "Witness", "Subject", "Charge", "Outcome",
      "Invoice", "Customer", "Vendor", "Amount", "Quantity", "Price", "Total", "Tax", "Discount",
      "Item", "Description", "Account", "Reference", "Due", "Issued", "Shipped", "Carrier",
      "Weight", "Origin", "Destination", "Route", "Driver", "Vehicle", "Permit", "Inspector",
      "Region", "Sector", "Facility", "Owner", "Tenant", "Address", "City", "County", "State",
      "Zone", "Parcel", "Method", "Priority", "Severity", "Remarks", "Reviewer", "Approver",
      "Contact", "Phone", "Email", "Department", "Division", "Program", "Grant", "Budget"};
  return words;
}

}  // namespace

GeneratedCorpus generate(const GeneratorSpec& spec) {
  validate_spec(spec);
  return Generator(spec).run();
}

GeneratorSpec sample_spec(std::uint64_t seed, const SpecShape& shape) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto coin = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };

  std::vector<std::string> pool = field_words();
  std::shuffle(pool.begin(), pool.end(), rng);
  std::size_t next_word = 0;
  auto take_fields = [&](int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
      if (next_word < pool.size()) {
        out.push_back(pool[next_word++]);
      } else {
        const auto k = next_word++ - pool.size();
        out.push_back(pool[k % pool.size()] + " " + pool[(k / pool.size() + 1 + k) % pool.size()]);
      }
    }
    return out;
  };
  const ValueStyle styles[] = {ValueStyle::kCode, ValueStyle::kNumber, ValueStyle::kDate, ValueStyle::kAmount};

  GeneratorSpec spec;
  spec.seed = seed;
  spec.records = uniform(shape.records.first, shape.records.second);
  spec.metadata_rows = uniform(1, 2);
  spec.kv_pairs_per_row = uniform(2, 3);

  std::vector<TemplateNode> nodes;
  auto add_table = [&](int cols, std::pair<int, int> tuples) {
    TemplateNode n{static_cast<int>(nodes.size()) + 1, NodeType::kTable, take_fields(cols), {}};
    NodeSpec ns;
    ns.tuples = tuples;
    ns.values = styles[uniform(0, 3)];
    if (shape.missing_values) {
      for (const auto& f : n.fields) {
        if (coin(0.3)) ns.missing[f] = 0.2;
      }
    }
    spec.nodes[n.id] = ns;
    nodes.push_back(n);
    return n.id;
  };
  auto add_kv = [&]() {
    TemplateNode n{static_cast<int>(nodes.size()) + 1, NodeType::kKeyValue, take_fields(uniform(2, 5)), {}};
    NodeSpec ns;
    ns.values = styles[uniform(0, 3)];
    const auto per_row = static_cast<std::size_t>(spec.kv_pairs_per_row);
    const std::size_t last_row = n.fields.size() - (n.fields.size() - 1) / per_row * per_row;
    if (shape.missing_values && last_row >= 2 && coin(0.4)) ns.missing[n.fields.back()] = 1.0;
    spec.nodes[n.id] = ns;
    nodes.push_back(n);
    return n.id;
  };
  auto leaf_tuples = [&]() {
    const int lo = uniform(1, 2);
    return std::pair<int, int>{lo, lo + uniform(0, 3)};
  };

  std::vector<int> root;
  const int count = uniform(shape.root_nodes.first, shape.root_nodes.second);
  const int nested_at = shape.nested ? uniform(0, count - 1) : -1;
  bool previous_kv = false;
  for (int i = 0; i < count; ++i) {
    if (i == nested_at || !shape.allow_key_value ||
        (shape.allow_table && (previous_kv || !coin(0.4)))) {
      if (i == nested_at) {
        const int parent_cols = uniform(2, 4);
        const int parent = add_table(parent_cols, {2, uniform(2, 4)});
        spec.nodes[parent].missing.erase(nodes[static_cast<std::size_t>(parent) - 1].fields.front());
        std::vector<int> kids;
        const int n_kids = uniform(1, 2);
        bool kid_kv = false;
        for (int k = 0; k < n_kids; ++k) {
          int kid = 0;
          if (shape.allow_key_value && !kid_kv && coin(0.4)) {
            kid = add_kv();
            kid_kv = true;
          } else {
            kid = add_table(uniform(parent_cols + 1, std::min<int>(kMaxTableColumns, parent_cols + 3)),
                            leaf_tuples());
            spec.nodes[kid].repeat = {1, uniform(1, 2)};
            kid_kv = false;
          }
          kids.push_back(kid);
        }
        nodes[static_cast<std::size_t>(parent) - 1].children = kids;
        root.push_back(parent);
      } else {
        root.push_back(add_table(uniform(2, 6), leaf_tuples()));
      }
      previous_kv = false;
    } else {
      root.push_back(add_kv());
      previous_kv = true;
    }
  }
  spec.tmpl = Template(std::move(nodes), std::move(root));
  validate_spec(spec);
  return spec;
}

std::vector<std::string> compliance_violations(const DocumentStream& doc, const Template& tmpl) {
  std::vector<std::string> out;
  const auto& rows = doc.rows();
  for (const auto& rec : separate_records(rows, tmpl)) {
    for (const auto& b : separate_blocks(rows, rec, tmpl).blocks) {
      if (b.type == NodeType::kTable) {
        const Row& header = b.rows.front();
        for (std::size_t r = 1; r < b.rows.size(); ++r) {
          for (const auto& q : b.rows[r].phrases) {
            const auto hits = std::count_if(header.phrases.begin(), header.phrases.end(),
                                            [&](const Phrase& h) { return vertically_aligned(h, q); });
            if (hits != 1) {
              out.push_back("phrase " + std::to_string(q.index) + " '" + q.text + "' is aligned with " +
                            std::to_string(hits) + " header phrases");
            }
          }
        }
      } else {
        const std::set<std::string> fields(b.fields.begin(), b.fields.end());
        const Phrase* prev = nullptr;
        for (const auto& row : b.rows) {
          for (const auto& p : row.phrases) {
            if (!fields.count(p.text) && (!prev || !fields.count(prev->text))) {
              out.push_back("phrase " + std::to_string(p.index) + " '" + p.text +
                            "' is not preceded by a field");
            }
            prev = &p;
          }
        }
      }
    }
  }
  return out;
}

std::vector<KeyValuePair> flatten_kv(const ExtractionObject& object) {
  std::vector<KeyValuePair> out;
  if (object.type == NodeType::kTable) {
    for (const auto& tuple : object.tuples) {
      for (std::size_t c = 0; c < tuple.size() && c < object.fields.size(); ++c) {
        out.emplace_back(object.fields[c], tuple[c]);
      }
    }
  } else {
    out = object.pairs;
  }
  for (const auto& child : object.children) {
    auto sub = flatten_kv(child);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::vector<KeyValuePair> flatten_kv(const DocumentExtraction& extraction) {
  std::vector<KeyValuePair> out;
  for (const auto& rec : extraction.records) {
    for (const auto& o : rec.objects) {
      auto sub = flatten_kv(o);
      out.insert(out.end(), sub.begin(), sub.end());
    }
  }
  return out;
}

KeyValueBag to_bag(std::span<const KeyValuePair> pairs) {
  KeyValueBag bag;
  for (const auto& p : pairs) ++bag[p];
  return bag;
}

PairScore score(const KeyValueBag& predicted, const KeyValueBag& truth) {
  PairScore s;
  for (const auto& [_, n] : predicted) s.predicted += n;
  for (const auto& [_, n] : truth) s.truth += n;
  for (const auto& [pair, n] : predicted) {
    auto it = truth.find(pair);
    if (it != truth.end()) s.matched += std::min(n, it->second);
  }
  if (s.predicted == 0 && s.truth == 0) {
    s.precision = s.recall = 1.0;
    return s;
  }
  s.precision = s.predicted ? static_cast<double>(s.matched) / static_cast<double>(s.predicted) : 0.0;
  s.recall = s.truth ? static_cast<double>(s.matched) / static_cast<double>(s.truth) : 0.0;
  return s;
}

ScoreReport score_corpus(std::span<const DocumentExtraction> predicted,
                         std::span<const DocumentExtraction> truth) {
  ScoreReport report;
  for (const auto& t : truth) {
    auto it = std::find_if(predicted.begin(), predicted.end(),
                           [&](const DocumentExtraction& p) { return p.source_id == t.source_id; });
    const auto truth_bag = to_bag(flatten_kv(t));
    const auto pred_bag = it == predicted.end() ? KeyValueBag{} : to_bag(flatten_kv(*it));
    report.documents.push_back({t.source_id, score(pred_bag, truth_bag)});
  }
  if (!report.documents.empty()) {
    for (const auto& d : report.documents) {
      report.precision += d.score.precision;
      report.recall += d.score.recall;
    }
    report.precision /= static_cast<double>(report.documents.size());
    report.recall /= static_cast<double>(report.documents.size());
  }
  return report;
}

std::string report_json(const ScoreReport& report) {
  json j;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["documents"] = json::array();
  for (const auto& d : report.documents) {
    j["documents"].push_back({{"source", d.source},
                              {"precision", d.score.precision},
                              {"recall", d.score.recall},
                              {"predicted", d.score.predicted},
                              {"truth", d.score.truth},
                              {"matched", d.score.matched}});
  }
  return j.dump(2) + "\n";
}

std::string report_table(const ScoreReport& report) {
  std::size_t width = 8;
  for (const auto& d : report.documents) width = std::max(width, d.source.size());
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(static_cast<int>(width)) << "document" << "  precision  recall  matched  predicted  truth\n";
  for (const auto& d : report.documents) {
    out << std::left << std::setw(static_cast<int>(width)) << d.source << "  " << std::right
        << std::setw(9) << d.score.precision << "  " << std::setw(6) << d.score.recall << "  "
        << std::setw(7) << d.score.matched << "  " << std::setw(9) << d.score.predicted << "  "
        << std::setw(5) << d.score.truth << "\n";
  }
  out << std::left << std::setw(static_cast<int>(width)) << "mean" << "  " << std::right << std::setw(9)
      << report.precision << "  " << std::setw(6) << report.recall << "\n";
  return out.str();
}

}  // namespace formtree
