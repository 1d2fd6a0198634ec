#include "formtree/extraction.h"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "formtree/errors.h"
#include "json.hpp"

namespace formtree {

using json = nlohmann::ordered_json;

const char* to_string(MetadataRelation relation) {
  switch (relation) {
    case MetadataRelation::kAbove: return "above";
    case MetadataRelation::kBelow: return "below";
    case MetadataRelation::kSameRow: return "same-row";
  }
  return "?";
}

namespace {

using TextSet = std::unordered_set<std::string>;

bool covers(const TextSet& have, const std::vector<std::string>& fields) {
  return std::all_of(fields.begin(), fields.end(),
                     [&](const std::string& f) { return have.count(f) > 0; });
}

MetadataEntry metadata_of(const Phrase& p, std::optional<int> node, MetadataRelation rel) {
  return {p.text, p.page, p.bbox, node, rel};
}

}  // namespace

std::vector<RecordSpan> separate_records(std::span<const Row> rows, const Template& tmpl) {
  if (tmpl.empty()) throw PipelineError("template mismatch: empty template");
  const auto& order = tmpl.pre_order();
  const int first = order.front();
  const auto& first_fields = tmpl.node(first).fields;

  std::vector<RecordSpan> records;
  std::set<int> visited;
  TextSet acc;
  std::size_t record_start = 0;
  bool first_seen = false;

  auto visits = [&](const TextSet& texts) {
    std::vector<int> hit;
    for (int id : order) {
      if (covers(texts, tmpl.node(id).fields)) hit.push_back(id);
    }
    return hit;
  };

  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& p : rows[i].phrases) acc.insert(p.text);
    auto hit = visits(acc);
    if (hit.empty()) continue;
    const bool restarts = std::find(hit.begin(), hit.end(), first) != hit.end();
    if (restarts) first_seen = true;
    if (restarts && visited.size() == order.size()) {
      // The new record starts at the first row of the shortest suffix that
      // still holds every field of the first node.
      std::size_t start = i;
      TextSet suffix;
      for (std::size_t s = i + 1; s-- > record_start;) {
        for (const auto& p : rows[s].phrases) suffix.insert(p.text);
        if (covers(suffix, first_fields)) {
          start = s;
          break;
        }
      }
      if (start > record_start) {
        records.push_back({record_start, start - 1, records.size() + 1, false});
        record_start = start;
      }
      visited.clear();
      TextSet fresh;
      for (std::size_t s = start; s <= i; ++s) {
        for (const auto& p : rows[s].phrases) fresh.insert(p.text);
      }
      for (int id : visits(fresh)) visited.insert(id);
    } else {
      visited.insert(hit.begin(), hit.end());
    }
    acc.clear();
  }
  if (!first_seen) throw PipelineError("template mismatch: first template node never found");
  if (!rows.empty()) {
    RecordSpan last{record_start, rows.size() - 1, records.size() + 1, false};
    if (visited.size() < order.size()) {
      last.partial = true;
      spdlog::warn("trailing record {} visits only {} of {} template nodes", last.ordinal,
                   visited.size(), order.size());
    }
    records.push_back(last);
  }
  return records;
}

BlockSeparation separate_blocks(std::span<const Row> rows, const RecordSpan& record,
                                const Template& tmpl) {
  enum class Kind { kKey, kKeyValue, kValue, kMetadata };
  const std::size_t n = record.size();
  std::vector<Kind> kind(n, Kind::kValue);
  std::vector<int> node_of(n, 0);

  for (std::size_t r = 0; r < n; ++r) {
    const Row& row = rows[record.first_row + r];
    TextSet texts;
    for (const auto& p : row.phrases) texts.insert(p.text);
    int best_table = 0;
    std::size_t best_table_size = 0;
    int best_kv = 0;
    std::size_t best_kv_hits = 0;
    for (int id : tmpl.pre_order()) {
      const auto& node = tmpl.node(id);
      if (node.type == NodeType::kTable) {
        if (covers(texts, node.fields) && node.fields.size() > best_table_size) {
          best_table = id;
          best_table_size = node.fields.size();
        }
      } else {
        std::size_t hits = 0;
        for (const auto& f : node.fields) hits += texts.count(f);
        if (hits > best_kv_hits) {
          best_kv = id;
          best_kv_hits = hits;
        }
      }
    }
    if (best_table) {
      kind[r] = Kind::kKey;
      node_of[r] = best_table;
    } else if (best_kv) {
      kind[r] = Kind::kKeyValue;
      node_of[r] = best_kv;
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> members;  // key row -> value rows
  for (std::size_t r = 0; r < n; ++r) {
    if (kind[r] == Kind::kKey) members[r];
  }
  BlockSeparation out;
  for (std::size_t r = 0; r < n; ++r) {
    if (kind[r] != Kind::kValue) continue;
    const Row& row = rows[record.first_row + r];
    std::optional<std::size_t> closest;
    for (std::size_t j = r; j-- > 0;) {
      if (kind[j] == Kind::kKey) {
        closest = j;
        break;
      }
    }
    if (closest && rows_well_aligned(rows[record.first_row + *closest], row)) {
      members[*closest].push_back(r);
      continue;
    }
    std::optional<std::size_t> nesting;
    for (std::size_t j = r; j-- > 0;) {
      if (kind[j] == Kind::kKey && tmpl.has_children(node_of[j]) &&
          rows_well_aligned(rows[record.first_row + j], row)) {
        nesting = j;
        break;
      }
    }
    if (nesting) {
      members[*nesting].push_back(r);
    } else {
      kind[r] = Kind::kMetadata;
      out.metadata_rows.push_back(record.first_row + r);
    }
  }

  for (std::size_t r = 0; r < n; ++r) {
    const int id = node_of[r];
    if (kind[r] == Kind::kKey) {
      Block b{id, NodeType::kTable, tmpl.node(id).fields, {rows[record.first_row + r]}};
      for (std::size_t v : members[r]) b.rows.push_back(rows[record.first_row + v]);
      out.blocks.push_back(std::move(b));
    } else if (kind[r] == Kind::kKeyValue) {
      // Consecutive KV rows of the same node form one block.
      if (r > 0 && kind[r - 1] == Kind::kKeyValue && node_of[r - 1] == id) {
        auto it = std::find_if(out.blocks.rbegin(), out.blocks.rend(), [&](const Block& b) {
          return b.type == NodeType::kKeyValue && b.last_row() == rows[record.first_row + r - 1].row_index;
        });
        it->rows.push_back(rows[record.first_row + r]);
      } else {
        out.blocks.push_back({id, NodeType::kKeyValue, tmpl.node(id).fields, {rows[record.first_row + r]}});
      }
    }
  }
  std::stable_sort(out.blocks.begin(), out.blocks.end(),
                   [](const Block& a, const Block& b) { return a.first_row() < b.first_row(); });
  return out;
}

ExtractionObject extract_table(const Block& block, std::vector<MetadataEntry>* sidecar) {
  ExtractionObject obj;
  obj.node_id = block.node_id;
  obj.type = NodeType::kTable;
  obj.fields = block.fields;
  obj.first_row = block.first_row();
  obj.last_row = block.last_row();

  const Row& header = block.rows.front();
  std::vector<const Phrase*> columns(block.fields.size(), nullptr);
  for (const auto& p : header.phrases) {
    auto it = std::find(block.fields.begin(), block.fields.end(), p.text);
    const auto col = static_cast<std::size_t>(it - block.fields.begin());
    if (it != block.fields.end() && !columns[col]) {
      columns[col] = &p;
    } else if (sidecar) {
      sidecar->push_back(metadata_of(p, block.node_id, MetadataRelation::kSameRow));
    }
  }

  for (std::size_t r = 1; r < block.rows.size(); ++r) {
    std::vector<Cell> tuple(block.fields.size());
    for (const auto& q : block.rows[r].phrases) {
      std::optional<std::size_t> best;
      double best_overlap = -1;
      for (std::size_t c = 0; c < columns.size(); ++c) {
        if (!columns[c] || !vertically_aligned(*columns[c], q)) continue;
        const double ov = x_overlap(*columns[c], q);
        if (!best || ov > best_overlap ||
            (ov == best_overlap && columns[c]->bbox.x1 < columns[*best]->bbox.x1)) {
          best = c;
          best_overlap = ov;
        }
      }
      if (!best) {
        spdlog::debug("table value '{}' is aligned with no field of node {}", q.text, block.node_id);
        if (sidecar) sidecar->push_back(metadata_of(q, block.node_id, MetadataRelation::kSameRow));
        continue;
      }
      auto& cell = tuple[*best];
      cell = cell ? *cell + " " + q.text : q.text;
    }
    obj.tuples.push_back(std::move(tuple));
  }
  return obj;
}

ExtractionObject extract_kv(const Block& block, std::vector<MetadataEntry>* sidecar) {
  ExtractionObject obj;
  obj.node_id = block.node_id;
  obj.type = NodeType::kKeyValue;
  obj.fields = block.fields;
  if (!block.rows.empty()) {
    obj.first_row = block.first_row();
    obj.last_row = block.last_row();
  }
  std::vector<const Phrase*> phrases;
  for (const auto& row : block.rows) {
    for (const auto& p : row.phrases) phrases.push_back(&p);
  }
  const std::set<std::string> fields(block.fields.begin(), block.fields.end());
  auto is_field = [&](std::size_t i) { return fields.count(phrases[i]->text) > 0; };

  std::vector<bool> seen(phrases.size(), false);
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (seen[i]) continue;
    if (!is_field(i)) {
      spdlog::debug("key-value phrase '{}' has no preceding field", phrases[i]->text);
      if (sidecar) sidecar->push_back(metadata_of(*phrases[i], block.node_id, MetadataRelation::kSameRow));
      continue;
    }
    if (i + 1 < phrases.size() && !is_field(i + 1)) {
      obj.pairs.emplace_back(phrases[i]->text, phrases[i + 1]->text);
      seen[i + 1] = true;
    } else {
      obj.pairs.emplace_back(phrases[i]->text, std::nullopt);
    }
  }
  return obj;
}

std::vector<ExtractionObject> assemble_objects(std::vector<ExtractionObject> objects,
                                               const Template& tmpl) {
  std::stable_sort(objects.begin(), objects.end(),
                   [](const ExtractionObject& a, const ExtractionObject& b) { return a.first_row < b.first_row; });
  auto is_ancestor = [&](int ancestor, int id) {
    for (auto p = tmpl.parent_of(id); p; p = tmpl.parent_of(*p)) {
      if (*p == ancestor) return true;
    }
    return false;
  };
  const std::size_t n = objects.size();
  std::vector<int> parent(n, -1);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = j; i-- > 0;) {
      const bool overlaps = objects[i].first_row < objects[j].first_row &&
                            objects[i].last_row > objects[j].first_row;
      if (overlaps && is_ancestor(objects[i].node_id, objects[j].node_id)) {
        parent[j] = static_cast<int>(i);
        break;
      }
    }
  }
  // Attach deepest objects first so every child is complete before it moves.
  std::vector<std::vector<std::size_t>> kids(n);
  std::vector<std::size_t> roots;
  for (std::size_t j = 0; j < n; ++j) {
    if (parent[j] < 0) roots.push_back(j);
    else kids[static_cast<std::size_t>(parent[j])].push_back(j);
  }
  std::function<ExtractionObject(std::size_t)> build = [&](std::size_t i) {
    ExtractionObject o = std::move(objects[i]);
    for (std::size_t k : kids[i]) o.children.push_back(build(k));
    return o;
  };
  std::vector<ExtractionObject> out;
  for (std::size_t r : roots) out.push_back(build(r));
  return out;
}

DocumentExtraction extract_document(const DocumentStream& doc, const Template& tmpl) {
  DocumentExtraction out;
  out.source_id = doc.source_id();
  const auto& rows = doc.rows();
  if (rows.empty()) return out;

  struct Span {
    std::size_t first, last;
    int node;
  };
  std::vector<Span> spans;
  std::vector<std::size_t> metadata_rows;

  for (const auto& rec : separate_records(rows, tmpl)) {
    auto sep = separate_blocks(rows, rec, tmpl);
    std::vector<ExtractionObject> objects;
    for (const auto& b : sep.blocks) {
      objects.push_back(b.type == NodeType::kTable ? extract_table(b, &out.metadata)
                                                   : extract_kv(b, &out.metadata));
      spans.push_back({b.first_row(), b.last_row(), b.node_id});
    }
    metadata_rows.insert(metadata_rows.end(), sep.metadata_rows.begin(), sep.metadata_rows.end());
    out.records.push_back({rec.ordinal, rec.partial, assemble_objects(std::move(objects), tmpl),
                           rows[rec.first_row].first_index(),
                           rows[rec.last_row].phrases.back().index});
  }

  for (std::size_t r : metadata_rows) {
    std::optional<int> node;
    MetadataRelation rel = MetadataRelation::kAbove;
    const Span* before = nullptr;
    const Span* after = nullptr;
    for (const auto& s : spans) {
      if (s.first < r && (!before || s.first > before->first)) before = &s;
      if (s.first > r && (!after || s.first < after->first)) after = &s;
    }
    if (before) {
      node = before->node;
      rel = MetadataRelation::kBelow;
    } else if (after) {
      node = after->node;
    }
    for (const auto& p : rows[r].phrases) out.metadata.push_back(metadata_of(p, node, rel));
  }
  std::stable_sort(out.metadata.begin(), out.metadata.end(),
                   [](const MetadataEntry& a, const MetadataEntry& b) {
                     if (a.page != b.page) return a.page < b.page;
                     if (a.bbox.y1 != b.bbox.y1) return a.bbox.y1 < b.bbox.y1;
                     return a.bbox.x1 < b.bbox.x1;
                   });
  return out;
}

namespace {

json cell_json(const Cell& c) { return c ? json(*c) : json(nullptr); }

Cell cell_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

json object_json(const ExtractionObject& o) {
  json j;
  j["node_id"] = o.node_id;
  j["type"] = to_string(o.type);
  j["fields"] = o.fields;
  json content = json::array();
  if (o.type == NodeType::kTable) {
    for (const auto& t : o.tuples) {
      json row = json::array();
      for (const auto& c : t) row.push_back(cell_json(c));
      content.push_back(std::move(row));
    }
  } else {
    for (const auto& [k, v] : o.pairs) content.push_back(json::array({k, cell_json(v)}));
  }
  j["content"] = std::move(content);
  j["children"] = json::array();
  for (const auto& c : o.children) j["children"].push_back(object_json(c));
  return j;
}

ExtractionObject object_from(const json& j) {
  ExtractionObject o;
  o.node_id = j.at("node_id").get<int>();
  o.type = node_type_from_string(j.at("type").get<std::string>());
  o.fields = j.at("fields").get<std::vector<std::string>>();
  for (const auto& item : j.at("content")) {
    if (o.type == NodeType::kTable) {
      std::vector<Cell> t;
      for (const auto& c : item) t.push_back(cell_from(c));
      o.tuples.push_back(std::move(t));
    } else {
      o.pairs.emplace_back(item.at(0).get<std::string>(), cell_from(item.at(1)));
    }
  }
  for (const auto& c : j.at("children")) o.children.push_back(object_from(c));
  return o;
}

}  // namespace

std::string serialize_extraction(const DocumentExtraction& extraction) {
  json j;
  j["source"] = extraction.source_id;
  j["records"] = json::array();
  for (const auto& rec : extraction.records) {
    json r;
    r["ordinal"] = rec.ordinal;
    r["partial"] = rec.partial;
    r["first_index"] = rec.first_index;
    r["last_index"] = rec.last_index;
    r["objects"] = json::array();
    for (const auto& o : rec.objects) r["objects"].push_back(object_json(o));
    j["records"].push_back(std::move(r));
  }
  j["metadata"] = json::array();
  for (const auto& m : extraction.metadata) {
    json e;
    e["text"] = m.text;
    e["page"] = m.page;
    e["bbox"] = {m.bbox.x1, m.bbox.y1, m.bbox.x2, m.bbox.y2};
    e["node_id"] = m.nearest_node ? json(*m.nearest_node) : json(nullptr);
    e["relation"] = to_string(m.relation);
    j["metadata"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

DocumentExtraction parse_extraction(const std::string& text) {
  try {
    const auto j = json::parse(text);
    DocumentExtraction out;
    out.source_id = j.value("source", "");
    for (const auto& r : j.at("records")) {
      RecordExtraction rec;
      rec.ordinal = r.at("ordinal").get<std::size_t>();
      rec.partial = r.value("partial", false);
      rec.first_index = r.value("first_index", std::int64_t{0});
      rec.last_index = r.value("last_index", std::int64_t{0});
      for (const auto& o : r.at("objects")) rec.objects.push_back(object_from(o));
      out.records.push_back(std::move(rec));
    }
    for (const auto& m : j.value("metadata", json::array())) {
      MetadataEntry e;
      e.text = m.at("text").get<std::string>();
      e.page = m.at("page").get<int>();
      const auto& b = m.at("bbox");
      e.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
      if (!m.at("node_id").is_null()) e.nearest_node = m.at("node_id").get<int>();
      const auto rel = m.at("relation").get<std::string>();
      e.relation = rel == "below" ? MetadataRelation::kBelow
                   : rel == "same-row" ? MetadataRelation::kSameRow
                                       : MetadataRelation::kAbove;
      out.metadata.push_back(std::move(e));
    }
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed extraction output: ") + e.what());
  }
}

}  // namespace formtree
