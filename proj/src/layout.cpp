#include "attrgan/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "attrgan/errors.hpp"

namespace attrgan {

using nlohmann::json;
using nlohmann::ordered_json;

Vocabulary::Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  for (size_t i = 0; i < names_.size(); ++i) {
    require(!names_[i].empty(), ErrorCode::kSchemaError, "empty vocabulary entry at line " +
                                                             std::to_string(i + 1));
    const bool inserted = index_.emplace(names_[i], static_cast<int>(i)).second;
    require(inserted, ErrorCode::kSchemaError, "duplicate vocabulary entry '" + names_[i] + "'");
  }
}

const std::string& Vocabulary::name(int index) const {
  require(index >= 0 && index < size(), ErrorCode::kUnknownIndex,
          "index " + std::to_string(index) + " outside vocabulary of " + std::to_string(size()));
  return names_[static_cast<size_t>(index)];
}

int Vocabulary::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

Vocabulary read_vocabulary(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIoError, "cannot open " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  while (!names.empty() && names.back().empty()) names.pop_back();
  return Vocabulary(std::move(names));
}

void write_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIoError, "cannot write " + path);
  for (const auto& n : vocab.names()) out << n << '\n';
}

namespace {

bool bbox_ok(const BBox& b) {
  return 0.0 <= b.x0 && b.x0 < b.x1 && b.x1 <= 1.0 && 0.0 <= b.y0 && b.y0 < b.y1 && b.y1 <= 1.0;
}

std::string bbox_string(const BBox& b) {
  std::ostringstream os;
  os << "(" << b.x0 << "," << b.y0 << "," << b.x1 << "," << b.y1 << ")";
  return os.str();
}

}  // namespace

void validate_layout(const Layout& layout, int num_categories, int num_attributes) {
  require(layout.canvas.width > 0 && layout.canvas.height > 0 &&
              layout.canvas.width == layout.canvas.height,
          ErrorCode::kInvalidCanvas,
          "canvas must be square and positive, got " + std::to_string(layout.canvas.width) + "x" +
              std::to_string(layout.canvas.height));
  require(!layout.objects.empty(), ErrorCode::kEmptyLayout, "layout has no objects");
  require(layout.size() <= kMaxObjects, ErrorCode::kTooManyObjects,
          std::to_string(layout.size()) + " objects, at most " + std::to_string(kMaxObjects));
  for (int i = 0; i < layout.size(); ++i) {
    const ObjectSpec& o = layout.objects[static_cast<size_t>(i)];
    const std::string where = "object " + std::to_string(i);
    require(bbox_ok(o.bbox), ErrorCode::kInvalidBBox, where + ": bbox " + bbox_string(o.bbox));
    require(o.category >= 0 && o.category < num_categories, ErrorCode::kUnknownIndex,
            where + ": category " + std::to_string(o.category));
    require(static_cast<int>(o.attributes.size()) <= kMaxAttributes, ErrorCode::kTooManyAttributes,
            where + ": " + std::to_string(o.attributes.size()) + " attributes");
    std::set<int> seen;
    for (int a : o.attributes) {
      require(a >= 0 && a < num_attributes, ErrorCode::kUnknownIndex,
              where + ": attribute " + std::to_string(a));
      require(seen.insert(a).second, ErrorCode::kDuplicateAttribute,
              where + ": attribute " + std::to_string(a) + " repeated");
    }
  }
}

Layout shift_layout(const Layout& layout, const ShiftSpec& shifts) {
  require(shifts.dx.size() == layout.objects.size(), ErrorCode::kLengthMismatch,
          std::to_string(shifts.dx.size()) + " shifts for " + std::to_string(layout.size()) +
              " objects");
  Layout out = layout;
  for (size_t i = 0; i < out.objects.size(); ++i) {
    const double dx = shifts.dx[i];
    require(std::isfinite(dx) && std::abs(dx) <= 1.0, ErrorCode::kInvalidArgument,
            "shift " + std::to_string(dx) + " outside [-1,1]");
    BBox& b = out.objects[i].bbox;
    if (dx == 0.0) continue;
    const double x0 = b.x0 + dx, x1 = b.x1 + dx;
    if (x0 >= 0.0 && x1 <= 1.0) {
      b.x0 = x0;
      b.x1 = x1;
      continue;
    }
    require(shifts.policy == ShiftPolicy::kClamp, ErrorCode::kShiftOutOfCanvas,
            "object " + std::to_string(i) + " leaves the canvas with dx=" + std::to_string(dx));
    const double w = b.width();
    if (x1 > 1.0) {
      b.x1 = 1.0;
      b.x0 = 1.0 - w;
    } else {
      b.x0 = 0.0;
      b.x1 = w;
    }
  }
  return out;
}

ShiftSpec sample_shifts(const Layout& layout, double max_magnitude, Rng& rng, bool global) {
  require(max_magnitude >= 0.0 && max_magnitude <= 1.0, ErrorCode::kInvalidArgument,
          "shift magnitude must lie in [0,1]");
  ShiftSpec s;
  s.dx.resize(layout.objects.size(), 0.0);
  if (max_magnitude == 0.0) return s;
  if (global) {
    std::fill(s.dx.begin(), s.dx.end(), rng.uniform(-max_magnitude, max_magnitude));
  } else {
    for (double& d : s.dx) d = rng.uniform(-max_magnitude, max_magnitude);
  }
  return s;
}

CellRect bbox_to_grid(const BBox& bbox, int grid_size) {
  require(grid_size >= 1, ErrorCode::kInvalidArgument, "grid size must be positive");
  const int s = grid_size;
  auto lo = [s](double v) { return std::clamp(static_cast<int>(std::floor(v * s)), 0, s - 1); };
  auto hi = [s](double v, int start) {
    return std::clamp(static_cast<int>(std::ceil(v * s)), start + 1, s);
  };
  CellRect r;
  r.row0 = lo(bbox.y0);
  r.col0 = lo(bbox.x0);
  r.row1 = hi(bbox.y1, r.row0);
  r.col1 = hi(bbox.x1, r.col0);
  return r;
}

namespace {

[[noreturn]] void parse_fail(const std::string& msg) { fail(ErrorCode::kParseError, msg); }

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) parse_fail(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(where + ": missing field '" + key + "'");
  return *it;
}

std::string line_col(std::string_view text, size_t byte) {
  int line = 1, col = 1;
  for (size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + " column " + std::to_string(col);
}

}  // namespace

Layout parse_layout(std::string_view text, const Vocabularies& vocab) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    parse_fail(line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
  Layout layout;
  const json& canvas = field(doc, "canvas", "layout");
  const json& w = field(canvas, "width", "canvas");
  const json& h = field(canvas, "height", "canvas");
  if (!w.is_number_integer() || !h.is_number_integer())
    parse_fail("canvas: width and height must be integers");
  layout.canvas = {w.get<int>(), h.get<int>()};

  const json& objects = field(doc, "objects", "layout");
  if (!objects.is_array()) parse_fail("objects: expected an array");
  for (size_t i = 0; i < objects.size(); ++i) {
    const std::string where = "objects[" + std::to_string(i) + "]";
    const json& o = objects[i];
    ObjectSpec spec;
    const json& cat = field(o, "category", where);
    if (!cat.is_string()) parse_fail(where + ".category: expected a string");
    spec.category = vocab.categories.find(cat.get<std::string>());
    require(spec.category >= 0, ErrorCode::kUnknownIndex,
            where + ".category: unknown category '" + cat.get<std::string>() + "'");
    if (auto it = o.find("attributes"); it != o.end()) {
      if (!it->is_array()) parse_fail(where + ".attributes: expected an array");
      for (const auto& a : *it) {
        if (!a.is_string()) parse_fail(where + ".attributes: expected strings");
        const int idx = vocab.attributes.find(a.get<std::string>());
        require(idx >= 0, ErrorCode::kUnknownIndex,
                where + ".attributes: unknown attribute '" + a.get<std::string>() + "'");
        spec.attributes.push_back(idx);
      }
    }
    std::sort(spec.attributes.begin(), spec.attributes.end());
    const json& bb = field(o, "bbox", where);
    if (!bb.is_array() || bb.size() != 4) parse_fail(where + ".bbox: expected 4 numbers");
    for (const auto& v : bb)
      if (!v.is_number()) parse_fail(where + ".bbox: expected 4 numbers");
    spec.bbox = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
    layout.objects.push_back(std::move(spec));
  }
  validate_layout(layout, vocab.categories.size(), vocab.attributes.size());
  return layout;
}

std::string serialize_layout(const Layout& layout, const Vocabularies& vocab) {
  validate_layout(layout, vocab.categories.size(), vocab.attributes.size());
  ordered_json doc;
  doc["canvas"] = {{"width", layout.canvas.width}, {"height", layout.canvas.height}};
  doc["objects"] = ordered_json::array();
  for (const auto& o : layout.objects) {
    std::vector<int> attrs = o.attributes;
    std::sort(attrs.begin(), attrs.end());
    ordered_json names = ordered_json::array();
    for (int a : attrs) names.push_back(vocab.attributes.name(a));
    ordered_json obj;
    obj["category"] = vocab.categories.name(o.category);
    obj["attributes"] = std::move(names);
    obj["bbox"] = {o.bbox.x0, o.bbox.y0, o.bbox.x1, o.bbox.y1};
    doc["objects"].push_back(std::move(obj));
  }
  return doc.dump(2) + "\n";
}

std::int64_t AttributePrior::count(int category, int attribute) const {
  auto c = counts.find(category);
  if (c == counts.end()) return 0;
  auto a = c->second.find(attribute);
  return a == c->second.end() ? 0 : a->second;
}

std::map<int, std::int64_t> AttributePrior::attribute_totals() const {
  std::map<int, std::int64_t> totals;
  for (const auto& [c, m] : counts)
    for (const auto& [a, n] : m) totals[a] += n;
  return totals;
}

AttributePrior estimate_attribute_prior(
    std::span<const std::pair<int, std::vector<int>>> objects) {
  AttributePrior prior;
  for (const auto& [category, attrs] : objects) {
    if (attrs.empty()) continue;
    auto& row = prior.counts[category];
    for (int a : attrs) ++row[a];
  }
  return prior;
}

std::vector<int> sample_attributes(const AttributePrior& prior, int category, int n, Rng& rng) {
  require(n >= 0, ErrorCode::kInvalidArgument, "attribute count must be nonnegative");
  std::vector<int> out;
  auto it = prior.counts.find(category);
  if (n == 0 || it == prior.counts.end()) return out;
  std::vector<std::pair<int, std::int64_t>> pool;
  for (const auto& [a, c] : it->second)
    if (c > 0) pool.emplace_back(a, c);
  while (static_cast<int>(out.size()) < n && !pool.empty()) {
    std::int64_t total = 0;
    for (const auto& p : pool) total += p.second;
    const std::uint64_t r = rng.below(static_cast<std::uint64_t>(total));
    std::uint64_t acc = 0;
    size_t k = 0;
    for (; k < pool.size(); ++k) {
      acc += static_cast<std::uint64_t>(pool[k].second);
      if (r < acc) break;
    }
    out.push_back(pool[k].first);
    pool.erase(pool.begin() + static_cast<long>(k));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string serialize_prior(const AttributePrior& prior, const Vocabularies& vocab) {
  ordered_json doc = ordered_json::object();
  for (const auto& [c, row] : prior.counts) {
    ordered_json m = ordered_json::object();
    for (const auto& [a, n] : row) m[vocab.attributes.name(a)] = n;
    doc[vocab.categories.name(c)] = std::move(m);
  }
  return doc.dump(2) + "\n";
}

AttributePrior parse_prior(std::string_view text, const Vocabularies& vocab) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    parse_fail(std::string("prior: ") + e.what());
  }
  if (!doc.is_object()) parse_fail("prior: expected an object");
  AttributePrior prior;
  for (const auto& [cname, row] : doc.items()) {
    const int c = vocab.categories.find(cname);
    require(c >= 0, ErrorCode::kUnknownIndex, "prior: unknown category '" + cname + "'");
    if (!row.is_object()) parse_fail("prior." + cname + ": expected an object");
    auto& out = prior.counts[c];
    for (const auto& [aname, n] : row.items()) {
      const int a = vocab.attributes.find(aname);
      require(a >= 0, ErrorCode::kUnknownIndex, "prior: unknown attribute '" + aname + "'");
      if (!n.is_number_integer() || n.get<std::int64_t>() < 0)
        parse_fail("prior." + cname + "." + aname + ": expected a nonnegative integer");
      out[a] = n.get<std::int64_t>();
    }
  }
  return prior;
}

std::vector<double> attribute_weights(const AttributePrior& prior, int num_attributes, double lo,
                                      double hi) {
  std::vector<double> w(static_cast<size_t>(num_attributes), hi);
  const auto totals = prior.attribute_totals();
  std::vector<double> nonzero;
  for (const auto& [a, n] : totals)
    if (n > 0 && a >= 0 && a < num_attributes) nonzero.push_back(static_cast<double>(n));
  if (nonzero.empty()) {
    std::fill(w.begin(), w.end(), 1.0);
    return w;
  }
  std::sort(nonzero.begin(), nonzero.end());
  const size_t k = nonzero.size();
  const double median = k % 2 ? nonzero[k / 2] : 0.5 * (nonzero[k / 2 - 1] + nonzero[k / 2]);
  for (const auto& [a, n] : totals)
    if (n > 0 && a >= 0 && a < num_attributes)
      w[static_cast<size_t>(a)] = std::clamp(median / static_cast<double>(n), lo, hi);
  return w;
}

}  // namespace attrgan
