#include "attrgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "attrgan/config.hpp"
#include "attrgan/errors.hpp"

namespace attrgan {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::vector<std::string> kShapes{"rectangle", "ellipse", "triangle"};
const std::vector<std::string> kColors{"red", "green", "blue", "yellow", "white"};
const std::vector<std::string> kSizes{"small", "large"};

constexpr std::array<double, 3> kBackground{0.5, 0.5, 0.5};
constexpr std::array<double, 3> kDefaultGray{0.25, 0.25, 0.25};
constexpr std::array<std::array<double, 3>, 5> kColorRgb{
    {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 1, 1}}};

std::string read_text(const fs::path& path, ErrorCode missing = ErrorCode::kIoError) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), missing, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorCode::kIoError, "write failed for " + path.string());
}

std::string numbered(int id) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << id;
  return s.str();
}

}  // namespace

// ---- synthetic ----

void SyntheticSpec::validate() const {
  require(canvas >= 4, ErrorCode::kInvalidArgument, "canvas must be at least 4");
  require(min_objects >= 1 && max_objects >= min_objects && max_objects <= kMaxObjects,
          ErrorCode::kInvalidArgument, "object count range is invalid");
  require(min_side > 0 && max_side >= min_side && max_side <= 1, ErrorCode::kInvalidArgument,
          "box side range is invalid");
  require(max_overlap > 0 && max_overlap <= 1, ErrorCode::kInvalidArgument,
          "max_overlap must be in (0, 1]");
  require(val_fraction >= 0 && test_fraction >= 0 && val_fraction + test_fraction < 1,
          ErrorCode::kInvalidArgument, "split fractions are invalid");
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec s;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParseError, std::string("synthetic spec: ") + e.what());
  }
  require(j.is_object(), ErrorCode::kSchemaError, "synthetic spec must be a JSON object");
  try {
    s.canvas = j.value("canvas", s.canvas);
    s.min_objects = j.value("min_objects", s.min_objects);
    s.max_objects = j.value("max_objects", s.max_objects);
    s.min_side = j.value("min_side", s.min_side);
    s.max_side = j.value("max_side", s.max_side);
    s.max_overlap = j.value("max_overlap", s.max_overlap);
    s.seed = j.value("seed", s.seed);
    s.val_fraction = j.value("val_fraction", s.val_fraction);
    s.test_fraction = j.value("test_fraction", s.test_fraction);
  } catch (const json::type_error& e) {
    fail(ErrorCode::kSchemaError, std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string synthetic_spec_json(const SyntheticSpec& s) {
  ordered_json j{{"canvas", s.canvas},         {"min_objects", s.min_objects},
                 {"max_objects", s.max_objects}, {"min_side", s.min_side},
                 {"max_side", s.max_side},     {"max_overlap", s.max_overlap},
                 {"seed", s.seed},
                 {"val_fraction", s.val_fraction}, {"test_fraction", s.test_fraction}};
  return j.dump(2) + "\n";
}

Vocabularies synthetic_vocabularies() {
  std::vector<std::string> attrs = kColors;
  attrs.insert(attrs.end(), kSizes.begin(), kSizes.end());
  return {Vocabulary(kShapes), Vocabulary(attrs)};
}

namespace {

bool inside(int shape, double x, double y, double cx, double cy, double hx, double hy) {
  switch (shape) {
    case 0:
      return std::abs(x - cx) <= hx && std::abs(y - cy) <= hy;
    case 1: {
      const double u = (x - cx) / hx, v = (y - cy) / hy;
      return u * u + v * v <= 1.0;
    }
    default: {
      const double top = cy - hy;
      if (y < top || y > cy + hy) return false;
      return std::abs(x - cx) <= hx * (y - top) / (2 * hy);
    }
  }
}

}  // namespace

Rgb8 render_synthetic(const Layout& layout) {
  const int w = layout.canvas.width, h = layout.canvas.height;
  validate_layout(layout, static_cast<int>(kShapes.size()),
                  static_cast<int>(kColors.size() + kSizes.size()));
  std::vector<double> buf(static_cast<size_t>(w) * h * 3);
  for (size_t p = 0; p < buf.size() / 3; ++p)
    for (int c = 0; c < 3; ++c) buf[p * 3 + static_cast<size_t>(c)] = kBackground[static_cast<size_t>(c)];
  constexpr int kSub = 4;
  for (const auto& o : layout.objects) {
    std::array<double, 3> color = kDefaultGray;
    double fill = 0.8;
    for (int a : o.attributes) {
      if (a < static_cast<int>(kColors.size())) color = kColorRgb[static_cast<size_t>(a)];
      else fill = (a - static_cast<int>(kColors.size())) == 0 ? 0.55 : 1.0;
    }
    const double bx0 = o.bbox.x0 * w, bx1 = o.bbox.x1 * w, by0 = o.bbox.y0 * h, by1 = o.bbox.y1 * h;
    const double cx = 0.5 * (bx0 + bx1), cy = 0.5 * (by0 + by1);
    const double hx = 0.5 * fill * (bx1 - bx0), hy = 0.5 * fill * (by1 - by0);
    const int px0 = std::max(0, static_cast<int>(std::floor(cx - hx)));
    const int px1 = std::min(w, static_cast<int>(std::ceil(cx + hx)) + 1);
    const int py0 = std::max(0, static_cast<int>(std::floor(cy - hy)));
    const int py1 = std::min(h, static_cast<int>(std::ceil(cy + hy)) + 1);
    for (int py = py0; py < py1; ++py)
      for (int px = px0; px < px1; ++px) {
        int hits = 0;
        for (int sy = 0; sy < kSub; ++sy)
          for (int sx = 0; sx < kSub; ++sx)
            hits += inside(o.category, px + (sx + 0.5) / kSub, py + (sy + 0.5) / kSub, cx, cy, hx, hy);
        if (hits == 0) continue;
        const double cov = static_cast<double>(hits) / (kSub * kSub);
        double* dst = &buf[(static_cast<size_t>(py) * w + px) * 3];
        for (int c = 0; c < 3; ++c) dst[c] = dst[c] * (1 - cov) + color[static_cast<size_t>(c)] * cov;
      }
  }
  Rgb8 img{w, h, std::vector<std::uint8_t>(buf.size())};
  for (size_t i = 0; i < buf.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(buf[i], 0.0, 1.0) * 255.0));
  return img;
}

Layout sample_synthetic_layout(const SyntheticSpec& spec, Rng& rng) {
  Layout l;
  l.canvas = {spec.canvas, spec.canvas};
  const int n = spec.min_objects +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_objects - spec.min_objects + 1)));
  auto too_close = [&](const BBox& b) {
    for (const auto& o : l.objects) {
      const double iw = std::min(b.x1, o.bbox.x1) - std::max(b.x0, o.bbox.x0);
      const double ih = std::min(b.y1, o.bbox.y1) - std::max(b.y0, o.bbox.y0);
      if (iw <= 0 || ih <= 0) continue;
      const double inter = iw * ih;
      if (inter > spec.max_overlap * b.width() * b.height() ||
          inter > spec.max_overlap * o.bbox.width() * o.bbox.height())
        return true;
    }
    return false;
  };
  for (int i = 0; i < n; ++i) {
    ObjectSpec o;
    o.category = static_cast<int>(rng.below(kShapes.size()));
    const int color = static_cast<int>(rng.below(kColors.size()));
    const int size = static_cast<int>(kColors.size() + rng.below(kSizes.size()));
    o.attributes = {color, size};
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double bw = rng.uniform(spec.min_side, spec.max_side);
      const double bh = rng.uniform(spec.min_side, spec.max_side);
      const double x0 = rng.uniform(0, 1 - bw), y0 = rng.uniform(0, 1 - bh);
      o.bbox = {x0, y0, x0 + bw, y0 + bh};
      placed = !too_close(o.bbox);
    }
    if (placed) l.objects.push_back(std::move(o));
  }
  return l;
}

// ---- dataset directories ----

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    default:
      return "test";
  }
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kSchemaError, "unknown split '" + name + "'");
}

std::vector<const IndexEntry*> Dataset::split(Split s) const {
  std::vector<const IndexEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

namespace {

void write_index(const fs::path& root, const std::vector<IndexEntry>& entries) {
  ordered_json list = ordered_json::array();
  for (const auto& e : entries) {
    ordered_json j{{"id", e.id}};
    if (!e.image.empty()) j["image"] = e.image;
    j["layout"] = e.layout;
    j["split"] = split_name(e.split);
    if (e.source_id) j["source_id"] = *e.source_id;
    list.push_back(std::move(j));
  }
  write_text(root / "index.json", ordered_json{{"version", 1}, {"entries", list}}.dump(1) + "\n");
}

void write_vocab_and_prior(const fs::path& root, const Vocabularies& vocab,
                           const std::vector<std::pair<int, std::vector<int>>>& train_objects,
                           AttributePrior& prior) {
  write_vocabulary(vocab.categories, (root / "vocab_categories.txt").string());
  write_vocabulary(vocab.attributes, (root / "vocab_attributes.txt").string());
  prior = estimate_attribute_prior(train_objects);
  write_text(root / "prior.json", serialize_prior(prior, vocab));
}

}  // namespace

Dataset generate_synthetic_dataset(const SyntheticSpec& spec, int n_images, const fs::path& out) {
  spec.validate();
  require(n_images >= 1, ErrorCode::kInvalidArgument, "need at least one image");
  fs::create_directories(out / "images");
  fs::create_directories(out / "layouts");
  Dataset d;
  d.root = out;
  d.vocab = synthetic_vocabularies();
  Rng rng(spec.seed);
  std::vector<std::pair<int, std::vector<int>>> train_objects;
  for (int i = 0; i < n_images; ++i) {
    Layout l = sample_synthetic_layout(spec, rng);
    const double r = rng.uniform();
    IndexEntry e;
    e.id = i;
    e.split = r < spec.test_fraction                        ? Split::kTest
              : r < spec.test_fraction + spec.val_fraction ? Split::kVal
                                                            : Split::kTrain;
    e.image = "images/" + numbered(i) + ".png";
    e.layout = "layouts/" + numbered(i) + ".json";
    write_png(out / e.image, render_synthetic(l));
    write_text(out / e.layout, serialize_layout(l, d.vocab));
    if (e.split == Split::kTrain)
      for (const auto& o : l.objects) train_objects.emplace_back(o.category, o.attributes);
    d.entries.push_back(std::move(e));
  }
  write_index(out, d.entries);
  write_vocab_and_prior(out, d.vocab, train_objects, d.prior);
  return d;
}

Dataset load_dataset(const fs::path& root) {
  Dataset d;
  d.root = root;
  d.vocab.categories = read_vocabulary((root / "vocab_categories.txt").string());
  d.vocab.attributes = read_vocabulary((root / "vocab_attributes.txt").string());
  d.prior = parse_prior(read_text(root / "prior.json"), d.vocab);
  json idx;
  try {
    idx = json::parse(read_text(root / "index.json"));
    for (const auto& j : idx.at("entries")) {
      IndexEntry e;
      e.id = j.at("id").get<int>();
      e.image = j.value("image", std::string());
      e.layout = j.at("layout").get<std::string>();
      e.split = parse_split(j.at("split").get<std::string>());
      if (j.contains("source_id")) e.source_id = j["source_id"].get<std::int64_t>();
      d.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, (root / "index.json").string() + ": " + e.what());
  }
  return d;
}

Layout load_layout(const Dataset& d, const IndexEntry& e) {
  return parse_layout(read_text(d.root / e.layout), d.vocab);
}

std::vector<Example> load_examples(const Dataset& d, Split s) {
  std::vector<Example> out;
  for (const IndexEntry* e : d.split(s)) {
    require(!e->image.empty(), ErrorCode::kIoError,
            "entry " + std::to_string(e->id) + " has no image file");
    Example ex;
    ex.id = e->id;
    ex.layout = load_layout(d, *e);
    Rgb8 img = read_png(d.root / e->image);
    require(img.width == ex.layout.canvas.width && img.height == ex.layout.canvas.height,
            ErrorCode::kShapeMismatch,
            "image " + e->image + " is " + std::to_string(img.width) + "x" +
                std::to_string(img.height) + " but its layout canvas is " +
                std::to_string(ex.layout.canvas.width));
    ex.image = from_rgb8(img);
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- Visual Genome ----

namespace {

json parse_file(const fs::path& path) {
  std::string text = read_text(path, ErrorCode::kMissingAnnotationFile);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kSchemaError, path.string() + ": " + e.what());
  }
}

std::string clean(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto b = s.find_first_not_of(" \t\r\n"), e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::int64_t image_id_of(const json& j, const std::string& where) {
  if (j.contains("image_id")) return j["image_id"].get<std::int64_t>();
  if (j.contains("id")) return j["id"].get<std::int64_t>();
  fail(ErrorCode::kSchemaError, where + ": entry without image_id");
}

// Most frequent first, ties by name.
std::vector<std::string> top_k(const std::map<std::string, std::int64_t>& counts, int k) {
  std::vector<std::pair<std::string, std::int64_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (int i = 0; i < k && i < static_cast<int>(v.size()); ++i) out.push_back(v[static_cast<size_t>(i)].first);
  return out;
}

struct VgObject {
  std::int64_t id;
  std::string name;
  double x, y, w, h;
};

struct VgImage {
  std::int64_t id;
  std::vector<VgObject> objects;
};

}  // namespace

IngestReport ingest_visual_genome(const IngestInputs& in, const IngestConfig& cfg, const fs::path& out,
                                  std::ostream& warn) {
  require(cfg.num_categories > 0 && cfg.num_attributes > 0, ErrorCode::kInvalidArgument,
          "vocabulary sizes must be positive");
  json objects_doc = parse_file(in.objects);
  json attributes_doc = parse_file(in.attributes);
  require(objects_doc.is_array(), ErrorCode::kSchemaError, in.objects.string() + ": expected a list");
  require(attributes_doc.is_array(), ErrorCode::kSchemaError,
          in.attributes.string() + ": expected a list");

  std::vector<VgImage> images;
  std::map<std::string, std::int64_t> category_counts;
  try {
    for (const auto& im : objects_doc) {
      VgImage img{image_id_of(im, in.objects.string()), {}};
      for (const auto& o : im.at("objects")) {
        std::string name;
        if (o.contains("names") && !o["names"].empty()) name = clean(o["names"][0].get<std::string>());
        else if (o.contains("name")) name = clean(o["name"].get<std::string>());
        if (name.empty()) continue;
        const std::int64_t oid = o.contains("object_id") ? o["object_id"].get<std::int64_t>()
                                                         : o.at("id").get<std::int64_t>();
        img.objects.push_back({oid, name, o.at("x").get<double>(), o.at("y").get<double>(),
                               o.at("w").get<double>(), o.at("h").get<double>()});
        ++category_counts[name];
      }
      images.push_back(std::move(img));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, in.objects.string() + ": " + e.what());
  }
  objects_doc = json();
  Vocabulary categories(top_k(category_counts, cfg.num_categories));

  std::unordered_map<std::int64_t, std::vector<std::string>> object_attrs;
  std::unordered_set<std::int64_t> in_vocab_objects;
  for (const auto& im : images)
    for (const auto& o : im.objects)
      if (categories.find(o.name) >= 0) in_vocab_objects.insert(o.id);
  std::map<std::string, std::int64_t> attribute_counts;
  try {
    for (const auto& im : attributes_doc) {
      if (!im.contains("attributes") || im["attributes"].is_null()) continue;
      for (const auto& o : im["attributes"]) {
        if (!o.contains("attributes")) continue;
        const std::int64_t oid = o.contains("object_id") ? o["object_id"].get<std::int64_t>()
                                                         : o.at("id").get<std::int64_t>();
        std::set<std::string> uniq;
        for (const auto& a : o["attributes"]) {
          std::string s = clean(a.get<std::string>());
          if (!s.empty()) uniq.insert(s);
        }
        auto& dst = object_attrs[oid];
        for (const auto& s : uniq) {
          if (std::find(dst.begin(), dst.end(), s) != dst.end()) continue;
          dst.push_back(s);
          if (in_vocab_objects.count(oid)) ++attribute_counts[s];
        }
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchemaError, in.attributes.string() + ": " + e.what());
  }
  attributes_doc = json();
  Vocabularies vocab{categories, Vocabulary(top_k(attribute_counts, cfg.num_attributes))};

  std::unordered_map<std::int64_t, std::pair<double, double>> sizes;
  if (in.image_data) {
    json doc = parse_file(*in.image_data);
    try {
      for (const auto& im : doc)
        sizes[image_id_of(im, in.image_data->string())] = {im.at("width").get<double>(),
                                                           im.at("height").get<double>()};
    } catch (const json::exception& e) {
      fail(ErrorCode::kSchemaError, in.image_data->string() + ": " + e.what());
    }
  } else {
    warn << "warning: no image_data file; image sizes are estimated from the annotation extents\n";
  }

  std::unordered_map<std::int64_t, Split> split_of;
  const bool hash_split = !in.splits.has_value();
  if (!hash_split) {
    json doc = parse_file(*in.splits);
    try {
      for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
        for (const auto& id : doc.at(split_name(s))) split_of[id.get<std::int64_t>()] = s;
    } catch (const json::exception& e) {
      fail(ErrorCode::kSchemaError, in.splits->string() + ": " + e.what());
    }
  } else {
    warn << "warning: no split lists given; using a hash-based "
         << cfg.train_fraction * 100 << "/" << cfg.val_fraction * 100 << "/"
         << (1 - cfg.train_fraction - cfg.val_fraction) * 100
         << " split, which will not reproduce the reference split sizes\n";
  }

  // Attribute rank for the per-object cap.
  std::vector<int> rank_of(static_cast<size_t>(vocab.attributes.size()));
  for (int i = 0; i < vocab.attributes.size(); ++i) rank_of[static_cast<size_t>(i)] = i;

  fs::create_directories(out / "layouts");
  IngestReport report;
  report.hash_split = hash_split;
  std::vector<IndexEntry> entries;
  std::vector<std::pair<int, std::vector<int>>> train_objects;
  for (const auto& im : images) {
    ++report.images_seen;
    Split split;
    if (hash_split) {
      const double u = static_cast<double>(fnv1a64(std::to_string(im.id)) % 1000000) / 1e6;
      split = u < cfg.train_fraction ? Split::kTrain
              : u < cfg.train_fraction + cfg.val_fraction ? Split::kVal
                                                          : Split::kTest;
    } else {
      auto it = split_of.find(im.id);
      if (it == split_of.end()) continue;
      split = it->second;
    }
    double width = 0, height = 0;
    if (auto it = sizes.find(im.id); it != sizes.end()) {
      std::tie(width, height) = it->second;
    } else {
      for (const auto& o : im.objects) {
        width = std::max(width, o.x + o.w);
        height = std::max(height, o.y + o.h);
      }
    }
    if (width <= 0 || height <= 0) continue;
    Layout l;
    l.canvas = {64, 64};
    for (const auto& o : im.objects) {
      const int c = vocab.categories.find(o.name);
      if (c < 0) continue;
      BBox b{std::clamp(o.x / width, 0.0, 1.0), std::clamp(o.y / height, 0.0, 1.0),
             std::clamp((o.x + o.w) / width, 0.0, 1.0), std::clamp((o.y + o.h) / height, 0.0, 1.0)};
      if (!(b.x1 > b.x0 && b.y1 > b.y0) || b.width() * b.height() < cfg.min_object_area) continue;
      std::vector<int> attrs;
      if (auto it = object_attrs.find(o.id); it != object_attrs.end())
        for (const auto& s : it->second)
          if (int a = vocab.attributes.find(s); a >= 0) attrs.push_back(a);
      // vocabulary order is frequency order, so the first entries are the most frequent
      std::sort(attrs.begin(), attrs.end());
      if (static_cast<int>(attrs.size()) > cfg.max_attributes) attrs.resize(static_cast<size_t>(cfg.max_attributes));
      l.objects.push_back({c, std::move(attrs), b});
    }
    if (l.size() < cfg.min_objects || l.size() > cfg.max_objects) continue;
    IndexEntry e;
    e.id = static_cast<int>(entries.size());
    e.layout = "layouts/" + numbered(e.id) + ".json";
    e.split = split;
    e.source_id = im.id;
    write_text(out / e.layout, serialize_layout(l, vocab));
    if (split == Split::kTrain)
      for (const auto& o : l.objects) train_objects.emplace_back(o.category, o.attributes);
    (split == Split::kTrain ? report.train : split == Split::kVal ? report.val : report.test)++;
    entries.push_back(std::move(e));
  }
  report.images_kept = static_cast<int>(entries.size());
  write_index(out, entries);
  AttributePrior prior;
  write_vocab_and_prior(out, vocab, train_objects, prior);
  return report;
}

}  // namespace attrgan
