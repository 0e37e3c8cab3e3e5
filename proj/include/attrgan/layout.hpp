#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attrgan/nn/ops.hpp"
#include "attrgan/rng.hpp"

namespace attrgan {

inline constexpr int kMaxObjects = 30;
inline constexpr int kMaxAttributes = 5;

struct Canvas {
  int width = 64;
  int height = 64;
  bool operator==(const Canvas&) const = default;
};

// Normalized, top-left / bottom-right.
struct BBox {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool operator==(const BBox&) const = default;
};

struct ObjectSpec {
  int category = 0;
  std::vector<int> attributes;
  BBox bbox;
  bool operator==(const ObjectSpec&) const = default;
};

struct Layout {
  Canvas canvas;
  std::vector<ObjectSpec> objects;
  int size() const { return static_cast<int>(objects.size()); }
  bool operator==(const Layout&) const = default;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const;
  // -1 when absent.
  int find(std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }
  bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int, std::less<>> index_;
};

struct Vocabularies {
  Vocabulary categories;
  Vocabulary attributes;
};

Vocabulary read_vocabulary(const std::string& path);
void write_vocabulary(const Vocabulary& vocab, const std::string& path);

void validate_layout(const Layout& layout, int num_categories, int num_attributes);

enum class ShiftPolicy { kClamp, kReject };

struct ShiftSpec {
  std::vector<double> dx;
  ShiftPolicy policy = ShiftPolicy::kClamp;
};

Layout shift_layout(const Layout& layout, const ShiftSpec& shifts);

// Uniform on [-max_magnitude, max_magnitude]; one offset per object, or one
// offset shared by every object when `global` is set.
ShiftSpec sample_shifts(const Layout& layout, double max_magnitude, Rng& rng,
                        bool global = false);

using CellRect = nn::CellRect;
CellRect bbox_to_grid(const BBox& bbox, int grid_size);

// Layout file codec. Category and attribute names are resolved against `vocab`.
Layout parse_layout(std::string_view text, const Vocabularies& vocab);
std::string serialize_layout(const Layout& layout, const Vocabularies& vocab);

struct AttributePrior {
  std::map<int, std::map<int, std::int64_t>> counts;

  std::int64_t count(int category, int attribute) const;
  // Attribute totals over every category.
  std::map<int, std::int64_t> attribute_totals() const;
  bool operator==(const AttributePrior&) const = default;
};

AttributePrior estimate_attribute_prior(
    std::span<const std::pair<int, std::vector<int>>> objects);

// n distinct attributes drawn without replacement, each draw proportional to
// the remaining counts of `category`. Returned in ascending index order.
std::vector<int> sample_attributes(const AttributePrior& prior, int category, int n, Rng& rng);

std::string serialize_prior(const AttributePrior& prior, const Vocabularies& vocab);
AttributePrior parse_prior(std::string_view text, const Vocabularies& vocab);

// Per-attribute BCE weights clip(median / count_a, lo, hi) over the attribute
// totals; attributes never seen get the upper bound.
std::vector<double> attribute_weights(const AttributePrior& prior, int num_attributes,
                                      double lo = 0.1, double hi = 10.0);

}  // namespace attrgan
