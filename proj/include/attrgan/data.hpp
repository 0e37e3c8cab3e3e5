#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "attrgan/example.hpp"
#include "attrgan/image.hpp"
#include "attrgan/layout.hpp"
#include "attrgan/rng.hpp"

namespace attrgan {

// ---- synthetic attributed shapes ----

struct SyntheticSpec {
  int canvas = 32;
  int min_objects = 1;
  int max_objects = 4;
  double min_side = 0.15;
  double max_side = 0.6;
  // A box may not cover more than this fraction of an earlier box (or be
  // covered by it that much); rejected boxes are redrawn.
  double max_overlap = 0.2;
  std::uint64_t seed = 0;
  double val_fraction = 0.05;
  double test_fraction = 0.05;

  void validate() const;
};

SyntheticSpec parse_synthetic_spec(const std::string& text);
std::string synthetic_spec_json(const SyntheticSpec& spec);

// rectangle, ellipse, triangle / red, green, blue, yellow, white, small, large.
Vocabularies synthetic_vocabularies();

// Neutral gray background; objects drawn in layout order with 4x4
// supersampled coverage. Color comes from the color attribute (default gray
// without one); "large" fills the box, "small" fills the central 55%, no
// size attribute fills 80%.
Rgb8 render_synthetic(const Layout& layout);

// 1..4 objects, uniform category, one uniform color and one uniform size
// attribute each, box sides in [min_side, max_side]. An object whose box
// cannot be placed within max_overlap after 100 draws is dropped (at least
// one object is always kept).
Layout sample_synthetic_layout(const SyntheticSpec& spec, Rng& rng);

// ---- dataset directories ----

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split s);
Split parse_split(const std::string& name);

struct IndexEntry {
  int id = 0;
  std::string image;   // relative path; empty when no image is available
  std::string layout;  // relative path
  Split split = Split::kTrain;
  std::optional<std::int64_t> source_id;
};

struct Dataset {
  std::filesystem::path root;
  Vocabularies vocab;
  AttributePrior prior;
  std::vector<IndexEntry> entries;

  std::vector<const IndexEntry*> split(Split s) const;
};

// Writes images/NNNNNN.png, layouts/NNNNNN.json, index.json, the vocabulary
// files and prior.json (estimated on the train split).
Dataset generate_synthetic_dataset(const SyntheticSpec& spec, int n_images,
                                   const std::filesystem::path& out);

Dataset load_dataset(const std::filesystem::path& root);
Layout load_layout(const Dataset& d, const IndexEntry& e);
// Layouts plus decoded images for one split.
std::vector<Example> load_examples(const Dataset& d, Split s);

// ---- Visual Genome ingestion ----

struct IngestConfig {
  int num_categories = 178;
  int num_attributes = 106;
  int min_objects = 3;
  int max_objects = 30;
  int max_attributes = 5;
  // Objects whose box covers less than this fraction of the image are dropped.
  double min_object_area = 0.02;
  double train_fraction = 0.92, val_fraction = 0.04;  // hash split fallback
};

struct IngestInputs {
  std::filesystem::path objects;     // objects.json
  std::filesystem::path attributes;  // attributes.json
  std::optional<std::filesystem::path> image_data;  // image_data.json (width/height)
  std::optional<std::filesystem::path> splits;      // {"train": [...], "val": [...], "test": [...]}
};

struct IngestReport {
  int images_seen = 0;
  int images_kept = 0;
  int train = 0, val = 0, test = 0;
  bool hash_split = false;
};

// Vocabulary: the num_categories most frequent object names and the
// num_attributes most frequent attributes (ties broken lexicographically).
// Images keep 3..30 in-vocabulary objects; each object keeps its 5 most
// frequent attributes. Without split lists a hash split is used and a
// warning goes to `warn`.
IngestReport ingest_visual_genome(const IngestInputs& inputs, const IngestConfig& config,
                                  const std::filesystem::path& out, std::ostream& warn);

}  // namespace attrgan
