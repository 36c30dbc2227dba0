#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ernet/image.hpp"
#include "ernet/rng.hpp"

namespace ernet {

enum class Split { train, val, test };

std::string split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string path;
  int class_id = 0;
  Split split = Split::train;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

/// Class-labelled image index. Entries are sorted by path; class ids follow
/// the lexicographic order of the class directory names.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;
  std::vector<SkippedFile> skipped;

  std::size_t class_count() const { return class_names.size(); }
  /// counts[class][split]
  std::vector<std::array<std::size_t, 3>> counts() const;
  std::vector<const ManifestEntry*> select(Split s) const;
};

/// Scans root/<class>/*.{jpg,jpeg,png,ppm,pgm}. Files whose header cannot
/// be decoded are skipped and listed in `skipped`.
DatasetManifest scan_dataset(const std::filesystem::path& root);

struct SplitRatios {
  double train = 0.6, val = 0.2, test = 0.2;
};

/// Stratified split: each class is shuffled independently; val and test get
/// floor(n·ratio) items (at least one when the ratio is non-zero) and the
/// remainder goes to train.
DatasetManifest split_dataset(const DatasetManifest& m, SplitRatios ratios, Rng& rng);

/// Tab-separated "path  class  split" table, one entry per line.
std::string manifest_to_text(const DatasetManifest& m);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

struct SynthOptions {
  Extent image_size = 80;
};

/// Writes a learnable synthetic dataset: class k has its own dominant hue
/// and stripe frequency plus random clutter. Files are binary PPM named
/// root/class_<k>/img_<i>.ppm. Same seed, same bytes.
void synth_dataset(const std::filesystem::path& root, int classes, int per_class, Rng& rng,
                   SynthOptions options = {});

/// The image synth_dataset would write for one sample; exposed for tests.
Image synth_image(int class_id, int classes, Extent size, Rng& rng);

/// Decoded images of one split, resized to target (h, w) when given.
struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
  std::size_t class_count = 0;
};

LabeledImages load_split(const DatasetManifest& m, Split s, Extent target_h = 0, Extent target_w = 0);

}  // namespace ernet
