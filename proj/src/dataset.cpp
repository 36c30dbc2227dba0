#include "ernet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ernet {

namespace fs = std::filesystem;

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ArgumentError("unknown split '" + s + "'");
}

std::vector<std::array<std::size_t, 3>> DatasetManifest::counts() const {
  std::vector<std::array<std::size_t, 3>> c(class_names.size(), {0, 0, 0});
  for (const auto& e : entries) ++c.at(static_cast<std::size_t>(e.class_id))[static_cast<std::size_t>(e.split)];
  return c;
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

// Cheap decodability probe: recognised magic and, for PNM, a sane header.
std::string probe_image(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return "unreadable";
  char head[64] = {};
  is.read(head, sizeof(head));
  const auto n = is.gcount();
  if (n >= 2 && head[0] == 'P' && (head[1] == '6' || head[1] == '5')) {
    std::istringstream hs(std::string(head + 2, static_cast<std::size_t>(n - 2)));
    long w = 0, h = 0, maxval = 0;
    hs >> w >> h >> maxval;
    if (!hs || w < 1 || h < 1 || maxval != 255) return "malformed PNM header";
    const std::size_t channels = head[1] == '6' ? 3 : 1;
    const auto size = fs::file_size(p);
    if (size < static_cast<std::uintmax_t>(w) * static_cast<std::uintmax_t>(h) * channels)
      return "truncated PNM raster";
    return {};
  }
  const auto u = [&](int i) { return static_cast<unsigned char>(head[i]); };
  if (n >= 8 && u(0) == 0x89 && head[1] == 'P' && head[2] == 'N' && head[3] == 'G')
    return png_supported() ? std::string{} : "PNG codec unavailable";
  if (n >= 3 && u(0) == 0xFF && u(1) == 0xD8) return jpeg_supported() ? std::string{} : "JPEG codec unavailable";
  return "unrecognised image format";
}

}  // namespace

DatasetManifest scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) class_dirs.push_back(d.path());
  if (class_dirs.empty()) throw DatasetError("dataset root " + root.string() + " has no class directories");
  std::sort(class_dirs.begin(), class_dirs.end());

  DatasetManifest m;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    const std::string cls = class_dirs[k].filename().string();
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(class_dirs[k]))
      if (f.is_regular_file() && has_image_extension(f.path())) files.push_back(f.path());
    std::sort(files.begin(), files.end());
    std::size_t accepted = 0;
    for (const auto& f : files) {
      if (std::string why = probe_image(f); !why.empty()) {
        m.skipped.push_back({f.string(), why});
        continue;
      }
      m.entries.push_back({f.string(), static_cast<int>(k), Split::train});
      ++accepted;
    }
    if (accepted == 0) throw DatasetError("class directory '" + cls + "' contains no decodable images");
    m.class_names.push_back(cls);
  }
  return m;
}

DatasetManifest split_dataset(const DatasetManifest& m, SplitRatios ratios, Rng& rng) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ArgumentError("split ratios must be non-negative and sum to 1");
  DatasetManifest out;
  out.class_names = m.class_names;
  out.skipped = m.skipped;
  out.entries = m.entries;

  for (std::size_t k = 0; k < m.class_names.size(); ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < out.entries.size(); ++i)
      if (out.entries[i].class_id == static_cast<int>(k)) idx.push_back(i);
    if (idx.size() < 3)
      throw DatasetError("class '" + m.class_names[k] + "' has " + std::to_string(idx.size()) +
                         " items; at least 3 are needed to split");
    rng.shuffle(idx);
    const double n = static_cast<double>(idx.size());
    // Small classes still get one held-out item per non-empty split.
    auto held_out = [n](double r) {
      const auto c = static_cast<std::size_t>(std::floor(n * r + 1e-9));
      return r > 0 ? std::max<std::size_t>(c, 1) : c;
    };
    const std::size_t n_val = held_out(ratios.val), n_test = held_out(ratios.test);
    if (n_val + n_test >= idx.size())
      throw DatasetError("class '" + m.class_names[k] + "' is too small for the requested split ratios");
    for (std::size_t j = 0; j < idx.size(); ++j) {
      Split s = Split::train;
      if (j < n_val)
        s = Split::val;
      else if (j < n_val + n_test)
        s = Split::test;
      out.entries[idx[j]].split = s;
    }
  }
  return out;
}

std::string manifest_to_text(const DatasetManifest& m) {
  std::ostringstream os;
  os << "path\tclass\tsplit\n";
  for (const auto& e : m.entries)
    os << e.path << '\t' << m.class_names.at(static_cast<std::size_t>(e.class_id)) << '\t' << split_name(e.split)
       << '\n';
  return os.str();
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << manifest_to_text(m);
}

// ---- synthetic data -------------------------------------------------------

namespace {

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

}  // namespace

Image synth_image(int class_id, int classes, Extent size, Rng& rng) {
  Image img = make_image(size, size);
  const double hue = static_cast<double>(class_id) / classes + rng.uniform(-0.02, 0.02);
  const auto base = hsv_to_rgb(hue, 0.75, rng.uniform(0.7, 0.9));
  const double freq = 2.0 + 2.0 * class_id;  // stripe cycles across the image
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (Extent y = 0; y < size; ++y)
    for (Extent x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) * ct + static_cast<double>(y) * st) / static_cast<double>(size);
      const double shade = 0.7 + 0.3 * std::sin(2.0 * std::numbers::pi * freq * u + phase);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(base[c] * shade);
    }

  // Clutter: a few rectangles of arbitrary colour covering a minority of the frame.
  const int rects = 2 + static_cast<int>(rng.below(3));
  for (int r = 0; r < rects; ++r) {
    const Extent rw = 4 + static_cast<Extent>(rng.below(static_cast<std::uint64_t>(size / 5)));
    const Extent rh = 4 + static_cast<Extent>(rng.below(static_cast<std::uint64_t>(size / 5)));
    const Extent x0 = static_cast<Extent>(rng.below(static_cast<std::uint64_t>(size - rw)));
    const Extent y0 = static_cast<Extent>(rng.below(static_cast<std::uint64_t>(size - rh)));
    const float col[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                          static_cast<float>(rng.uniform())};
    for (Extent y = y0; y < y0 + rh; ++y)
      for (Extent x = x0; x < x0 + rw; ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
  }
  for (auto& v : img.data()) v = std::clamp(v + static_cast<float>(rng.uniform(-0.03, 0.03)), 0.0f, 1.0f);
  return img;
}

void synth_dataset(const fs::path& root, int classes, int per_class, Rng& rng, SynthOptions options) {
  if (classes < 2) throw ArgumentError("synth_dataset: need at least 2 classes");
  if (per_class < 1) throw ArgumentError("synth_dataset: per_class must be >= 1");
  if (options.image_size < 16) throw ArgumentError("synth_dataset: image size must be >= 16");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (int k = 0; k < classes; ++k) {
    char dir[32];
    std::snprintf(dir, sizeof(dir), "class_%02d", k);
    const fs::path cdir = root / dir;
    fs::create_directories(cdir, ec);
    if (ec) throw IoError("cannot create " + cdir.string() + ": " + ec.message());
    for (int i = 0; i < per_class; ++i) {
      char file[32];
      std::snprintf(file, sizeof(file), "img_%04d.ppm", i);
      write_ppm(cdir / file, synth_image(k, classes, options.image_size, rng));
    }
  }
}

LabeledImages load_split(const DatasetManifest& m, Split s, Extent target_h, Extent target_w) {
  LabeledImages out;
  out.class_count = m.class_count();
  for (const ManifestEntry* e : m.select(s)) {
    Image img = read_image(e->path);
    if (target_h > 0 && target_w > 0 && (img.dim(0) != target_h || img.dim(1) != target_w))
      img = resize_bilinear(img, target_h, target_w);
    out.images.push_back(std::move(img));
    out.labels.push_back(e->class_id);
  }
  return out;
}

}  // namespace ernet
