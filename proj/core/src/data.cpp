#include "ccfpse/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ccfpse/parallel.hpp"

namespace ccfpse {

namespace fs = std::filesystem;

namespace {

std::mt19937_64 sample_rng(std::uint64_t seed, std::int64_t index, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), stream};
  return std::mt19937_64(seq);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const fs::path& path) {
  std::string token;
  while (true) {
    int c = in.peek();
    if (c == EOF) throw IoError(path.string() + ": truncated header");
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else {
      break;
    }
  }
  while (in.peek() != EOF && !std::isspace(in.peek())) token.push_back(static_cast<char>(in.get()));
  return token;
}

struct NetpbmHeader {
  int width = 0;
  int height = 0;
};

NetpbmHeader read_netpbm_header(std::istream& in, const fs::path& path, const std::string& magic) {
  const auto got = header_token(in, path);
  if (got != magic) throw FormatError(path.string() + ": expected " + magic + ", found '" + got + "'");
  NetpbmHeader h;
  try {
    h.width = std::stoi(header_token(in, path));
    h.height = std::stoi(header_token(in, path));
    const int maxval = std::stoi(header_token(in, path));
    if (maxval != 255) throw FormatError(path.string() + ": maxval must be 255");
  } catch (const std::invalid_argument&) {
    throw FormatError(path.string() + ": malformed header");
  } catch (const std::out_of_range&) {
    throw FormatError(path.string() + ": malformed header");
  }
  if (h.width <= 0 || h.height <= 0) throw FormatError(path.string() + ": non-positive extents");
  in.get();  // single whitespace before the raster
  return h;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (num_labels <= 0 || num_labels > 255) throw ArgumentError("task: num_labels must be in [1, 255]");
  if (height <= 0 || width <= 0) throw ArgumentError("task: extents must be positive");
  if (noise_amplitude < 0) throw ArgumentError("task: noise amplitude must be non-negative");
  if (min_shapes < 0 || max_shapes < min_shapes) throw ArgumentError("task: need 0 <= min_shapes <= max_shapes");
  if (min_extent <= 0 || max_extent < min_extent) throw ArgumentError("task: need 0 < min_extent <= max_extent");
  const auto colors = this->colors();
  if (static_cast<int>(colors.size()) != num_labels) throw ArgumentError("task: palette needs one color per label");
  for (const auto& c : colors) {
    for (float v : c) {
      if (!(v >= -1.0f && v <= 1.0f)) throw ArgumentError("task: palette values must lie in [-1,1]");
    }
  }
  if (num_labels > 1 && min_palette_distance(colors) < 0.5) {
    throw ArgumentError("task: palette colors closer than 0.5");
  }
}

std::vector<Color> SyntheticTaskSpec::colors() const {
  return palette.empty() ? default_palette(num_labels) : palette;
}

std::vector<Color> default_palette(int num_labels) {
  if (num_labels <= 0) throw ArgumentError("default_palette: num_labels must be positive");
  constexpr float a = 0.8f;
  std::vector<Color> out;
  if (num_labels <= 8) {
    const std::array<Color, 8> corners{{{-a, -a, -a},
                                        {a, -a, -a},
                                        {-a, a, -a},
                                        {-a, -a, a},
                                        {a, a, a},
                                        {a, a, -a},
                                        {a, -a, a},
                                        {-a, a, a}}};
    out.assign(corners.begin(), corners.begin() + num_labels);
    return out;
  }
  if (num_labels > 27) throw ArgumentError("default_palette: at most 27 labels");
  const std::array<float, 3> levels{-a, 0.0f, a};
  for (float r : levels) {
    for (float g : levels) {
      for (float b : levels) out.push_back({r, g, b});
    }
  }
  out.resize(static_cast<std::size_t>(num_labels));
  return out;
}

double min_palette_distance(std::span<const Color> palette) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < palette.size(); ++i) {
    for (std::size_t j = i + 1; j < palette.size(); ++j) {
      double d2 = 0;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(palette[i][c]) - palette[j][c];
        d2 += d * d;
      }
      best = std::min(best, std::sqrt(d2));
    }
  }
  return best;
}

LabelMap generate_layout(const SyntheticTaskSpec& spec, std::uint64_t seed, std::int64_t index) {
  auto rng = sample_rng(seed, index, 0);
  std::uniform_int_distribution<int> label_dist(0, spec.num_labels - 1);
  std::uniform_int_distribution<int> count_dist(spec.min_shapes, spec.max_shapes);
  std::uniform_int_distribution<int> extent_dist(spec.min_extent, spec.max_extent);
  std::uniform_int_distribution<int> kind_dist(0, 1);

  LabelMap map(spec.height, spec.width, spec.num_labels, label_dist(rng));
  const int shapes = count_dist(rng);
  for (int s = 0; s < shapes; ++s) {
    const int label = label_dist(rng);
    const bool ellipse = kind_dist(rng) == 1;
    const int sh = extent_dist(rng);
    const int sw = extent_dist(rng);
    // Top-left corner may sit half a shape outside the canvas.
    const int top = std::uniform_int_distribution<int>(-sh / 2, spec.height - (sh + 1) / 2)(rng);
    const int left = std::uniform_int_distribution<int>(-sw / 2, spec.width - (sw + 1) / 2)(rng);
    const double cy = top + (sh - 1) / 2.0;
    const double cx = left + (sw - 1) / 2.0;
    const double ry = sh / 2.0;
    const double rx = sw / 2.0;
    for (int i = std::max(0, top); i < std::min(spec.height, top + sh); ++i) {
      for (int j = std::max(0, left); j < std::min(spec.width, left + sw); ++j) {
        if (ellipse) {
          const double dy = (i - cy) / ry;
          const double dx = (j - cx) / rx;
          if (dy * dy + dx * dx > 1.0) continue;
        }
        map.set(i, j, label);
      }
    }
  }
  return map;
}

Tensor<float> render_layout(const LabelMap& layout, const SyntheticTaskSpec& spec, std::uint64_t seed,
                            std::int64_t index) {
  if (layout.num_labels() != spec.num_labels) throw DataError("render_layout: label count mismatch");
  const std::int64_t h = layout.height();
  const std::int64_t w = layout.width();
  const std::int64_t plane = h * w;
  Tensor<float> image(Shape{3, h, w});
  auto px = image.mutable_data();
  auto rng = sample_rng(seed, index, 1);
  const auto amp = static_cast<float>(spec.noise_amplitude);
  std::uniform_real_distribution<float> noise(-amp, amp);
  const auto palette = spec.colors();
  for (std::int64_t i = 0; i < plane; ++i) {
    const auto& color = palette[static_cast<std::size_t>(layout.ids()[static_cast<std::size_t>(i)])];
    for (int c = 0; c < 3; ++c) {
      float v = color[static_cast<std::size_t>(c)];
      if (amp > 0) v += noise(rng);
      px[static_cast<std::size_t>(c * plane + i)] = std::clamp(v, -1.0f, 1.0f);
    }
  }
  return image;
}

std::vector<Sample> generate_dataset(const SyntheticTaskSpec& spec, std::int64_t count, std::uint64_t seed) {
  if (count <= 0) throw ArgumentError("generate_dataset: count must be positive, got " + std::to_string(count));
  spec.validate();
  std::vector<Sample> out(static_cast<std::size_t>(count));
  parallel_for(count, [&](std::int64_t i) {
    auto label = generate_layout(spec, seed, i);
    auto image = render_layout(label, spec, seed, i);
    out[static_cast<std::size_t>(i)] = Sample{std::move(label), std::move(image)};
  });
  return out;
}

std::uint8_t to_pixel(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround((c + 1.0f) / 2.0f * 255.0f));
}

float from_pixel(std::uint8_t p) { return static_cast<float>(p) / 255.0f * 2.0f - 1.0f; }

void write_pgm(const fs::path& path, const LabelMap& map) {
  if (map.num_labels() > 256) throw DataError("write_pgm: ids above 255 do not fit a byte");
  auto out = open_out(path);
  out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
  std::vector<char> raster(map.ids().begin(), map.ids().end());
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

LabelMap read_pgm(const fs::path& path, int num_labels) {
  auto in = open_in(path);
  const auto h = read_netpbm_header(in, path, "P5");
  std::vector<unsigned char> raster(static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height));
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) throw IoError(path.string() + ": truncated raster");
  std::vector<std::int32_t> ids(raster.begin(), raster.end());
  try {
    return LabelMap(h.height, h.width, num_labels, std::move(ids));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_ppm(const fs::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_ppm: image must be [3,H,W], got " + shape_string(image.shape()));
  }
  const std::int64_t h = image.dim(1);
  const std::int64_t w = image.dim(2);
  const std::int64_t plane = h * w;
  const auto px = image.data();
  std::vector<char> raster(static_cast<std::size_t>(plane * 3));
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      raster[static_cast<std::size_t>(i * 3 + c)] =
          static_cast<char>(to_pixel(px[static_cast<std::size_t>(c * plane + i)]));
    }
  }
  auto out = open_out(path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor<float> read_ppm(const fs::path& path) {
  auto in = open_in(path);
  const auto h = read_netpbm_header(in, path, "P6");
  const std::int64_t plane = static_cast<std::int64_t>(h.width) * h.height;
  std::vector<unsigned char> raster(static_cast<std::size_t>(plane * 3));
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) throw IoError(path.string() + ": truncated raster");
  Tensor<float> image(Shape{3, h.height, h.width});
  auto px = image.mutable_data();
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      px[static_cast<std::size_t>(c * plane + i)] = from_pixel(raster[static_cast<std::size_t>(i * 3 + c)]);
    }
  }
  return image;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : entries) doc.push_back({{"label", e.label.generic_string()}, {"image", e.image.generic_string()}});
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  auto in = open_in(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw FormatError(path.string() + ": manifest must be a JSON array");
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("label") || !item.contains("image") || !item["label"].is_string() ||
        !item["image"].is_string()) {
      throw FormatError(path.string() + ": entries need string 'label' and 'image' fields");
    }
    out.push_back({resolve(base, item["label"].get<std::string>()), resolve(base, item["image"].get<std::string>())});
  }
  return out;
}

fs::path write_dataset(const fs::path& dir, std::span<const Sample> samples) {
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::ostringstream stem;
    stem << std::setw(5) << std::setfill('0') << i;
    ManifestEntry e{fs::path("labels") / (stem.str() + ".pgm"), fs::path("images") / (stem.str() + ".ppm")};
    write_pgm(dir / e.label, samples[i].label);
    write_ppm(dir / e.image, samples[i].image);
    entries.push_back(std::move(e));
  }
  const auto manifest = dir / "manifest.json";
  write_manifest(manifest, entries);
  return manifest;
}

std::vector<Sample> load_dataset(const fs::path& manifest, int num_labels) {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(manifest)) {
    auto label = read_pgm(e.label, num_labels);
    auto image = read_ppm(e.image);
    if (image.dim(1) != label.height() || image.dim(2) != label.width()) {
      throw DimensionError("dataset: " + e.image.string() + " and " + e.label.string() + " differ in extents");
    }
    out.push_back(Sample{std::move(label), std::move(image)});
  }
  return out;
}

Tensor<float> make_grid(std::span<const Tensor<float>> images, int cols) {
  if (images.empty()) throw ArgumentError("make_grid: no images");
  if (cols <= 0) throw ArgumentError("make_grid: cols must be positive");
  const auto& first = images.front();
  if (first.rank() != 3 || first.dim(0) != 3) throw DimensionError("make_grid: images must be [3,H,W]");
  const std::int64_t h = first.dim(1);
  const std::int64_t w = first.dim(2);
  const std::int64_t n = static_cast<std::int64_t>(images.size());
  const std::int64_t c = std::min<std::int64_t>(cols, n);
  const std::int64_t rows = (n + c - 1) / c;
  Tensor<float> grid(Shape{3, rows * h, c * w}, -1.0f);
  auto g = grid.mutable_data();
  const std::int64_t gw = c * w;
  const std::int64_t gplane = rows * h * gw;
  for (std::int64_t k = 0; k < n; ++k) {
    const auto& img = images[static_cast<std::size_t>(k)];
    if (img.shape() != first.shape()) throw DimensionError("make_grid: images must share extents");
    const auto px = img.data();
    const std::int64_t r0 = (k / c) * h;
    const std::int64_t c0 = (k % c) * w;
    for (int ch = 0; ch < 3; ++ch) {
      for (std::int64_t i = 0; i < h; ++i) {
        for (std::int64_t j = 0; j < w; ++j) {
          g[static_cast<std::size_t>(ch * gplane + (r0 + i) * gw + c0 + j)] =
              px[static_cast<std::size_t>((ch * h + i) * w + j)];
        }
      }
    }
  }
  return grid;
}

}  // namespace ccfpse
