#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ccfpse/labels.hpp"

namespace ccfpse {

using Color = std::array<float, 3>;

/// Random-shape layouts rendered as flat palette colors plus uniform texture
/// noise. Images are [3,H,W] in [-1,1].
struct SyntheticTaskSpec {
  int num_labels = 5;
  int height = 32;
  int width = 32;
  /// One color per label; empty selects default_palette(num_labels).
  std::vector<Color> palette;
  /// Per-channel noise drawn uniformly from [-amplitude, amplitude].
  double noise_amplitude = 0.1;
  int min_shapes = 2;
  int max_shapes = 5;
  /// Bounds on the side length (rectangles) or diameter (ellipses), in pixels.
  int min_extent = 6;
  int max_extent = 18;

  /// Throws ArgumentError on inconsistent fields, including palettes whose
  /// closest pair of colors is nearer than 0.5.
  void validate() const;
  /// The configured palette, or default_palette(num_labels) when empty.
  std::vector<Color> colors() const;
};

/// Cube-corner colors at +-0.8 for up to 8 labels, then the {-0.8,0,0.8}^3
/// grid for up to 27.
std::vector<Color> default_palette(int num_labels);

/// Smallest Euclidean distance between two palette entries.
double min_palette_distance(std::span<const Color> palette);

struct Sample {
  LabelMap label;
  Tensor<float> image;  // [3,H,W]
};

/// Background label plus a random stack of rectangles and ellipses. Sample i
/// uses its own generator seeded from (seed, i), so the result does not depend
/// on the worker count.
LabelMap generate_layout(const SyntheticTaskSpec& spec, std::uint64_t seed, std::int64_t index);

/// palette[label] + noise, clamped to [-1,1]. The noise stream is seeded from
/// (seed, index).
Tensor<float> render_layout(const LabelMap& layout, const SyntheticTaskSpec& spec, std::uint64_t seed,
                            std::int64_t index);

/// ArgumentError when count <= 0.
std::vector<Sample> generate_dataset(const SyntheticTaskSpec& spec, std::int64_t count, std::uint64_t seed);

/// Binary P5, maxval 255, pixel == label id.
void write_pgm(const std::filesystem::path& path, const LabelMap& map);
LabelMap read_pgm(const std::filesystem::path& path, int num_labels);

/// Binary P6, maxval 255, pixel = round((v+1)/2*255) after clamping to [-1,1].
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_ppm(const std::filesystem::path& path);

std::uint8_t to_pixel(float v);
float from_pixel(std::uint8_t p);

struct ManifestEntry {
  std::filesystem::path label;
  std::filesystem::path image;
};

/// JSON array of {"label": path, "image": path}; relative paths resolve
/// against the manifest's directory.
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Writes labels/NNNNN.pgm, images/NNNNN.ppm and manifest.json under `dir`.
std::filesystem::path write_dataset(const std::filesystem::path& dir, std::span<const Sample> samples);
std::vector<Sample> load_dataset(const std::filesystem::path& manifest, int num_labels);

/// Tiles [3,H,W] images row-major into a [3, rows*H, cols*W] contact sheet;
/// unused cells are black (-1).
Tensor<float> make_grid(std::span<const Tensor<float>> images, int cols);

}  // namespace ccfpse
