#pragma once

#include "damgan/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace damgan::data {

/// [b, 3, h, w] RGB in [0,1].
using ImageTensor = Tensor<float>;
/// [b, 1, h, w], 1 = missing pixel.
using Mask = Tensor<float>;

template <typename T>
struct Range {
  T lo;
  T hi;
  bool contains(T v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

enum class MaskMode { center, free_form };

struct MaskSpec {
  MaskMode mode = MaskMode::center;
  Index resolution = 128;
  Index center_size = 64;
  Range<int> stroke_count{1, 4};
  Range<double> stroke_width{12.0, 24.0};
  Range<int> vertex_count{4, 12};
  Range<double> segment_length{8.0, 24.0};
  double max_turn_angle = 2.0 * 3.14159265358979323846 / 5.0;
  Range<double> coverage{0.1, 0.4};
  int max_attempts = 200;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the violated field.
  void validate() const;
  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

/// Ones on the centered square of side `center_size`.
Mask center_mask(Index resolution, Index center_size);

/// Random polyline strokes with round caps, resampled until the coverage
/// lands in `spec.coverage`. Deterministic in `spec.seed`.
Mask free_form_mask(const MaskSpec& spec);

/// Dispatches on spec.mode.
Mask make_mask(const MaskSpec& spec);

double coverage(const Mask& mask);

enum class FillMode { zeros, dataset_mean };

struct Fill {
  FillMode mode = FillMode::zeros;
  std::array<float, 3> mean_rgb{0.f, 0.f, 0.f};
};

struct MaskedInput {
  ImageTensor masked_image;
  /// masked_image with the mask appended as a fourth channel.
  Tensor<float> generator_input;
};

/// image * (1 - mask) + fill * mask. A single-item mask broadcasts over the batch.
MaskedInput apply_mask(const ImageTensor& image, const Mask& mask, const Fill& fill = {});

/// Bilinear resize with half-pixel centers and clamped borders.
ImageTensor resize_bilinear(const ImageTensor& image, Index height, Index width);

/// Decodes PNG/JPEG into [1, 3, res, res]. Throws std::runtime_error carrying the path.
ImageTensor load_image(const std::filesystem::path& path, Index resolution);

/// Reads a mask image at its native size; pixels brighter than mid-gray are missing (1).
Mask load_mask(const std::filesystem::path& path);

/// Writes item `index` of `image` as 8-bit RGB PNG, quantized round-half-even.
void save_png(const std::filesystem::path& path, const ImageTensor& image, Index index = 0);

/// round-half-even of clamp(v, 0, 1) * 255.
std::uint8_t quantize(float v);

enum class Split { train, val };

const char* to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string path;  // relative to the dataset root, '/' separated
  Split split = Split::train;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  Index resolution = 128;
  /// Files that failed to decode during build_manifest.
  std::vector<std::string> skipped;

  std::vector<std::string> paths(Split split) const;
  std::size_t count(Split split) const;
};

/// Assigns round(val_fraction * n) items to val via a seeded shuffle; the
/// result is indexed like the input.
std::vector<Split> assign_splits(std::size_t n, double val_fraction, std::uint64_t seed);

/// Scans `root` recursively for PNG/JPEG files in sorted order.
DatasetManifest build_manifest(const std::filesystem::path& root, double val_fraction,
                               std::uint64_t seed, Index resolution = 128);

void write_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& file, Index resolution = 128);

/// Loads every image of a split, in manifest order, as one batch.
ImageTensor load_split(const std::filesystem::path& root, const DatasetManifest& manifest,
                       Split split);

}  // namespace damgan::data
