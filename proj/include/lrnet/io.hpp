#pragma once

#include <string>
#include <vector>

#include "lrnet/data.hpp"

namespace lrnet {

/// 8-bit binary PGM (P5).
Grid<std::uint8_t> read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Grid<std::uint8_t>& pixels);

Image read_image(const std::string& path);  // bytes / 255
void write_image(const std::string& path, const Image& image);
Mask read_mask(const std::string& path);  // {0, 255} -> {0, 1}
void write_mask(const std::string& path, const Mask& mask);

struct ManifestEntry {
  std::string split;  // "train" or "test"
  std::string image;  // file names relative to the dataset directory
  std::string mask;

  bool operator==(const ManifestEntry&) const = default;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Lines "<split> <image> <mask>"; '#' starts a comment.
std::vector<ManifestEntry> read_manifest(const std::string& dir);
void write_manifest(const std::string& dir, const std::vector<ManifestEntry>& entries);

/// Index i goes to the test split when i % 5 == 4 (4:1 train/test).
std::string split_for_index(std::size_t i);

struct LoadedSample {
  ManifestEntry entry;
  Sample sample;
};

/// Entries of `split` ("train", "test" or "all") with their pixels.
std::vector<LoadedSample> load_dataset(const std::string& dir, const std::string& split);

}  // namespace lrnet
