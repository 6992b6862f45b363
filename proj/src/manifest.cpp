#include "damgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace damgan::data {

namespace fs = std::filesystem;

const char* to_string(Split s) { return s == Split::train ? "train" : "val"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<std::string> DatasetManifest::paths(Split split) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e.path);
  return out;
}

std::size_t DatasetManifest::count(Split split) const {
  return std::size_t(std::count_if(entries.begin(), entries.end(),
                                   [&](const ManifestEntry& e) { return e.split == split; }));
}

std::vector<Split> assign_splits(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction <= 1.0)) {
    throw std::invalid_argument("val_fraction must lie in [0,1]");
  }
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * double(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Split> splits(n, Split::train);
  for (std::size_t i = 0; i < n_val; ++i) splits[order[i]] = Split::val;
  return splits;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

DatasetManifest build_manifest(const fs::path& root, double val_fraction, std::uint64_t seed,
                               Index resolution) {
  if (!fs::is_directory(root)) throw std::runtime_error("no images found: " + root.string() + " is not a directory");
  std::vector<std::string> candidates;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      candidates.push_back(fs::relative(entry.path(), root).generic_string());
    }
  }
  std::sort(candidates.begin(), candidates.end());

  DatasetManifest manifest;
  manifest.resolution = resolution;
  std::vector<std::string> readable;
  for (const auto& rel : candidates) {
    try {
      load_image(root / rel, resolution);
      readable.push_back(rel);
    } catch (const std::exception&) {
      manifest.skipped.push_back(rel);
    }
  }
  if (readable.empty()) throw std::runtime_error("no images found in " + root.string());

  const auto splits = assign_splits(readable.size(), val_fraction, seed);
  for (std::size_t i = 0; i < readable.size(); ++i) manifest.entries.push_back({readable[i], splits[i]});
  return manifest;
}

void write_manifest(const fs::path& file, const DatasetManifest& manifest) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + file.string());
  for (const auto& e : manifest.entries) out << e.path << '\t' << to_string(e.split) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed writing manifest " + file.string());
}

DatasetManifest read_manifest(const fs::path& file, Index resolution) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + file.string());
  DatasetManifest manifest;
  manifest.resolution = resolution;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw std::runtime_error("manifest " + file.string() + ":" + std::to_string(lineno) +
                               ": expected 'path<TAB>split'");
    }
    try {
      manifest.entries.push_back({line.substr(0, tab), parse_split(line.substr(tab + 1))});
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("manifest " + file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return manifest;
}

ImageTensor load_split(const fs::path& root, const DatasetManifest& manifest, Split split) {
  ImageTensor batch;
  for (const auto& rel : manifest.paths(split)) {
    batch = concat_batch(batch, load_image(root / rel, manifest.resolution));
  }
  return batch;
}

}  // namespace damgan::data
