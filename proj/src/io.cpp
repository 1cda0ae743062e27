#include "lrnet/io.hpp"

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lrnet {

namespace fs = std::filesystem;

namespace {

// Skips whitespace and '#' comments in a PGM header.
void skip_header_space(const std::vector<char>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

std::size_t header_number(const std::vector<char>& buf, std::size_t& pos, const std::string& path) {
  skip_header_space(buf, pos);
  std::size_t v = 0;
  std::size_t digits = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    v = v * 10 + static_cast<std::size_t>(buf[pos] - '0');
    ++pos;
    require(++digits <= 9, ErrorKind::data, "'" + path + "': PGM header value too large");
  }
  require(digits > 0, ErrorKind::data, "'" + path + "': malformed PGM header");
  return v;
}

}  // namespace

Grid<std::uint8_t> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::data, "cannot open image '" + path + "'");
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(buf.size() >= 2 && buf[0] == 'P' && buf[1] == '5', ErrorKind::data,
          "'" + path + "' is not a binary PGM (P5) file");
  std::size_t pos = 2;
  const std::size_t w = header_number(buf, pos, path);
  const std::size_t h = header_number(buf, pos, path);
  const std::size_t maxval = header_number(buf, pos, path);
  require(maxval >= 1 && maxval <= 255, ErrorKind::data, "'" + path + "': only 8-bit PGM is supported");
  require(pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos])), ErrorKind::data,
          "'" + path + "': malformed PGM header");
  ++pos;
  require(w >= 1 && h >= 1, ErrorKind::data, "'" + path + "': empty image");
  require(buf.size() - pos >= w * h, ErrorKind::data, "'" + path + "': truncated pixel data");
  Grid<std::uint8_t> g(h, w);
  for (std::size_t i = 0; i < w * h; ++i) g.v[i] = static_cast<std::uint8_t>(buf[pos + i]);
  return g;
}

void write_pgm(const std::string& path, const Grid<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::data, "cannot write '" + path + "'");
  out << "P5\n" << pixels.w << " " << pixels.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.v.data()), static_cast<std::streamsize>(pixels.v.size()));
  require(static_cast<bool>(out.flush()), ErrorKind::data, "write failed for '" + path + "'");
}

Image read_image(const std::string& path) {
  const auto g = read_pgm(path);
  Image img(g.h, g.w);
  for (std::size_t i = 0; i < g.size(); ++i) img.v[i] = static_cast<float>(g.v[i]) / 255.0f;
  return img;
}

void write_image(const std::string& path, const Image& image) {
  Grid<std::uint8_t> g(image.h, image.w);
  for (std::size_t i = 0; i < image.size(); ++i) {
    g.v[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.v[i], 0.0f, 1.0f) * 255.0f));
  }
  write_pgm(path, g);
}

Mask read_mask(const std::string& path) {
  const auto g = read_pgm(path);
  Mask m(g.h, g.w);
  for (std::size_t i = 0; i < g.size(); ++i) {
    require(g.v[i] == 0 || g.v[i] == 255, ErrorKind::data,
            "mask '" + path + "' contains value " + std::to_string(g.v[i]) + " (expected 0 or 255)");
    m.v[i] = g.v[i] ? 1 : 0;
  }
  return m;
}

void write_mask(const std::string& path, const Mask& mask) {
  check_binary(mask);
  Grid<std::uint8_t> g(mask.h, mask.w);
  for (std::size_t i = 0; i < mask.size(); ++i) g.v[i] = mask.v[i] ? 255 : 0;
  write_pgm(path, g);
}

std::string split_for_index(std::size_t i) { return i % 5 == 4 ? "test" : "train"; }

std::vector<ManifestEntry> read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / kManifestName;
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::data, "cannot open manifest '" + path.string() + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(ss >> e.split)) continue;
    std::string extra;
    require(static_cast<bool>(ss >> e.image >> e.mask) && !(ss >> extra), ErrorKind::data,
            path.string() + ":" + std::to_string(line_no) + ": expected '<split> <image> <mask>'");
    require(e.split == "train" || e.split == "test", ErrorKind::data,
            path.string() + ":" + std::to_string(line_no) + ": unknown split '" + e.split + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& dir, const std::vector<ManifestEntry>& entries) {
  const fs::path path = fs::path(dir) / kManifestName;
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::data, "cannot write manifest '" + path.string() + "'");
  out << "# split image mask\n";
  for (const auto& e : entries) out << e.split << " " << e.image << " " << e.mask << "\n";
  require(static_cast<bool>(out.flush()), ErrorKind::data, "write failed for '" + path.string() + "'");
}

std::vector<LoadedSample> load_dataset(const std::string& dir, const std::string& split) {
  require(split == "train" || split == "test" || split == "all", ErrorKind::config,
          "split must be train, test or all; got '" + split + "'");
  std::vector<LoadedSample> out;
  for (const auto& e : read_manifest(dir)) {
    if (split != "all" && e.split != split) continue;
    Sample s{read_image((fs::path(dir) / e.image).string()), read_mask((fs::path(dir) / e.mask).string())};
    check_sample(s);
    out.push_back({e, std::move(s)});
  }
  return out;
}

}  // namespace lrnet
