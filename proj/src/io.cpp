#include "slip/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "slip/error.hpp"

namespace slip {

namespace {

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void require(std::uint64_t n, const char* what) const {
    if (n > remaining()) {
      throw Error(ErrorKind::TruncatedFile, std::string("file ends inside ") + what + " at byte " + std::to_string(pos_));
    }
  }
  std::uint16_t u16(const char* what) {
    require(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    require(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <class T>
std::uint32_t checked_u32(T v, const char* what) {
  if (v > UINT32_MAX) throw Error(ErrorKind::InvalidArgument, std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.raw(kDatasetMagic, sizeof kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(checked_u32(dataset.dim, "dimension"));
  w.u32(checked_u32(dataset.bags.size(), "bag count"));
  w.u32(checked_u32(dataset.num_classes, "class count"));
  for (const WsiBag& bag : dataset.bags) {
    bag.validate(dataset.num_classes);
    if (bag.dim() != dataset.dim) throw Error(ErrorKind::DimensionMismatch, "bag dimension differs from dataset");
    if (bag.patient_id.size() > UINT16_MAX) throw Error(ErrorKind::InvalidArgument, "patient id too long");
    w.u32(checked_u32(bag.size(), "patch count"));
    w.u32(checked_u32(bag.label, "label"));
    w.u16(static_cast<std::uint16_t>(bag.patient_id.size()));
    w.raw(bag.patient_id.data(), bag.patient_id.size());
    for (const GridCoord& g : bag.coords) {
      w.u32(g.x);
      w.u32(g.y);
    }
    for (double v : bag.patches.values()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() >= sizeof kDatasetMagic) {
    if (std::memcmp(bytes.data(), kDatasetMagic, sizeof kDatasetMagic) != 0) {
      throw Error(ErrorKind::BadMagic, "not a SLIPEMB1 container");
    }
  } else if (std::memcmp(bytes.data(), kDatasetMagic, bytes.size()) != 0) {
    throw Error(ErrorKind::BadMagic, "not a SLIPEMB1 container");
  }
  r.take(sizeof kDatasetMagic, "magic");
  const std::uint32_t version = r.u32("header");
  if (version != kDatasetVersion) {
    throw Error(ErrorKind::VersionUnsupported, "container version " + std::to_string(version));
  }
  Dataset ds;
  ds.dim = r.u32("header");
  const std::uint32_t bag_count = r.u32("header");
  ds.num_classes = r.u32("header");
  if (ds.dim == 0) throw Error(ErrorKind::CorruptHeader, "dimension is zero");
  if (ds.num_classes == 0) throw Error(ErrorKind::CorruptHeader, "class count is zero");
  if (ds.num_classes > bag_count) {
    throw Error(ErrorKind::CorruptHeader, "class count " + std::to_string(ds.num_classes) + " exceeds bag count " +
                                              std::to_string(bag_count));
  }
  // Every bag needs at least 10 bytes of fixed header plus one patch.
  const std::uint64_t min_bag_bytes = 10 + 8 + 4ULL * ds.dim;
  if (static_cast<std::uint64_t>(bag_count) * min_bag_bytes > r.remaining()) {
    throw Error(ErrorKind::TruncatedFile, "bag count " + std::to_string(bag_count) + " exceeds file length");
  }

  std::vector<bool> class_seen(ds.num_classes, false);
  ds.bags.reserve(bag_count);
  for (std::uint32_t b = 0; b < bag_count; ++b) {
    const std::uint32_t n = r.u32("bag header");
    const std::uint32_t label = r.u32("bag header");
    const std::uint16_t id_len = r.u16("bag header");
    if (n == 0) throw Error(ErrorKind::CorruptHeader, "bag " + std::to_string(b) + " has no patches");
    if (label >= ds.num_classes) {
      throw Error(ErrorKind::CorruptHeader, "bag " + std::to_string(b) + " label " + std::to_string(label) +
                                                " >= class count " + std::to_string(ds.num_classes));
    }
    const auto id = r.take(id_len, "patient id");
    r.require(static_cast<std::uint64_t>(n) * (8 + 4ULL * ds.dim), "bag payload");

    std::vector<GridCoord> coords(n);
    for (auto& g : coords) {
      g.x = r.u32("coordinates");
      g.y = r.u32("coordinates");
    }
    std::vector<double> values(static_cast<std::size_t>(n) * ds.dim);
    for (double& v : values) {
      const float f = r.f32("embeddings");
      if (!std::isfinite(f)) throw Error(ErrorKind::CorruptHeader, "non-finite embedding in bag " + std::to_string(b));
      v = f;
    }
    class_seen[label] = true;
    ds.bags.push_back(WsiBag{EmbeddingMatrix(Matrix(n, ds.dim, std::move(values)), EmbeddingKind::Patch),
                             std::move(coords), label, std::string(id.begin(), id.end())});
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::CorruptHeader, std::to_string(r.remaining()) + " trailing bytes after last bag");
  }
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    if (!class_seen[c]) {
      throw Error(ErrorKind::CorruptHeader, "class count " + std::to_string(ds.num_classes) +
                                                " but no bag has label " + std::to_string(c));
    }
  }
  return ds;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file_bytes(path)); }

void normalize_patches(Dataset& dataset) {
  for (auto& bag : dataset.bags) bag.patches = l2_normalize_rows(bag.patches);
}

std::vector<std::string> parse_prompt_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r\f\v");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r\f\v");
    out.push_back(line.substr(first, last - first + 1));
  }
  if (out.empty()) throw Error(ErrorKind::EmptyPromptSet, "no prompt lines");
  return out;
}

std::vector<std::string> read_tissue_prompts(const std::filesystem::path& path) {
  try {
    return parse_prompt_lines(read_text_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptyPromptSet) throw Error(ErrorKind::EmptyPromptSet, path.string() + " has no prompts");
    throw;
  }
}

HeatmapExport export_heatmap(const WsiBag& bag, const Matrix& correlation, std::size_t class_index) {
  if (class_index >= correlation.cols()) {
    throw Error(ErrorKind::ClassOutOfRange, "class " + std::to_string(class_index) + " >= " +
                                                std::to_string(correlation.cols()));
  }
  if (correlation.rows() != bag.size() || bag.coords.size() != bag.size()) {
    throw Error(ErrorKind::DimensionMismatch, "correlation rows differ from bag size");
  }
  const std::size_t n = bag.size();
  HeatmapExport out;
  out.class_index = class_index;
  std::vector<double> score(n);
  std::uint32_t max_x = 0, max_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = correlation(i, class_index);
    max_x = std::max(max_x, bag.coords[i].x);
    max_y = std::max(max_y, bag.coords[i].y);
  }
  out.width = static_cast<std::size_t>(max_x) + 1;
  out.height = static_cast<std::size_t>(max_y) + 1;

  std::ostringstream csv;
  csv << "grid_x,grid_y,score\n";
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", score[i]);
    csv << bag.coords[i].x << ',' << bag.coords[i].y << ',' << buf << '\n';
  }
  out.csv = csv.str();

  const auto [lo_it, hi_it] = std::minmax_element(score.begin(), score.end());
  const double lo = *lo_it, hi = *hi_it;
  out.pixels.assign(out.width * out.height, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double scaled = hi > lo ? (score[i] - lo) / (hi - lo) * 255.0 : 255.0;
    auto& px = out.pixels[bag.coords[i].y * out.width + bag.coords[i].x];
    px = std::max(px, static_cast<std::uint8_t>(std::clamp<long>(std::lround(scaled), 0, 255)));
  }
  const std::string header = "P5\n" + std::to_string(out.width) + " " + std::to_string(out.height) + "\n255\n";
  out.pgm.assign(header.begin(), header.end());
  out.pgm.insert(out.pgm.end(), out.pixels.begin(), out.pixels.end());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  out.top.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(5, n)));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  out.bottom.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(5, n)));
  return out;
}

void write_heatmap(const HeatmapExport& heatmap, const std::string& prefix) {
  write_text_file(prefix + ".csv", heatmap.csv);
  write_file_bytes(prefix + ".pgm", heatmap.pgm);
  nlohmann::json extremes = {{"class", heatmap.class_index},
                             {"width", heatmap.width},
                             {"height", heatmap.height},
                             {"top", heatmap.top},
                             {"bottom", heatmap.bottom}};
  write_text_file(prefix + ".extremes.json", extremes.dump(2) + "\n");
}

}  // namespace slip
