#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "slip/embedding.hpp"

namespace slip {

/// In-memory form of the SLIPEMB1 container.
struct Dataset {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<WsiBag> bags;
};

inline constexpr char kDatasetMagic[8] = {'S', 'L', 'I', 'P', 'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Layout (little-endian): magic, u32 version, u32 d_v, u32 bag count,
/// u32 class count, then per bag u32 N, u32 label, u16 patient-id length,
/// id bytes, N x (u32 x, u32 y), N x d_v f32. Embeddings are narrowed to f32.
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);

/// Inverse of encode_dataset. Rejects malformed input with BadMagic,
/// VersionUnsupported, TruncatedFile or CorruptHeader.
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Normalise every patch row to unit length (ingestion step before pooling).
void normalize_patches(Dataset& dataset);

/// One entry per non-blank line; lines whose first non-space character is
/// '#' are comments. Throws EmptyPromptSet when nothing remains.
std::vector<std::string> parse_prompt_lines(const std::string& text);
std::vector<std::string> read_tissue_prompts(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct HeatmapExport {
  std::size_t class_index = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::string csv;
  std::vector<std::uint8_t> pgm;  // binary P5, maxval 255
  std::vector<std::uint8_t> pixels;  // row-major, width x height
  std::vector<std::size_t> top;     // up to 5 highest-scoring patch indices
  std::vector<std::size_t> bottom;  // up to 5 lowest-scoring patch indices
};

/// Scores are correlation(n, class_index); pixels are min-max scaled to
/// [0, 255] (a constant map is all 255) and cells without a patch are 0.
HeatmapExport export_heatmap(const WsiBag& bag, const Matrix& correlation, std::size_t class_index);

/// Writes <prefix>.csv, <prefix>.pgm and <prefix>.extremes.json.
void write_heatmap(const HeatmapExport& heatmap, const std::string& prefix);

}  // namespace slip
