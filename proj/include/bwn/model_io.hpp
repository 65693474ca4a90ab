#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bwn/binarization.hpp"
#include "bwn/layers.hpp"
#include "bwn/network.hpp"

namespace bwn {

// Model file layout (all integers little-endian), see docs/model-format.md:
//
//   "BWN1" | u16 version | u16 record count
//   u32 input C, H, W | u32 embedding_dim | u32 num_classes
//   record*: u8 kind | u8 attr count | u32 attrs | u8 tensor count
//            tensor*: u8 rank | u32 extents | u8 encoding | payload
//   u32 CRC32 of every preceding byte
//
// The classifier is the last record (a linear layer with bias).

enum class Encoding : std::uint8_t { float32 = 0, packed = 1 };

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kFileHeaderBytes = 4 + 2 + 2 + 5 * 4;

std::string_view encoding_name(Encoding e) noexcept;

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;

/// Sign words of every filter, each word little-endian; bit i of filter f is
/// set when weight i is +1. Each filter starts on a 64-bit boundary.
std::vector<std::uint8_t> pack_weights(const BinaryFilterBank& bank);

/// Inverse of pack_weights, returning F*n signs. Throws length_mismatch when
/// the byte count is not F * 8 * ceil(n/64) and, in strict mode,
/// nonzero_padding when any padding bit is set.
std::vector<std::int8_t> unpack_weights(std::span<const std::uint8_t> bytes, std::size_t n,
                                        std::size_t filters, bool strict = true);

/// float32 stores every parameter densely (training checkpoint). packed
/// stores binarizable parameters as sign bits plus scales and everything else
/// as float32; banks are taken from the model or binarised on the fly.
std::vector<std::uint8_t> serialize_model(const Model& model, Encoding encoding);

/// Throws Error with a format code (bad_magic, bad_version, truncated,
/// length_mismatch, crc_mismatch, nonzero_padding, bad_record).
Model parse_model(std::span<const std::uint8_t> bytes);

/// Written to a sibling temporary file and renamed into place.
void save_model(const std::filesystem::path& path, const Model& model, Encoding encoding);
Model load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Exact size serialize_model would produce, from the spec alone.
std::size_t encoded_size(const NetworkSpec& spec, Encoding encoding);

/// True when some binarizable parameter is present only as a bank.
bool is_packed(const Model& model);

struct ParamSize {
  std::string name;
  Extents shape;
  bool binarized = false;
  std::size_t filters = 0;
  std::size_t weights_per_filter = 0;
  std::uint64_t float_bytes = 0;   // 4 * F * n
  std::uint64_t packed_bytes = 0;  // F * (8 * ceil(n/64) + 4) when binarized
  std::uint64_t sign_bits = 0;     // F * n when binarized
  std::uint64_t padding_bits = 0;
  std::uint64_t scale_bytes = 0;
};

struct SizeReport {
  std::vector<ParamSize> params;
  std::uint64_t binarized_params = 0;
  std::uint64_t float_only_params = 0;
  std::uint64_t float_bytes = 0;   // parameter payload, all float32
  std::uint64_t packed_bytes = 0;  // parameter payload, packed encoding
  std::uint64_t float_file_bytes = 0;
  std::uint64_t packed_file_bytes = 0;

  /// 32-bit float storage of the binarized parameters over their sign bits.
  /// Exactly 32 whenever anything is binarized, 1 otherwise.
  double sign_bit_ratio() const noexcept;
  double payload_ratio() const noexcept;
  double file_ratio() const noexcept;
  /// binarized_params / 32: the binary weights expressed as a count of
  /// float32-sized words.
  double float_word_equivalents() const noexcept;
};

SizeReport size_report(const NetworkSpec& spec);

std::string format_size_report(const SizeReport& report);

/// One line per record and tensor, for the inspect command.
std::string describe_model_file(std::span<const std::uint8_t> bytes);

}  // namespace bwn
