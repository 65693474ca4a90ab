#include "bwn/model_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include "bwn/error.hpp"

namespace bwn {

std::string_view encoding_name(Encoding e) noexcept {
  return e == Encoding::float32 ? "float32" : "packed";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length, so feed large buffers in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(chunk));
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr char kMagic[4] = {'B', 'W', 'N', '1'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void set_context(std::string context) { context_ = std::move(context); }
  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(Errc::truncated, "model file truncated in " + context_ + ": need " +
                                       std::to_string(n) + " bytes at offset " +
                                       std::to_string(pos_) + ", " +
                                       std::to_string(remaining()) + " left");
    }
  }

 private:
  std::uint64_t le(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string context_ = "header";
};

std::uint64_t read_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

float read_f32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return std::bit_cast<float>(v);
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(Errc::invalid_argument, std::string(what) + " " + std::to_string(v) +
                                            " does not fit the file format");
  }
  return static_cast<std::uint32_t>(v);
}

std::vector<std::uint32_t> layer_attrs(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::binary_conv2d:
    case LayerKind::float_conv2d:
      return {to_u32(l.filters, "filters"), to_u32(l.kernel, "kernel"),
              to_u32(l.stride, "stride"), to_u32(l.padding, "padding")};
    case LayerKind::linear:
      return {to_u32(l.filters, "features"), l.bias ? 1u : 0u};
    case LayerKind::relu:
    case LayerKind::flatten:
      return {};
    case LayerKind::prelu:
      return {std::bit_cast<std::uint32_t>(l.slope)};
    case LayerKind::residual_block:
      return {to_u32(l.filters, "filters"), to_u32(l.stride, "stride"),
              static_cast<std::uint32_t>(l.activation), std::bit_cast<std::uint32_t>(l.slope)};
    case LayerKind::pool:
      return {static_cast<std::uint32_t>(l.pool), to_u32(l.pool_size, "pool size")};
  }
  throw Error(Errc::invalid_argument, "unknown layer kind");
}

[[noreturn]] void bad_record(std::size_t index, const std::string& what) {
  throw Error(Errc::bad_record, "record " + std::to_string(index) + ": " + what);
}

LayerSpec decode_layer(std::size_t index, std::uint8_t kind,
                       const std::vector<std::uint32_t>& a) {
  auto expect = [&](std::size_t n) {
    if (a.size() != n) {
      bad_record(index, "kind " + std::to_string(kind) + " expects " + std::to_string(n) +
                            " attributes, found " + std::to_string(a.size()));
    }
  };
  switch (static_cast<LayerKind>(kind)) {
    case LayerKind::binary_conv2d:
      expect(4);
      return LayerSpec::binary_conv2d(a[0], a[1], a[2], a[3]);
    case LayerKind::float_conv2d:
      expect(4);
      return LayerSpec::float_conv2d(a[0], a[1], a[2], a[3]);
    case LayerKind::linear:
      expect(2);
      if (a[1] > 1) bad_record(index, "bias flag must be 0 or 1");
      return LayerSpec::linear(a[0], a[1] == 1);
    case LayerKind::relu:
      expect(0);
      return LayerSpec::relu();
    case LayerKind::prelu:
      expect(1);
      return LayerSpec::prelu(std::bit_cast<float>(a[0]));
    case LayerKind::residual_block:
      expect(4);
      if (a[2] > 1) bad_record(index, "unknown activation " + std::to_string(a[2]));
      return LayerSpec::residual_block(a[0], a[1], static_cast<Activation>(a[2]),
                                       std::bit_cast<float>(a[3]));
    case LayerKind::pool:
      expect(2);
      if (a[0] == 0) return LayerSpec::global_average_pool();
      if (a[0] == 1) return LayerSpec::max_pool(a[1]);
      bad_record(index, "unknown pool kind " + std::to_string(a[0]));
    case LayerKind::flatten:
      expect(0);
      return LayerSpec::flatten();
  }
  bad_record(index, "unknown layer kind " + std::to_string(kind));
}

std::size_t packed_payload_bytes(std::size_t filters, std::size_t n) {
  return filters * (8 * BinaryFilterBank::words_for(n) + 4);
}

struct RawTensor {
  Extents shape;
  Encoding encoding = Encoding::float32;
  std::span<const std::uint8_t> payload;
};

struct RawRecord {
  std::uint8_t kind = 0;
  std::vector<std::uint32_t> attrs;
  std::vector<RawTensor> tensors;
};

struct RawFile {
  Extents input_shape;
  std::size_t embedding_dim = 0;
  std::size_t num_classes = 0;
  std::vector<RawRecord> records;
  std::uint32_t stored_crc = 0;
  std::uint32_t computed_crc = 0;
};

// Multiplies extents, returning nullopt on overflow.
std::optional<std::uint64_t> checked_product(const Extents& shape, std::uint64_t factor) {
  std::uint64_t p = factor;
  for (std::size_t e : shape) {
    if (__builtin_mul_overflow(p, static_cast<std::uint64_t>(e), &p)) return std::nullopt;
  }
  return p;
}

// Structural pass: framing, lengths and the CRC footer, no semantic checks.
RawFile scan(std::span<const std::uint8_t> bytes) {
  const std::size_t prefix = std::min<std::size_t>(bytes.size(), 4);
  if (prefix > 0 && std::memcmp(bytes.data(), kMagic, prefix) != 0) {
    throw Error(Errc::bad_magic, "not a model file (bad magic)");
  }
  Reader r(bytes);
  r.take(4);
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion) {
    throw Error(Errc::bad_version, "unsupported model format version " +
                                       std::to_string(version) + " (expected " +
                                       std::to_string(kFormatVersion) + ")");
  }
  RawFile f;
  const std::uint16_t count = r.u16();
  f.input_shape = {r.u32(), r.u32(), r.u32()};
  f.embedding_dim = r.u32();
  f.num_classes = r.u32();
  for (std::size_t i = 0; i < count; ++i) {
    r.set_context("record " + std::to_string(i));
    RawRecord rec;
    rec.kind = r.u8();
    const std::uint8_t attr_count = r.u8();
    for (std::uint8_t a = 0; a < attr_count; ++a) rec.attrs.push_back(r.u32());
    const std::uint8_t tensor_count = r.u8();
    for (std::uint8_t t = 0; t < tensor_count; ++t) {
      r.set_context("record " + std::to_string(i) + " tensor " + std::to_string(t));
      RawTensor raw;
      const std::uint8_t rank = r.u8();
      for (std::uint8_t d = 0; d < rank; ++d) raw.shape.push_back(r.u32());
      const std::uint8_t enc = r.u8();
      std::optional<std::uint64_t> len;
      if (enc == static_cast<std::uint8_t>(Encoding::float32)) {
        len = checked_product(raw.shape, 4);
      } else if (enc == static_cast<std::uint8_t>(Encoding::packed)) {
        if (rank < 2 || raw.shape[0] == 0) {
          bad_record(i, "packed tensor needs a [F, ...] shape, got " + shape_string(raw.shape));
        }
        const Extents filter(raw.shape.begin() + 1, raw.shape.end());
        const std::optional<std::uint64_t> n = checked_product(filter, 1);
        std::uint64_t bytes_total = 0;
        if (n && !__builtin_mul_overflow(std::uint64_t{raw.shape[0]},
                                         8 * BinaryFilterBank::words_for(*n) + 4, &bytes_total)) {
          len = bytes_total;
        }
      } else {
        bad_record(i, "unknown tensor encoding " + std::to_string(enc));
      }
      raw.encoding = static_cast<Encoding>(enc);
      if (!len || *len > r.remaining()) {
        r.need(r.remaining() + 1);  // reports truncation with the current context
      }
      raw.payload = r.take(static_cast<std::size_t>(*len));
      rec.tensors.push_back(std::move(raw));
    }
    f.records.push_back(std::move(rec));
  }
  r.set_context("checksum footer");
  const std::size_t body = r.position();
  f.stored_crc = r.u32();
  if (r.remaining() != 0) {
    throw Error(Errc::length_mismatch, std::to_string(r.remaining()) +
                                           " unexpected bytes after the checksum footer");
  }
  f.computed_crc = crc32(bytes.first(body));
  return f;
}

void check_crc(const RawFile& f) {
  if (f.stored_crc != f.computed_crc) {
    std::ostringstream os;
    os << std::hex << std::setfill('0') << "CRC mismatch: stored 0x" << std::setw(8)
       << f.stored_crc << ", computed 0x" << std::setw(8) << f.computed_crc;
    throw Error(Errc::crc_mismatch, os.str());
  }
}

Tensor decode_float(const RawTensor& t) {
  Tensor out(t.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = read_f32(t.payload.data() + 4 * i);
  return out;
}

BinaryFilterBank decode_packed(std::size_t index, const RawTensor& t) {
  const std::size_t F = t.shape[0];
  Extents filter(t.shape.begin() + 1, t.shape.end());
  const std::size_t n = element_count(filter);
  const std::size_t wpf = BinaryFilterBank::words_for(n);
  std::vector<std::uint64_t> words(F * wpf);
  for (std::size_t w = 0; w < words.size(); ++w) words[w] = read_u64(t.payload.data() + 8 * w);
  std::vector<float> scales(F);
  const std::uint8_t* sp = t.payload.data() + 8 * words.size();
  for (std::size_t f = 0; f < F; ++f) scales[f] = read_f32(sp + 4 * f);
  try {
    return BinaryFilterBank(std::move(filter), F, std::move(words), std::move(scales));
  } catch (const Error& e) {
    if (e.is_format_error()) throw;
    bad_record(index, e.what());
  }
}

void write_tensor_header(Writer& w, const Extents& shape, Encoding enc) {
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t e : shape) w.u32(to_u32(e, "extent"));
  w.u8(static_cast<std::uint8_t>(enc));
}

}  // namespace

std::vector<std::uint8_t> pack_weights(const BinaryFilterBank& bank) {
  Writer w;
  for (std::uint64_t word : bank.words()) w.u64(word);
  return std::move(w.data());
}

std::vector<std::int8_t> unpack_weights(std::span<const std::uint8_t> bytes, std::size_t n,
                                        std::size_t filters, bool strict) {
  const std::size_t wpf = BinaryFilterBank::words_for(n);
  if (n == 0 || bytes.size() != filters * wpf * 8) {
    throw Error(Errc::length_mismatch, "unpack_weights: " + std::to_string(bytes.size()) +
                                           " bytes, expected " +
                                           std::to_string(filters * wpf * 8) + " for " +
                                           std::to_string(filters) + " filters of " +
                                           std::to_string(n) + " signs");
  }
  std::vector<std::int8_t> signs(filters * n);
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t k = 0; k < wpf; ++k) {
      const std::uint64_t word = read_u64(bytes.data() + 8 * (f * wpf + k));
      const std::size_t used = std::min<std::size_t>(64, n - 64 * k);
      if (strict && used < 64 && (word >> used) != 0) {
        throw Error(Errc::nonzero_padding,
                    "unpack_weights: nonzero padding bits in filter " + std::to_string(f));
      }
      for (std::size_t b = 0; b < used; ++b) {
        signs[f * n + 64 * k + b] = (word >> b) & 1u ? 1 : -1;
      }
    }
  }
  return signs;
}

std::vector<std::uint8_t> serialize_model(const Model& model, Encoding encoding) {
  check_model(model);
  const NetworkSpec& spec = model.spec;
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  const std::size_t records = spec.layers.size() + 1;
  if (records > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(Errc::invalid_argument, "too many layers for the file format");
  }

  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(records));
  for (std::size_t e : spec.input_shape) w.u32(to_u32(e, "input extent"));
  w.u32(to_u32(spec.embedding_dim, "embedding_dim"));
  w.u32(to_u32(spec.num_classes, "num_classes"));

  std::size_t p = 0;
  for (std::size_t i = 0; i < records; ++i) {
    const bool classifier = i == spec.layers.size();
    const LayerSpec layer =
        classifier ? LayerSpec::linear(spec.num_classes, true) : spec.layers[i];
    const std::vector<std::uint32_t> attrs = layer_attrs(layer);
    w.u8(static_cast<std::uint8_t>(layer.kind));
    w.u8(static_cast<std::uint8_t>(attrs.size()));
    for (std::uint32_t a : attrs) w.u32(a);
    std::size_t end = p;
    while (end < layout.size() && layout[end].layer == i) ++end;
    w.u8(static_cast<std::uint8_t>(end - p));
    for (; p < end; ++p) {
      const ParamInfo& info = layout[p];
      if (encoding == Encoding::packed && info.binarizable) {
        const BinaryFilterBank bank =
            model.banks[p] ? *model.banks[p] : binarize_bank(model.weights[p]);
        write_tensor_header(w, info.shape, Encoding::packed);
        w.bytes(pack_weights(bank));
        for (float s : bank.scales()) w.f32(s);
      } else {
        if (model.weights.size() != layout.size() || model.weights[p].empty()) {
          throw Error(Errc::invalid_argument,
                      info.name + " has no float weights to store; a packed model cannot be "
                                  "saved with float32 encoding");
        }
        write_tensor_header(w, info.shape, Encoding::float32);
        for (float v : model.weights[p].data()) w.f32(v);
      }
    }
  }
  w.u32(crc32(w.data()));
  return std::move(w.data());
}

Model parse_model(std::span<const std::uint8_t> bytes) {
  const RawFile f = scan(bytes);
  check_crc(f);
  if (f.records.empty()) bad_record(0, "file has no classifier record");

  Model model;
  model.spec.input_shape = f.input_shape;
  model.spec.embedding_dim = f.embedding_dim;
  model.spec.num_classes = f.num_classes;
  const std::size_t L = f.records.size() - 1;
  for (std::size_t i = 0; i < L; ++i) {
    model.spec.layers.push_back(decode_layer(i, f.records[i].kind, f.records[i].attrs));
  }
  const RawRecord& cls = f.records[L];
  if (cls.kind != static_cast<std::uint8_t>(LayerKind::linear) ||
      cls.attrs != std::vector<std::uint32_t>{static_cast<std::uint32_t>(f.num_classes), 1u}) {
    bad_record(L, "last record must be the classifier (linear, num_classes, bias)");
  }

  std::vector<ParamInfo> layout;
  try {
    layout = parameter_layout(model.spec);
  } catch (const Error& e) {
    throw Error(Errc::bad_record, std::string("inconsistent network description: ") + e.what());
  }

  model.weights.resize(layout.size());
  model.banks.resize(layout.size());
  std::size_t p = 0;
  for (std::size_t i = 0; i <= L; ++i) {
    for (std::size_t t = 0; t < f.records[i].tensors.size(); ++t, ++p) {
      const RawTensor& raw = f.records[i].tensors[t];
      if (p >= layout.size() || layout[p].layer != i) {
        bad_record(i, "unexpected tensor " + std::to_string(t));
      }
      if (raw.shape != layout[p].shape) {
        bad_record(i, layout[p].name + " stored as " + shape_string(raw.shape) + ", expected " +
                          shape_string(layout[p].shape));
      }
      if (raw.encoding == Encoding::packed) {
        if (!layout[p].binarizable) bad_record(i, layout[p].name + " cannot be packed");
        model.banks[p] = decode_packed(i, raw);
      } else {
        model.weights[p] = decode_float(raw);
      }
    }
    if (p < layout.size() && layout[p].layer == i) {
      bad_record(i, "missing tensor " + layout[p].name);
    }
  }
  return model;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io, "error reading " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(Errc::io, "error writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(Errc::io, "cannot rename " + tmp.string() + " to " + path.string() + ": " +
                              ec.message());
  }
}

void save_model(const std::filesystem::path& path, const Model& model, Encoding encoding) {
  write_file_atomic(path, serialize_model(model, encoding));
}

Model load_model(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  try {
    return parse_model(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::size_t encoded_size(const NetworkSpec& spec, Encoding encoding) {
  const std::vector<ParamInfo> layout = parameter_layout(spec);
  std::size_t size = kFileHeaderBytes + 4;
  for (const LayerSpec& l : spec.layers) size += 3 + 4 * layer_attrs(l).size();
  size += 3 + 4 * 2;  // classifier record
  for (const ParamInfo& p : layout) {
    size += 2 + 4 * p.shape.size();
    const std::size_t count = element_count(p.shape);
    if (encoding == Encoding::packed && p.binarizable) {
      size += packed_payload_bytes(p.shape[0], count / p.shape[0]);
    } else {
      size += 4 * count;
    }
  }
  return size;
}

bool is_packed(const Model& model) {
  const std::vector<ParamInfo> layout = parameter_layout(model.spec);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!layout[i].binarizable) continue;
    if (model.weights.size() != layout.size() || model.weights[i].empty()) return true;
  }
  return false;
}

double SizeReport::sign_bit_ratio() const noexcept {
  if (binarized_params == 0) return 1.0;
  return static_cast<double>(32 * binarized_params) / static_cast<double>(binarized_params);
}

double SizeReport::payload_ratio() const noexcept {
  return packed_bytes == 0 ? 1.0
                           : static_cast<double>(float_bytes) / static_cast<double>(packed_bytes);
}

double SizeReport::file_ratio() const noexcept {
  return packed_file_bytes == 0
             ? 1.0
             : static_cast<double>(float_file_bytes) / static_cast<double>(packed_file_bytes);
}

double SizeReport::float_word_equivalents() const noexcept {
  return static_cast<double>(binarized_params) / 32.0;
}

SizeReport size_report(const NetworkSpec& spec) {
  SizeReport r;
  for (const ParamInfo& p : parameter_layout(spec)) {
    ParamSize s;
    s.name = p.name;
    s.shape = p.shape;
    s.binarized = p.binarizable;
    const std::uint64_t count = element_count(p.shape);
    s.filters = p.shape[0];
    s.weights_per_filter = count / s.filters;
    s.float_bytes = 4 * count;
    if (p.binarizable) {
      const std::uint64_t wpf = BinaryFilterBank::words_for(s.weights_per_filter);
      s.packed_bytes = packed_payload_bytes(s.filters, s.weights_per_filter);
      s.sign_bits = count;
      s.padding_bits = s.filters * (64 * wpf - s.weights_per_filter);
      s.scale_bytes = 4 * s.filters;
      r.binarized_params += count;
    } else {
      s.packed_bytes = s.float_bytes;
      r.float_only_params += count;
    }
    r.float_bytes += s.float_bytes;
    r.packed_bytes += s.packed_bytes;
    r.params.push_back(std::move(s));
  }
  r.float_file_bytes = encoded_size(spec, Encoding::float32);
  r.packed_file_bytes = encoded_size(spec, Encoding::packed);
  return r;
}

std::string format_size_report(const SizeReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "parameter" << std::setw(18) << "shape" << std::right
     << std::setw(12) << "float32 B" << std::setw(12) << "packed B" << std::setw(9) << "ratio"
     << '\n';
  os << std::fixed << std::setprecision(2);
  for (const ParamSize& p : r.params) {
    os << std::left << std::setw(22) << p.name << std::setw(18) << shape_string(p.shape)
       << std::right << std::setw(12) << p.float_bytes << std::setw(12) << p.packed_bytes
       << std::setw(8) << static_cast<double>(p.float_bytes) / static_cast<double>(p.packed_bytes)
       << "x\n";
  }
  std::uint64_t sign_bits = 0, padding_bits = 0, scale_bytes = 0;
  for (const ParamSize& p : r.params) {
    sign_bits += p.sign_bits;
    padding_bits += p.padding_bits;
    scale_bytes += p.scale_bytes;
  }
  os << "binarized parameters: " << r.binarized_params << '\n'
     << "full-precision parameters: " << r.float_only_params << '\n'
     << "sign bits: " << sign_bits << " (" << sign_bits / 8 << " bytes), padding bits: "
     << padding_bits << ", scale bytes: " << scale_bytes << '\n'
     << "binary weights as float32-word equivalents: " << std::setprecision(0)
     << r.float_word_equivalents() << " (" << r.binarized_params * 4 / 32
     << " bytes of sign bits)\n"
     << std::setprecision(2) << "sign-bit ratio: " << r.sign_bit_ratio() << "x\n"
     << "parameter payload: " << r.float_bytes << " B float32, " << r.packed_bytes
     << " B packed, ratio " << r.payload_ratio() << "x\n"
     << "whole file: " << r.float_file_bytes << " B float32, " << r.packed_file_bytes
     << " B packed, ratio " << r.file_ratio() << "x\n";
  return os.str();
}

std::string describe_model_file(std::span<const std::uint8_t> bytes) {
  const RawFile f = scan(bytes);
  std::ostringstream os;
  os << "format version " << kFormatVersion << ", " << f.records.size() << " records, input "
     << shape_string(f.input_shape) << ", embedding " << f.embedding_dim << ", classes "
     << f.num_classes << '\n';
  for (std::size_t i = 0; i < f.records.size(); ++i) {
    const RawRecord& rec = f.records[i];
    const bool known = rec.kind <= static_cast<std::uint8_t>(LayerKind::flatten);
    os << "record " << i << ": "
       << (i + 1 == f.records.size() ? std::string("classifier")
           : known ? std::string(layer_kind_name(static_cast<LayerKind>(rec.kind)))
                   : "kind " + std::to_string(rec.kind))
       << " attrs [";
    for (std::size_t a = 0; a < rec.attrs.size(); ++a) os << (a ? "," : "") << rec.attrs[a];
    os << "]\n";
    for (std::size_t t = 0; t < rec.tensors.size(); ++t) {
      const RawTensor& raw = rec.tensors[t];
      os << "  tensor " << t << ' ' << shape_string(raw.shape) << ' '
         << encoding_name(raw.encoding) << ' ' << raw.payload.size() << " bytes";
      if (raw.encoding == Encoding::packed) {
        const std::size_t F = raw.shape[0];
        const std::size_t words = F * BinaryFilterBank::words_for(element_count(raw.shape) / F);
        double lo = INFINITY, hi = -INFINITY, sum = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
          const double v = read_f32(raw.payload.data() + 8 * words + 4 * f);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          sum += v;
        }
        std::ostringstream word;
        word << std::hex << std::setfill('0') << std::setw(16) << read_u64(raw.payload.data());
        os << ", first word 0x" << word.str() << ", scales min " << lo << " mean "
           << sum / static_cast<double>(F) << " max " << hi;
      }
      os << '\n';
    }
  }
  std::ostringstream crc;
  crc << std::hex << std::setfill('0') << std::setw(8) << f.stored_crc;
  os << "crc32 0x" << crc.str() << (f.stored_crc == f.computed_crc ? " ok" : " MISMATCH") << '\n';
  os << "total " << bytes.size() << " bytes\n";
  return os.str();
}

}  // namespace bwn
