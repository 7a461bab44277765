// Copyright 2026 The ptrb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef PTRB_MODEL_STORE_HPP
#define PTRB_MODEL_STORE_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "ptrb/core.hpp"
#include "ptrb/models.hpp"
#include "ptrb/perturbation.hpp"

// Binary model file, little-endian throughout (layout in docs/model_format.md):
//
//   "PTRB1" | u8 version | u8 kind | u8 task | u64 seed | f64 sparsity_pct
//   | u32 layer_count | u32 encoder_layers | layer...
//
//   layer = u32 rows | u32 cols | u8 activation | u8 encoding
//           | weights (dense: rows*cols f64;
//                      sparse: occupancy bitmap, u32 nnz, nnz f64)
//           | rows f64 bias | mask bitmap
//
// Bitmaps are row-major, one bit per weight, least significant bit first,
// padded to whole bytes.

namespace ptrb {

struct ModelFileError : Error {
  using Error::Error;
};
struct BadMagicError : ModelFileError {
  using ModelFileError::ModelFileError;
};
struct VersionError : ModelFileError {
  using ModelFileError::ModelFileError;
};
struct TruncatedError : ModelFileError {
  using ModelFileError::ModelFileError;
};
struct CorruptFileError : ModelFileError {
  using ModelFileError::ModelFileError;
};
struct FileWriteError : ModelFileError {
  using ModelFileError::ModelFileError;
};

inline constexpr std::array<char, 5> kModelMagic{'P', 'T', 'R', 'B', '1'};
inline constexpr std::uint8_t kModelSchemaVersion = 1;

/// A layer is stored sparse when at least this fraction of W is +0.0.
inline constexpr double kSparseThreshold = 0.10;

enum class LayerEncoding : std::uint8_t { dense = 0, sparse = 1 };

/// A pretrained (or finetuned) network plus the header fields of its file.
struct StoredModel {
  ModelKind kind = ModelKind::basic_dae;
  TaskType task = TaskType::binary;
  std::uint64_t seed = 0;
  Snapshot snapshot;

  double sparsity() const { return mask_sparsity(snapshot.layers); }
};

struct SaveReport {
  std::size_t bytes = 0;
  std::vector<LayerEncoding> encodings;
};

enum class EncodingPolicy { automatic, dense_only };

namespace detail {

inline bool is_positive_zero(double v) { return std::bit_cast<std::uint64_t>(v) == 0; }

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::vector<std::uint8_t>& b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw TruncatedError("model file truncated at byte " + std::to_string(pos_));
    }
  }
  const std::vector<std::uint8_t>& data_;
  std::size_t pos_ = 0;
};

inline std::size_t bitmap_bytes(std::size_t bits) { return (bits + 7) / 8; }

template <typename Pred>
std::vector<std::uint8_t> pack_bits(const Matrix& m, Pred set) {
  std::vector<std::uint8_t> out(bitmap_bytes(static_cast<std::size_t>(m.size())), 0);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (set(m.data()[i])) out[static_cast<std::size_t>(i) / 8] |= std::uint8_t(1u << (i % 8));
  }
  return out;
}

inline bool bit(const std::vector<std::uint8_t>& bits, std::size_t i) {
  return (bits[i / 8] >> (i % 8)) & 1u;
}

}  // namespace detail

inline double positive_zero_fraction(const Matrix& w) {
  if (w.size() == 0) return 0.0;
  std::size_t z = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) z += detail::is_positive_zero(w.data()[i]);
  return static_cast<double>(z) / static_cast<double>(w.size());
}

inline LayerEncoding choose_encoding(const Matrix& w, EncodingPolicy policy) {
  if (policy == EncodingPolicy::dense_only) return LayerEncoding::dense;
  return positive_zero_fraction(w) >= kSparseThreshold ? LayerEncoding::sparse : LayerEncoding::dense;
}

inline std::vector<std::uint8_t> encode_model(const StoredModel& model,
                                              EncodingPolicy policy = EncodingPolicy::automatic,
                                              std::vector<LayerEncoding>* encodings = nullptr) {
  const Network& layers = model.snapshot.layers;
  detail::ByteWriter w;
  for (char c : kModelMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(kModelSchemaVersion);
  w.u8(static_cast<std::uint8_t>(model.kind));
  w.u8(static_cast<std::uint8_t>(model.task));
  w.u64(model.seed);
  w.f64(model.sparsity());
  w.u32(static_cast<std::uint32_t>(layers.size()));
  w.u32(static_cast<std::uint32_t>(model.snapshot.encoder_layers));
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const LayerState& l = layers[li];
    if (!l.weights.allFinite() || !l.bias.allFinite()) {
      throw NumericError("encode_model: layer " + std::to_string(li) + " has non-finite values");
    }
    require_same_shape(l.weights, l.mask, "encode_model");
    for (Eigen::Index i = 0; i < l.mask.size(); ++i) {
      const double m = l.mask.data()[i];
      if (m != 0.0 && m != 1.0) {
        throw ModelFileError("encode_model: layer " + std::to_string(li) + " mask is not binary");
      }
    }
    const LayerEncoding enc = choose_encoding(l.weights, policy);
    if (encodings) encodings->push_back(enc);
    w.u32(static_cast<std::uint32_t>(l.weights.rows()));
    w.u32(static_cast<std::uint32_t>(l.weights.cols()));
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u8(static_cast<std::uint8_t>(enc));
    if (enc == LayerEncoding::dense) {
      for (Eigen::Index i = 0; i < l.weights.size(); ++i) w.f64(l.weights.data()[i]);
    } else {
      w.bytes(detail::pack_bits(l.weights, [](double v) { return !detail::is_positive_zero(v); }));
      std::uint32_t nnz = 0;
      for (Eigen::Index i = 0; i < l.weights.size(); ++i) {
        nnz += !detail::is_positive_zero(l.weights.data()[i]);
      }
      w.u32(nnz);
      for (Eigen::Index i = 0; i < l.weights.size(); ++i) {
        const double v = l.weights.data()[i];
        if (!detail::is_positive_zero(v)) w.f64(v);
      }
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) w.f64(l.bias(i));
    w.bytes(detail::pack_bits(l.mask, [](double v) { return v == 1.0; }));
  }
  return std::move(w.buffer());
}

inline StoredModel decode_model(const std::vector<std::uint8_t>& data) {
  detail::ByteReader r(data);
  if (data.size() < kModelMagic.size() ||
      std::memcmp(data.data(), kModelMagic.data(), kModelMagic.size()) != 0) {
    throw BadMagicError("not a model file (bad magic)");
  }
  r.bytes(kModelMagic.size());
  const std::uint8_t version = r.u8();
  if (version != kModelSchemaVersion) {
    throw VersionError("unsupported model schema version " + std::to_string(version) +
                       " (expected " + std::to_string(kModelSchemaVersion) + ")");
  }
  StoredModel m;
  const std::uint8_t kind = r.u8();
  const std::uint8_t task = r.u8();
  if (kind > 2 || task > 1) throw CorruptFileError("invalid model kind or task byte");
  m.kind = static_cast<ModelKind>(kind);
  m.task = static_cast<TaskType>(task);
  m.seed = r.u64();
  const double stored_sparsity = r.f64();
  const std::uint32_t layer_count = r.u32();
  m.snapshot.encoder_layers = r.u32();
  if (m.snapshot.encoder_layers > layer_count) {
    throw CorruptFileError("encoder layer count exceeds layer count");
  }
  for (std::uint32_t li = 0; li < layer_count; ++li) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    const std::uint8_t act = r.u8();
    const std::uint8_t enc = r.u8();
    if (rows == 0 || cols == 0 || act > 3 || enc > 1) {
      throw CorruptFileError("invalid header for layer " + std::to_string(li));
    }
    if (!m.snapshot.layers.empty() && m.snapshot.layers.back().weights.rows() != cols) {
      throw CorruptFileError("layer " + std::to_string(li) + " input width does not match the previous layer");
    }
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    // Every layer ends with an n-bit mask, so n is bounded by what is left.
    if (detail::bitmap_bytes(n) > r.remaining()) {
      throw TruncatedError("model file truncated in layer " + std::to_string(li));
    }
    LayerState l = make_layer(cols, rows, static_cast<Activation>(act));
    if (static_cast<LayerEncoding>(enc) == LayerEncoding::dense) {
      for (std::size_t i = 0; i < n; ++i) l.weights.data()[i] = r.f64();
    } else {
      const auto occupied = r.bytes(detail::bitmap_bytes(n));
      const std::uint32_t nnz = r.u32();
      std::uint32_t seen = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (detail::bit(occupied, i)) {
          if (++seen > nnz) throw CorruptFileError("sparse layer " + std::to_string(li) + " nnz mismatch");
          l.weights.data()[i] = r.f64();
        }
      }
      if (seen != nnz) throw CorruptFileError("sparse layer " + std::to_string(li) + " nnz mismatch");
    }
    for (std::uint32_t i = 0; i < rows; ++i) l.bias(i) = r.f64();
    const auto mask_bits = r.bytes(detail::bitmap_bytes(n));
    for (std::size_t i = 0; i < n; ++i) l.mask.data()[i] = detail::bit(mask_bits, i) ? 1.0 : 0.0;
    m.snapshot.layers.push_back(std::move(l));
  }
  if (!r.at_end()) throw CorruptFileError("trailing bytes after last layer");
  if (std::bit_cast<std::uint64_t>(stored_sparsity) != std::bit_cast<std::uint64_t>(m.sparsity())) {
    throw CorruptFileError("header sparsity does not match the stored masks");
  }
  return m;
}

inline SaveReport save_model(const StoredModel& model, const std::filesystem::path& path) {
  SaveReport report;
  const auto bytes = encode_model(model, EncodingPolicy::automatic, &report.encodings);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileWriteError("cannot write model file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileWriteError("write failed for " + path.string());
  report.bytes = bytes.size();
  return report;
}

inline StoredModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError("cannot open model file " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(data);
}

}  // namespace ptrb

#endif  // PTRB_MODEL_STORE_HPP
