#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "octad/error.hpp"

namespace octad {

using MatU16 = Eigen::Matrix<uint16_t, Eigen::Dynamic, Eigen::Dynamic>;
using MatF = Eigen::MatrixXf;

// Minimal binary tensor container.
//
// File layout (little-endian throughout):
//   magic   "OCT1"                      4 bytes
//   dtype   0=u8, 1=u16, 2=f32          1 byte
//   ndim    1..4                        1 byte
//   dims    ndim x uint32               4*ndim bytes
//   data    product(dims) elements, row-major (last dim fastest)
enum class Dtype : uint8_t { u8 = 0, u16 = 1, f32 = 2 };

struct TensorFile {
  Dtype dtype = Dtype::f32;
  std::vector<uint32_t> dims;
  std::vector<uint8_t> u8;
  std::vector<uint16_t> u16;
  std::vector<float> f32;

  size_t element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
  size_t stored_count() const {
    switch (dtype) {
      case Dtype::u8: return u8.size();
      case Dtype::u16: return u16.size();
      case Dtype::f32: return f32.size();
    }
    return 0;
  }

  bool operator==(const TensorFile&) const = default;

  // Conversions between the row-major file layout and Eigen matrices
  // (dims = [rows, cols]) or channel stacks (dims = [channels, rows, cols]).
  static TensorFile from_u16(const MatU16& m);
  static TensorFile from_f32(const MatF& m);
  static TensorFile from_f32_stack(const std::vector<MatF>& channels);
  MatU16 to_u16() const;
  MatF to_f32() const;
  std::vector<MatF> to_f32_stack() const;
};

void validate_tensor(const TensorFile& t);
void write_tensor(const std::string& path, const TensorFile& t);
TensorFile read_tensor(const std::string& path);

std::vector<uint8_t> encode_tensor(const TensorFile& t);
TensorFile decode_tensor(const uint8_t* data, size_t size);

}  // namespace octad
