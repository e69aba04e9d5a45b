#include "octad/tensor_io.hpp"

#include <cstring>
#include <fstream>

namespace octad {

namespace {

constexpr char kMagic[4] = {'O', 'C', 'T', '1'};

size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::u8: return 1;
    case Dtype::u16: return 2;
    case Dtype::f32: return 4;
  }
  return 0;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

}  // namespace

void validate_tensor(const TensorFile& t) {
  if (t.dims.empty() || t.dims.size() > 4)
    throw Error(Errc::bad_header, "ndim must be 1..4, got " + std::to_string(t.dims.size()));
  for (uint32_t d : t.dims)
    if (d == 0) throw Error(Errc::bad_header, "zero extent");
  if (t.element_count() != t.stored_count())
    throw Error(Errc::bad_header, "dims/value count mismatch");
}

std::vector<uint8_t> encode_tensor(const TensorFile& t) {
  validate_tensor(t);
  std::vector<uint8_t> out;
  out.reserve(6 + 4 * t.dims.size() + t.element_count() * dtype_size(t.dtype));
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(static_cast<uint8_t>(t.dtype));
  out.push_back(static_cast<uint8_t>(t.dims.size()));
  for (uint32_t d : t.dims) put_u32(out, d);
  switch (t.dtype) {
    case Dtype::u8:
      out.insert(out.end(), t.u8.begin(), t.u8.end());
      break;
    case Dtype::u16:
      for (uint16_t v : t.u16) {
        out.push_back(static_cast<uint8_t>(v));
        out.push_back(static_cast<uint8_t>(v >> 8));
      }
      break;
    case Dtype::f32:
      for (float f : t.f32) {
        uint32_t v;
        std::memcpy(&v, &f, 4);
        put_u32(out, v);
      }
      break;
  }
  return out;
}

TensorFile decode_tensor(const uint8_t* data, size_t size) {
  if (size < 6) throw Error(Errc::truncated, "header incomplete");
  if (std::memcmp(data, kMagic, 4) != 0) throw Error(Errc::bad_magic, "expected OCT1");
  const uint8_t dtype_code = data[4];
  if (dtype_code > 2) throw Error(Errc::bad_dtype, "dtype code " + std::to_string(dtype_code));
  const uint8_t ndim = data[5];
  if (ndim < 1 || ndim > 4) throw Error(Errc::bad_header, "ndim " + std::to_string(ndim));
  if (size < 6 + 4u * ndim) throw Error(Errc::truncated, "dims incomplete");

  TensorFile t;
  t.dtype = static_cast<Dtype>(dtype_code);
  for (int i = 0; i < ndim; ++i) {
    uint32_t d = get_u32(data + 6 + 4 * i);
    if (d == 0) throw Error(Errc::bad_header, "zero extent");
    t.dims.push_back(d);
  }
  const size_t n = t.element_count();
  const uint8_t* payload = data + 6 + 4 * ndim;
  const size_t avail = size - (6 + 4 * ndim);
  if (avail < n * dtype_size(t.dtype)) throw Error(Errc::truncated, "payload incomplete");

  switch (t.dtype) {
    case Dtype::u8:
      t.u8.assign(payload, payload + n);
      break;
    case Dtype::u16:
      t.u16.resize(n);
      for (size_t i = 0; i < n; ++i)
        t.u16[i] = static_cast<uint16_t>(payload[2 * i] | payload[2 * i + 1] << 8);
      break;
    case Dtype::f32:
      t.f32.resize(n);
      for (size_t i = 0; i < n; ++i) {
        uint32_t v = get_u32(payload + 4 * i);
        std::memcpy(&t.f32[i], &v, 4);
      }
      break;
  }
  return t;
}

void write_tensor(const std::string& path, const TensorFile& t) {
  const std::vector<uint8_t> bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io_failure, "cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::io_failure, "short write: " + path);
}

TensorFile read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_failure, "cannot open for read: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes.data(), bytes.size());
}

TensorFile TensorFile::from_u16(const MatU16& m) {
  TensorFile t;
  t.dtype = Dtype::u16;
  t.dims = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
  t.u16.resize(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.u16[static_cast<size_t>(r * m.cols() + c)] = m(r, c);
  return t;
}

TensorFile TensorFile::from_f32(const MatF& m) {
  TensorFile t;
  t.dtype = Dtype::f32;
  t.dims = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
  t.f32.resize(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.f32[static_cast<size_t>(r * m.cols() + c)] = m(r, c);
  return t;
}

TensorFile TensorFile::from_f32_stack(const std::vector<MatF>& channels) {
  if (channels.empty()) throw Error(Errc::bad_header, "empty channel stack");
  const Eigen::Index h = channels[0].rows(), w = channels[0].cols();
  TensorFile t;
  t.dtype = Dtype::f32;
  t.dims = {static_cast<uint32_t>(channels.size()), static_cast<uint32_t>(h),
            static_cast<uint32_t>(w)};
  t.f32.reserve(channels.size() * static_cast<size_t>(h * w));
  for (const MatF& m : channels) {
    if (m.rows() != h || m.cols() != w) throw Error(Errc::bad_header, "ragged channel stack");
    for (Eigen::Index r = 0; r < h; ++r)
      for (Eigen::Index c = 0; c < w; ++c) t.f32.push_back(m(r, c));
  }
  return t;
}

MatU16 TensorFile::to_u16() const {
  if (dtype != Dtype::u16 || dims.size() != 2) throw Error(Errc::bad_header, "expected 2-d u16");
  MatU16 m(dims[0], dims[1]);
  for (uint32_t r = 0; r < dims[0]; ++r)
    for (uint32_t c = 0; c < dims[1]; ++c) m(r, c) = u16[static_cast<size_t>(r) * dims[1] + c];
  return m;
}

MatF TensorFile::to_f32() const {
  if (dtype != Dtype::f32 || dims.size() != 2) throw Error(Errc::bad_header, "expected 2-d f32");
  MatF m(dims[0], dims[1]);
  for (uint32_t r = 0; r < dims[0]; ++r)
    for (uint32_t c = 0; c < dims[1]; ++c) m(r, c) = f32[static_cast<size_t>(r) * dims[1] + c];
  return m;
}

std::vector<MatF> TensorFile::to_f32_stack() const {
  if (dtype != Dtype::f32 || dims.size() != 3) throw Error(Errc::bad_header, "expected 3-d f32");
  std::vector<MatF> out(dims[0]);
  const size_t plane = static_cast<size_t>(dims[1]) * dims[2];
  for (uint32_t k = 0; k < dims[0]; ++k) {
    out[k].resize(dims[1], dims[2]);
    for (uint32_t r = 0; r < dims[1]; ++r)
      for (uint32_t c = 0; c < dims[2]; ++c)
        out[k](r, c) = f32[k * plane + static_cast<size_t>(r) * dims[2] + c];
  }
  return out;
}

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::bad_magic: return "bad magic";
    case Errc::bad_dtype: return "bad dtype";
    case Errc::bad_header: return "bad header";
    case Errc::truncated: return "truncated";
    case Errc::io_failure: return "io failure";
    case Errc::missing_column: return "missing column";
    case Errc::duplicate_key: return "duplicate key";
    case Errc::label_years_inconsistent: return "label/years inconsistent";
    case Errc::bad_field: return "bad field";
    case Errc::invalid_config: return "invalid config";
    case Errc::invalid_spec: return "invalid spec";
    case Errc::empty_cohort: return "empty cohort";
    case Errc::unmatched_subject: return "unmatched subject";
    case Errc::infeasible_split: return "infeasible split";
    case Errc::nonfinite: return "non-finite";
    case Errc::single_class: return "single class";
    case Errc::leakage: return "leakage";
    case Errc::invalid_argument: return "invalid argument";
  }
  return "error";
}

}  // namespace octad
