#include "tdr/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace tdr {
namespace {

constexpr unsigned char kMagic[4] = {0x54, 0x50, 0x44, 0x31};  // "TPD1"

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace

void write_tpd1(const std::filesystem::path& file, const Tpd1& t) {
  const auto order = t.dims.size();
  if (order < 2 || order > 4) throw std::invalid_argument("TPD1: order must be 2, 3 or 4");
  Index n = 1;
  for (Index d : t.dims) {
    if (d < 1) throw std::invalid_argument("TPD1: dims must be >= 1");
    n *= d;
  }
  if (t.values.size() != n || t.mask.size() != n)
    throw std::invalid_argument("TPD1: value/mask count inconsistent with dims");

  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("TPD1: cannot open for writing: " + file.string());
  os.write(reinterpret_cast<const char*>(kMagic), 4);
  const unsigned char ord = static_cast<unsigned char>(order);
  os.write(reinterpret_cast<const char*>(&ord), 1);
  for (Index d : t.dims) put_u32(os, static_cast<std::uint32_t>(d));
  for (Index i = 0; i < n; i += 8) {
    unsigned char byte = 0;
    for (int b = 0; b < 8 && i + b < n; ++b)
      if (t.mask[i + b]) byte |= static_cast<unsigned char>(1u << b);
    os.write(reinterpret_cast<const char*>(&byte), 1);
  }
  for (Index i = 0; i < n; ++i) put_f64(os, t.mask[i] ? t.values[i] : 0.0);
  if (!os) throw std::runtime_error("TPD1: write failed: " + file.string());
}

Tpd1 read_tpd1(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("TPD1: cannot open: " + file.string());
  unsigned char magic[4];
  is.read(reinterpret_cast<char*>(magic), 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("TPD1: bad magic in " + file.string());
  unsigned char order = 0;
  is.read(reinterpret_cast<char*>(&order), 1);
  if (order < 2 || order > 4) throw std::runtime_error("TPD1: unsupported order");

  Tpd1 t;
  t.dims.resize(order);
  Index n = 1;
  for (auto& d : t.dims) {
    d = static_cast<Index>(get_u32(is));
    if (d < 1) throw std::runtime_error("TPD1: invalid dimension");
    n *= d;
  }
  t.mask.resize(n);
  for (Index i = 0; i < n; i += 8) {
    unsigned char byte = 0;
    is.read(reinterpret_cast<char*>(&byte), 1);
    for (int b = 0; b < 8 && i + b < n; ++b) t.mask[i + b] = (byte >> b) & 1u;
  }
  t.values.resize(n);
  for (Index i = 0; i < n; ++i) t.values[i] = get_f64(is);
  if (!is) throw std::runtime_error("TPD1: truncated file: " + file.string());
  return t;
}

void write_tensor(const std::filesystem::path& file, const Tensor4d& t, int order) {
  Tpd1 raw;
  if (order == 4) {
    raw.dims = {t.dims()[0], t.dims()[1], t.dims()[2], t.dims()[3]};
  } else if (order == 3) {
    if (t.dims()[3] != 1)
      throw std::invalid_argument("write_tensor: order-3 file requires a trailing dim of 1");
    raw.dims = {t.dims()[0], t.dims()[1], t.dims()[2]};
  } else {
    throw std::invalid_argument("write_tensor: order must be 3 or 4");
  }
  raw.values = t.values();
  raw.mask = t.mask();
  write_tpd1(file, raw);
}

Tensor4d read_tensor(const std::filesystem::path& file) {
  Tpd1 raw = read_tpd1(file);
  if (raw.dims.size() < 3) throw std::runtime_error("read_tensor: expected order 3 or 4");
  Dims4 d{raw.dims[0], raw.dims[1], raw.dims[2], raw.dims.size() == 4 ? raw.dims[3] : 1};
  Tensor4d t(d);
  t.values() = raw.values;
  t.mask() = raw.mask;
  return t;
}

void write_matrix(const std::filesystem::path& file, const MatrixX<double>& m) {
  Tpd1 raw;
  raw.dims = {m.rows(), m.cols()};
  raw.values = Eigen::Map<const VectorX<double>>(m.data(), m.size());
  raw.mask.setConstant(m.size(), true);
  write_tpd1(file, raw);
}

MatrixX<double> read_matrix(const std::filesystem::path& file) {
  Tpd1 raw = read_tpd1(file);
  if (raw.dims.size() != 2) throw std::runtime_error("read_matrix: expected order-2 file");
  return Eigen::Map<const MatrixX<double>>(raw.values.data(), raw.dims[0], raw.dims[1]);
}

}  // namespace tdr
