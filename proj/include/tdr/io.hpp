#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tdr/tensor.hpp"

namespace tdr {

/// TPD1 binary tensor container.
///
/// Layout, all little-endian:
///   magic   "TPD1" (bytes 54 50 44 31)
///   order   u8 (2, 3 or 4)
///   dims    order x u32
///   mask    packed bits, linear index order (mode-1 fastest), LSB of each
///           byte first, padded to a byte boundary; 1 = observed
///   values  binary64 for every position in linear order; unobserved
///           positions are written as 0.0
struct Tpd1 {
  std::vector<Index> dims;
  VectorX<double> values;  // linear order, lowest mode fastest
  MaskVector mask;
};

void write_tpd1(const std::filesystem::path& file, const Tpd1& t);
Tpd1 read_tpd1(const std::filesystem::path& file);

void write_tensor(const std::filesystem::path& file, const Tensor4d& t, int order = 4);
Tensor4d read_tensor(const std::filesystem::path& file);

void write_matrix(const std::filesystem::path& file, const MatrixX<double>& m);
MatrixX<double> read_matrix(const std::filesystem::path& file);

}  // namespace tdr
