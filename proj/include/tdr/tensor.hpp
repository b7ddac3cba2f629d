#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <stdexcept>
#include <vector>

namespace tdr {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MaskVector = Eigen::Array<bool, Eigen::Dynamic, 1>;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

using Dims4 = std::array<Index, 4>;

/// Dense 4-mode tensor with an observation mask.
///
/// Values are stored linearly with the mode-1 index fastest (the column-major
/// generalization), so the mode-1 matricization is a contiguous view of the
/// value buffer. Every position keeps a slot in `values`; `mask` is true where
/// the entry is observed. 3-mode data (a single image stream) is represented
/// with the fourth dimension equal to one.
template <typename Scalar>
class Tensor4 {
public:
  Tensor4() : dims_{0, 0, 0, 0} {}

  Tensor4(Index i1, Index i2, Index i3, Index m) : dims_{i1, i2, i3, m} {
    if (i1 < 1 || i2 < 1 || i3 < 1 || m < 1)
      throw std::invalid_argument("Tensor4: every dimension must be >= 1");
    values_.setZero(size());
    mask_.setConstant(size(), true);
  }

  explicit Tensor4(const Dims4& d) : Tensor4(d[0], d[1], d[2], d[3]) {}

  const Dims4& dims() const { return dims_; }
  Index dim(int mode) const { return dims_[check_mode(mode) - 1]; }
  Index size() const { return dims_[0] * dims_[1] * dims_[2] * dims_[3]; }

  VectorX<Scalar>& values() { return values_; }
  const VectorX<Scalar>& values() const { return values_; }
  MaskVector& mask() { return mask_; }
  const MaskVector& mask() const { return mask_; }

  Index linear_index(Index i1, Index i2, Index i3, Index m) const {
    return i1 + dims_[0] * (i2 + dims_[1] * (i3 + dims_[2] * m));
  }

  Scalar& operator()(Index i1, Index i2, Index i3, Index m) {
    return values_[linear_index(i1, i2, i3, m)];
  }
  Scalar operator()(Index i1, Index i2, Index i3, Index m) const {
    return values_[linear_index(i1, i2, i3, m)];
  }

  bool observed(Index i1, Index i2, Index i3, Index m) const {
    return mask_[linear_index(i1, i2, i3, m)];
  }
  void set_observed(Index i1, Index i2, Index i3, Index m, bool v) {
    mask_[linear_index(i1, i2, i3, m)] = v;
  }

  bool fully_observed() const { return mask_.all(); }
  Index observed_count() const { return mask_.count(); }

  static int check_mode(int mode) {
    if (mode < 1 || mode > 4)
      throw std::invalid_argument("mode index must be in {1,2,3,4}");
    return mode;
  }

private:
  Dims4 dims_;
  VectorX<Scalar> values_;
  MaskVector mask_;
};

using Tensor4d = Tensor4<double>;

/// Zeroes the values at unobserved positions; the mask is unchanged.
/// Idempotent by construction.
template <typename Scalar>
Tensor4<Scalar> project_omega(const Tensor4<Scalar>& t) {
  Tensor4<Scalar> out = t;
  out.values() = t.mask().select(t.values().array(), Scalar(0)).matrix();
  return out;
}

namespace detail {

// Column strides of the mode-n matricization: entry (i1,i2,i3,i4) lands in
// column sum_{k != n} i_k * stride_k with stride_k = prod_{m<k, m != n} I_m.
inline std::array<Index, 4> matricize_strides(const Dims4& dims, int mode) {
  std::array<Index, 4> stride{0, 0, 0, 0};
  Index acc = 1;
  for (int k = 0; k < 4; ++k) {
    if (k == mode - 1) continue;
    stride[k] = acc;
    acc *= dims[k];
  }
  return stride;
}

}  // namespace detail

/// Mode-n matricization: rows follow the mode-n index, columns the remaining
/// indices in increasing-mode order with the lowest mode fastest.
template <typename Scalar>
MatrixX<Scalar> matricize(const Tensor4<Scalar>& t, int mode) {
  Tensor4<Scalar>::check_mode(mode);
  const Dims4& d = t.dims();
  const Index rows = d[mode - 1];
  const Index cols = t.size() / rows;
  if (mode == 1) {
    return Eigen::Map<const MatrixX<Scalar>>(t.values().data(), rows, cols);
  }
  if (mode == 4) {
    return Eigen::Map<const MatrixX<Scalar>>(t.values().data(), cols, rows).transpose();
  }
  MatrixX<Scalar> out(rows, cols);
  const auto stride = detail::matricize_strides(d, mode);
  Index p = 0;
  for (Index i4 = 0; i4 < d[3]; ++i4)
    for (Index i3 = 0; i3 < d[2]; ++i3)
      for (Index i2 = 0; i2 < d[1]; ++i2)
        for (Index i1 = 0; i1 < d[0]; ++i1) {
          const std::array<Index, 4> idx{i1, i2, i3, i4};
          Index col = 0;
          for (int k = 0; k < 4; ++k)
            if (k != mode - 1) col += idx[k] * stride[k];
          out(idx[mode - 1], col) = t.values()[p++];
        }
  return out;
}

/// Mask of the mode-n matricization (same element map as `matricize`).
template <typename Scalar>
MaskMatrix matricize_mask(const Tensor4<Scalar>& t, int mode) {
  Tensor4<Scalar>::check_mode(mode);
  const Dims4& d = t.dims();
  const Index rows = d[mode - 1];
  const Index cols = t.size() / rows;
  MaskMatrix out(rows, cols);
  const auto stride = detail::matricize_strides(d, mode);
  Index p = 0;
  for (Index i4 = 0; i4 < d[3]; ++i4)
    for (Index i3 = 0; i3 < d[2]; ++i3)
      for (Index i2 = 0; i2 < d[1]; ++i2)
        for (Index i1 = 0; i1 < d[0]; ++i1) {
          const std::array<Index, 4> idx{i1, i2, i3, i4};
          Index col = 0;
          for (int k = 0; k < 4; ++k)
            if (k != mode - 1) col += idx[k] * stride[k];
          out(idx[mode - 1], col) = t.mask()[p++];
        }
  return out;
}

/// Inverse of `matricize`. The result carries the optional mask matrix, or a
/// fully observed mask when none is given.
template <typename Scalar>
Tensor4<Scalar> dematricize(const MatrixX<Scalar>& mat, int mode, const Dims4& dims,
                            const MaskMatrix* mask = nullptr) {
  Tensor4<Scalar>::check_mode(mode);
  Tensor4<Scalar> out(dims);
  const Index rows = dims[mode - 1];
  const Index cols = out.size() / rows;
  if (mat.rows() != rows || mat.cols() != cols)
    throw std::invalid_argument("dematricize: matrix shape inconsistent with dims/mode");
  if (mask && (mask->rows() != rows || mask->cols() != cols))
    throw std::invalid_argument("dematricize: mask shape inconsistent with dims/mode");
  const auto stride = detail::matricize_strides(dims, mode);
  Index p = 0;
  for (Index i4 = 0; i4 < dims[3]; ++i4)
    for (Index i3 = 0; i3 < dims[2]; ++i3)
      for (Index i2 = 0; i2 < dims[1]; ++i2)
        for (Index i1 = 0; i1 < dims[0]; ++i1) {
          const std::array<Index, 4> idx{i1, i2, i3, i4};
          Index col = 0;
          for (int k = 0; k < 4; ++k)
            if (k != mode - 1) col += idx[k] * stride[k];
          out.values()[p] = mat(idx[mode - 1], col);
          if (mask) out.mask()[p] = (*mask)(idx[mode - 1], col);
          ++p;
        }
  return out;
}

/// Mode-n product t x_n u with u of shape (J_n x I_n); satisfies
/// mat(t x_n u, n) = u * mat(t, n). The result mask is fully observed (mode
/// products mix entries across fibers). The linear layout makes every mode a
/// set of contiguous matrix products, so no index shuffling is needed.
template <typename Scalar>
Tensor4<Scalar> mode_product(const Tensor4<Scalar>& t, const MatrixX<Scalar>& u, int mode) {
  Tensor4<Scalar>::check_mode(mode);
  const Dims4& d = t.dims();
  if (u.cols() != d[mode - 1])
    throw std::invalid_argument("mode_product: inner dimension mismatch");
  Dims4 nd = d;
  nd[mode - 1] = u.rows();
  Tensor4<Scalar> out(nd);

  using Map = Eigen::Map<MatrixX<Scalar>>;
  using CMap = Eigen::Map<const MatrixX<Scalar>>;
  switch (mode) {
    case 1: {
      Map(out.values().data(), nd[0], t.size() / d[0]) =
          u * CMap(t.values().data(), d[0], t.size() / d[0]);
      break;
    }
    case 2: {
      const Index slices = d[2] * d[3];
      for (Index s = 0; s < slices; ++s)
        Map(out.values().data() + s * d[0] * nd[1], d[0], nd[1]) =
            CMap(t.values().data() + s * d[0] * d[1], d[0], d[1]) * u.transpose();
      break;
    }
    case 3: {
      const Index plane = d[0] * d[1];
      for (Index m = 0; m < d[3]; ++m)
        Map(out.values().data() + m * plane * nd[2], plane, nd[2]) =
            CMap(t.values().data() + m * plane * d[2], plane, d[2]) * u.transpose();
      break;
    }
    case 4: {
      const Index block = d[0] * d[1] * d[2];
      Map(out.values().data(), block, nd[3]) =
          CMap(t.values().data(), block, d[3]) * u.transpose();
      break;
    }
  }
  return out;
}

template <typename Scalar>
MatrixX<Scalar> kronecker(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
  MatrixX<Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Column-wise Kronecker product; requires equal column counts.
template <typename Scalar>
MatrixX<Scalar> khatri_rao(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("khatri_rao: column counts differ");
  MatrixX<Scalar> out(a.rows() * b.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.col(j).segment(i * b.rows(), b.rows()) = a(i, j) * b.col(j);
  return out;
}

/// Sum of squares over observed entries only.
template <typename Scalar>
Scalar masked_fnorm_sq(const Tensor4<Scalar>& t) {
  return t.mask().select(t.values().array(), Scalar(0)).square().sum();
}

/// Per-row observed-column index sets of a mode-n matricization. When every
/// row shares the same set (the whole-column missing case in modes 1 and 2),
/// `shared` carries that single set.
struct AvailabilitySets {
  int mode = 0;
  std::vector<std::vector<Index>> rows;
  std::optional<std::vector<Index>> shared;
};

template <typename Scalar>
AvailabilitySets availability_sets(const Tensor4<Scalar>& t, int mode) {
  const MaskMatrix m = matricize_mask(t, mode);
  AvailabilitySets out;
  out.mode = mode;
  out.rows.resize(m.rows());
  for (Index i = 0; i < m.rows(); ++i) {
    out.rows[i].reserve(m.cols());
    for (Index j = 0; j < m.cols(); ++j)
      if (m(i, j)) out.rows[i].push_back(j);
  }
  bool all_equal = true;
  for (Index i = 1; i < m.rows() && all_equal; ++i)
    all_equal = (out.rows[i] == out.rows[0]);
  if (all_equal && !out.rows.empty()) out.shared = out.rows[0];
  return out;
}

enum class MaskPattern { Complete, ImageWise, EntryWise };

/// Most specific description of where entries are missing: none, whole
/// (:,:,i3,m) frames only, or arbitrary entries.
template <typename Scalar>
MaskPattern classify_mask(const Tensor4<Scalar>& t) {
  if (t.fully_observed()) return MaskPattern::Complete;
  const Dims4& d = t.dims();
  const Index frame = d[0] * d[1];
  for (Index m = 0; m < d[3]; ++m)
    for (Index i3 = 0; i3 < d[2]; ++i3) {
      const Index base = t.linear_index(0, 0, i3, m);
      const bool first = t.mask()[base];
      for (Index k = 1; k < frame; ++k)
        if (t.mask()[base + k] != first) return MaskPattern::EntryWise;
    }
  return MaskPattern::ImageWise;
}

}  // namespace tdr
