#ifndef ADJGP_FIELDS_HPP_
#define ADJGP_FIELDS_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace adjgp {

// Uniform rectangular cell grid. Axis 0 is the slowest-varying index in the
// flat storage order; space-time grids put time on axis 0, then y, then x.
class Grid {
 public:
  Grid(std::vector<std::size_t> dims, std::vector<double> spacing,
       std::vector<double> origin);

  // 1-D grid of `cells` cells covering [lo, hi].
  static Grid interval(double lo, double hi, std::size_t cells);
  // Space-time grid (t, y, x) over [0, t_end] x [y_lo, y_hi] x [x_lo, x_hi].
  static Grid space_time(double t_end, std::size_t nt, double y_lo,
                         double y_hi, std::size_t ny, double x_lo,
                         double x_hi, std::size_t nx);

  std::size_t ndim() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return size_; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::vector<double>& spacing() const noexcept { return spacing_; }
  const std::vector<double>& origin() const noexcept { return origin_; }
  double cell_volume() const noexcept { return cell_volume_; }

  double lower(std::size_t axis) const { return origin_[axis]; }
  double upper(std::size_t axis) const {
    return origin_[axis] + spacing_[axis] * static_cast<double>(dims_[axis]);
  }
  double center(std::size_t axis, std::size_t i) const {
    return origin_[axis] + (static_cast<double>(i) + 0.5) * spacing_[axis];
  }
  // Stride of `axis` in the flat index.
  std::size_t stride(std::size_t axis) const { return strides_[axis]; }

  std::vector<std::size_t> unravel(std::size_t flat) const;
  std::size_t ravel(std::span<const std::size_t> index) const;
  // Writes the cell-center coordinates of `flat` into `out` (length ndim).
  void center_point(std::size_t flat, std::span<double> out) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> spacing_;
  std::vector<double> origin_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
  double cell_volume_ = 0.0;
};

// Real values sampled at the cells of a Grid. An optional mask marks cells
// where the field is undefined; such cells drop out of inner products.
class Field {
 public:
  Field(Grid grid, std::vector<double> values);
  Field(Grid grid, std::vector<double> values, std::vector<std::uint8_t> mask);

  static Field zeros(const Grid& grid);
  static Field constant(const Grid& grid, double value);

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }

  bool has_mask() const noexcept { return !mask_.empty(); }
  bool defined(std::size_t i) const { return mask_.empty() || mask_[i] != 0; }
  std::span<const std::uint8_t> mask() const noexcept { return mask_; }

  // Values with undefined cells set to zero.
  std::vector<double> masked_values() const;

 private:
  Grid grid_;
  std::vector<double> values_;
  std::vector<std::uint8_t> mask_;
};

// Cell-center Riemann sum: (sum over jointly defined cells of a*b) * volume.
// The sum runs left to right in flat index order.
double inner_product(const Field& a, const Field& b);

double norm(const Field& a);

// alpha*a + beta*b on the same grid; the result is defined where both are.
Field linear_combination(double alpha, const Field& a, double beta,
                         const Field& b);

// Normalized indicator of the box [lo, hi). Cells whose centers fall inside
// get 1/(count * cell volume), so inner_product(window, 1) == 1 and
// inner_product(window, u) is the plain average of u over those cells.
// A box that overlaps the domain but contains no cell center snaps to the
// single cell holding its clamped midpoint (this covers Dirac-like point
// observations).
Field window_indicator(const Grid& grid, std::span<const double> lo,
                       std::span<const double> hi);

// CSV: header "i0,...,x0,...,value", one row per cell; undefined cells are
// written as "nan".
void write_field_csv(std::ostream& out, const Field& field);
void write_field_csv(const std::string& path, const Field& field);

// Binary dump, little-endian:
//   char[4]  "AGPF"
//   u32      version (1)
//   u32      ndim
//   u64      dims[ndim]
//   f64      spacing[ndim]
//   f64      origin[ndim]
//   u8       has_mask
//   f64      values[G]
//   u8       mask[G]            (only when has_mask)
void write_field_binary(std::ostream& out, const Field& field);
Field read_field_binary(std::istream& in);
void write_field_binary(const std::string& path, const Field& field);
Field read_field_binary(const std::string& path);

// The spatial slab of a (t, y, x) field whose time cell contains `t`, as a
// 2-D (y, x) field.
Field time_slice(const Field& field, double t);

}  // namespace adjgp

#endif  // ADJGP_FIELDS_HPP_
