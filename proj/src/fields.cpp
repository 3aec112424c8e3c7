#include "adjgp/fields.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "adjgp/error.hpp"

namespace adjgp {

Grid::Grid(std::vector<std::size_t> dims, std::vector<double> spacing,
           std::vector<double> origin)
    : dims_(std::move(dims)),
      spacing_(std::move(spacing)),
      origin_(std::move(origin)) {
  if (dims_.empty()) throw ConfigError("grid needs at least one axis");
  if (spacing_.size() != dims_.size() || origin_.size() != dims_.size())
    throw StructuralError("grid dims/spacing/origin lengths differ");
  size_ = 1;
  cell_volume_ = 1.0;
  for (std::size_t a = 0; a < dims_.size(); ++a) {
    if (dims_[a] < 2)
      throw ConfigError("grid axis " + std::to_string(a) +
                        " needs at least 2 cells");
    if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a]))
      throw ConfigError("grid spacing on axis " + std::to_string(a) +
                        " must be positive");
    size_ *= dims_[a];
    cell_volume_ *= spacing_[a];
  }
  strides_.assign(dims_.size(), 1);
  for (std::size_t a = dims_.size() - 1; a > 0; --a)
    strides_[a - 1] = strides_[a] * dims_[a];
}

Grid Grid::interval(double lo, double hi, std::size_t cells) {
  if (!(hi > lo)) throw ConfigError("interval needs hi > lo");
  if (cells == 0) throw ConfigError("interval needs cells >= 2");
  return Grid({cells}, {(hi - lo) / static_cast<double>(cells)}, {lo});
}

Grid Grid::space_time(double t_end, std::size_t nt, double y_lo, double y_hi,
                      std::size_t ny, double x_lo, double x_hi,
                      std::size_t nx) {
  if (!(t_end > 0.0) || !(y_hi > y_lo) || !(x_hi > x_lo))
    throw ConfigError("space-time box is degenerate");
  if (nt == 0 || ny == 0 || nx == 0)
    throw ConfigError("space-time grid needs cells >= 2 on every axis");
  return Grid({nt, ny, nx},
              {t_end / static_cast<double>(nt),
               (y_hi - y_lo) / static_cast<double>(ny),
               (x_hi - x_lo) / static_cast<double>(nx)},
              {0.0, y_lo, x_lo});
}

std::vector<std::size_t> Grid::unravel(std::size_t flat) const {
  std::vector<std::size_t> index(dims_.size());
  for (std::size_t a = 0; a < dims_.size(); ++a) {
    index[a] = flat / strides_[a];
    flat %= strides_[a];
  }
  return index;
}

std::size_t Grid::ravel(std::span<const std::size_t> index) const {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < dims_.size(); ++a) flat += index[a] * strides_[a];
  return flat;
}

void Grid::center_point(std::size_t flat, std::span<double> out) const {
  for (std::size_t a = 0; a < dims_.size(); ++a) {
    const std::size_t i = flat / strides_[a];
    flat %= strides_[a];
    out[a] = center(a, i);
  }
}

Field::Field(Grid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw StructuralError("field has " + std::to_string(values_.size()) +
                          " values for a grid of " +
                          std::to_string(grid_.size()) + " cells");
}

Field::Field(Grid grid, std::vector<double> values,
             std::vector<std::uint8_t> mask)
    : Field(std::move(grid), std::move(values)) {
  if (!mask.empty() && mask.size() != values_.size())
    throw StructuralError("field mask length differs from cell count");
  mask_ = std::move(mask);
}

Field Field::zeros(const Grid& grid) {
  return Field(grid, std::vector<double>(grid.size(), 0.0));
}

Field Field::constant(const Grid& grid, double value) {
  return Field(grid, std::vector<double>(grid.size(), value));
}

std::vector<double> Field::masked_values() const {
  std::vector<double> out(values_);
  if (!mask_.empty())
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!mask_[i]) out[i] = 0.0;
  return out;
}

namespace {

void require_same_grid(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid()))
    throw StructuralError("fields live on different grids");
}

}  // namespace

double inner_product(const Field& a, const Field& b) {
  require_same_grid(a, b);
  const auto x = a.values();
  const auto y = b.values();
  double sum = 0.0;
  if (!a.has_mask() && !b.has_mask()) {
    for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * y[i];
  } else {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (a.defined(i) && b.defined(i)) sum += x[i] * y[i];
  }
  return sum * a.grid().cell_volume();
}

double norm(const Field& a) { return std::sqrt(inner_product(a, a)); }

Field linear_combination(double alpha, const Field& a, double beta,
                         const Field& b) {
  require_same_grid(a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = alpha * a[i] + beta * b[i];
  if (!a.has_mask() && !b.has_mask()) return Field(a.grid(), std::move(out));
  std::vector<std::uint8_t> mask(a.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = (a.defined(i) && b.defined(i)) ? 1 : 0;
  return Field(a.grid(), std::move(out), std::move(mask));
}

Field window_indicator(const Grid& grid, std::span<const double> lo,
                       std::span<const double> hi) {
  const std::size_t d = grid.ndim();
  if (lo.size() != d || hi.size() != d)
    throw StructuralError("window dimension differs from grid dimension");
  std::vector<std::size_t> first(d), last(d);  // half-open [first, last)
  bool empty = false;
  for (std::size_t a = 0; a < d; ++a) {
    if (!(lo[a] < hi[a]))
      throw DomainError("window needs lo < hi on axis " + std::to_string(a));
    if (!(lo[a] < grid.upper(a)) || !(hi[a] > grid.lower(a)))
      throw DomainError("window does not intersect the domain on axis " +
                        std::to_string(a));
    std::size_t i0 = grid.dims()[a], i1 = 0;
    for (std::size_t i = 0; i < grid.dims()[a]; ++i) {
      const double c = grid.center(a, i);
      if (c >= lo[a] && c < hi[a]) {
        i0 = std::min(i0, i);
        i1 = i + 1;
      }
    }
    if (i1 == 0) empty = true;
    first[a] = i0;
    last[a] = i1;
  }
  if (empty) {
    // Window narrower than a cell: snap to the cell holding its midpoint.
    for (std::size_t a = 0; a < d; ++a) {
      const double lo_c = std::max(lo[a], grid.lower(a));
      const double hi_c = std::min(hi[a], grid.upper(a));
      const double mid = 0.5 * (lo_c + hi_c);
      auto i = static_cast<long long>(
          std::floor((mid - grid.lower(a)) / grid.spacing()[a]));
      i = std::clamp<long long>(i, 0,
                                static_cast<long long>(grid.dims()[a]) - 1);
      first[a] = static_cast<std::size_t>(i);
      last[a] = first[a] + 1;
    }
  }
  std::size_t count = 1;
  for (std::size_t a = 0; a < d; ++a) count *= last[a] - first[a];
  const double value = 1.0 / (static_cast<double>(count) * grid.cell_volume());

  std::vector<double> out(grid.size(), 0.0);
  std::vector<std::size_t> index(first);
  for (;;) {
    out[grid.ravel(index)] = value;
    std::size_t a = d;
    while (a > 0) {
      --a;
      if (++index[a] < last[a]) break;
      index[a] = first[a];
      if (a == 0) return Field(grid, std::move(out));
    }
  }
}

void write_field_csv(std::ostream& out, const Field& field) {
  const Grid& g = field.grid();
  const std::size_t d = g.ndim();
  for (std::size_t a = 0; a < d; ++a) out << 'i' << a << ',';
  for (std::size_t a = 0; a < d; ++a) out << 'x' << a << ',';
  out << "value\n";
  out << std::setprecision(17);
  std::vector<double> point(d);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto index = g.unravel(k);
    g.center_point(k, point);
    for (std::size_t a = 0; a < d; ++a) out << index[a] << ',';
    for (std::size_t a = 0; a < d; ++a) out << point[a] << ',';
    if (field.defined(k))
      out << field[k] << '\n';
    else
      out << "nan\n";
  }
}

void write_field_csv(const std::string& path, const Field& field) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  write_field_csv(out, field);
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T)))
    throw StructuralError("truncated binary field");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

constexpr char kMagic[4] = {'A', 'G', 'P', 'F'};

}  // namespace

void write_field_binary(std::ostream& out, const Field& field) {
  const Grid& g = field.grid();
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.ndim()));
  for (auto n : g.dims()) put_le<std::uint64_t>(out, n);
  for (auto h : g.spacing()) put_le<double>(out, h);
  for (auto o : g.origin()) put_le<double>(out, o);
  put_le<std::uint8_t>(out, field.has_mask() ? 1 : 0);
  for (double v : field.values()) put_le<double>(out, v);
  if (field.has_mask())
    for (auto m : field.mask()) put_le<std::uint8_t>(out, m);
}

Field read_field_binary(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw StructuralError("not a binary field dump");
  if (get_le<std::uint32_t>(in) != 1)
    throw StructuralError("unsupported binary field version");
  const auto d = get_le<std::uint32_t>(in);
  std::vector<std::size_t> dims(d);
  std::vector<double> spacing(d), origin(d);
  for (auto& n : dims) n = get_le<std::uint64_t>(in);
  for (auto& h : spacing) h = get_le<double>(in);
  for (auto& o : origin) o = get_le<double>(in);
  Grid grid(dims, spacing, origin);
  const bool has_mask = get_le<std::uint8_t>(in) != 0;
  std::vector<double> values(grid.size());
  for (auto& v : values) v = get_le<double>(in);
  std::vector<std::uint8_t> mask;
  if (has_mask) {
    mask.resize(grid.size());
    for (auto& m : mask) m = get_le<std::uint8_t>(in);
  }
  return Field(std::move(grid), std::move(values), std::move(mask));
}

void write_field_binary(const std::string& path, const Field& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  write_field_binary(out, field);
}

Field read_field_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return read_field_binary(in);
}

Field time_slice(const Field& field, double t) {
  const Grid& g = field.grid();
  if (g.ndim() != 3) throw StructuralError("time_slice needs a (t, y, x) field");
  if (t < g.lower(0) || t > g.upper(0))
    throw DomainError("slice time outside the grid");
  auto k = static_cast<std::size_t>((t - g.lower(0)) / g.spacing()[0]);
  k = std::min(k, g.dims()[0] - 1);
  Grid plane({g.dims()[1], g.dims()[2]}, {g.spacing()[1], g.spacing()[2]},
             {g.origin()[1], g.origin()[2]});
  const std::size_t slab = g.stride(0);
  const auto values = field.values();
  std::vector<double> out(values.begin() + k * slab,
                          values.begin() + (k + 1) * slab);
  std::vector<std::uint8_t> mask;
  if (field.has_mask())
    mask.assign(field.mask().begin() + k * slab,
                field.mask().begin() + (k + 1) * slab);
  return Field(std::move(plane), std::move(out), std::move(mask));
}

}  // namespace adjgp
