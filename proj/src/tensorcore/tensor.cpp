#include "slab/tensorcore/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "slab/common/error.hpp"
#include "slab/common/random.hpp"

namespace slab::tc {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ValidationError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (product(shape_) != values_.size()) {
    throw ValidationError("tensor shape " + shape_string(shape_) + " does not match " +
                          std::to_string(values_.size()) + " values");
  }
  if (!all_finite()) throw ValidationError("tensor values must be finite");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ValidationError("from_rows needs at least one row");
  const std::size_t cols = rows.front().size();
  std::vector<double> v;
  v.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ValidationError("ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(v));
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double scale) {
  Tensor t(std::move(shape));
  for (double& v : t.values_) v = rng.uniform(-scale, scale);
  return t;
}

Tensor Tensor::normal(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.values_) v = stddev * rng.normal();
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ValidationError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  }
  return shape_[axis];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = shape_.size() == 2 ? shape_[1] : values_.size();
  return std::span<const double>(values_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = shape_.size() == 2 ? shape_[1] : values_.size();
  return std::span<double>(values_).subspan(r * c, c);
}

double Tensor::item() const {
  if (values_.size() != 1) throw ValidationError("item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (product(shape) != values_.size()) {
    throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = values_;
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ValidationError("max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace binary {

namespace {
template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ValidationError("unexpected end of binary data");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}
}  // namespace

void write_u8(std::ostream& out, unsigned char v) { out.put(static_cast<char>(v)); }
void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void write_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

unsigned char read_u8(std::istream& in) {
  const int c = in.get();
  if (c == std::char_traits<char>::eof()) throw ValidationError("unexpected end of binary data");
  return static_cast<unsigned char>(c);
}
std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw ValidationError("unexpected end of binary data");
  return s;
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw ValidationError("bad magic: expected " + std::string(magic));
  }
}

}  // namespace binary

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write("SLTN1", 5);
  binary::write_u64(out, t.rank());
  for (std::size_t d : t.shape()) binary::write_u64(out, d);
  for (double v : t.values()) binary::write_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
  binary::expect_magic(in, "SLTN1");
  const std::uint64_t rank = binary::read_u64(in);
  if (rank == 0 || rank > 8) throw ValidationError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = binary::read_u64(in);
    if (d == 0 || d > (std::size_t{1} << 32)) throw ValidationError("implausible tensor dimension");
    n *= d;
  }
  std::vector<double> values(n);
  for (double& v : values) v = binary::read_f64(in);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace slab::tc
