#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace slab {
class Rng;
}

namespace slab::tc {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major block of doubles. Plain value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  // Throws ValidationError on size mismatch or non-finite values.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);
  // Entries drawn uniformly from [-scale, scale].
  static Tensor uniform(Shape shape, Rng& rng, double scale);
  static Tensor normal(Shape shape, Rng& rng, double stddev);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  double item() const;
  bool all_finite() const noexcept;
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

// "SLTN1" | u64 rank | u64 dims... | f64 values..., all little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

namespace binary {
void write_u8(std::ostream& out, unsigned char v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);  // u32 length + bytes
unsigned char read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);
void expect_magic(std::istream& in, std::string_view magic);
}  // namespace binary

}  // namespace slab::tc
