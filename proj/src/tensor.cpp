#include "scasnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scasnet {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'A', 'S', 'T', 'N', 'S', 'R'};

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("tensor file truncated in header");
  return v;
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::uninitialized(Shape shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  Tensor t;
  t.data_.resize(shape_numel(shape));
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "accumulate");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(Real s) {
  for (auto& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Tensor tensor_new(const Shape& shape, Real fill) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_str(shape));
  }
  return Tensor(shape, fill);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

Tensor elementwise_sum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise_sum");
  Tensor out = a;
  out += b;
  return out;
}

Tensor batch_slice(const Tensor& t, std::size_t index) {
  if (t.rank() != 4 || index >= t.n()) throw ShapeError("batch_slice: bad index or rank");
  const std::size_t per = t.c() * t.plane();
  Tensor out({1, t.c(), t.h(), t.w()});
  std::copy_n(t.data() + index * per, per, out.data());
  return out;
}

Tensor batch_concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("batch_concat: no parts");
  const Tensor& first = parts.front();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 4 || p.c() != first.c() || p.h() != first.h() || p.w() != first.w()) {
      throw ShapeError("batch_concat: incompatible shapes " + shape_str(first.shape()) + " and " +
                       shape_str(p.shape()));
    }
    total += p.n();
  }
  Tensor out({total, first.c(), first.h(), first.w()});
  Real* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void Param::accumulate(const Tensor& g) {
  require_same_shape(grad, g, name.c_str());
  grad += g;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, sizeof kMagic);
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  static_assert(sizeof(Real) == 8, "payload is written as f64");
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
  if (!out) throw DataError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("not a SCASTNSR tensor file");
  const std::uint32_t rank = read_u32(in);
  if (rank == 0 || rank > 8) throw DataError("unsupported tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = read_u32(in);
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
  if (!in) throw DataError("tensor file truncated in payload");
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace scasnet
