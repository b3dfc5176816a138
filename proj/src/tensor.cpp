#include "dbb/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dbb {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size())
    throw std::invalid_argument("Tensor: data size " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double value) {
  std::fill(data_.begin(), data_.end(), value);
}

void Tensor::require_shape(const std::vector<std::size_t>& expect, const std::string& what) const {
  if (shape_ != expect)
    throw std::invalid_argument(what + ": expected shape " + shape_str(expect) + ", got " +
                                shape_str(shape_));
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

constexpr char kMagic[4] = {'D', 'B', 'B', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("tensor container: truncated file");
  return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& file, const NamedTensors& entries) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("tensor container: cannot open " + file.string() + " for writing");
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint64_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) write_pod(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("tensor container: short write to " + file.string());
}

NamedTensors load_tensors(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("tensor container: cannot open " + file.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("tensor container: bad magic in " + file.string());
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("tensor container: unsupported version " + std::to_string(version));
  const auto count = read_pod<std::uint64_t>(is);
  NamedTensors entries;
  entries.reserve(count);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(is);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw std::runtime_error("tensor container: truncated tensor data in " + file.string());
    entries.emplace_back(std::move(name), std::move(t));
  }
  return entries;
}

}  // namespace dbb
