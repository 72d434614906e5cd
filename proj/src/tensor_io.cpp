#include "csg/tensor_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace csg {

namespace {

const char kMagic[4] = {'C', 'S', 'G', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_tensor(const Tensor& t, const std::string& path) {
  CSG_CHECK(t.defined(), Contract, "save_tensor: undefined tensor");
  std::ofstream os(path, std::ios::binary);
  CSG_CHECK(os.good(), Io, "save_tensor: cannot open " + path);
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u64(os, d);
  for (double v : t.values()) put_f64(os, v);
  CSG_CHECK(os.good(), Io, "save_tensor: write failed for " + path);
}

Tensor load_tensor(const std::string& path, bool requires_grad) {
  std::ifstream is(path, std::ios::binary);
  CSG_CHECK(is.good(), Io, "load_tensor: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  CSG_CHECK(is.good() && std::memcmp(magic, kMagic, 4) == 0, Io,
            "load_tensor: bad magic in " + path);
  const std::uint32_t rank = get_u32(is);
  CSG_CHECK(rank <= 8, Io, "load_tensor: implausible rank in " + path);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get_u64(is));
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (auto& v : data) v = get_f64(is);
  CSG_CHECK(is.good(), Io, "load_tensor: truncated payload in " + path);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv_2d(const Tensor& t, const std::string& path) {
  CSG_CHECK(t.defined() && t.rank() == 2, Contract,
            "write_csv_2d: expects a 2-D tensor, got " +
                (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  std::ofstream os(path);
  CSG_CHECK(os.good(), Io, "write_csv_2d: cannot open " + path);
  const std::size_t rows = t.shape()[0], cols = t.shape()[1];
  const auto& v = t.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) os << ',';
      os << format_double(v[r * cols + c]);
    }
    os << '\n';
  }
  CSG_CHECK(os.good(), Io, "write_csv_2d: write failed for " + path);
}

}  // namespace csg
