#include "rapidash/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace rapidash {

namespace {

constexpr char kMagic[8] = {'R', 'P', 'D', 'A', 'S', 'H', '0', '1'};

void write_u32(std::ostream& os, uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float x) {
  uint32_t u;
  std::memcpy(&u, &x, 4);
  write_u32(os, u);
}

float read_f32(std::istream& is) {
  uint32_t u = read_u32(is);
  float x;
  std::memcpy(&x, &u, 4);
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ofstream os(path, std::ios::binary);
  check(static_cast<bool>(os), "save_checkpoint: cannot open " + path);
  os.write(kMagic, 8);
  write_u32(os, static_cast<uint32_t>(params.size()));
  std::ofstream manifest(path + ".manifest.txt");
  for (const auto& [name, t] : params) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.shape().size()));
    manifest << name;
    for (int d : t.shape()) {
      write_u32(os, static_cast<uint32_t>(d));
      manifest << " " << d;
    }
    manifest << "\n";
    for (Eigen::Index i = 0; i < t.numel(); ++i)
      write_f32(os, static_cast<float>(t.values()[i]));
  }
}

void load_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ifstream is(path, std::ios::binary);
  check(static_cast<bool>(is), "load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  check(std::memcmp(magic, kMagic, 8) == 0, "load_checkpoint: bad magic in " + path);
  uint32_t n = read_u32(is);
  check(n == params.size(), "load_checkpoint: parameter count mismatch");
  for (const auto& [name, t] : params) {
    Tensor tensor = t;  // shared handle; loading writes through it
    uint32_t name_len = read_u32(is);
    std::string got(name_len, '\0');
    is.read(got.data(), name_len);
    check(got == name, "load_checkpoint: expected block '" + name + "', found '" + got + "'");
    uint32_t rank = read_u32(is);
    check(rank == tensor.shape().size(), "load_checkpoint: rank mismatch for " + name);
    for (uint32_t d = 0; d < rank; ++d)
      check(static_cast<int>(read_u32(is)) == tensor.shape()[d],
            "load_checkpoint: shape mismatch for " + name);
    for (Eigen::Index i = 0; i < tensor.numel(); ++i)
      tensor.values()[i] = static_cast<real_t>(read_f32(is));
    check(static_cast<bool>(is), "load_checkpoint: truncated file at " + name);
  }
}

}  // namespace rapidash
