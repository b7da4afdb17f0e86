#include <cmath>
#include <cstring>
#include <fstream>

#include "pie/errors.hpp"
#include "pie/io.hpp"

// Layout: "PIEF" | u16 version | u32 count | u32 dim | f32[count*dim]
// row-major, all integers and floats little-endian. Version is 1.

namespace pie {

namespace {

constexpr char kMagic[4] = {'P', 'I', 'E', 'F'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));  // host assumed little-endian
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw IoError("unexpected end of feature file");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

void write_features(const FeatureMatrix& features, const std::string& path) {
  if (features.rows.size() !=
      static_cast<std::size_t>(features.n) * features.dim)
    throw ValidationError("feature matrix payload size inconsistent with n*dim");
  for (float v : features.rows)
    if (!std::isfinite(v))
      throw ValidationError("feature matrix contains non-finite values");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file '" + path + "'");
  out.write(kMagic, 4);
  write_le(out, kVersion);
  write_le(out, features.n);
  write_le(out, features.dim);
  out.write(reinterpret_cast<const char*>(features.rows.data()),
            static_cast<std::streamsize>(features.rows.size() * sizeof(float)));
  if (!out) throw IoError("short write on feature file '" + path + "'");
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad magic in feature file '" + path + "'");
  const auto version = read_le<std::uint16_t>(in);
  if (version != kVersion)
    throw IoError("unsupported feature file version " + std::to_string(version));

  FeatureMatrix m;
  m.n = read_le<std::uint32_t>(in);
  m.dim = read_le<std::uint32_t>(in);
  const std::size_t count = static_cast<std::size_t>(m.n) * m.dim;
  m.rows.resize(count);
  in.read(reinterpret_cast<char*>(m.rows.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
    throw IoError("feature file '" + path + "' truncated: header claims " +
                  std::to_string(count) + " floats");
  return m;
}

}  // namespace pie
