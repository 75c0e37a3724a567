#include "gsdrag/binary_io.hpp"

#include <bit>

namespace gsdrag::bin {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// Guards against absurd counts from corrupt files before allocating.
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 34;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("checkpoint truncated");
  return v;
}

std::uint64_t get_count(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > kMaxCount) throw FormatError("checkpoint: implausible element count");
  return n;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void write_i64(std::ostream& out, std::int64_t v) { put(out, v); }
void write_f64(std::ostream& out, double v) { put(out, v); }

void write_string(std::ostream& out, std::string_view s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_f64s(std::ostream& out, std::span<const double> v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_bytes(std::ostream& out, std::span<const std::uint8_t> v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

void write_vec3s(std::ostream& out, std::span<const Vec3> v) {
  put<std::uint64_t>(out, v.size());
  for (const auto& x : v)
    for (int k = 0; k < 3; ++k) put(out, x[k]);
}

void write_vec4s(std::ostream& out, std::span<const Vec4> v) {
  put<std::uint64_t>(out, v.size());
  for (const auto& x : v)
    for (int k = 0; k < 4; ++k) put(out, x[k]);
}

void write_magic(std::ostream& out, std::string_view magic, std::uint32_t version) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  put(out, version);
}

std::uint32_t read_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get<std::uint64_t>(in); }
std::int64_t read_i64(std::istream& in) { return get<std::int64_t>(in); }
double read_f64(std::istream& in) { return get<double>(in); }

std::string read_string(std::istream& in) {
  const auto n = get_count(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("checkpoint truncated");
  return s;
}

std::vector<double> read_f64s(std::istream& in) {
  const auto n = get_count(in);
  std::vector<double> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw FormatError("checkpoint truncated");
  return v;
}

std::vector<std::uint8_t> read_bytes(std::istream& in) {
  const auto n = get_count(in);
  std::vector<std::uint8_t> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n)))
    throw FormatError("checkpoint truncated");
  return v;
}

std::vector<Vec3> read_vec3s(std::istream& in) {
  const auto n = get_count(in);
  std::vector<Vec3> v(n);
  for (auto& x : v)
    for (int k = 0; k < 3; ++k) x[k] = get<double>(in);
  return v;
}

std::vector<Vec4> read_vec4s(std::istream& in) {
  const auto n = get_count(in);
  std::vector<Vec4> v(n);
  for (auto& x : v)
    for (int k = 0; k < 4; ++k) x[k] = get<double>(in);
  return v;
}

std::uint32_t read_magic(std::istream& in, std::string_view magic, std::uint32_t max_version) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw FormatError("not a " + std::string(magic) + " file");
  const auto version = get<std::uint32_t>(in);
  if (version == 0 || version > max_version)
    throw FormatError("unsupported " + std::string(magic) + " version " + std::to_string(version));
  return version;
}

}  // namespace gsdrag::bin
