#include "gsdrag/ply.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace gsdrag {
namespace {

enum class ScalarType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<ScalarType> parse_type(const std::string& s) {
  static const std::map<std::string, ScalarType> kTypes = {
      {"char", ScalarType::Int8},      {"int8", ScalarType::Int8},       {"uchar", ScalarType::UInt8},
      {"uint8", ScalarType::UInt8},    {"short", ScalarType::Int16},     {"int16", ScalarType::Int16},
      {"ushort", ScalarType::UInt16},  {"uint16", ScalarType::UInt16},   {"int", ScalarType::Int32},
      {"int32", ScalarType::Int32},    {"uint", ScalarType::UInt32},     {"uint32", ScalarType::UInt32},
      {"float", ScalarType::Float32},  {"float32", ScalarType::Float32}, {"double", ScalarType::Float64},
      {"float64", ScalarType::Float64}};
  auto it = kTypes.find(s);
  if (it == kTypes.end()) return std::nullopt;
  return it->second;
}

std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::Int8:
    case ScalarType::UInt8:
      return 1;
    case ScalarType::Int16:
    case ScalarType::UInt16:
      return 2;
    case ScalarType::Int32:
    case ScalarType::UInt32:
    case ScalarType::Float32:
      return 4;
    case ScalarType::Float64:
      return 8;
  }
  return 0;
}

template <typename T>
T load_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U u = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) u |= static_cast<U>(static_cast<U>(p[b]) << (8 * b));
  return std::bit_cast<T>(u);
}

double read_scalar(ScalarType t, const unsigned char* p) {
  switch (t) {
    case ScalarType::Int8: return load_le<std::int8_t>(p);
    case ScalarType::UInt8: return load_le<std::uint8_t>(p);
    case ScalarType::Int16: return load_le<std::int16_t>(p);
    case ScalarType::UInt16: return load_le<std::uint16_t>(p);
    case ScalarType::Int32: return load_le<std::int32_t>(p);
    case ScalarType::UInt32: return load_le<std::uint32_t>(p);
    case ScalarType::Float32: return load_le<float>(p);
    case ScalarType::Float64: return load_le<double>(p);
  }
  return 0.0;
}

void put_f32(std::ostream& out, double v) {
  const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const std::array<char, 4> b = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                                 static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  out.write(b.data(), 4);
}

struct Property {
  std::string name;
  ScalarType type;
  std::size_t offset;
};

constexpr std::array<const char*, 14> kRequired = {"x",       "y",       "z",       "rot_0",   "rot_1",
                                                   "rot_2",   "rot_3",   "scale_0", "scale_1", "scale_2",
                                                   "opacity", "f_dc_0",  "f_dc_1",  "f_dc_2"};

}  // namespace

GaussianScene read_scene(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw FormatError("ply: missing magic line");

  bool binary_le = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::size_t vertex_count = 0;
  std::vector<Property> props;
  std::size_t stride = 0;

  while (true) {
    if (!std::getline(in, line)) throw FormatError("ply: header not terminated by end_header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw FormatError("ply: unsupported format '" + fmt + "'");
      binary_le = true;
    } else if (kw == "element") {
      std::string name;
      long long count = -1;
      ls >> name >> count;
      if (ls.fail() || count < 0) throw FormatError("ply: malformed element line '" + line + "'");
      if (seen_vertex && !in_vertex) continue;  // later elements are ignored
      in_vertex = name == "vertex";
      if (in_vertex) {
        if (seen_vertex) throw FormatError("ply: duplicate vertex element");
        seen_vertex = true;
        vertex_count = static_cast<std::size_t>(count);
      } else if (!seen_vertex) {
        throw FormatError("ply: element '" + name + "' precedes vertex element");
      } else {
        in_vertex = false;
      }
    } else if (kw == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ls >> type;
      if (type == "list") throw FormatError("ply: list properties are not supported on vertex");
      ls >> name;
      auto t = parse_type(type);
      if (!t || name.empty()) throw FormatError("ply: malformed property line '" + line + "'");
      props.push_back({name, *t, stride});
      stride += type_size(*t);
    } else {
      throw FormatError("ply: unknown header keyword '" + kw + "'");
    }
  }
  if (!binary_le) throw FormatError("ply: missing format line");
  if (!seen_vertex) throw FormatError("ply: no vertex element");

  auto find = [&](const std::string& name) -> const Property* {
    for (const auto& p : props)
      if (p.name == name) return &p;
    return nullptr;
  };
  std::array<const Property*, 14> req{};
  for (std::size_t k = 0; k < req.size(); ++k) {
    req[k] = find(kRequired[k]);
    if (!req[k]) throw FormatError(std::string("ply: missing required property '") + kRequired[k] + "'");
  }
  const Property* mask_prop = find("edit_mask");

  GaussianScene scene;
  scene.reserve(vertex_count);
  std::vector<unsigned char> buf(stride);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(stride)))
      throw FormatError("ply: truncated vertex data at element " + std::to_string(i));
    std::array<double, 14> v{};
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = read_scalar(req[k]->type, buf.data() + req[k]->offset);
      if (!std::isfinite(v[k])) throw DataError(std::string("ply: non-finite ") + kRequired[k], i);
    }
    GaussianPrimitive g;
    g.position = Vec3(v[0], v[1], v[2]);
    g.rotation = Vec4(v[3], v[4], v[5], v[6]);
    if (g.rotation.norm() == 0.0) throw DataError("ply: zero-length rotation quaternion", i);
    g.log_scale = Vec3(v[7], v[8], v[9]);
    g.opacity_logit = v[10];
    g.color = Vec3::Constant(0.5) + kShC0 * Vec3(v[11], v[12], v[13]);
    if (mask_prop) g.masked = read_scalar(mask_prop->type, buf.data() + mask_prop->offset) != 0.0;
    scene.push_back(g);
  }
  return scene;
}

GaussianScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open scene file '" + path.string() + "'");
  try {
    return read_scene(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.message(), e.element());
  }
}

void write_scene(const GaussianScene& scene, std::ostream& out) {
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << scene.size() << "\n";
  for (int k = 0; k < 14; ++k) out << "property float " << kRequired[k] << "\n";
  out << "property uchar edit_mask\nend_header\n";
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Vec3& p = scene.positions()[i];
    const Vec4& q = scene.rotations()[i];
    const Vec3& s = scene.log_scales()[i];
    const Vec3 dc = (scene.colors()[i] - Vec3::Constant(0.5)) / kShC0;
    for (int a = 0; a < 3; ++a) put_f32(out, p[a]);
    for (int a = 0; a < 4; ++a) put_f32(out, q[a]);
    for (int a = 0; a < 3; ++a) put_f32(out, s[a]);
    put_f32(out, scene.opacity_logits()[i]);
    for (int a = 0; a < 3; ++a) put_f32(out, dc[a]);
    out.put(static_cast<char>(scene.mask()[i] ? 1 : 0));
  }
}

void save_scene(const GaussianScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_scene(scene, out);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace gsdrag
