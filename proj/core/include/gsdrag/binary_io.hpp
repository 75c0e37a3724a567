#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsdrag/types.hpp"

namespace gsdrag::bin {

// Little-endian fixed-width helpers for checkpoints. Readers throw
// FormatError on a short read.

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_i64(std::ostream& out, std::int64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, std::string_view s);
void write_f64s(std::ostream& out, std::span<const double> v);
void write_bytes(std::ostream& out, std::span<const std::uint8_t> v);
void write_vec3s(std::ostream& out, std::span<const Vec3> v);
void write_vec4s(std::ostream& out, std::span<const Vec4> v);
void write_magic(std::ostream& out, std::string_view magic, std::uint32_t version);

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
std::int64_t read_i64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);
std::vector<double> read_f64s(std::istream& in);
std::vector<std::uint8_t> read_bytes(std::istream& in);
std::vector<Vec3> read_vec3s(std::istream& in);
std::vector<Vec4> read_vec4s(std::istream& in);
/// Checks the magic and returns the version; throws FormatError on mismatch
/// or when the version exceeds `max_version`.
std::uint32_t read_magic(std::istream& in, std::string_view magic, std::uint32_t max_version);

}  // namespace gsdrag::bin
