#pragma once

// Little-endian binary helpers shared by the dataset dump and checkpoints.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "modgate/tensor.hpp"

namespace modgate::io {

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);

std::uint8_t read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in, std::size_t max_len = 1 << 20);

/// "MGAR" magic, u32 rank, u64 dims, f64 values.
void write_array(std::ostream& out, const NdArray& array);
NdArray read_array(std::istream& in);
void save_array(const std::filesystem::path& path, const NdArray& array);
NdArray load_array(const std::filesystem::path& path);

}  // namespace modgate::io
