#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mmadapt {

// Little-endian IEEE-754 encoding regardless of host byte order.
void append_f64_le(std::vector<std::uint8_t>& out, std::span<const double> values);
std::vector<double> read_f64_le(std::span<const std::uint8_t> bytes);

void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint64_t read_u64_le(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mmadapt
