#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmadapt/segnet.hpp"

namespace mmadapt {

constexpr std::uint64_t kCheckpointVersion = 1;

// One network plus the configuration that produced it.
//
// File layout: the 8 bytes "MMADCKPT", version (u64 LE), manifest length (u64 LE),
// the JSON manifest, then every tensor as little-endian f64 in manifest order. The
// manifest lists each tensor's name, shape, dtype and byte offset into the payload.
struct Checkpoint {
  SegNet net;
  std::string kind;        // "teacher", "adapted" or "student"
  std::string run_config;  // compact JSON of the settings that produced the weights
  std::uint64_t seed = 0;

  // FNV-1a of run_config.
  std::uint64_t fingerprint() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws DataError on a bad magic, unknown version, fingerprint mismatch or
// truncated payload.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmadapt
