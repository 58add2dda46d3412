#pragma once

// Single-file checkpoint:
//
//   numlm-ckpt 1\n
//   meta <key> <value>\n          (zero or more, value runs to end of line)
//   tensor <name> <rank> <d0> ...\n (declaration order)
//   end\n
//   <little-endian f64 payload of every tensor, concatenated>
//   <u64 little-endian FNV-1a checksum of the payload bytes>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "numlm/gradcore.hpp"

namespace numlm::ckpt {

using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  Metadata meta;
  ad::ParamStore params;
  std::uint64_t checksum = 0;
};

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Returns the payload checksum.
std::uint64_t save(const std::filesystem::path& path, const ad::ParamStore& params, const Metadata& meta);
Checkpoint load(const std::filesystem::path& path);

// Copies values from a loaded store into an existing one with identical names and shapes.
void assign(ad::ParamStore& dst, const ad::ParamStore& src);

}  // namespace numlm::ckpt
