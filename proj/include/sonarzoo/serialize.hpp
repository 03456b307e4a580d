#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "sonarzoo/graph.hpp"

// Model container: magic "SZMODEL1", little-endian u64 header length, JSON
// header (metadata, nodes with hyper-parameters, aliases), float32 weight
// blobs in graph order, CRC-32 of everything before the checksum.
namespace sonarzoo {

std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t crc = 0);

void save_model(const ModelGraph& g, const std::string& path);
ModelGraph load_model(const std::string& path);

// Architecture fingerprint: hashes metadata, node kinds, hyper-parameters,
// wiring and shapes, but no weight values.
std::uint32_t structure_hash(const ModelGraph& g);

} // namespace sonarzoo
