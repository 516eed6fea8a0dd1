#pragma once

#include <string>

#include "windae/models.hpp"

namespace windae {

// Versioned binary container: "WAEC" magic, u32 format version, u64 header
// length, JSON header (kind, architecture, feature columns, training
// metadata, parameter table), then row-major little-endian float64 parameter
// payloads in header order. See docs/checkpoint_format.md.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace windae
