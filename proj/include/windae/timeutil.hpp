#pragma once

#include <cstdint>
#include <string>

namespace windae {

// ISO-8601 UTC timestamps ("YYYY-MM-DDTHH:MM:SSZ") <-> Unix epoch seconds.
// Only the second-resolution UTC profile is supported; the trailing 'Z' is
// optional on input and always emitted on output.
std::int64_t parse_iso8601_utc(const std::string& s);
std::string format_iso8601_utc(std::int64_t epoch_seconds);

} // namespace windae
