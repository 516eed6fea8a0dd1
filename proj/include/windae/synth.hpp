#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "windae/dataset.hpp"

namespace windae {

// Configuration of the synthetic SCADA generator. Channel layout: wind speed,
// power, a block of temperature channels, a block of vibration channels, and
// pure-noise channels for the remainder.
struct SynthConfig {
    std::int64_t n_samples = 20000;
    int n_channels = 86;
    std::int64_t step_seconds = 600;
    int n_events = 6;
    double precursor_hours = 48.0;     // drift lead time before each fault
    double drift_channels_frac = 0.5;  // fraction of temp+vib channels that drift
    double noise_sigma = 1.0;
    std::uint64_t seed = 42;
    std::int64_t start_epoch_s = 1704067200; // 2024-01-01T00:00:00Z

    void validate() const;
};

// Fault duration is fixed at 6 hours; the drift ramp reaches
// +3 * noise_sigma at fault start and holds through the event.
constexpr double kEventHours = 6.0;
constexpr double kDriftSigmas = 3.0;

struct SynthMeta {
    std::vector<std::string> channel_roles; // "wind"|"power"|"temp"|"vib"|"noise"
    std::vector<int> drift_channels;        // sorted channel indices
    std::int64_t precursor_samples = 0;
    std::int64_t event_samples = 0;
};

// Channel-count presets: farm-a (86), farm-b (257), farm-c (957).
SynthConfig synth_preset(const std::string& name);

TimeSeriesDataset generate_scada(const SynthConfig& cfg);
TimeSeriesDataset generate_scada(const SynthConfig& cfg, SynthMeta* meta);

} // namespace windae
