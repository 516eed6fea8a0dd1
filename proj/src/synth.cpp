#include "windae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "windae/errors.hpp"
#include "windae/rng.hpp"

namespace windae {

namespace {

// Substream namespaces. Channels use their own index so adding channels
// never perturbs existing ones; event machinery lives far above.
constexpr std::uint64_t kEventPlacementStream = 1ull << 40;
constexpr std::uint64_t kDriftSelectStream = (1ull << 40) + 1;
constexpr std::uint64_t kBurstStreamBase = 1ull << 41;

std::int64_t to_samples(double hours, std::int64_t step_seconds) {
    return static_cast<std::int64_t>(std::llround(hours * 3600.0 / static_cast<double>(step_seconds)));
}

} // namespace

void SynthConfig::validate() const {
    if (n_samples <= 0) throw ConfigError("n_samples must be > 0");
    if (n_channels < 4) throw ConfigError("n_channels must be >= 4");
    if (n_events < 0) throw ConfigError("n_events must be >= 0");
    if (precursor_hours < 0) throw ConfigError("precursor_hours must be >= 0");
    if (drift_channels_frac <= 0.0 || drift_channels_frac > 1.0)
        throw ConfigError("drift_channels_frac must lie in (0, 1]");
    if (noise_sigma <= 0.0) throw ConfigError("noise_sigma must be > 0");
    if (step_seconds <= 0) throw ConfigError("step_seconds must be > 0");
}

SynthConfig synth_preset(const std::string& name) {
    SynthConfig cfg;
    if (name == "farm-a")
        cfg.n_channels = 86;
    else if (name == "farm-b")
        cfg.n_channels = 257;
    else if (name == "farm-c")
        cfg.n_channels = 957;
    else
        throw ConfigError("unknown preset '" + name + "' (expected farm-a, farm-b or farm-c)");
    return cfg;
}

TimeSeriesDataset generate_scada(const SynthConfig& cfg) { return generate_scada(cfg, nullptr); }

TimeSeriesDataset generate_scada(const SynthConfig& cfg, SynthMeta* meta_out) {
    cfg.validate();
    const std::int64_t n = cfg.n_samples;
    const int d = cfg.n_channels;
    const double sigma = cfg.noise_sigma;
    const Philox root(cfg.seed);

    // Channel roles: wind, power, then ~35% temp, ~35% vib, rest pure noise.
    const int n_rest = d - 2;
    const int n_temp = std::max(1, n_rest * 35 / 100);
    const int n_vib = std::max(1, n_rest * 35 / 100);
    const int n_noise = n_rest - n_temp - n_vib;

    TimeSeriesDataset ds;
    ds.start_epoch_s = cfg.start_epoch_s;
    ds.step_seconds = cfg.step_seconds;
    ds.values.resize(n, d);

    SynthMeta meta;
    meta.channel_roles.reserve(static_cast<std::size_t>(d));
    ds.channel_names.reserve(static_cast<std::size_t>(d));
    ds.channel_names.push_back("wind_speed");
    meta.channel_roles.push_back("wind");
    ds.channel_names.push_back("power");
    meta.channel_roles.push_back("power");
    for (int k = 0; k < n_temp; ++k) {
        ds.channel_names.push_back("temp_" + std::to_string(k + 1));
        meta.channel_roles.push_back("temp");
    }
    for (int k = 0; k < n_vib; ++k) {
        ds.channel_names.push_back("vib_" + std::to_string(k + 1));
        meta.channel_roles.push_back("vib");
    }
    for (int k = 0; k < n_noise; ++k) {
        ds.channel_names.push_back("noise_" + std::to_string(k + 1));
        meta.channel_roles.push_back("noise");
    }

    // Wind speed: AR(1) around 8 m/s.
    {
        Philox rng = root.substream(0);
        double v = 8.0;
        for (std::int64_t t = 0; t < n; ++t) {
            v = 8.0 + 0.98 * (v - 8.0) + 0.5 * rng.gaussian();
            if (v < 0.0) v = 0.0;
            ds.values(t, 0) = v;
        }
    }
    // Power: cubic law of wind speed, clipped at rated power 1.0.
    {
        Philox rng = root.substream(1);
        for (std::int64_t t = 0; t < n; ++t) {
            const double v = ds.values(t, 0);
            const double p = std::min(1.0, (v / 12.0) * (v / 12.0) * (v / 12.0));
            ds.values(t, 1) = p + 0.05 * sigma * rng.gaussian();
        }
    }
    // Low-pass of power shared by all temperature channels.
    Eigen::VectorXd power_lp(n);
    {
        double e = ds.values(0, 1);
        for (std::int64_t t = 0; t < n; ++t) {
            e = 0.95 * e + 0.05 * ds.values(t, 1);
            power_lp[t] = e;
        }
    }
    const double day_seconds = 86400.0;
    for (int k = 0; k < n_temp; ++k) {
        const int c = 2 + k;
        Philox rng = root.substream(static_cast<std::uint64_t>(c));
        const double base = 40.0 + rng.uniform(-5.0, 5.0);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (std::int64_t t = 0; t < n; ++t) {
            const double diurnal =
                0.8 * sigma *
                std::sin(2.0 * M_PI * static_cast<double>(t * cfg.step_seconds) / day_seconds + phase);
            ds.values(t, c) = base + 1.2 * sigma * power_lp[t] + diurnal + sigma * rng.gaussian();
        }
    }
    for (int k = 0; k < n_vib; ++k) {
        const int c = 2 + n_temp + k;
        Philox rng = root.substream(static_cast<std::uint64_t>(c));
        // Band-limited noise: MA(2) filter with unit-variance normalization.
        double e1 = 0.0, e2 = 0.0;
        const double gain = sigma / std::sqrt(1.0 + 0.64 + 0.16);
        for (std::int64_t t = 0; t < n; ++t) {
            const double e0 = rng.gaussian();
            ds.values(t, c) = gain * (e0 + 0.8 * e1 - 0.4 * e2);
            e2 = e1;
            e1 = e0;
        }
    }
    for (int k = 0; k < n_noise; ++k) {
        const int c = 2 + n_temp + n_vib + k;
        Philox rng = root.substream(static_cast<std::uint64_t>(c));
        for (std::int64_t t = 0; t < n; ++t) ds.values(t, c) = sigma * rng.gaussian();
    }

    // Event placement: evenly spaced slots with seeded jitter; gap between
    // consecutive events (end to next start) stays >= 2 * precursor.
    const std::int64_t precursor = to_samples(cfg.precursor_hours, cfg.step_seconds);
    const std::int64_t ev_len = to_samples(kEventHours, cfg.step_seconds);
    meta.precursor_samples = precursor;
    meta.event_samples = ev_len;
    if (cfg.n_events > 0) {
        const std::int64_t lo = 2 * precursor + 8;
        const std::int64_t hi = n - ev_len - 8;
        const std::int64_t span = hi - lo;
        const std::int64_t slot = cfg.n_events > 0 ? span / cfg.n_events : 0;
        if (span <= 0 || slot < ev_len + 2 * precursor)
            throw ConfigError("cannot place " + std::to_string(cfg.n_events) +
                              " non-overlapping events with the requested precursor length");
        Philox rng = root.substream(kEventPlacementStream);
        const std::int64_t jrange = slot - ev_len - 2 * precursor;
        for (int i = 0; i < cfg.n_events; ++i) {
            const std::int64_t jitter =
                jrange > 0 ? static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(jrange + 1)))
                           : 0;
            const std::int64_t start = lo + i * slot + jitter;
            char id[16];
            std::snprintf(id, sizeof(id), "fault_%03d", i + 1);
            ds.events.push_back({start, start + ev_len, id});
        }
    }

    // Drifted channels: a seeded sample from the temp+vib blocks, shared by
    // every event.
    std::vector<int> candidates;
    for (int c = 2; c < 2 + n_temp + n_vib; ++c) candidates.push_back(c);
    {
        Philox rng = root.substream(kDriftSelectStream);
        rng.shuffle(candidates);
        const int k = std::max(
            1, static_cast<int>(std::ceil(cfg.drift_channels_frac * static_cast<double>(candidates.size()))));
        candidates.resize(std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(k)));
        std::sort(candidates.begin(), candidates.end());
        meta.drift_channels = candidates;
    }

    // Additive fault signature: linear ramp over the precursor reaching
    // +kDriftSigmas * sigma at fault start, held through the event. Drifted
    // vibration channels also pick up extra wideband noise during the event.
    for (std::size_t ei = 0; ei < ds.events.size(); ++ei) {
        const auto& ev = ds.events[ei];
        const double peak = kDriftSigmas * sigma;
        for (int c : meta.drift_channels) {
            if (precursor > 0) {
                for (std::int64_t t = ev.start_index - precursor; t < ev.start_index; ++t) {
                    const double frac = static_cast<double>(t - (ev.start_index - precursor)) /
                                        static_cast<double>(precursor);
                    ds.values(t, c) += peak * frac;
                }
            }
            for (std::int64_t t = ev.start_index; t < ev.end_index; ++t) ds.values(t, c) += peak;
            const bool is_vib = meta.channel_roles[static_cast<std::size_t>(c)] == "vib";
            if (is_vib) {
                Philox rng = root.substream(kBurstStreamBase + ei * 100000ull +
                                            static_cast<std::uint64_t>(c));
                for (std::int64_t t = ev.start_index; t < ev.end_index; ++t)
                    ds.values(t, c) += 2.0 * sigma * rng.gaussian();
            }
        }
    }

    ds.validate();
    if (meta_out) *meta_out = std::move(meta);
    return ds;
}

} // namespace windae
