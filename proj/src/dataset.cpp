#include "windae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "windae/errors.hpp"

namespace windae {

void TimeSeriesDataset::validate() const {
    if (n() < 1 || d() < 1) throw DataError("dataset must have n >= 1 and d >= 1");
    if (static_cast<std::int64_t>(channel_names.size()) != d())
        throw DataError("channel_names size does not match column count");
    std::set<std::string> uniq(channel_names.begin(), channel_names.end());
    if (static_cast<std::int64_t>(uniq.size()) != d())
        throw DataError("channel names are not unique");
    if (step_seconds <= 0) throw DataError("step_seconds must be positive");
    std::vector<FaultEvent> sorted = events;
    std::sort(sorted.begin(), sorted.end(),
              [](const FaultEvent& a, const FaultEvent& b) { return a.start_index < b.start_index; });
    std::int64_t prev_end = 0;
    for (const auto& ev : sorted) {
        if (ev.start_index < 0 || ev.end_index > n() || ev.start_index >= ev.end_index)
            throw DataError("event '" + ev.fault_id + "' outside [0, n) or empty");
        if (ev.start_index < prev_end)
            throw DataError("events overlap at '" + ev.fault_id + "'");
        prev_end = ev.end_index;
    }
}

SplitBounds split_bounds(std::int64_t n, const SplitSpec& spec) {
    if (spec.train_frac <= 0 || spec.val_frac <= 0 || spec.test_frac <= 0)
        throw ConfigError("split fractions must be positive");
    double sum = spec.train_frac + spec.val_frac + spec.test_frac;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    if (spec.guard_margin < 0) throw ConfigError("guard_margin must be >= 0");
    SplitBounds b;
    b.train_end = static_cast<std::int64_t>(std::floor(spec.train_frac * static_cast<double>(n)));
    b.val_end = b.train_end + static_cast<std::int64_t>(std::floor(spec.val_frac * static_cast<double>(n)));
    return b;
}

std::vector<FaultEvent> relabel_events_to_split(const std::vector<FaultEvent>& events,
                                                std::int64_t lo, std::int64_t hi) {
    std::vector<FaultEvent> out;
    for (const auto& ev : events) {
        std::int64_t s = std::max(ev.start_index, lo);
        std::int64_t e = std::min(ev.end_index, hi);
        if (s >= e) continue;
        out.push_back({s - lo, e - lo, ev.fault_id});
    }
    return out;
}

std::vector<bool> event_free_mask(std::int64_t n, const std::vector<FaultEvent>& events,
                                  std::int64_t guard) {
    std::vector<bool> keep(static_cast<std::size_t>(n), true);
    for (const auto& ev : events) {
        std::int64_t lo = std::max<std::int64_t>(0, ev.start_index - guard);
        std::int64_t hi = std::min<std::int64_t>(n, ev.end_index + guard);
        for (std::int64_t i = lo; i < hi; ++i) keep[static_cast<std::size_t>(i)] = false;
    }
    return keep;
}

ChronoSplit split_chronological(const TimeSeriesDataset& ds, const SplitSpec& spec) {
    ds.validate();
    if (ds.n() < 10) throw DataError("dataset too short to split (n < 10)");
    const SplitBounds b = split_bounds(ds.n(), spec);

    ChronoSplit out;

    // Train: keep only samples clear of every event +/- guard.
    std::vector<bool> keep = event_free_mask(ds.n(), ds.events, spec.guard_margin);
    std::int64_t n_keep = 0;
    for (std::int64_t i = 0; i < b.train_end; ++i)
        if (keep[static_cast<std::size_t>(i)]) ++n_keep;
    if (n_keep == 0) throw DataError("train split empty after event removal");
    out.train.start_epoch_s = ds.start_epoch_s;
    out.train.step_seconds = ds.step_seconds;
    out.train.channel_names = ds.channel_names;
    out.train.values.resize(n_keep, ds.d());
    std::int64_t r = 0;
    for (std::int64_t i = 0; i < b.train_end; ++i)
        if (keep[static_cast<std::size_t>(i)]) out.train.values.row(r++) = ds.values.row(i);

    auto make_slice = [&](std::int64_t lo, std::int64_t hi) {
        TimeSeriesDataset s;
        s.start_epoch_s = ds.start_epoch_s + lo * ds.step_seconds;
        s.step_seconds = ds.step_seconds;
        s.channel_names = ds.channel_names;
        s.values = ds.values.middleRows(lo, hi - lo);
        s.events = relabel_events_to_split(ds.events, lo, hi);
        return s;
    };
    out.val = make_slice(b.train_end, b.val_end);
    out.test = make_slice(b.val_end, ds.n());
    return out;
}

} // namespace windae
