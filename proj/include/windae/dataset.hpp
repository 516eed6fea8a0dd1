#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace windae {

// Labeled fault interval in sample-index space, end exclusive.
struct FaultEvent {
    std::int64_t start_index = 0;
    std::int64_t end_index = 0;
    std::string fault_id;
};

// Uniformly sampled multivariate sensor record. Rows are time steps,
// columns are channels; NaN marks a missing reading.
struct TimeSeriesDataset {
    std::int64_t start_epoch_s = 0;
    std::int64_t step_seconds = 600;
    Eigen::MatrixXd values; // n x d
    std::vector<std::string> channel_names;
    std::vector<FaultEvent> events;

    std::int64_t n() const { return values.rows(); }
    std::int64_t d() const { return values.cols(); }

    // Throws DataError if any structural invariant is violated.
    void validate() const;
};

struct SplitSpec {
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;
    // Samples excluded around each event when building the train split;
    // precursor drift precedes the labeled interval, so the default covers
    // 24 h at 10-minute sampling.
    std::int64_t guard_margin = 144;
};

struct ChronoSplit {
    TimeSeriesDataset train; // event +/- guard samples removed, events cleared
    TimeSeriesDataset val;
    TimeSeriesDataset test;
};

struct SplitBounds {
    std::int64_t train_end = 0; // train = [0, train_end)
    std::int64_t val_end = 0;   // val = [train_end, val_end), test = [val_end, n)
};

// Index bounds for a chronological train/val/test split. Train and val sizes
// round down; test takes the remainder.
SplitBounds split_bounds(std::int64_t n, const SplitSpec& spec);

// Clip events to [lo, hi) and shift to split-local indices; events entirely
// outside the range are dropped.
std::vector<FaultEvent> relabel_events_to_split(const std::vector<FaultEvent>& events,
                                                std::int64_t lo, std::int64_t hi);

// keep[i] is false iff sample i lies inside some event widened by guard.
std::vector<bool> event_free_mask(std::int64_t n, const std::vector<FaultEvent>& events,
                                  std::int64_t guard);

// Chronological split; any train sample within an event +/- guard_margin is
// removed so the train split holds normal data only. Val and test keep their
// (re-indexed) event labels.
ChronoSplit split_chronological(const TimeSeriesDataset& ds, const SplitSpec& spec);

} // namespace windae
