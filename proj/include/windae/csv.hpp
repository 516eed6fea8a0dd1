#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "windae/dataset.hpp"
#include "windae/features.hpp"

namespace windae {

// Dataset CSV: header "timestamp,<channel names...>", ISO-8601 UTC stamps at
// a uniform step, '.' decimal separator, empty cell = missing value.
TimeSeriesDataset read_dataset_csv(std::istream& in);
void write_dataset_csv(const TimeSeriesDataset& ds, std::ostream& out);

// Events sidecar CSV: header "fault_id,start_iso,end_iso"; times must lie on
// the dataset's sampling grid. end_iso is exclusive.
std::vector<FaultEvent> read_events_csv(std::istream& in, const TimeSeriesDataset& ds);
void write_events_csv(const TimeSeriesDataset& ds, std::ostream& out);

// Feature CSV: header "row_index,<channel:kind...>".
FeatureMatrix read_features_csv(std::istream& in);
void write_features_csv(const FeatureMatrix& fm, std::ostream& out);

// Shortest round-trip decimal form of a double (deterministic).
std::string format_double(double v);
double parse_double(const std::string& s, std::size_t line_no);

} // namespace windae
