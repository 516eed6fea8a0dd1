#include "windae/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "windae/errors.hpp"
#include "windae/timeutil.hpp"

namespace windae {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

TimeSeriesDataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!next_line(in, line)) throw ParseError("line 1: missing header");
    std::vector<std::string> header = split_line(line);
    if (header.size() < 2 || header[0] != "timestamp")
        throw FormatError("header must be 'timestamp,<channel names...>'");

    TimeSeriesDataset ds;
    ds.channel_names.assign(header.begin() + 1, header.end());
    std::set<std::string> uniq(ds.channel_names.begin(), ds.channel_names.end());
    if (uniq.size() != ds.channel_names.size()) throw FormatError("duplicate channel name in header");

    const std::size_t d = ds.channel_names.size();
    std::vector<std::int64_t> stamps;
    std::vector<double> cells;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != d + 1)
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(d + 1) + " fields, got " + std::to_string(fields.size()));
        stamps.push_back(parse_iso8601_utc(fields[0]));
        for (std::size_t c = 1; c <= d; ++c) {
            if (fields[c].empty())
                cells.push_back(std::numeric_limits<double>::quiet_NaN());
            else
                cells.push_back(parse_double(fields[c], line_no));
        }
    }
    if (stamps.size() < 2) throw FormatError("need at least 2 rows to establish the sampling step");

    ds.start_epoch_s = stamps[0];
    ds.step_seconds = stamps[1] - stamps[0];
    if (ds.step_seconds <= 0) throw FormatError("timestamps must be strictly increasing");
    for (std::size_t i = 1; i < stamps.size(); ++i) {
        if (stamps[i] - stamps[i - 1] != ds.step_seconds)
            throw FormatError("non-uniform sampling step at row " + std::to_string(i + 1));
    }

    const std::int64_t n = static_cast<std::int64_t>(stamps.size());
    ds.values.resize(n, static_cast<std::int64_t>(d));
    for (std::int64_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c)
            ds.values(r, static_cast<Eigen::Index>(c)) = cells[static_cast<std::size_t>(r) * d + c];
    return ds;
}

void write_dataset_csv(const TimeSeriesDataset& ds, std::ostream& out) {
    out << "timestamp";
    for (const auto& ch : ds.channel_names) out << ',' << ch;
    out << '\n';
    for (std::int64_t r = 0; r < ds.n(); ++r) {
        out << format_iso8601_utc(ds.start_epoch_s + r * ds.step_seconds);
        for (std::int64_t c = 0; c < ds.d(); ++c) {
            out << ',';
            const double v = ds.values(r, c);
            if (!std::isnan(v)) out << format_double(v);
        }
        out << '\n';
    }
}

std::vector<FaultEvent> read_events_csv(std::istream& in, const TimeSeriesDataset& ds) {
    std::string line;
    if (!next_line(in, line)) throw ParseError("line 1: missing header");
    if (split_line(line) != std::vector<std::string>{"fault_id", "start_iso", "end_iso"})
        throw FormatError("events header must be 'fault_id,start_iso,end_iso'");

    std::vector<FaultEvent> events;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != 3)
            throw ParseError("line " + std::to_string(line_no) + ": expected 3 fields");
        const std::int64_t start_s = parse_iso8601_utc(fields[1]);
        const std::int64_t end_s = parse_iso8601_utc(fields[2]);
        auto to_index = [&](std::int64_t t) {
            const std::int64_t off = t - ds.start_epoch_s;
            if (off % ds.step_seconds != 0)
                throw FormatError("line " + std::to_string(line_no) +
                                  ": event time not on the sampling grid");
            return off / ds.step_seconds;
        };
        events.push_back({to_index(start_s), to_index(end_s), fields[0]});
    }
    return events;
}

void write_events_csv(const TimeSeriesDataset& ds, std::ostream& out) {
    out << "fault_id,start_iso,end_iso\n";
    for (const auto& ev : ds.events) {
        out << ev.fault_id << ','
            << format_iso8601_utc(ds.start_epoch_s + ev.start_index * ds.step_seconds) << ','
            << format_iso8601_utc(ds.start_epoch_s + ev.end_index * ds.step_seconds) << '\n';
    }
}

FeatureMatrix read_features_csv(std::istream& in) {
    std::string line;
    if (!next_line(in, line)) throw ParseError("line 1: missing header");
    std::vector<std::string> header = split_line(line);
    if (header.size() < 2 || header[0] != "row_index")
        throw FormatError("feature header must be 'row_index,<channel:feature>...'");

    FeatureMatrix fm;
    for (std::size_t i = 1; i < header.size(); ++i) {
        std::size_t pos = header[i].rfind(':');
        if (pos == std::string::npos) throw FormatError("feature column '" + header[i] + "' lacks ':'");
        fm.columns.push_back({header[i].substr(0, pos), header[i].substr(pos + 1)});
    }
    const std::size_t f = fm.columns.size();
    std::vector<double> cells;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != f + 1)
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(f + 1) + " fields");
        fm.row_index.push_back(static_cast<std::int64_t>(parse_double(fields[0], line_no)));
        for (std::size_t c = 1; c <= f; ++c) cells.push_back(parse_double(fields[c], line_no));
    }
    const std::int64_t m = static_cast<std::int64_t>(fm.row_index.size());
    fm.rows.resize(m, static_cast<Eigen::Index>(f));
    for (std::int64_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < f; ++c)
            fm.rows(r, static_cast<Eigen::Index>(c)) = cells[static_cast<std::size_t>(r) * f + c];
    return fm;
}

void write_features_csv(const FeatureMatrix& fm, std::ostream& out) {
    out << "row_index";
    for (const auto& col : fm.columns) out << ',' << col.name();
    out << '\n';
    for (std::int64_t r = 0; r < fm.m(); ++r) {
        out << fm.row_index[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < fm.f(); ++c) out << ',' << format_double(fm.rows(r, c));
        out << '\n';
    }
}

} // namespace windae
