#include "windae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "windae/errors.hpp"
#include "windae/rng.hpp"

namespace windae {

namespace {

void check_labels(const std::vector<int>& labels, Eigen::Index n, const char* op) {
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw UsageError(std::string(op) + ": scores/labels length mismatch");
}

std::pair<std::int64_t, std::int64_t> class_counts(const std::vector<int>& labels) {
    std::int64_t pos = 0;
    for (int l : labels) pos += l ? 1 : 0;
    return {pos, static_cast<std::int64_t>(labels.size()) - pos};
}

// Indices sorted by descending score; stable so ties keep input order.
std::vector<Eigen::Index> descending_order(const Eigen::VectorXd& scores) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
    return idx;
}

} // namespace

ThresholdMetrics threshold_metrics(const std::vector<char>& flags, const std::vector<int>& labels) {
    if (flags.size() != labels.size()) throw UsageError("threshold_metrics: length mismatch");
    ThresholdMetrics m;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        const bool f = flags[i] != 0;
        const bool l = labels[i] != 0;
        if (f && l)
            ++m.counts.tp;
        else if (f && !l)
            ++m.counts.fp;
        else if (!f && l)
            ++m.counts.fn;
        else
            ++m.counts.tn;
    }
    const auto& c = m.counts;
    if (c.tp + c.fp == 0) {
        m.precision = 0.0;
        m.degenerate_precision = true;
    } else {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    m.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    m.f1 = m.precision + m.recall == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

double precision_at_fraction(const Eigen::VectorXd& scores, const std::vector<int>& labels,
                             double fraction) {
    check_labels(labels, scores.size(), "precision_at_fraction");
    if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("fraction must lie in (0, 1]");
    const auto idx = descending_order(scores);
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(scores.size()))));
    std::int64_t tp = 0;
    for (std::size_t i = 0; i < k && i < idx.size(); ++i)
        tp += labels[static_cast<std::size_t>(idx[i])] ? 1 : 0;
    return static_cast<double>(tp) / static_cast<double>(std::min(k, idx.size()));
}

double auc_roc(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    check_labels(labels, scores.size(), "auc_roc");
    const auto [pos, neg] = class_counts(labels);
    if (pos == 0 || neg == 0) throw UndefinedMetricError("auc_roc needs both classes");

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups (Mann-Whitney U).
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // 1-based ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[static_cast<std::size_t>(idx[k])]) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auc_pr(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    check_labels(labels, scores.size(), "auc_pr");
    const auto [pos, neg] = class_counts(labels);
    (void)neg;
    if (pos == 0) throw UndefinedMetricError("auc_pr needs at least one positive");

    const auto idx = descending_order(scores);
    double ap = 0.0;
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        std::int64_t gtp = 0, gfp = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            if (labels[static_cast<std::size_t>(idx[j])])
                ++gtp;
            else
                ++gfp;
            ++j;
        }
        tp += gtp;
        fp += gfp;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double delta_recall = static_cast<double>(gtp) / static_cast<double>(pos);
        ap += precision * delta_recall;
        i = j;
    }
    return ap;
}

RangeMetrics range_wise_eval(const std::vector<char>& flags, const std::vector<FaultEvent>& events) {
    RangeMetrics m;
    const std::int64_t n = static_cast<std::int64_t>(flags.size());

    // Maximal runs of consecutive flags.
    std::vector<std::pair<std::int64_t, std::int64_t>> segments;
    std::int64_t run_start = -1;
    for (std::int64_t i = 0; i <= n; ++i) {
        const bool f = i < n && flags[static_cast<std::size_t>(i)] != 0;
        if (f && run_start < 0) run_start = i;
        if (!f && run_start >= 0) {
            segments.push_back({run_start, i});
            run_start = -1;
        }
    }

    if (!events.empty()) {
        std::int64_t hit = 0;
        for (const auto& ev : events) {
            bool any = false;
            for (std::int64_t i = std::max<std::int64_t>(0, ev.start_index);
                 i < std::min(n, ev.end_index); ++i)
                if (flags[static_cast<std::size_t>(i)]) {
                    any = true;
                    break;
                }
            hit += any ? 1 : 0;
        }
        m.event_recall = static_cast<double>(hit) / static_cast<double>(events.size());
    }

    if (segments.empty()) {
        m.event_precision = 0.0;
        m.degenerate_precision = true;
    } else {
        std::int64_t good = 0;
        for (const auto& [lo, hi] : segments) {
            bool overlaps = false;
            for (const auto& ev : events)
                if (lo < ev.end_index && ev.start_index < hi) {
                    overlaps = true;
                    break;
                }
            good += overlaps ? 1 : 0;
        }
        m.event_precision = static_cast<double>(good) / static_cast<double>(segments.size());
    }
    return m;
}

std::map<int, double> early_detection(const std::vector<char>& flags,
                                      const std::vector<FaultEvent>& events,
                                      const std::vector<int>& lead_windows_hours,
                                      std::int64_t step_seconds, double horizon_hours) {
    if (events.empty()) throw UndefinedMetricError("early_detection needs at least one event");
    if (step_seconds <= 0) throw ConfigError("step_seconds must be positive");
    const std::int64_t horizon =
        static_cast<std::int64_t>(std::llround(horizon_hours * 3600.0 / static_cast<double>(step_seconds)));

    std::vector<double> leads; // hours; negative = never flagged in horizon
    for (const auto& ev : events) {
        const std::int64_t lo = std::max<std::int64_t>(0, ev.start_index - horizon);
        std::int64_t first = -1;
        for (std::int64_t i = lo; i < ev.start_index && i < static_cast<std::int64_t>(flags.size()); ++i)
            if (flags[static_cast<std::size_t>(i)]) {
                first = i;
                break;
            }
        if (first < 0)
            leads.push_back(-1.0);
        else
            leads.push_back(static_cast<double>(ev.start_index - first) *
                            static_cast<double>(step_seconds) / 3600.0);
    }

    std::map<int, double> rates;
    for (int w : lead_windows_hours) {
        std::int64_t detected = 0;
        for (double lead : leads)
            if (lead >= static_cast<double>(w)) ++detected;
        rates[w] = static_cast<double>(detected) / static_cast<double>(events.size());
    }
    return rates;
}

double percentile_interpolated(Eigen::VectorXd scores, double p) {
    if (scores.size() == 0) throw UsageError("percentile of an empty series");
    std::sort(scores.data(), scores.data() + scores.size());
    if (scores.size() == 1) return scores[0];
    const double rank = p / 100.0 * static_cast<double>(scores.size() - 1);
    const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(rank));
    const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, scores.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return scores[lo] + frac * (scores[hi] - scores[lo]);
}

ScoreStats score_distribution_stats(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    check_labels(labels, scores.size(), "score_distribution_stats");
    std::vector<double> normal, anom;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (labels[static_cast<std::size_t>(i)])
            anom.push_back(scores[i]);
        else
            normal.push_back(scores[i]);
    }
    if (normal.empty() || anom.empty())
        throw UndefinedMetricError("score_distribution_stats needs both classes");

    auto mean_std = [](const std::vector<double>& v) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        return std::pair<double, double>{mean, std::sqrt(var / static_cast<double>(v.size()))};
    };
    ScoreStats s;
    std::tie(s.mean_normal, s.std_normal) = mean_std(normal);
    std::tie(s.mean_anom, s.std_anom) = mean_std(anom);

    const double q99 = percentile_interpolated(
        Eigen::Map<const Eigen::VectorXd>(normal.data(), static_cast<Eigen::Index>(normal.size())),
        99.0);
    std::int64_t below = 0;
    for (double x : anom)
        if (x < q99) ++below;
    s.overlap_fraction = static_cast<double>(below) / static_cast<double>(anom.size());
    return s;
}

namespace {

std::vector<Eigen::Index> seeded_permutation(Eigen::Index n, Philox& rng) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    return perm;
}

} // namespace

std::vector<std::pair<std::string, double>> permutation_importance(const RowScorer& scorer,
                                                                   const FeatureMatrix& fm,
                                                                   const std::vector<int>& labels,
                                                                   std::uint64_t seed) {
    check_labels(labels, fm.m(), "permutation_importance");
    const double base = auc_roc(scorer(fm.rows), labels);

    Eigen::MatrixXd work = fm.rows;
    std::vector<std::pair<std::string, double>> out;
    out.reserve(fm.columns.size());
    for (Eigen::Index c = 0; c < fm.f(); ++c) {
        Philox rng(seed, static_cast<std::uint64_t>(c));
        const auto perm = seeded_permutation(fm.m(), rng);
        const Eigen::VectorXd original = work.col(c);
        for (Eigen::Index r = 0; r < fm.m(); ++r)
            work(r, c) = original[perm[static_cast<std::size_t>(r)]];
        const double permuted = auc_roc(scorer(work), labels);
        work.col(c) = original;
        out.push_back({fm.columns[static_cast<std::size_t>(c)].name(), base - permuted});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

double group_permutation_delta(const RowScorer& scorer, const Eigen::MatrixXd& rows,
                               const std::vector<int>& labels, const std::vector<int>& columns,
                               std::uint64_t seed) {
    check_labels(labels, rows.rows(), "group_permutation_delta");
    const double base = auc_roc(scorer(rows), labels);
    Eigen::MatrixXd work = rows;
    Philox rng(seed, 0);
    const auto perm = seeded_permutation(rows.rows(), rng);
    for (int c : columns) {
        if (c < 0 || c >= rows.cols()) throw UsageError("group_permutation_delta: column out of range");
        const Eigen::VectorXd original = rows.col(c);
        for (Eigen::Index r = 0; r < rows.rows(); ++r)
            work(r, c) = original[perm[static_cast<std::size_t>(r)]];
    }
    return base - auc_roc(scorer(work), labels);
}

std::vector<CurvePoint> roc_curve(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    check_labels(labels, scores.size(), "roc_curve");
    const auto [pos, neg] = class_counts(labels);
    if (pos == 0 || neg == 0) throw UndefinedMetricError("roc_curve needs both classes");
    const auto idx = descending_order(scores);
    std::vector<CurvePoint> pts;
    pts.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == s) {
            if (labels[static_cast<std::size_t>(idx[i])])
                ++tp;
            else
                ++fp;
            ++i;
        }
        pts.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                       static_cast<double>(tp) / static_cast<double>(pos), s});
    }
    return pts;
}

std::vector<CurvePoint> pr_curve(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    check_labels(labels, scores.size(), "pr_curve");
    const auto [pos, neg] = class_counts(labels);
    (void)neg;
    if (pos == 0) throw UndefinedMetricError("pr_curve needs at least one positive");
    const auto idx = descending_order(scores);
    std::vector<CurvePoint> pts;
    pts.push_back({0.0, 1.0, std::numeric_limits<double>::infinity()});
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == s) {
            if (labels[static_cast<std::size_t>(idx[i])])
                ++tp;
            else
                ++fp;
            ++i;
        }
        pts.push_back({static_cast<double>(tp) / static_cast<double>(pos),
                       static_cast<double>(tp) / static_cast<double>(tp + fp), s});
    }
    return pts;
}

} // namespace windae
