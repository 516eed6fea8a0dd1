#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "windae/dataset.hpp"
#include "windae/features.hpp"

namespace windae {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
};

struct ThresholdMetrics {
    ConfusionCounts counts;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate_precision = false; // no predicted positives
};

ThresholdMetrics threshold_metrics(const std::vector<char>& flags, const std::vector<int>& labels);

// Precision among the top-fraction highest-scored points (descending score,
// stable on ties).
double precision_at_fraction(const Eigen::VectorXd& scores, const std::vector<int>& labels,
                             double fraction);

// Rank-based (Mann-Whitney) AUC; tied pairs count 1/2.
double auc_roc(const Eigen::VectorXd& scores, const std::vector<int>& labels);

// Average precision with tied scores processed as one group.
double auc_pr(const Eigen::VectorXd& scores, const std::vector<int>& labels);

struct RangeMetrics {
    double event_recall = 0.0;
    double event_precision = 0.0;
    bool degenerate_precision = false; // no predicted segments
};

// Events are intervals on the same index axis as flags.
RangeMetrics range_wise_eval(const std::vector<char>& flags, const std::vector<FaultEvent>& events);

// For each lead window W (hours): fraction of events whose first flag inside
// [start - horizon, start) leads the event start by at least W.
std::map<int, double> early_detection(const std::vector<char>& flags,
                                      const std::vector<FaultEvent>& events,
                                      const std::vector<int>& lead_windows_hours,
                                      std::int64_t step_seconds, double horizon_hours);

// Linear-interpolation percentile: rank p/100 * (n-1), neighbors interpolated.
double percentile_interpolated(Eigen::VectorXd scores, double p);

struct ScoreStats {
    double mean_normal = 0.0;
    double std_normal = 0.0;
    double mean_anom = 0.0;
    double std_anom = 0.0;
    // Fraction of anomalous scores below the normal-class 99th percentile.
    double overlap_fraction = 0.0;
};

ScoreStats score_distribution_stats(const Eigen::VectorXd& scores, const std::vector<int>& labels);

// Maps permuted feature rows to fused scores.
using RowScorer = std::function<Eigen::VectorXd(const Eigen::MatrixXd& rows)>;

// Per-column permutation importance: baseline AUC minus AUC after a seeded
// shuffle of that column. Entries are sorted by descending importance.
std::vector<std::pair<std::string, double>> permutation_importance(const RowScorer& scorer,
                                                                   const FeatureMatrix& fm,
                                                                   const std::vector<int>& labels,
                                                                   std::uint64_t seed);

// AUC drop after applying one seeded row permutation jointly to a group of
// columns (used for per-channel ablation).
double group_permutation_delta(const RowScorer& scorer, const Eigen::MatrixXd& rows,
                               const std::vector<int>& labels, const std::vector<int>& columns,
                               std::uint64_t seed);

struct CurvePoint {
    double x = 0.0; // fpr (ROC) or recall (PR)
    double y = 0.0; // tpr (ROC) or precision (PR)
    double threshold = 0.0;
};

std::vector<CurvePoint> roc_curve(const Eigen::VectorXd& scores, const std::vector<int>& labels);
std::vector<CurvePoint> pr_curve(const Eigen::VectorXd& scores, const std::vector<int>& labels);

} // namespace windae
