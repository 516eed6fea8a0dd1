#include <doctest.h>

#include <cmath>

#include "windae/errors.hpp"
#include "windae/eval.hpp"
#include "windae/rng.hpp"

using namespace windae;

namespace {

// O(n^2) pair-counting oracle with half credit for ties.
double auc_pair_oracle(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::int64_t pairs = 0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (!labels[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index j = 0; j < scores.size(); ++j) {
            if (labels[static_cast<std::size_t>(j)]) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// Exhaustive threshold-sweep oracle for average precision (ties grouped).
double ap_sweep_oracle(const Eigen::VectorXd& scores, const std::vector<int>& labels) {
    std::vector<double> distinct(scores.data(), scores.data() + scores.size());
    std::sort(distinct.begin(), distinct.end(), std::greater<>());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::int64_t pos = 0;
    for (int l : labels) pos += l;
    double ap = 0.0, prev_recall = 0.0;
    for (double thr : distinct) {
        std::int64_t tp = 0, fp = 0;
        for (Eigen::Index i = 0; i < scores.size(); ++i) {
            if (scores[i] >= thr) {
                if (labels[static_cast<std::size_t>(i)])
                    ++tp;
                else
                    ++fp;
            }
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    return ap;
}

std::vector<char> to_flags(std::initializer_list<int> v) {
    std::vector<char> out;
    for (int x : v) out.push_back(static_cast<char>(x));
    return out;
}

} // namespace

TEST_CASE("threshold metrics on the worked example") {
    // tp=3, fp=1, fn=1, tn=3
    std::vector<char> flags = to_flags({1, 1, 1, 1, 0, 0, 0, 0});
    std::vector<int> labels = {1, 1, 1, 0, 1, 0, 0, 0};
    auto m = threshold_metrics(flags, labels);
    CHECK(m.counts.tp == 3);
    CHECK(m.counts.fp == 1);
    CHECK(m.counts.fn == 1);
    CHECK(m.precision == doctest::Approx(0.75));
    CHECK(m.recall == doctest::Approx(0.75));
    CHECK(m.f1 == doctest::Approx(0.75));
    CHECK(!m.degenerate_precision);

    // perfect flags
    auto perfect = threshold_metrics(to_flags({1, 0, 1, 0}), {1, 0, 1, 0});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    // no predicted positives
    auto none = threshold_metrics(to_flags({0, 0, 0}), {1, 0, 1});
    CHECK(none.precision == 0.0);
    CHECK(none.degenerate_precision);
    CHECK(none.f1 == 0.0);

    CHECK_THROWS_AS(threshold_metrics(to_flags({1}), {1, 0}), UsageError);
}

TEST_CASE("confusion counts partition the points") {
    Philox rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.bounded(200));
        std::vector<char> flags(static_cast<std::size_t>(n));
        std::vector<int> labels(static_cast<std::size_t>(n));
        std::int64_t pos = 0;
        for (int i = 0; i < n; ++i) {
            flags[static_cast<std::size_t>(i)] = rng.uniform() < 0.3;
            labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.2;
            pos += labels[static_cast<std::size_t>(i)];
        }
        auto m = threshold_metrics(flags, labels);
        CHECK(m.counts.tp + m.counts.fp + m.counts.fn + m.counts.tn == n);
        CHECK(m.counts.tp + m.counts.fn == pos);
        CHECK(m.counts.fp + m.counts.tn == n - pos);
    }
}

TEST_CASE("auc_roc basics") {
    Eigen::VectorXd s(6);
    s << 0.9, 0.8, 0.7, 0.3, 0.2, 0.1;
    std::vector<int> labels = {1, 1, 1, 0, 0, 0};
    CHECK(auc_roc(s, labels) == 1.0);

    Eigen::VectorXd tied = Eigen::VectorXd::Constant(6, 0.5);
    CHECK(auc_roc(tied, labels) == 0.5);

    CHECK_THROWS_AS(auc_roc(s, std::vector<int>{0, 0, 0, 0, 0, 0}), UndefinedMetricError);
}

TEST_CASE("auc_roc matches the pair-counting oracle including ties") {
    Philox rng(11);
    for (int n : {10, 87, 200, 500}) {
        Eigen::VectorXd s(n);
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            // quantized scores force plenty of ties
            s[i] = std::floor(rng.uniform() * 8.0) / 8.0;
            labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.3;
        }
        labels[0] = 1;
        labels[1] = 0;
        CHECK(auc_roc(s, labels) == doctest::Approx(auc_pair_oracle(s, labels)).epsilon(1e-12));
    }
}

TEST_CASE("auc_pr basics and oracle") {
    Eigen::VectorXd s(6);
    s << 0.9, 0.8, 0.7, 0.3, 0.2, 0.1;
    std::vector<int> labels = {1, 1, 1, 0, 0, 0};
    CHECK(auc_pr(s, labels) == 1.0);

    // all scores identical: single grouped step, precision = prevalence
    Eigen::VectorXd tied = Eigen::VectorXd::Constant(10, 0.4);
    std::vector<int> lab(10, 0);
    lab[0] = lab[1] = lab[2] = 1;
    CHECK(auc_pr(tied, lab) == doctest::Approx(0.3).epsilon(1e-12));

    Philox rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 50;
        Eigen::VectorXd scores(n);
        std::vector<int> labels2(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            scores[i] = std::floor(rng.uniform() * 6.0) / 6.0;
            labels2[static_cast<std::size_t>(i)] = rng.uniform() < 0.25;
        }
        labels2[0] = 1;
        CHECK(auc_pr(scores, labels2) ==
              doctest::Approx(ap_sweep_oracle(scores, labels2)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(auc_pr(s, std::vector<int>{0, 0, 0, 0, 0, 0}), UndefinedMetricError);
}

TEST_CASE("auc_roc is invariant under strictly increasing transforms") {
    Philox rng(17);
    const int n = 150;
    Eigen::VectorXd s(n);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        s[i] = rng.gaussian();
        labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.4;
    }
    labels[0] = 1;
    labels[1] = 0;
    const Eigen::VectorXd transformed = s.array().exp();
    CHECK(auc_roc(s, labels) == doctest::Approx(auc_roc(transformed, labels)).epsilon(1e-12));
}

TEST_CASE("range-wise metrics") {
    // one event fully flagged, nothing else
    std::vector<char> flags(20, 0);
    for (int i = 5; i < 9; ++i) flags[static_cast<std::size_t>(i)] = 1;
    auto m = range_wise_eval(flags, {{5, 9, "e"}});
    CHECK(m.event_recall == 1.0);
    CHECK(m.event_precision == 1.0);

    // flags only outside events
    std::vector<char> outside(20, 0);
    outside[1] = 1;
    auto m2 = range_wise_eval(outside, {{5, 9, "e"}});
    CHECK(m2.event_recall == 0.0);
    CHECK(m2.event_precision == 0.0);

    // 2 events, flags hit one event plus one spurious run
    std::vector<char> mixed(30, 0);
    mixed[6] = mixed[7] = 1;  // inside event 1
    mixed[20] = mixed[21] = 1; // spurious
    auto m3 = range_wise_eval(mixed, {{5, 9, "a"}, {12, 15, "b"}});
    CHECK(m3.event_recall == doctest::Approx(0.5));
    CHECK(m3.event_precision == doctest::Approx(0.5));

    // no flags at all: degenerate precision
    auto m4 = range_wise_eval(std::vector<char>(10, 0), {{2, 4, "e"}});
    CHECK(m4.event_precision == 0.0);
    CHECK(m4.degenerate_precision);
}

TEST_CASE("early detection lead-time semantics") {
    // step 600 s = 10 min; event starts at sample 600
    // first flag 30 h before the fault: sample 600 - 180 = 420
    std::vector<char> flags(700, 0);
    flags[420] = 1;
    std::vector<FaultEvent> events = {{600, 640, "e"}};
    auto rates = early_detection(flags, events, {24, 48}, 600, 168.0);
    CHECK(rates.at(24) == 1.0); // lead 30 h >= 24
    CHECK(rates.at(48) == 0.0); // lead 30 h < 48

    // no flags in the horizon
    auto none = early_detection(std::vector<char>(700, 0), events, {24, 48}, 600, 168.0);
    CHECK(none.at(24) == 0.0);
    CHECK(none.at(48) == 0.0);

    CHECK_THROWS_AS(early_detection(flags, {}, {24}, 600, 168.0), UndefinedMetricError);
}

TEST_CASE("early detection rates are monotone non-increasing in the window") {
    Philox rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2000;
        std::vector<char> flags(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < n; ++i) flags[static_cast<std::size_t>(i)] = rng.uniform() < 0.05;
        std::vector<FaultEvent> events;
        for (int e = 0; e < 3; ++e) {
            const std::int64_t start = 400 + e * 500;
            events.push_back({start, start + 30, "e" + std::to_string(e)});
        }
        auto rates = early_detection(flags, events, {24, 48, 72, 96}, 600, 168.0);
        CHECK(rates.at(24) >= rates.at(48));
        CHECK(rates.at(48) >= rates.at(72));
        CHECK(rates.at(72) >= rates.at(96));
    }
}

TEST_CASE("score distribution statistics") {
    // labels as scores: means are exactly 0 and 1
    Eigen::VectorXd s(10);
    std::vector<int> labels(10);
    for (int i = 0; i < 10; ++i) {
        labels[static_cast<std::size_t>(i)] = i < 4;
        s[i] = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    }
    auto st = score_distribution_stats(s, labels);
    CHECK(st.mean_normal == 0.0);
    CHECK(st.mean_anom == 1.0);
    CHECK(st.overlap_fraction == 0.0); // disjoint supports

    // identical distributions overlap almost entirely
    Philox rng(29);
    const int n = 4000;
    Eigen::VectorXd same(n);
    std::vector<int> lab(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        same[i] = rng.gaussian();
        lab[static_cast<std::size_t>(i)] = i % 2;
    }
    auto st2 = score_distribution_stats(same, lab);
    CHECK(st2.overlap_fraction == doctest::Approx(0.99).epsilon(0.02));

    CHECK_THROWS_AS(score_distribution_stats(s, std::vector<int>(10, 1)), UndefinedMetricError);
}

TEST_CASE("permutation importance: constant columns, determinism, ranking") {
    Philox rng(31);
    const int m = 300;
    FeatureMatrix fm;
    fm.rows.resize(m, 3);
    std::vector<int> labels(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        labels[static_cast<std::size_t>(i)] = rng.uniform() < 0.3;
        fm.rows(i, 0) = labels[static_cast<std::size_t>(i)] + 0.1 * rng.gaussian(); // informative
        fm.rows(i, 1) = rng.gaussian();                                             // noise
        fm.rows(i, 2) = 7.5;                                                        // constant
    }
    fm.columns = {{"sig", "raw"}, {"noise", "raw"}, {"flat", "raw"}};
    for (int i = 0; i < m; ++i) fm.row_index.push_back(i);

    RowScorer scorer = [](const Eigen::MatrixXd& rows) { return rows.col(0).eval(); };
    auto imp = permutation_importance(scorer, fm, labels, 99);
    REQUIRE(imp.size() == 3);
    CHECK(imp[0].first == "sig:raw");
    CHECK(imp[0].second > 0.2);
    for (const auto& [name, delta] : imp) {
        if (name == "flat:raw") CHECK(delta == 0.0); // shuffle of a constant is the identity
        if (name == "noise:raw") CHECK(std::abs(delta) < 1e-12);
    }

    auto imp2 = permutation_importance(scorer, fm, labels, 99);
    CHECK(imp == imp2); // same seed, same map

    // group permutation: scrambling the informative column kills the AUC
    const double drop = group_permutation_delta(scorer, fm.rows, labels, {0}, 123);
    CHECK(drop > 0.2);
    const double none = group_permutation_delta(scorer, fm.rows, labels, {1, 2}, 123);
    CHECK(none == 0.0); // scorer ignores those columns entirely
}

TEST_CASE("precision at fraction") {
    Eigen::VectorXd s(10);
    std::vector<int> labels(10, 0);
    for (int i = 0; i < 10; ++i) s[i] = 10 - i; // descending 10..1
    labels[0] = 1;                              // the top-scored point is positive
    CHECK(precision_at_fraction(s, labels, 0.1) == 1.0);
    CHECK(precision_at_fraction(s, labels, 0.2) == 0.5);
    CHECK_THROWS_AS(precision_at_fraction(s, labels, 0.0), ConfigError);
}

TEST_CASE("roc and pr curves bracket their AUCs") {
    Philox rng(37);
    const int n = 120;
    Eigen::VectorXd s(n);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        s[i] = rng.gaussian() + (i % 3 == 0 ? 1.0 : 0.0);
        labels[static_cast<std::size_t>(i)] = i % 3 == 0;
    }
    auto roc = roc_curve(s, labels);
    REQUIRE(roc.size() >= 2);
    CHECK(roc.front().x == 0.0);
    CHECK(roc.front().y == 0.0);
    CHECK(roc.back().x == 1.0);
    CHECK(roc.back().y == 1.0);
    // trapezoid integration of the curve reproduces auc_roc
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        area += (roc[i].x - roc[i - 1].x) * 0.5 * (roc[i].y + roc[i - 1].y);
    CHECK(area == doctest::Approx(auc_roc(s, labels)).epsilon(1e-12));

    auto pr = pr_curve(s, labels);
    CHECK(pr.front().x == 0.0);
    CHECK(pr.back().x == 1.0);
}
