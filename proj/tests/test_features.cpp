#include <doctest.h>

#include <cmath>
#include <complex>

#include "windae/errors.hpp"
#include "windae/features.hpp"
#include "windae/fft.hpp"
#include "windae/rng.hpp"

using namespace windae;

namespace {

Eigen::VectorXd random_series(Eigen::Index n, Philox& rng) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.gaussian();
    return x;
}

// Brute-force per-window oracles, kept independent of the kernels.
double window_mean(const Eigen::VectorXd& x, int t, int w) {
    double s = 0.0;
    for (int i = t - w + 1; i <= t; ++i) s += x[i];
    return s / w;
}

double window_std(const Eigen::VectorXd& x, int t, int w) {
    const double mu = window_mean(x, t, w);
    double s = 0.0;
    for (int i = t - w + 1; i <= t; ++i) s += (x[i] - mu) * (x[i] - mu);
    return std::sqrt(s / w);
}

// Raw-moment oracle for skewness/kurtosis.
std::pair<double, double> moments_oracle(const Eigen::VectorXd& v) {
    const double n = static_cast<double>(v.size());
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        const double d = x - mu;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

// O(w^2) DFT oracle.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * M_PI * static_cast<double>(k * j) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

} // namespace

TEST_CASE("moving average on small examples") {
    Eigen::VectorXd x(3);
    x << 1, 2, 3;
    auto out = moving_average(x, 2);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(1.5));
    CHECK(out[1] == doctest::Approx(2.5));

    Eigen::VectorXd c = Eigen::VectorXd::Constant(10, 4.25);
    CHECK((moving_average(c, 5).array() == 4.25).all());

    // w = 1 is an identity at kernel level (rejected by FeatureConfig)
    CHECK(moving_average(x, 1) == x);

    CHECK_THROWS_AS(moving_average(x, 4), SizeError);
}

TEST_CASE("moving std uses the population form") {
    Eigen::VectorXd x(2);
    x << 1, 3;
    CHECK(moving_std(x, 2)[0] == doctest::Approx(1.0));

    Eigen::VectorXd y(3);
    y << 0, 0, 6;
    CHECK(moving_std(y, 3)[0] == doctest::Approx(2.0 * std::sqrt(2.0)));

    Eigen::VectorXd c = Eigen::VectorXd::Constant(8, -3.5);
    CHECK((moving_std(c, 4).array() == 0.0).all());
}

TEST_CASE("moving statistics match the brute-force oracle") {
    Philox rng(101);
    for (Eigen::Index n : {32, 257, 2048}) {
        Eigen::VectorXd x = random_series(n, rng);
        for (int w : {2, 5, 16}) {
            auto avg = moving_average(x, w);
            auto sd = moving_std(x, w);
            for (Eigen::Index i = 0; i < avg.size(); ++i) {
                const int t = static_cast<int>(i) + w - 1;
                CHECK(avg[i] == doctest::Approx(window_mean(x, t, w)).epsilon(1e-10));
                CHECK(sd[i] == doctest::Approx(window_std(x, t, w)).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("derivatives") {
    Eigen::VectorXd x(3);
    x << 1, 4, 9;
    auto [d1, d2] = derivatives(x);
    REQUIRE(d1.size() == 2);
    REQUIRE(d2.size() == 1);
    CHECK(d1[0] == 3);
    CHECK(d1[1] == 5);
    CHECK(d2[0] == 2);

    // linear ramp: first derivative constant, second zero
    Eigen::VectorXd ramp(50);
    for (int i = 0; i < 50; ++i) ramp[i] = 2.5 * i + 1.0;
    auto [r1, r2] = derivatives(ramp);
    CHECK((r1.array() - 2.5).abs().maxCoeff() < 1e-12);
    CHECK(r2.array().abs().maxCoeff() < 1e-12);

    Eigen::VectorXd c = Eigen::VectorXd::Constant(10, 7.0);
    auto [c1, c2] = derivatives(c);
    CHECK(c1.array().abs().maxCoeff() == 0.0);
    CHECK(c2.array().abs().maxCoeff() == 0.0);

    Eigen::VectorXd tiny(2);
    tiny << 1, 2;
    CHECK_THROWS_AS(derivatives(tiny), SizeError);
}

TEST_CASE("skewness and kurtosis") {
    Eigen::VectorXd sym(4);
    sym << -1, 1, -1, 1;
    auto sk = skew_kurt(sym);
    CHECK(!sk.degenerate);
    CHECK(sk.skew == doctest::Approx(0.0));
    CHECK(sk.kurt == doctest::Approx(1.0));

    Eigen::VectorXd c = Eigen::VectorXd::Constant(6, 2.0);
    auto degen = skew_kurt(c);
    CHECK(degen.degenerate);
    CHECK(degen.skew == 0.0);
    CHECK(degen.kurt == 0.0);

    Eigen::VectorXd spike(4);
    spike << 0, 0, 0, 1;
    auto s = skew_kurt(spike);
    auto [g_oracle, k_oracle] = moments_oracle(spike);
    CHECK(s.skew == doctest::Approx(g_oracle).epsilon(1e-12));
    CHECK(s.skew == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(s.kurt == doctest::Approx(k_oracle).epsilon(1e-12));
}

TEST_CASE("skew/kurt match the moment oracle on random windows") {
    Philox rng(33);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index w = 4 + static_cast<Eigen::Index>(rng.bounded(61));
        Eigen::VectorXd v = random_series(w, rng);
        auto sk = skew_kurt(v);
        auto [g, k] = moments_oracle(v);
        CHECK(sk.skew == doctest::Approx(g).epsilon(1e-10));
        CHECK(sk.kurt == doctest::Approx(k).epsilon(1e-10));
    }
}

TEST_CASE("fft matches the naive DFT oracle across window sizes") {
    Philox rng(55);
    for (std::size_t w = 8; w <= 1024; w *= 2) {
        std::vector<double> x(w);
        for (auto& v : x) v = rng.gaussian();
        std::vector<std::complex<double>> a(w);
        for (std::size_t i = 0; i < w; ++i) a[i] = x[i];
        fft_inplace(a);
        auto oracle = naive_dft(x);
        double max_err = 0.0;
        for (std::size_t k = 0; k < w; ++k) max_err = std::max(max_err, std::abs(a[k] - oracle[k]));
        CHECK(max_err < 1e-9);
    }
}

TEST_CASE("fft features: sinusoid, constant window, band energies") {
    const int w = 64;
    Eigen::VectorXd x(w);
    const int k = 7;
    for (int i = 0; i < w; ++i) x[i] = 2.0 * std::sin(2.0 * M_PI * k * i / w);
    auto f = fft_features(x, 4);
    CHECK(f.dominant_bin == k);
    REQUIRE(f.band_energy.size() == 4);
    // bin 7 falls in the first band (bins 1..8)
    CHECK(f.band_energy[0] > f.band_energy[1]);

    Eigen::VectorXd c = Eigen::VectorXd::Constant(w, 5.0);
    auto fc = fft_features(c, 4);
    CHECK(fc.band_energy.maxCoeff() == doctest::Approx(0.0).epsilon(1e-18));

    Eigen::VectorXd bad(12);
    bad.setZero();
    CHECK_THROWS_AS(fft_features(bad, 2), ConfigError);
}

TEST_CASE("fft band energies match the magnitude oracle") {
    Philox rng(77);
    const int w = 32, bands = 4;
    Eigen::VectorXd x = random_series(w, rng);
    auto f = fft_features(x, bands);

    std::vector<double> centered(w);
    const double mu = x.mean();
    for (int i = 0; i < w; ++i) centered[i] = x[i] - mu;
    auto spec = naive_dft(centered);
    const int nbins = w / 2;
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(bands);
    int dominant = 1;
    for (int b = 0; b < bands; ++b)
        for (int kk = 1 + b * nbins / bands; kk <= (b + 1) * nbins / bands; ++kk)
            expected[b] += std::norm(spec[kk]);
    for (int kk = 1; kk <= nbins; ++kk)
        if (std::abs(spec[kk]) > std::abs(spec[dominant])) dominant = kk;
    for (int b = 0; b < bands; ++b) CHECK(f.band_energy[b] == doctest::Approx(expected[b]).epsilon(1e-9));
    CHECK(f.dominant_bin == dominant);
}

TEST_CASE("feature matrix layout and row indexing") {
    TimeSeriesDataset ds;
    ds.step_seconds = 600;
    const int n = 16, d = 3;
    ds.values.resize(n, d);
    Philox rng(9);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) ds.values(r, c) = rng.gaussian();
    ds.channel_names = {"a", "b", "c"};

    FeatureConfig cfg;
    cfg.window = 8;
    cfg.fft_bands = 4;
    auto fm = build_feature_matrix(ds, cfg);
    CHECK(fm.m() == n - cfg.window + 1);
    CHECK(fm.f() == d * (8 + cfg.fft_bands));
    for (std::size_t i = 0; i < fm.row_index.size(); ++i)
        CHECK(fm.row_index[i] == static_cast<std::int64_t>(cfg.window - 1 + i));
    CHECK(fm.columns[0].name() == "a:raw");
    CHECK(fm.columns[static_cast<std::size_t>(8 + cfg.fft_bands)].name() == "b:raw");
}

TEST_CASE("dataset shorter than window is a size error") {
    TimeSeriesDataset ds;
    ds.values.resize(4, 1);
    ds.values.setZero();
    ds.channel_names = {"a"};
    FeatureConfig cfg;
    cfg.window = 8;
    CHECK_THROWS_AS(build_feature_matrix(ds, cfg), SizeError);
}

TEST_CASE("NaN imputation forward/back fills") {
    Eigen::MatrixXd v(5, 2);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    v << nan, 1, 2, nan, nan, 3, 4, nan, nan, 5;
    auto out = impute_missing(v, {"a", "b"});
    CHECK(out(0, 0) == 2); // back-filled
    CHECK(out(2, 0) == 2); // forward-filled
    CHECK(out(4, 0) == 4);
    CHECK(out(1, 1) == 1);
    CHECK(out(3, 1) == 3);

    Eigen::MatrixXd all_nan(3, 1);
    all_nan.setConstant(nan);
    CHECK_THROWS_AS(impute_missing(all_nan, {"a"}), DataError);
}

TEST_CASE("normalizer: fit/apply, constant columns, inversion, no leakage") {
    Philox rng(21);
    Eigen::MatrixXd rows(200, 4);
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        rows(r, 0) = rng.gaussian() * 3.0 + 5.0;
        rows(r, 1) = rng.gaussian() * 0.1;
        rows(r, 2) = 42.0; // constant
        rows(r, 3) = rng.uniform();
    }
    auto norm = fit_normalizer(rows);
    auto z = apply_normalizer(norm, rows);
    for (int c : {0, 1, 3}) {
        CHECK(std::abs(z.col(c).mean()) < 1e-9);
        const double sd = std::sqrt(z.col(c).squaredNorm() / static_cast<double>(z.rows()) -
                                    z.col(c).mean() * z.col(c).mean());
        CHECK(std::abs(sd - 1.0) < 1e-9);
    }
    CHECK((z.col(2).array() == 0.0).all());

    // invertibility on nonconstant columns
    auto back = denormalize(norm, z);
    for (int c : {0, 1, 3})
        CHECK((back.col(c) - rows.col(c)).cwiseAbs().maxCoeff() < 1e-9);

    // train-fitted stats applied to other rows use train statistics
    Eigen::MatrixXd other = rows.topRows(50);
    other.array() += 100.0;
    auto z2 = apply_normalizer(norm, other);
    CHECK(z2.col(0).mean() > 10.0); // shifted far off zero under train stats

    Normalizer unfitted;
    CHECK_THROWS_AS(apply_normalizer(unfitted, rows), StateError);
}

TEST_CASE("feature count formula holds across configurations") {
    for (int d : {1, 3, 7}) {
        for (int bands : {1, 2, 4, 8}) {
            TimeSeriesDataset ds;
            ds.values = Eigen::MatrixXd::Random(40, d);
            for (int c = 0; c < d; ++c) ds.channel_names.push_back("c" + std::to_string(c));
            FeatureConfig cfg;
            cfg.window = 16;
            cfg.fft_bands = bands;
            auto fm = build_feature_matrix(ds, cfg);
            CHECK(fm.f() == d * (8 + bands));
        }
    }
}

TEST_CASE("feature config validation") {
    FeatureConfig cfg;
    cfg.window = 12; // not a power of two
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.window = 16;
    cfg.fft_bands = 9; // > w/2
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.spectral = false;
    cfg.window = 12; // fine without FFT
    CHECK_NOTHROW(cfg.validate());
    cfg.window = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
