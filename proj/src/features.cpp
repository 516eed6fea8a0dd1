#include "windae/features.hpp"

#include <cmath>
#include <complex>

#include "windae/errors.hpp"
#include "windae/fft.hpp"

namespace windae {

int FeatureConfig::per_channel() const {
    int c = 1; // raw value
    if (temporal) c += 2;
    if (derivatives) c += 2;
    if (shape) c += 2;
    if (spectral) c += fft_bands + 1;
    return c;
}

void FeatureConfig::validate() const {
    if (window < 2) throw ConfigError("feature window must be >= 2");
    if (spectral) {
        if (!is_power_of_two(static_cast<std::size_t>(window)))
            throw ConfigError("feature window must be a power of two when FFT features are enabled");
        if (fft_bands < 1 || fft_bands > window / 2)
            throw ConfigError("fft_bands must be in [1, window/2]");
    }
}

std::vector<std::string> FeatureMatrix::column_names() const {
    std::vector<std::string> names;
    names.reserve(columns.size());
    for (const auto& c : columns) names.push_back(c.name());
    return names;
}

Eigen::VectorXd moving_average(const Eigen::VectorXd& x, int w) {
    if (w < 1) throw ConfigError("window must be >= 1");
    if (x.size() < w) throw SizeError("series shorter than window");
    const Eigen::Index m = x.size() - w + 1;
    Eigen::VectorXd out(m);
    for (Eigen::Index t = 0; t < m; ++t) out[t] = x.segment(t, w).mean();
    return out;
}

Eigen::VectorXd moving_std(const Eigen::VectorXd& x, int w) {
    if (w < 1) throw ConfigError("window must be >= 1");
    if (x.size() < w) throw SizeError("series shorter than window");
    const Eigen::Index m = x.size() - w + 1;
    Eigen::VectorXd out(m);
    for (Eigen::Index t = 0; t < m; ++t) {
        const auto seg = x.segment(t, w);
        const double mu = seg.mean();
        out[t] = std::sqrt((seg.array() - mu).square().sum() / static_cast<double>(w));
    }
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> derivatives(const Eigen::VectorXd& x) {
    if (x.size() < 3) throw SizeError("derivatives need at least 3 samples");
    const Eigen::Index n = x.size();
    Eigen::VectorXd first = x.tail(n - 1) - x.head(n - 1);
    Eigen::VectorXd second = first.tail(n - 2) - first.head(n - 2);
    return {std::move(first), std::move(second)};
}

SkewKurt skew_kurt(const Eigen::VectorXd& window) {
    if (window.size() < 4) throw SizeError("skew/kurt window must have >= 4 samples");
    SkewKurt out;
    if (window.maxCoeff() == window.minCoeff()) {
        out.degenerate = true;
        return out;
    }
    const double w = static_cast<double>(window.size());
    const double mu = window.mean();
    const Eigen::ArrayXd dev = window.array() - mu;
    const double m2 = dev.square().sum() / w;
    if (m2 == 0.0) {
        out.degenerate = true;
        return out;
    }
    const double m3 = dev.cube().sum() / w;
    const double m4 = dev.square().square().sum() / w;
    out.skew = m3 / std::pow(m2, 1.5);
    out.kurt = m4 / (m2 * m2);
    return out;
}

FftFeatures fft_features(const Eigen::VectorXd& window, int bands) {
    const std::size_t w = static_cast<std::size_t>(window.size());
    if (!is_power_of_two(w)) throw ConfigError("FFT window must be a power of two");
    const int nbins = static_cast<int>(w / 2);
    if (bands < 1 || bands > nbins) throw ConfigError("band count must be in [1, w/2]");

    const double mu = window.mean();
    std::vector<std::complex<double>> a(w);
    for (std::size_t i = 0; i < w; ++i) a[i] = std::complex<double>(window[static_cast<Eigen::Index>(i)] - mu, 0.0);
    fft_inplace(a);

    // Magnitudes of bins 1..w/2 (DC removed with the mean).
    Eigen::VectorXd mag(nbins);
    for (int k = 1; k <= nbins; ++k) mag[k - 1] = std::abs(a[static_cast<std::size_t>(k)]);

    FftFeatures out;
    out.band_energy = Eigen::VectorXd::Zero(bands);
    for (int b = 0; b < bands; ++b) {
        const int lo = b * nbins / bands;
        const int hi = (b + 1) * nbins / bands;
        for (int k = lo; k < hi; ++k) out.band_energy[b] += mag[k] * mag[k];
    }
    int best = 0;
    for (int k = 1; k < nbins; ++k)
        if (mag[k] > mag[best]) best = k;
    out.dominant_bin = best + 1; // bin index in 1..w/2
    return out;
}

Eigen::MatrixXd impute_missing(const Eigen::MatrixXd& values,
                               const std::vector<std::string>& channel_names) {
    Eigen::MatrixXd out = values;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        double last = std::numeric_limits<double>::quiet_NaN();
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            if (std::isfinite(out(r, c)))
                last = out(r, c);
            else if (std::isfinite(last))
                out(r, c) = last;
        }
        // Back-fill the leading gap.
        double next = std::numeric_limits<double>::quiet_NaN();
        for (Eigen::Index r = out.rows() - 1; r >= 0; --r) {
            if (std::isfinite(out(r, c)))
                next = out(r, c);
            else if (std::isfinite(next))
                out(r, c) = next;
        }
        if (!out.col(c).allFinite()) {
            std::string name = c < static_cast<Eigen::Index>(channel_names.size())
                                   ? channel_names[static_cast<std::size_t>(c)]
                                   : std::to_string(c);
            throw DataError("channel '" + name + "' has no finite values");
        }
    }
    return out;
}

FeatureMatrix build_feature_matrix(const TimeSeriesDataset& ds, const FeatureConfig& cfg) {
    cfg.validate();
    const int w = cfg.window;
    const std::int64_t n = ds.n();
    const std::int64_t d = ds.d();
    if (n < w) throw SizeError("dataset shorter than feature window");

    const Eigen::MatrixXd x = impute_missing(ds.values, ds.channel_names);
    const std::int64_t m = n - w + 1;
    const int pc = cfg.per_channel();

    FeatureMatrix fm;
    fm.rows.resize(m, d * pc);
    fm.row_index.resize(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) fm.row_index[static_cast<std::size_t>(i)] = w - 1 + i;

    fm.columns.reserve(static_cast<std::size_t>(d * pc));
    for (std::int64_t c = 0; c < d; ++c) {
        const std::string& ch = ds.channel_names[static_cast<std::size_t>(c)];
        fm.columns.push_back({ch, "raw"});
        if (cfg.temporal) {
            fm.columns.push_back({ch, "mean"});
            fm.columns.push_back({ch, "std"});
        }
        if (cfg.derivatives) {
            fm.columns.push_back({ch, "d1"});
            fm.columns.push_back({ch, "d2"});
        }
        if (cfg.shape) {
            fm.columns.push_back({ch, "skew"});
            fm.columns.push_back({ch, "kurt"});
        }
        if (cfg.spectral) {
            for (int b = 1; b <= cfg.fft_bands; ++b)
                fm.columns.push_back({ch, "band" + std::to_string(b)});
            fm.columns.push_back({ch, "dombin"});
        }
    }

    for (std::int64_t c = 0; c < d; ++c) {
        const Eigen::VectorXd col = x.col(c);
        Eigen::VectorXd mavg, mstd;
        if (cfg.temporal) {
            mavg = moving_average(col, w);
            mstd = moving_std(col, w);
        }
        Eigen::VectorXd d1, d2;
        if (cfg.derivatives) {
            auto der = derivatives(col);
            d1 = std::move(der.first);
            d2 = std::move(der.second);
        }
        std::int64_t base = c * pc;
        for (std::int64_t i = 0; i < m; ++i) {
            const std::int64_t t = w - 1 + i; // window end sample
            std::int64_t j = base;
            fm.rows(i, j++) = col[t];
            if (cfg.temporal) {
                fm.rows(i, j++) = mavg[i];
                fm.rows(i, j++) = mstd[i];
            }
            if (cfg.derivatives) {
                fm.rows(i, j++) = d1[t - 1];
                fm.rows(i, j++) = t >= 2 ? d2[t - 2] : 0.0;
            }
            if (cfg.shape) {
                const SkewKurt sk = skew_kurt(col.segment(t - w + 1, w));
                fm.rows(i, j++) = sk.skew;
                fm.rows(i, j++) = sk.kurt;
            }
            if (cfg.spectral) {
                const FftFeatures ff = fft_features(col.segment(t - w + 1, w), cfg.fft_bands);
                for (int b = 0; b < cfg.fft_bands; ++b) fm.rows(i, j++) = ff.band_energy[b];
                fm.rows(i, j++) = static_cast<double>(ff.dominant_bin);
            }
        }
    }
    return fm;
}

Normalizer fit_normalizer(const Eigen::MatrixXd& rows) {
    if (rows.rows() < 2) throw SizeError("normalizer needs at least 2 rows");
    Normalizer norm;
    const double m = static_cast<double>(rows.rows());
    norm.mean = rows.colwise().mean();
    norm.std.resize(rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c)
        norm.std[c] = std::sqrt((rows.col(c).array() - norm.mean[c]).square().sum() / m);
    norm.fitted_on = rows.rows();
    return norm;
}

Eigen::MatrixXd apply_normalizer(const Normalizer& norm, const Eigen::MatrixXd& rows) {
    if (!norm.fitted()) throw StateError("normalizer has not been fitted");
    if (rows.cols() != norm.mean.size()) throw UsageError("column count does not match normalizer");
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        if (norm.std[c] < 1e-12)
            out.col(c).setZero();
        else
            out.col(c) = (rows.col(c).array() - norm.mean[c]) / norm.std[c];
    }
    return out;
}

Eigen::MatrixXd denormalize(const Normalizer& norm, const Eigen::MatrixXd& rows) {
    if (!norm.fitted()) throw StateError("normalizer has not been fitted");
    if (rows.cols() != norm.mean.size()) throw UsageError("column count does not match normalizer");
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        if (norm.std[c] < 1e-12)
            out.col(c).setConstant(norm.mean[c]);
        else
            out.col(c) = rows.col(c).array() * norm.std[c] + norm.mean[c];
    }
    return out;
}

} // namespace windae
