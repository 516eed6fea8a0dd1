#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "windae/dataset.hpp"

namespace windae {

struct FeatureConfig {
    int window = 16;   // samples per sliding window
    int fft_bands = 4; // B contiguous energy bands over bins 1..w/2

    bool temporal = true;    // moving mean / moving std
    bool derivatives = true; // first / second difference
    bool shape = true;       // skewness / kurtosis
    bool spectral = true;    // FFT band energies + dominant bin

    // Per-channel feature count for this configuration (raw value included).
    int per_channel() const;
    void validate() const;
};

struct FeatureColumn {
    std::string channel;
    std::string kind;
    std::string name() const { return channel + ":" + kind; }
};

// Engineered features per sliding window; row i describes the window ending
// at sample row_index[i].
struct FeatureMatrix {
    Eigen::MatrixXd rows; // m x F
    std::vector<std::int64_t> row_index;
    std::vector<FeatureColumn> columns;

    std::int64_t m() const { return rows.rows(); }
    std::int64_t f() const { return rows.cols(); }
    std::vector<std::string> column_names() const;
};

// Column-wise z-score statistics fitted on training features only.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::int64_t fitted_on = 0;

    bool fitted() const { return fitted_on >= 2; }
};

// --- window kernels -------------------------------------------------------

// Mean over each window of w trailing samples; output length n - w + 1.
Eigen::VectorXd moving_average(const Eigen::VectorXd& x, int w);

// Population standard deviation over each window (divides by w).
Eigen::VectorXd moving_std(const Eigen::VectorXd& x, int w);

// first[t-1] = x[t] - x[t-1]; second[t-2] = x[t] - 2 x[t-1] + x[t-2].
std::pair<Eigen::VectorXd, Eigen::VectorXd> derivatives(const Eigen::VectorXd& x);

struct SkewKurt {
    double skew = 0.0;
    double kurt = 0.0;
    bool degenerate = false; // constant window: no shape information
};

// Population-moment skewness and (non-excess) kurtosis of one window.
SkewKurt skew_kurt(const Eigen::VectorXd& window);

struct FftFeatures {
    Eigen::VectorXd band_energy; // B sums of squared magnitudes
    int dominant_bin = 0;        // argmax |X_k| over bins 1..w/2, ties -> lowest
};

// Magnitude-spectrum features of the mean-removed window (bins 1..w/2).
FftFeatures fft_features(const Eigen::VectorXd& window, int bands);

// --- matrix assembly ------------------------------------------------------

// Forward-fill then back-fill NaNs per channel; a channel with no finite
// value at all is a data error.
Eigen::MatrixXd impute_missing(const Eigen::MatrixXd& values,
                               const std::vector<std::string>& channel_names);

FeatureMatrix build_feature_matrix(const TimeSeriesDataset& ds, const FeatureConfig& cfg);

// --- normalization --------------------------------------------------------

Normalizer fit_normalizer(const Eigen::MatrixXd& rows);
inline Normalizer fit_normalizer(const FeatureMatrix& fm) { return fit_normalizer(fm.rows); }

// (x - mean) / std per column; columns with std < 1e-12 map to 0.
Eigen::MatrixXd apply_normalizer(const Normalizer& norm, const Eigen::MatrixXd& rows);

// Inverse of apply_normalizer on nonconstant columns.
Eigen::MatrixXd denormalize(const Normalizer& norm, const Eigen::MatrixXd& rows);

} // namespace windae
