#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace windae {

// Min-max bounds observed on validation scores for one model.
struct ScoreNormalizer {
    double min_score = 0.0;
    double max_score = 0.0;
    bool fitted = false;
};

ScoreNormalizer fit_score_normalizer(const Eigen::VectorXd& scores);

// Min-max scaling clipped to [0, 1].
Eigen::VectorXd normalize_scores(const Eigen::VectorXd& raw, const ScoreNormalizer& norm);

struct EnsembleWeights {
    double w1 = 1.0 / 3.0; // VAE
    double w2 = 1.0 / 3.0; // LSTM-AE
    double w3 = 1.0 / 3.0; // Transformer-AE

    void validate() const;
};

// w1 * vae + w2 * lstm + w3 * transformer, elementwise.
Eigen::VectorXd fuse(const Eigen::VectorXd& sv, const Eigen::VectorXd& sl,
                     const Eigen::VectorXd& st, const EnsembleWeights& w);

// Exhaustive search over the {0, 0.05, ..., 1}^3 simplex grid maximizing
// AUC-ROC of the fused series; ties break toward maximum weight entropy,
// then lexicographically smallest (w1, w2, w3).
EnsembleWeights learn_weights(const std::array<Eigen::VectorXd, 3>& val_scores,
                              const std::vector<int>& val_labels);

// Linear-interpolation percentile threshold; p restricted to the operating
// range [90, 99.9].
double percentile_threshold(const Eigen::VectorXd& scores, double p);

// Strict comparison: a point is anomalous iff score > tau.
std::vector<char> flag(const Eigen::VectorXd& scores, double tau);

// Calibration artifact consumed by the score and evaluate stages.
struct EnsembleConfig {
    EnsembleWeights weights;
    double percentile_p = 97.0;
    double tau = 0.0;
    ScoreNormalizer norm_vae;
    ScoreNormalizer norm_lstm;
    ScoreNormalizer norm_transformer;

    std::string to_json_string() const;
    static EnsembleConfig from_json_string(const std::string& text);
};

} // namespace windae
