#include "windae/ensemble.hpp"

#include <cmath>

#include <json.hpp>

#include "windae/errors.hpp"
#include "windae/eval.hpp"

namespace windae {

ScoreNormalizer fit_score_normalizer(const Eigen::VectorXd& scores) {
    if (scores.size() == 0) throw CalibrationError("cannot fit score normalizer on empty series");
    ScoreNormalizer n;
    n.min_score = scores.minCoeff();
    n.max_score = scores.maxCoeff();
    if (!(n.max_score > n.min_score))
        throw CalibrationError("validation scores are constant; min-max normalization undefined");
    n.fitted = true;
    return n;
}

Eigen::VectorXd normalize_scores(const Eigen::VectorXd& raw, const ScoreNormalizer& norm) {
    if (!norm.fitted) throw StateError("score normalizer has not been fitted");
    const double span = norm.max_score - norm.min_score;
    return ((raw.array() - norm.min_score) / span).cwiseMax(0.0).cwiseMin(1.0);
}

void EnsembleWeights::validate() const {
    if (w1 < 0 || w2 < 0 || w3 < 0) throw ConfigError("ensemble weights must be >= 0");
    if (std::abs(w1 + w2 + w3 - 1.0) > 1e-9) throw ConfigError("ensemble weights must sum to 1");
}

Eigen::VectorXd fuse(const Eigen::VectorXd& sv, const Eigen::VectorXd& sl,
                     const Eigen::VectorXd& st, const EnsembleWeights& w) {
    w.validate();
    if (sv.size() != sl.size() || sl.size() != st.size())
        throw UsageError("fuse: score series lengths differ");
    return w.w1 * sv + w.w2 * sl + w.w3 * st;
}

EnsembleWeights learn_weights(const std::array<Eigen::VectorXd, 3>& val_scores,
                              const std::vector<int>& val_labels) {
    const Eigen::Index n = val_scores[0].size();
    if (val_scores[1].size() != n || val_scores[2].size() != n)
        throw UsageError("learn_weights: score series lengths differ");
    if (static_cast<Eigen::Index>(val_labels.size()) != n)
        throw UsageError("learn_weights: labels length mismatch");
    bool has_pos = false, has_neg = false;
    for (int l : val_labels) (l ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw CalibrationError(
            "validation labels are single-class; inject synthetic anomalies into validation "
            "or fall back to equal weights");

    auto entropy = [](double a, double b, double c) {
        double h = 0.0;
        for (double w : {a, b, c})
            if (w > 0.0) h -= w * std::log(w);
        return h;
    };

    constexpr int kSteps = 20; // grid step 0.05
    EnsembleWeights best;
    double best_auc = -1.0, best_entropy = -1.0;
    bool first = true;
    for (int i = 0; i <= kSteps; ++i) {
        for (int j = 0; j + i <= kSteps; ++j) {
            const int k = kSteps - i - j;
            const double w1 = static_cast<double>(i) / kSteps;
            const double w2 = static_cast<double>(j) / kSteps;
            const double w3 = static_cast<double>(k) / kSteps;
            const Eigen::VectorXd fused = w1 * val_scores[0] + w2 * val_scores[1] + w3 * val_scores[2];
            const double auc = auc_roc(fused, val_labels);
            const double h = entropy(w1, w2, w3);
            // Lexicographic fallback is automatic: the scan visits (w1, w2, w3)
            // in ascending lexicographic order and strict '>' keeps the first.
            const bool better = first || auc > best_auc ||
                                (auc == best_auc && h > best_entropy);
            if (better) {
                best = {w1, w2, w3};
                best_auc = auc;
                best_entropy = h;
                first = false;
            }
        }
    }
    return best;
}

double percentile_threshold(const Eigen::VectorXd& scores, double p) {
    if (p < 90.0 || p > 99.9)
        throw ConfigError("percentile p must lie in the operating range [90, 99.9]");
    if (scores.size() == 0) throw UsageError("percentile_threshold: empty score series");
    return percentile_interpolated(scores, p);
}

std::vector<char> flag(const Eigen::VectorXd& scores, double tau) {
    std::vector<char> out(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i)
        out[static_cast<std::size_t>(i)] = scores[i] > tau ? 1 : 0;
    return out;
}

std::string EnsembleConfig::to_json_string() const {
    nlohmann::json j;
    j["weights"] = {weights.w1, weights.w2, weights.w3};
    j["percentile_p"] = percentile_p;
    j["tau"] = tau;
    auto norm_json = [](const ScoreNormalizer& n) {
        return nlohmann::json{{"min", n.min_score}, {"max", n.max_score}};
    };
    j["normalizers"] = {{"vae", norm_json(norm_vae)},
                        {"lstm", norm_json(norm_lstm)},
                        {"transformer", norm_json(norm_transformer)}};
    return j.dump(2) + "\n";
}

EnsembleConfig EnsembleConfig::from_json_string(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    EnsembleConfig cfg;
    cfg.weights.w1 = j.at("weights").at(0);
    cfg.weights.w2 = j.at("weights").at(1);
    cfg.weights.w3 = j.at("weights").at(2);
    cfg.percentile_p = j.at("percentile_p");
    cfg.tau = j.at("tau");
    auto norm_from = [](const nlohmann::json& n) {
        ScoreNormalizer s;
        s.min_score = n.at("min");
        s.max_score = n.at("max");
        s.fitted = true;
        return s;
    };
    cfg.norm_vae = norm_from(j.at("normalizers").at("vae"));
    cfg.norm_lstm = norm_from(j.at("normalizers").at("lstm"));
    cfg.norm_transformer = norm_from(j.at("normalizers").at("transformer"));
    return cfg;
}

} // namespace windae
