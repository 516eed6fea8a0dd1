#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "windae/autodiff.hpp"
#include "windae/features.hpp"

namespace windae {

enum class ModelKind { Vae, LstmAe, TransformerAe };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Encoder [F -> hidden -> latent], mirrored decoder; alpha/beta weight the
// reconstruction and KL terms of the anomaly score.
struct VaeArch {
    int input_dim = 0;
    int hidden = 64;
    int latent = 8;
    double alpha = 1.0;
    double beta = 1.0;
};

struct LstmArch {
    int input_dim = 0;
    int hidden = 32;
    int latent = 16;
    int seq_len = 16;
};

struct TransformerArch {
    int input_dim = 0;
    int model_dim = 32; // even (positional encoding)
    int key_dim = 32;
    int ff_dim = 64;
    int seq_len = 16;
};

struct TrainConfig {
    int max_epochs = 30;
    int batch_size = 256;
    int patience = 5;
    double lr = 1e-3;
    std::uint64_t seed = 1;

    void validate() const;
};

struct VaeModel {
    VaeArch arch;
    ad::ParameterSet params;
    static VaeModel init(const VaeArch& arch, std::uint64_t seed);
};

struct LstmAeModel {
    LstmArch arch;
    ad::ParameterSet params;
    static LstmAeModel init(const LstmArch& arch, std::uint64_t seed);
};

struct TransformerAeModel {
    TransformerArch arch;
    ad::ParameterSet params;
    static TransformerAeModel init(const TransformerArch& arch, std::uint64_t seed);
};

// Trained model container; round-trips bit-exactly through serialization
// (see checkpoint.hpp).
struct Checkpoint {
    ModelKind kind = ModelKind::Vae;
    std::variant<VaeArch, LstmArch, TransformerArch> arch;
    ad::ParameterSet params;
    std::vector<std::string> feature_columns;
    int epochs_run = 0;
    double best_val_loss = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> train_loss_history; // mean batch loss per epoch

    int seq_len() const; // 1 for the VAE
};

// --- forward builders (shared by training and scoring) ----------------------

struct VaeForward {
    ad::Var mu;
    ad::Var logvar;
    ad::Var xhat;
};

// noise == nullptr scores deterministically with z = mu.
VaeForward vae_forward(ad::Tape& tape, const ad::VarMap& p, ad::Var x, const ad::Mat* noise);

// Encoder LSTM -> z = FC(h_T); decoder LSTM is seeded from z and fed a
// learned start token, then its own previous reconstruction.
std::vector<ad::Var> lstm_forward(ad::Tape& tape, const ad::VarMap& p,
                                  const std::vector<ad::Mat>& x_steps);

// Input projection + positional encoding + one attention block + FF, mirrored
// decoder, output projection. x is one T x F sequence.
ad::Var transformer_forward(ad::Tape& tape, const ad::VarMap& p, ad::Var x, const ad::Mat& pe);

// --- losses and scores -------------------------------------------------------

struct VaeLossParts {
    double total = 0.0;
    double rec = 0.0;
    double kl = 0.0;
};

// rec = |x - xhat|^2, kl = -1/2 sum_j (1 + log s_j^2 - mu_j^2 - s_j^2).
VaeLossParts vae_loss(const Eigen::VectorXd& x, const VaeModel& model, const Eigen::VectorXd& noise);

// alpha * rec + beta * kl with deterministic z = mu.
double vae_score(const Eigen::VectorXd& x, const VaeModel& model);

// (1/T) sum_t |x_t - xhat_t|^2 for one T x F sequence and its reconstruction.
double seq_mse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat);

double lstm_ae_score(const Eigen::MatrixXd& x, const LstmAeModel& model);
double transformer_ae_score(const Eigen::MatrixXd& x, const TransformerAeModel& model);

// --- training ----------------------------------------------------------------

// Mini-batch Adam per the shared training loop: epoch shuffling, per-epoch
// validation loss, best-parameter tracking, early stopping after `patience`
// epochs without improvement. Deterministic given cfg.seed.
Checkpoint train_vae(VaeArch arch, const Eigen::MatrixXd& train_rows,
                     const Eigen::MatrixXd& val_rows, const TrainConfig& cfg,
                     std::vector<std::string> feature_columns);

// Sequence models train on windows rows[s, s+T) for each start s; starts must
// not span removed (non-contiguous) regions, which is the caller's contract.
Checkpoint train_lstm(LstmArch arch, const Eigen::MatrixXd& rows,
                      const std::vector<int>& train_starts, const std::vector<int>& val_starts,
                      const TrainConfig& cfg, std::vector<std::string> feature_columns);

Checkpoint train_transformer(TransformerArch arch, const Eigen::MatrixXd& rows,
                             const std::vector<int>& train_starts,
                             const std::vector<int>& val_starts, const TrainConfig& cfg,
                             std::vector<std::string> feature_columns);

// --- scoring -----------------------------------------------------------------

// Per-row anomaly scores for normalized feature rows. Sequence models score
// each run of seq_len consecutive rows and assign it to the run's end row;
// the first seq_len - 1 rows repeat the first computed score.
Eigen::VectorXd score_rows(const Checkpoint& ckpt, const Eigen::MatrixXd& rows);

// Layout-checked scoring of a normalized FeatureMatrix.
Eigen::VectorXd score_series(const Checkpoint& ckpt, const FeatureMatrix& fm);

} // namespace windae
