#include "windae/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "windae/errors.hpp"

namespace windae {

using ad::Mat;
using ad::Tape;
using ad::Var;
using ad::VarMap;

namespace {

constexpr std::uint64_t kInitStream = 0x1111;
constexpr std::uint64_t kShuffleStreamBase = 0x2222'0000;
constexpr std::uint64_t kNoiseStreamBase = 0x3333'0000;

Mat zeros(Eigen::Index r, Eigen::Index c) { return Mat::Zero(r, c); }

} // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::Vae: return "vae";
    case ModelKind::LstmAe: return "lstm";
    case ModelKind::TransformerAe: return "transformer";
    }
    throw UsageError("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "vae") return ModelKind::Vae;
    if (s == "lstm") return ModelKind::LstmAe;
    if (s == "transformer") return ModelKind::TransformerAe;
    throw UsageError("unknown model kind '" + s + "'");
}

void TrainConfig::validate() const {
    if (max_epochs < 1 || batch_size < 1 || patience < 1 || lr <= 0)
        throw ConfigError("train config fields must be positive");
}

int Checkpoint::seq_len() const {
    if (std::holds_alternative<LstmArch>(arch)) return std::get<LstmArch>(arch).seq_len;
    if (std::holds_alternative<TransformerArch>(arch)) return std::get<TransformerArch>(arch).seq_len;
    return 1;
}

// --- model initialization ------------------------------------------------------

VaeModel VaeModel::init(const VaeArch& arch, std::uint64_t seed) {
    if (arch.input_dim < 1 || arch.hidden < 1 || arch.latent < 1)
        throw ConfigError("vae arch dimensions must be >= 1");
    if (arch.alpha < 0 || arch.beta < 0 || arch.alpha + arch.beta <= 0)
        throw ConfigError("vae score weights must satisfy alpha, beta >= 0 and alpha + beta > 0");
    Philox rng(seed, kInitStream);
    VaeModel m;
    m.arch = arch;
    const int f = arch.input_dim, h = arch.hidden, l = arch.latent;
    m.params["enc.w1"] = ad::glorot_uniform(f, h, rng);
    m.params["enc.b1"] = zeros(1, h);
    m.params["enc.wmu"] = ad::glorot_uniform(h, l, rng);
    m.params["enc.bmu"] = zeros(1, l);
    // Small logvar head keeps the posterior near sigma = 1 at the start.
    m.params["enc.wlv"] = 0.01 * ad::glorot_uniform(h, l, rng);
    m.params["enc.blv"] = zeros(1, l);
    m.params["dec.w1"] = ad::glorot_uniform(l, h, rng);
    m.params["dec.b1"] = zeros(1, h);
    m.params["dec.wout"] = ad::glorot_uniform(h, f, rng);
    m.params["dec.bout"] = zeros(1, f);
    return m;
}

LstmAeModel LstmAeModel::init(const LstmArch& arch, std::uint64_t seed) {
    if (arch.input_dim < 1 || arch.hidden < 1 || arch.latent < 1 || arch.seq_len < 1)
        throw ConfigError("lstm arch dimensions must be >= 1");
    Philox rng(seed, kInitStream);
    LstmAeModel m;
    m.arch = arch;
    const int f = arch.input_dim, h = arch.hidden, l = arch.latent;
    auto gate_bias = [&]() {
        Mat b = zeros(1, 4 * h);
        b.middleCols(h, h).setOnes(); // forget gate bias +1
        return b;
    };
    m.params["enc.wx"] = ad::glorot_uniform(f, 4 * h, rng);
    m.params["enc.wh"] = ad::glorot_uniform(h, 4 * h, rng);
    m.params["enc.b"] = gate_bias();
    m.params["enc.wz"] = ad::glorot_uniform(h, l, rng);
    m.params["enc.bz"] = zeros(1, l);
    m.params["dec.wzh"] = ad::glorot_uniform(l, h, rng);
    m.params["dec.bzh"] = zeros(1, h);
    m.params["dec.wzc"] = ad::glorot_uniform(l, h, rng);
    m.params["dec.bzc"] = zeros(1, h);
    m.params["dec.start"] = zeros(1, f);
    m.params["dec.wx"] = ad::glorot_uniform(f, 4 * h, rng);
    m.params["dec.wh"] = ad::glorot_uniform(h, 4 * h, rng);
    m.params["dec.b"] = gate_bias();
    m.params["dec.wout"] = ad::glorot_uniform(h, f, rng);
    m.params["dec.bout"] = zeros(1, f);
    return m;
}

TransformerAeModel TransformerAeModel::init(const TransformerArch& arch, std::uint64_t seed) {
    if (arch.input_dim < 1 || arch.model_dim < 1 || arch.key_dim < 1 || arch.ff_dim < 1 ||
        arch.seq_len < 1)
        throw ConfigError("transformer arch dimensions must be >= 1");
    if (arch.model_dim % 2 != 0) throw ConfigError("transformer model_dim must be even");
    Philox rng(seed, kInitStream);
    TransformerAeModel m;
    m.arch = arch;
    const int f = arch.input_dim, dm = arch.model_dim, dk = arch.key_dim, ff = arch.ff_dim;
    m.params["in.w"] = ad::glorot_uniform(f, dm, rng);
    m.params["in.b"] = zeros(1, dm);
    for (const std::string block : {"enc", "dec"}) {
        m.params[block + ".wq"] = ad::glorot_uniform(dm, dk, rng);
        m.params[block + ".wk"] = ad::glorot_uniform(dm, dk, rng);
        m.params[block + ".wv"] = ad::glorot_uniform(dm, dk, rng);
        m.params[block + ".wo"] = ad::glorot_uniform(dk, dm, rng);
        m.params[block + ".ff.w1"] = ad::glorot_uniform(dm, ff, rng);
        m.params[block + ".ff.b1"] = zeros(1, ff);
        m.params[block + ".ff.w2"] = ad::glorot_uniform(ff, dm, rng);
        m.params[block + ".ff.b2"] = zeros(1, dm);
    }
    m.params["out.w"] = ad::glorot_uniform(dm, f, rng);
    m.params["out.b"] = zeros(1, f);
    return m;
}

// --- forward builders ------------------------------------------------------------

VaeForward vae_forward(Tape& tape, const VarMap& p, Var x, const Mat* noise) {
    Var h = ad::tanh(ad::add_rowvec(ad::matmul(x, p.at("enc.w1")), p.at("enc.b1")));
    VaeForward fw;
    fw.mu = ad::add_rowvec(ad::matmul(h, p.at("enc.wmu")), p.at("enc.bmu"));
    fw.logvar = ad::add_rowvec(ad::matmul(h, p.at("enc.wlv")), p.at("enc.blv"));
    Var z = noise ? ad::reparam_sample(fw.mu, fw.logvar, tape.constant(*noise)) : fw.mu;
    Var d = ad::tanh(ad::add_rowvec(ad::matmul(z, p.at("dec.w1")), p.at("dec.b1")));
    fw.xhat = ad::add_rowvec(ad::matmul(d, p.at("dec.wout")), p.at("dec.bout"));
    return fw;
}

std::vector<Var> lstm_forward(Tape& tape, const VarMap& p, const std::vector<Mat>& x_steps) {
    if (x_steps.empty()) throw UsageError("lstm_forward: empty sequence");
    const Eigen::Index batch = x_steps.front().rows();
    const Eigen::Index h_dim = p.at("enc.wh").value().rows();

    Var h = tape.constant(zeros(batch, h_dim));
    Var c = tape.constant(zeros(batch, h_dim));
    for (const Mat& xt : x_steps) {
        auto state = ad::lstm_cell(tape.constant(xt), h, c, p.at("enc.wx"), p.at("enc.wh"), p.at("enc.b"));
        h = state.h;
        c = state.c;
    }
    Var z = ad::add_rowvec(ad::matmul(h, p.at("enc.wz")), p.at("enc.bz"));
    Var dh = ad::tanh(ad::add_rowvec(ad::matmul(z, p.at("dec.wzh")), p.at("dec.bzh")));
    Var dc = ad::add_rowvec(ad::matmul(z, p.at("dec.wzc")), p.at("dec.bzc"));

    const Eigen::Index f_dim = x_steps.front().cols();
    Var input = ad::add_rowvec(tape.constant(zeros(batch, f_dim)), p.at("dec.start"));
    std::vector<Var> xhat;
    xhat.reserve(x_steps.size());
    for (std::size_t t = 0; t < x_steps.size(); ++t) {
        auto state = ad::lstm_cell(input, dh, dc, p.at("dec.wx"), p.at("dec.wh"), p.at("dec.b"));
        dh = state.h;
        dc = state.c;
        Var xt = ad::add_rowvec(ad::matmul(dh, p.at("dec.wout")), p.at("dec.bout"));
        xhat.push_back(xt);
        input = xt; // autoregressive decoding
    }
    return xhat;
}

namespace {

Var transformer_block(const VarMap& p, const std::string& block, Var x) {
    Var q = ad::matmul(x, p.at(block + ".wq"));
    Var k = ad::matmul(x, p.at(block + ".wk"));
    Var v = ad::matmul(x, p.at(block + ".wv"));
    Var attended = ad::attention(q, k, v);
    Var r = ad::add(x, ad::matmul(attended, p.at(block + ".wo")));
    Var ff = ad::relu(ad::add_rowvec(ad::matmul(r, p.at(block + ".ff.w1")), p.at(block + ".ff.b1")));
    return ad::add(r, ad::add_rowvec(ad::matmul(ff, p.at(block + ".ff.w2")), p.at(block + ".ff.b2")));
}

} // namespace

Var transformer_forward(Tape& tape, const VarMap& p, Var x, const Mat& pe) {
    Var proj = ad::add_rowvec(ad::matmul(x, p.at("in.w")), p.at("in.b"));
    Var h = ad::add(proj, tape.constant(pe));
    h = transformer_block(p, "enc", h);
    h = transformer_block(p, "dec", h);
    return ad::add_rowvec(ad::matmul(h, p.at("out.w")), p.at("out.b"));
}

// --- losses and scores -------------------------------------------------------------

namespace {

VarMap to_varmap(Tape& tape, const ad::ParameterSet& params, bool requires_grad) {
    VarMap vars;
    for (const auto& [name, value] : params) vars[name] = tape.leaf(value, requires_grad);
    return vars;
}

// KL of a diagonal Gaussian posterior against the standard normal, per row.
Eigen::VectorXd kl_per_row(const Mat& mu, const Mat& logvar) {
    return (-0.5 * (1.0 + logvar.array() - mu.array().square() - logvar.array().exp()))
        .rowwise()
        .sum();
}

Var kl_sum(Var mu, Var logvar) {
    Var inner = ad::sub(ad::sub(ad::add_scalar(logvar, 1.0), ad::square(mu)), ad::exp(logvar));
    return ad::scale(ad::sum_all(inner), -0.5);
}

} // namespace

VaeLossParts vae_loss(const Eigen::VectorXd& x, const VaeModel& model, const Eigen::VectorXd& noise) {
    if (x.size() != model.arch.input_dim) throw UsageError("vae_loss: input width mismatch");
    if (noise.size() != model.arch.latent) throw UsageError("vae_loss: noise width mismatch");
    Tape tape;
    VarMap p = to_varmap(tape, model.params, false);
    Mat noise_row = noise.transpose();
    VaeForward fw = vae_forward(tape, p, tape.constant(x.transpose()), &noise_row);
    VaeLossParts parts;
    parts.rec = (x.transpose() - fw.xhat.value()).squaredNorm();
    parts.kl = kl_per_row(fw.mu.value(), fw.logvar.value())(0);
    parts.total = parts.rec + parts.kl;
    return parts;
}

double vae_score(const Eigen::VectorXd& x, const VaeModel& model) {
    if (x.size() != model.arch.input_dim) throw UsageError("vae_score: input width mismatch");
    Tape tape;
    VarMap p = to_varmap(tape, model.params, false);
    VaeForward fw = vae_forward(tape, p, tape.constant(x.transpose()), nullptr);
    const double rec = (x.transpose() - fw.xhat.value()).squaredNorm();
    const double kl = kl_per_row(fw.mu.value(), fw.logvar.value())(0);
    return model.arch.alpha * rec + model.arch.beta * kl;
}

double seq_mse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& xhat) {
    if (x.rows() != xhat.rows() || x.cols() != xhat.cols())
        throw UsageError("seq_mse: shape mismatch");
    if (x.rows() < 1) throw UsageError("seq_mse: empty sequence");
    return (x - xhat).squaredNorm() / static_cast<double>(x.rows());
}

double lstm_ae_score(const Eigen::MatrixXd& x, const LstmAeModel& model) {
    if (x.rows() != model.arch.seq_len) throw UsageError("lstm_ae_score: sequence length mismatch");
    if (x.cols() != model.arch.input_dim) throw UsageError("lstm_ae_score: input width mismatch");
    Tape tape;
    VarMap p = to_varmap(tape, model.params, false);
    std::vector<Mat> steps;
    steps.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index t = 0; t < x.rows(); ++t) steps.push_back(x.row(t));
    std::vector<Var> xhat = lstm_forward(tape, p, steps);
    Mat rec(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) rec.row(t) = xhat[static_cast<std::size_t>(t)].value();
    return seq_mse(x, rec);
}

double transformer_ae_score(const Eigen::MatrixXd& x, const TransformerAeModel& model) {
    if (x.rows() != model.arch.seq_len)
        throw UsageError("transformer_ae_score: sequence length mismatch");
    if (x.cols() != model.arch.input_dim) throw UsageError("transformer_ae_score: input width mismatch");
    Tape tape;
    VarMap p = to_varmap(tape, model.params, false);
    const Mat pe = ad::positional_encoding(model.arch.seq_len, model.arch.model_dim);
    Var xhat = transformer_forward(tape, p, tape.constant(x), pe);
    return seq_mse(x, xhat.value());
}

// --- shared training loop ------------------------------------------------------------

namespace {

struct TrainDriver {
    int n_items = 0;
    // Builds the mean batch loss; `batch` holds item indices.
    std::function<Var(Tape&, const VarMap&, const std::vector<int>& batch, Philox& noise_rng)> batch_loss;
    std::function<double(const ad::ParameterSet&)> val_loss;
};

struct TrainOutcome {
    int epochs_run = 0;
    double best_val_loss = 0.0;
    std::vector<double> train_loss_history;
};

TrainOutcome run_training(const TrainDriver& driver, ad::ParameterSet& params,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (driver.n_items < 1) throw DataError("training set is empty");

    ad::AdamState adam;
    adam.cfg.lr = cfg.lr;

    std::vector<int> order(static_cast<std::size_t>(driver.n_items));
    std::iota(order.begin(), order.end(), 0);

    ad::ParameterSet best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    int epochs_run = 0;
    std::vector<double> history;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Philox shuffle_rng(cfg.seed, kShuffleStreamBase + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        Philox noise_rng(cfg.seed, kNoiseStreamBase + static_cast<std::uint64_t>(epoch));

        const int n_batches = (driver.n_items + cfg.batch_size - 1) / cfg.batch_size;
        double epoch_loss = 0.0;
        for (int b = 0; b < n_batches; ++b) {
            const int lo = b * cfg.batch_size;
            const int hi = std::min(driver.n_items, lo + cfg.batch_size);
            std::vector<int> batch(order.begin() + lo, order.begin() + hi);
            try {
                Tape tape;
                VarMap vars = to_varmap(tape, params, true);
                Var loss = driver.batch_loss(tape, vars, batch, noise_rng);
                epoch_loss += loss.value()(0, 0);
                tape.backward(loss);
                ad::ParameterSet grads;
                for (const auto& [name, var] : vars) grads[name] = tape.grad(var);
                ad::adam_step(params, grads, adam);
            } catch (const NumericError& e) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(b) + ": " + e.what());
            }
        }

        history.push_back(epoch_loss / static_cast<double>(n_batches));
        const double val = driver.val_loss(params);
        epochs_run = epoch;
        if (!std::isfinite(val))
            throw TrainingError("validation loss non-finite at epoch " + std::to_string(epoch));
        if (val < best_val) {
            best_val = val;
            best_params = params;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= cfg.patience) break;
        }
    }
    params = std::move(best_params);
    return {epochs_run, best_val, std::move(history)};
}

Mat gather_rows(const Mat& rows, const std::vector<int>& idx) {
    Mat out(static_cast<Eigen::Index>(idx.size()), rows.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(idx[i]);
    return out;
}

Mat gather_step(const Mat& rows, const std::vector<int>& starts, int t) {
    Mat out(static_cast<Eigen::Index>(starts.size()), rows.cols());
    for (std::size_t i = 0; i < starts.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = rows.row(starts[i] + t);
    return out;
}

Mat gaussian_mat(Philox& rng, Eigen::Index r, Eigen::Index c) {
    Mat out(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) out(i, j) = rng.gaussian();
    return out;
}

void check_starts(const std::vector<int>& starts, const Mat& rows, int seq_len, const char* what) {
    for (int s : starts)
        if (s < 0 || s + seq_len > rows.rows())
            throw UsageError(std::string(what) + ": sequence start out of range");
}

} // namespace

// --- per-model training ---------------------------------------------------------------

Checkpoint train_vae(VaeArch arch, const Mat& train_rows, const Mat& val_rows,
                     const TrainConfig& cfg, std::vector<std::string> feature_columns) {
    if (arch.input_dim == 0) arch.input_dim = static_cast<int>(train_rows.cols());
    if (train_rows.cols() != arch.input_dim || val_rows.cols() != arch.input_dim)
        throw UsageError("train_vae: feature width mismatch");
    VaeModel model = VaeModel::init(arch, cfg.seed);
    const int latent = arch.latent;

    TrainDriver driver;
    driver.n_items = static_cast<int>(train_rows.rows());
    driver.batch_loss = [&](Tape& tape, const VarMap& vars, const std::vector<int>& batch,
                            Philox& noise_rng) {
        const Mat xb = gather_rows(train_rows, batch);
        const Mat noise = gaussian_mat(noise_rng, xb.rows(), latent);
        Var x = tape.constant(xb);
        VaeForward fw = vae_forward(tape, vars, x, &noise);
        Var rec = ad::sum_all(ad::square(ad::sub(x, fw.xhat)));
        Var loss = ad::add(rec, kl_sum(fw.mu, fw.logvar));
        return ad::scale(loss, 1.0 / static_cast<double>(xb.rows()));
    };
    driver.val_loss = [&](const ad::ParameterSet& params) {
        // Deterministic z = mu keeps early stopping noise-free.
        double total = 0.0;
        const Eigen::Index chunk = 2048;
        for (Eigen::Index lo = 0; lo < val_rows.rows(); lo += chunk) {
            const Eigen::Index n = std::min(chunk, val_rows.rows() - lo);
            Tape tape;
            VarMap vars = to_varmap(tape, params, false);
            Var x = tape.constant(val_rows.middleRows(lo, n));
            VaeForward fw = vae_forward(tape, vars, x, nullptr);
            total += (val_rows.middleRows(lo, n) - fw.xhat.value()).squaredNorm();
            total += kl_per_row(fw.mu.value(), fw.logvar.value()).sum();
        }
        return total / static_cast<double>(val_rows.rows());
    };

    TrainOutcome outcome = run_training(driver, model.params, cfg);
    Checkpoint ckpt;
    ckpt.kind = ModelKind::Vae;
    ckpt.arch = arch;
    ckpt.params = std::move(model.params);
    ckpt.feature_columns = std::move(feature_columns);
    ckpt.epochs_run = outcome.epochs_run;
    ckpt.best_val_loss = outcome.best_val_loss;
    ckpt.seed = cfg.seed;
    ckpt.train_loss_history = outcome.train_loss_history;
    return ckpt;
}

namespace {

// Mean reconstruction loss over a batch of sequences; shared by the two
// sequence models through `forward`.
double sequence_val_loss(const Mat& rows, const std::vector<int>& starts, int seq_len,
                         const ad::ParameterSet& params,
                         const std::function<std::vector<Mat>(Tape&, const VarMap&,
                                                              const std::vector<int>&)>& forward) {
    if (starts.empty()) throw DataError("validation set has no sequences");
    double total = 0.0;
    const std::size_t chunk = 256;
    for (std::size_t lo = 0; lo < starts.size(); lo += chunk) {
        std::vector<int> part(starts.begin() + static_cast<std::ptrdiff_t>(lo),
                              starts.begin() + static_cast<std::ptrdiff_t>(
                                                   std::min(starts.size(), lo + chunk)));
        Tape tape;
        VarMap vars = to_varmap(tape, params, false);
        std::vector<Mat> xhat = forward(tape, vars, part);
        for (int t = 0; t < seq_len; ++t) {
            const Mat xt = gather_step(rows, part, t);
            total += (xt - xhat[static_cast<std::size_t>(t)]).squaredNorm();
        }
    }
    return total / (static_cast<double>(starts.size()) * static_cast<double>(seq_len));
}

} // namespace

Checkpoint train_lstm(LstmArch arch, const Mat& rows, const std::vector<int>& train_starts,
                      const std::vector<int>& val_starts, const TrainConfig& cfg,
                      std::vector<std::string> feature_columns) {
    if (arch.input_dim == 0) arch.input_dim = static_cast<int>(rows.cols());
    if (rows.cols() != arch.input_dim) throw UsageError("train_lstm: feature width mismatch");
    check_starts(train_starts, rows, arch.seq_len, "train_lstm");
    check_starts(val_starts, rows, arch.seq_len, "train_lstm");
    LstmAeModel model = LstmAeModel::init(arch, cfg.seed);

    auto forward_batch = [&](Tape& tape, const VarMap& vars, const std::vector<int>& starts) {
        std::vector<Mat> steps;
        steps.reserve(static_cast<std::size_t>(arch.seq_len));
        for (int t = 0; t < arch.seq_len; ++t) steps.push_back(gather_step(rows, starts, t));
        std::vector<Var> xhat = lstm_forward(tape, vars, steps);
        std::vector<Mat> out;
        out.reserve(xhat.size());
        for (const Var& v : xhat) out.push_back(v.value());
        return out;
    };

    TrainDriver driver;
    driver.n_items = static_cast<int>(train_starts.size());
    driver.batch_loss = [&](Tape& tape, const VarMap& vars, const std::vector<int>& batch, Philox&) {
        std::vector<int> starts;
        starts.reserve(batch.size());
        for (int i : batch) starts.push_back(train_starts[static_cast<std::size_t>(i)]);
        std::vector<Mat> steps;
        for (int t = 0; t < arch.seq_len; ++t) steps.push_back(gather_step(rows, starts, t));
        std::vector<Var> xhat = lstm_forward(tape, vars, steps);
        Var loss;
        for (int t = 0; t < arch.seq_len; ++t) {
            Var diff = ad::sub(tape.constant(steps[static_cast<std::size_t>(t)]),
                               xhat[static_cast<std::size_t>(t)]);
            Var term = ad::sum_all(ad::square(diff));
            loss = (t == 0) ? term : ad::add(loss, term);
        }
        return ad::scale(loss, 1.0 / (static_cast<double>(starts.size()) *
                                      static_cast<double>(arch.seq_len)));
    };
    driver.val_loss = [&](const ad::ParameterSet& params) {
        return sequence_val_loss(rows, val_starts, arch.seq_len, params, forward_batch);
    };

    TrainOutcome outcome = run_training(driver, model.params, cfg);
    Checkpoint ckpt;
    ckpt.kind = ModelKind::LstmAe;
    ckpt.arch = arch;
    ckpt.params = std::move(model.params);
    ckpt.feature_columns = std::move(feature_columns);
    ckpt.epochs_run = outcome.epochs_run;
    ckpt.best_val_loss = outcome.best_val_loss;
    ckpt.seed = cfg.seed;
    ckpt.train_loss_history = outcome.train_loss_history;
    return ckpt;
}

namespace {

// Batched transformer pass: the input/output projections run on the stacked
// (B*T) x F matrix, attention and FF run per sequence.
std::vector<Mat> transformer_forward_batch(Tape& tape, const VarMap& p, const Mat& rows,
                                           const std::vector<int>& starts,
                                           const TransformerArch& arch, const Mat& pe,
                                           std::vector<Var>* xhat_out) {
    const int t_len = arch.seq_len;
    const Eigen::Index batch = static_cast<Eigen::Index>(starts.size());
    Mat stacked(batch * t_len, rows.cols());
    for (Eigen::Index i = 0; i < batch; ++i)
        stacked.middleRows(i * t_len, t_len) =
            rows.middleRows(starts[static_cast<std::size_t>(i)], t_len);
    Var proj = ad::add_rowvec(ad::matmul(tape.constant(stacked), p.at("in.w")), p.at("in.b"));
    Mat pe_tile(batch * t_len, arch.model_dim);
    for (Eigen::Index i = 0; i < batch; ++i) pe_tile.middleRows(i * t_len, t_len) = pe;
    Var h = ad::add(proj, tape.constant(pe_tile));

    std::vector<Mat> xhat_values;
    xhat_values.reserve(static_cast<std::size_t>(batch));
    for (Eigen::Index i = 0; i < batch; ++i) {
        Var hs = ad::slice_rows(h, i * t_len, t_len);
        hs = transformer_block(p, "enc", hs);
        hs = transformer_block(p, "dec", hs);
        Var xhat = ad::add_rowvec(ad::matmul(hs, p.at("out.w")), p.at("out.b"));
        xhat_values.push_back(xhat.value());
        if (xhat_out) xhat_out->push_back(xhat);
    }
    return xhat_values;
}

} // namespace

Checkpoint train_transformer(TransformerArch arch, const Mat& rows,
                             const std::vector<int>& train_starts,
                             const std::vector<int>& val_starts, const TrainConfig& cfg,
                             std::vector<std::string> feature_columns) {
    if (arch.input_dim == 0) arch.input_dim = static_cast<int>(rows.cols());
    if (rows.cols() != arch.input_dim) throw UsageError("train_transformer: feature width mismatch");
    check_starts(train_starts, rows, arch.seq_len, "train_transformer");
    check_starts(val_starts, rows, arch.seq_len, "train_transformer");
    TransformerAeModel model = TransformerAeModel::init(arch, cfg.seed);
    const Mat pe = ad::positional_encoding(arch.seq_len, arch.model_dim);

    TrainDriver driver;
    driver.n_items = static_cast<int>(train_starts.size());
    driver.batch_loss = [&](Tape& tape, const VarMap& vars, const std::vector<int>& batch, Philox&) {
        std::vector<int> starts;
        starts.reserve(batch.size());
        for (int i : batch) starts.push_back(train_starts[static_cast<std::size_t>(i)]);
        std::vector<Var> xhat;
        transformer_forward_batch(tape, vars, rows, starts, arch, pe, &xhat);
        Var loss;
        for (std::size_t i = 0; i < starts.size(); ++i) {
            Var x = tape.constant(rows.middleRows(starts[i], arch.seq_len));
            Var term = ad::sum_all(ad::square(ad::sub(x, xhat[i])));
            loss = (i == 0) ? term : ad::add(loss, term);
        }
        return ad::scale(loss, 1.0 / (static_cast<double>(starts.size()) *
                                      static_cast<double>(arch.seq_len)));
    };
    driver.val_loss = [&](const ad::ParameterSet& params) {
        if (val_starts.empty()) throw DataError("validation set has no sequences");
        double total = 0.0;
        const std::size_t chunk = 256;
        for (std::size_t lo = 0; lo < val_starts.size(); lo += chunk) {
            std::vector<int> part(val_starts.begin() + static_cast<std::ptrdiff_t>(lo),
                                  val_starts.begin() + static_cast<std::ptrdiff_t>(
                                                           std::min(val_starts.size(), lo + chunk)));
            Tape tape;
            VarMap vars = to_varmap(tape, params, false);
            std::vector<Mat> xhat = transformer_forward_batch(tape, vars, rows, part, arch, pe, nullptr);
            for (std::size_t i = 0; i < part.size(); ++i)
                total += (rows.middleRows(part[i], arch.seq_len) - xhat[i]).squaredNorm();
        }
        return total / (static_cast<double>(val_starts.size()) * static_cast<double>(arch.seq_len));
    };

    TrainOutcome outcome = run_training(driver, model.params, cfg);
    Checkpoint ckpt;
    ckpt.kind = ModelKind::TransformerAe;
    ckpt.arch = arch;
    ckpt.params = std::move(model.params);
    ckpt.feature_columns = std::move(feature_columns);
    ckpt.epochs_run = outcome.epochs_run;
    ckpt.best_val_loss = outcome.best_val_loss;
    ckpt.seed = cfg.seed;
    ckpt.train_loss_history = outcome.train_loss_history;
    return ckpt;
}

// --- scoring ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd score_rows_vae(const Checkpoint& ckpt, const Mat& rows) {
    const auto& arch = std::get<VaeArch>(ckpt.arch);
    Eigen::VectorXd scores(rows.rows());
    const Eigen::Index chunk = 2048;
    for (Eigen::Index lo = 0; lo < rows.rows(); lo += chunk) {
        const Eigen::Index n = std::min(chunk, rows.rows() - lo);
        Tape tape;
        VarMap vars = to_varmap(tape, ckpt.params, false);
        Var x = tape.constant(rows.middleRows(lo, n));
        VaeForward fw = vae_forward(tape, vars, x, nullptr);
        Eigen::VectorXd rec = (rows.middleRows(lo, n) - fw.xhat.value()).rowwise().squaredNorm();
        Eigen::VectorXd kl = kl_per_row(fw.mu.value(), fw.logvar.value());
        scores.segment(lo, n) = arch.alpha * rec + arch.beta * kl;
    }
    return scores;
}

// Scores each length-T run ending at rows T-1..m-1; the first T-1 rows repeat
// the first computed score so the series stays aligned with the input rows.
Eigen::VectorXd pad_sequence_scores(const Eigen::VectorXd& seq_scores, int seq_len,
                                    Eigen::Index m) {
    Eigen::VectorXd out(m);
    out.head(seq_len - 1).setConstant(seq_scores(0));
    out.tail(m - seq_len + 1) = seq_scores;
    return out;
}

Eigen::VectorXd score_rows_lstm(const Checkpoint& ckpt, const Mat& rows) {
    const auto& arch = std::get<LstmArch>(ckpt.arch);
    const int t_len = arch.seq_len;
    if (rows.rows() < t_len) throw SizeError("score: fewer rows than sequence length");
    const Eigen::Index n_seq = rows.rows() - t_len + 1;
    Eigen::VectorXd seq_scores(n_seq);
    const Eigen::Index chunk = 256;
    for (Eigen::Index lo = 0; lo < n_seq; lo += chunk) {
        const Eigen::Index n = std::min(chunk, n_seq - lo);
        std::vector<int> starts(static_cast<std::size_t>(n));
        std::iota(starts.begin(), starts.end(), static_cast<int>(lo));
        Tape tape;
        VarMap vars = to_varmap(tape, ckpt.params, false);
        std::vector<Mat> steps;
        for (int t = 0; t < t_len; ++t) steps.push_back(gather_step(rows, starts, t));
        std::vector<Var> xhat = lstm_forward(tape, vars, steps);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
        for (int t = 0; t < t_len; ++t)
            acc += (steps[static_cast<std::size_t>(t)] - xhat[static_cast<std::size_t>(t)].value())
                       .rowwise()
                       .squaredNorm();
        seq_scores.segment(lo, n) = acc / static_cast<double>(t_len);
    }
    return pad_sequence_scores(seq_scores, t_len, rows.rows());
}

Eigen::VectorXd score_rows_transformer(const Checkpoint& ckpt, const Mat& rows) {
    const auto& arch = std::get<TransformerArch>(ckpt.arch);
    const int t_len = arch.seq_len;
    if (rows.rows() < t_len) throw SizeError("score: fewer rows than sequence length");
    const Mat pe = ad::positional_encoding(t_len, arch.model_dim);
    const Eigen::Index n_seq = rows.rows() - t_len + 1;
    Eigen::VectorXd seq_scores(n_seq);
    const Eigen::Index chunk = 256;
    for (Eigen::Index lo = 0; lo < n_seq; lo += chunk) {
        const Eigen::Index n = std::min(chunk, n_seq - lo);
        std::vector<int> starts(static_cast<std::size_t>(n));
        std::iota(starts.begin(), starts.end(), static_cast<int>(lo));
        Tape tape;
        VarMap vars = to_varmap(tape, ckpt.params, false);
        std::vector<Mat> xhat = transformer_forward_batch(tape, vars, rows, starts, arch, pe, nullptr);
        for (Eigen::Index i = 0; i < n; ++i)
            seq_scores(lo + i) = seq_mse(rows.middleRows(starts[static_cast<std::size_t>(i)], t_len),
                                         xhat[static_cast<std::size_t>(i)]);
    }
    return pad_sequence_scores(seq_scores, t_len, rows.rows());
}

} // namespace

Eigen::VectorXd score_rows(const Checkpoint& ckpt, const Mat& rows) {
    switch (ckpt.kind) {
    case ModelKind::Vae: return score_rows_vae(ckpt, rows);
    case ModelKind::LstmAe: return score_rows_lstm(ckpt, rows);
    case ModelKind::TransformerAe: return score_rows_transformer(ckpt, rows);
    }
    throw UsageError("unknown model kind");
}

Eigen::VectorXd score_series(const Checkpoint& ckpt, const FeatureMatrix& fm) {
    if (fm.column_names() != ckpt.feature_columns)
        throw CompatibilityError("feature column layout does not match the checkpoint");
    return score_rows(ckpt, fm.rows);
}

} // namespace windae
