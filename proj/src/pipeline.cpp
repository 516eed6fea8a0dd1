#include "windae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "windae/checkpoint.hpp"
#include "windae/csv.hpp"
#include "windae/errors.hpp"
#include "windae/eval.hpp"
#include "windae/timeutil.hpp"

namespace windae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void require_file(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw MissingInputError("missing input artifact '" + path + "'; run '" + producer +
                                "' first");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << text;
}

void progress(const std::string& line) { std::fputs((line + "\n").c_str(), stderr); }

// Split/window bookkeeping shared by the post-featurize stages.
struct SplitInfo {
    std::int64_t n = 0;
    std::int64_t start_epoch = 0;
    std::int64_t step_seconds = 600;
    std::int64_t train_end = 0;
    std::int64_t val_end = 0;
    std::int64_t guard_margin = 0;
    int window = 16;
    std::vector<FaultEvent> events;
};

void write_split_info(const SplitInfo& si, const std::string& path) {
    json j;
    j["n"] = si.n;
    j["start_epoch"] = si.start_epoch;
    j["step_seconds"] = si.step_seconds;
    j["train_end"] = si.train_end;
    j["val_end"] = si.val_end;
    j["guard_margin"] = si.guard_margin;
    j["window"] = si.window;
    json evs = json::array();
    for (const auto& ev : si.events)
        evs.push_back({{"fault_id", ev.fault_id}, {"start", ev.start_index}, {"end", ev.end_index}});
    j["events"] = evs;
    write_text(path, j.dump(2) + "\n");
}

SplitInfo read_split_info(const std::string& path) {
    require_file(path, "featurize");
    json j = json::parse(read_text(path));
    SplitInfo si;
    si.n = j.at("n");
    si.start_epoch = j.at("start_epoch");
    si.step_seconds = j.at("step_seconds");
    si.train_end = j.at("train_end");
    si.val_end = j.at("val_end");
    si.guard_margin = j.at("guard_margin");
    si.window = j.at("window");
    for (const auto& ev : j.at("events"))
        si.events.push_back({ev.at("start"), ev.at("end"), ev.at("fault_id")});
    return si;
}

void write_normalizer(const Normalizer& norm, const std::vector<std::string>& columns,
                      const std::string& path) {
    json j;
    j["fitted_on"] = norm.fitted_on;
    j["columns"] = columns;
    j["mean"] = std::vector<double>(norm.mean.data(), norm.mean.data() + norm.mean.size());
    j["std"] = std::vector<double>(norm.std.data(), norm.std.data() + norm.std.size());
    write_text(path, j.dump() + "\n");
}

Normalizer read_normalizer(const std::string& path, std::vector<std::string>* columns) {
    require_file(path, "featurize");
    json j = json::parse(read_text(path));
    Normalizer norm;
    norm.fitted_on = j.at("fitted_on");
    std::vector<double> mean = j.at("mean").get<std::vector<double>>();
    std::vector<double> stdv = j.at("std").get<std::vector<double>>();
    norm.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    norm.std = Eigen::Map<Eigen::VectorXd>(stdv.data(), static_cast<Eigen::Index>(stdv.size()));
    if (columns) *columns = j.at("columns").get<std::vector<std::string>>();
    return norm;
}

FeatureMatrix read_features(const std::string& dir) {
    const std::string path = join(dir, "features.csv");
    require_file(path, "featurize");
    std::ifstream in(path);
    return read_features_csv(in);
}

// True for feature rows whose full window is inside the train range and clear
// of every event +/- guard. These are the normal-only training rows.
std::vector<bool> train_row_mask(const FeatureMatrix& fm, const SplitInfo& si) {
    const std::vector<bool> keep = event_free_mask(si.n, si.events, si.guard_margin);
    std::vector<bool> mask(static_cast<std::size_t>(fm.m()), false);
    for (std::int64_t i = 0; i < fm.m(); ++i) {
        const std::int64_t t = fm.row_index[static_cast<std::size_t>(i)];
        if (t >= si.train_end) continue;
        bool ok = true;
        for (std::int64_t s = t - si.window + 1; s <= t && ok; ++s)
            ok = s >= 0 && keep[static_cast<std::size_t>(s)];
        mask[static_cast<std::size_t>(i)] = ok;
    }
    return mask;
}

// Sequence starts with stride, restricted to maximal contiguous masked runs.
std::vector<int> masked_sequence_starts(const std::vector<bool>& mask, int seq_len, int stride) {
    std::vector<int> starts;
    const int n = static_cast<int>(mask.size());
    int run_start = -1;
    for (int i = 0; i <= n; ++i) {
        const bool m = i < n && mask[static_cast<std::size_t>(i)];
        if (m && run_start < 0) run_start = i;
        if (!m && run_start >= 0) {
            for (int s = run_start; s + seq_len <= i; s += stride) starts.push_back(s);
            run_start = -1;
        }
    }
    return starts;
}

// Feature-row position range whose sample indices fall in [lo, hi).
std::pair<Eigen::Index, Eigen::Index> position_range(const FeatureMatrix& fm, std::int64_t lo,
                                                     std::int64_t hi) {
    // row_index is w-1, w, w+1, ... so positions map by offset.
    const std::int64_t first = fm.row_index.front();
    const Eigen::Index p_lo = static_cast<Eigen::Index>(std::max<std::int64_t>(0, lo - first));
    const Eigen::Index p_hi =
        static_cast<Eigen::Index>(std::clamp<std::int64_t>(hi - first, 0, fm.m()));
    return {p_lo, std::max(p_lo, p_hi)};
}

std::vector<int> labels_for_positions(const FeatureMatrix& fm, const std::vector<FaultEvent>& events,
                                      Eigen::Index p_lo, Eigen::Index p_hi) {
    std::vector<int> labels(static_cast<std::size_t>(p_hi - p_lo), 0);
    for (Eigen::Index p = p_lo; p < p_hi; ++p) {
        const std::int64_t t = fm.row_index[static_cast<std::size_t>(p)];
        for (const auto& ev : events)
            if (t >= ev.start_index && t < ev.end_index) {
                labels[static_cast<std::size_t>(p - p_lo)] = 1;
                break;
            }
    }
    return labels;
}

// Scores feature-row positions [p_lo, p_hi), feeding sequence models just
// enough lookback rows to cover sequences ending inside the range.
Eigen::VectorXd score_position_range(const Checkpoint& ckpt, const Eigen::MatrixXd& rows,
                                     Eigen::Index p_lo, Eigen::Index p_hi) {
    const Eigen::Index lookback = ckpt.seq_len() - 1;
    const Eigen::Index begin = std::max<Eigen::Index>(0, p_lo - lookback);
    const Eigen::VectorXd scores = score_rows(ckpt, rows.middleRows(begin, p_hi - begin));
    return scores.tail(p_hi - p_lo);
}

struct ModelScores {
    Eigen::VectorXd vae;
    Eigen::VectorXd lstm;
    Eigen::VectorXd transformer;
};

ModelScores score_all_models(const std::string& dir, const Eigen::MatrixXd& rows, Eigen::Index p_lo,
                             Eigen::Index p_hi, const std::vector<std::string>& columns) {
    const char* names[3] = {"vae.ckpt", "lstm.ckpt", "transformer.ckpt"};
    std::array<Eigen::VectorXd, 3> results;
    std::array<std::future<Eigen::VectorXd>, 3> futures;
    for (int i = 0; i < 3; ++i) {
        const std::string path = join(dir, names[i]);
        require_file(path, "train");
        futures[static_cast<std::size_t>(i)] = std::async(std::launch::async, [path, &rows, p_lo,
                                                                               p_hi, &columns]() {
            Checkpoint ckpt = load_checkpoint(path);
            if (ckpt.feature_columns != columns)
                throw CompatibilityError("feature column layout does not match checkpoint '" + path +
                                         "'");
            return score_position_range(ckpt, rows, p_lo, p_hi);
        });
    }
    for (int i = 0; i < 3; ++i)
        results[static_cast<std::size_t>(i)] = futures[static_cast<std::size_t>(i)].get();
    return {results[0], results[1], results[2]};
}

} // namespace

void PipelineConfig::apply_master_seed() {
    synth.seed = master_seed;
    train.seed = master_seed;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    require_file(path, "write a config file");
    json j = json::parse(read_text(path));
    PipelineConfig cfg;

    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        cfg.source = d.value("source", cfg.source);
        cfg.dataset_csv = d.value("csv", cfg.dataset_csv);
        cfg.events_csv = d.value("events_csv", cfg.events_csv);
        if (d.contains("preset")) cfg.synth = synth_preset(d["preset"]);
        cfg.synth.n_samples = d.value("n_samples", cfg.synth.n_samples);
        cfg.synth.n_channels = d.value("n_channels", cfg.synth.n_channels);
        cfg.synth.step_seconds = d.value("step_seconds", cfg.synth.step_seconds);
        cfg.synth.n_events = d.value("n_events", cfg.synth.n_events);
        cfg.synth.precursor_hours = d.value("precursor_hours", cfg.synth.precursor_hours);
        cfg.synth.drift_channels_frac = d.value("drift_channels_frac", cfg.synth.drift_channels_frac);
        cfg.synth.noise_sigma = d.value("noise_sigma", cfg.synth.noise_sigma);
    }
    if (j.contains("split")) {
        const json& s = j["split"];
        cfg.split.train_frac = s.value("train_frac", cfg.split.train_frac);
        cfg.split.val_frac = s.value("val_frac", cfg.split.val_frac);
        cfg.split.test_frac = s.value("test_frac", cfg.split.test_frac);
        cfg.split.guard_margin = s.value("guard_margin", cfg.split.guard_margin);
    }
    if (j.contains("features")) {
        const json& f = j["features"];
        cfg.features.window = f.value("window", cfg.features.window);
        cfg.features.fft_bands = f.value("fft_bands", cfg.features.fft_bands);
        cfg.features.temporal = f.value("temporal", cfg.features.temporal);
        cfg.features.derivatives = f.value("derivatives", cfg.features.derivatives);
        cfg.features.shape = f.value("shape", cfg.features.shape);
        cfg.features.spectral = f.value("spectral", cfg.features.spectral);
    }
    if (j.contains("models")) {
        const json& m = j["models"];
        if (m.contains("vae")) {
            const json& v = m["vae"];
            cfg.vae.hidden = v.value("hidden", cfg.vae.hidden);
            cfg.vae.latent = v.value("latent", cfg.vae.latent);
            cfg.vae.alpha = v.value("alpha", cfg.vae.alpha);
            cfg.vae.beta = v.value("beta", cfg.vae.beta);
        }
        if (m.contains("lstm")) {
            const json& l = m["lstm"];
            cfg.lstm.hidden = l.value("hidden", cfg.lstm.hidden);
            cfg.lstm.latent = l.value("latent", cfg.lstm.latent);
            cfg.lstm.seq_len = l.value("seq_len", cfg.lstm.seq_len);
        }
        if (m.contains("transformer")) {
            const json& t = m["transformer"];
            cfg.transformer.model_dim = t.value("model_dim", cfg.transformer.model_dim);
            cfg.transformer.key_dim = t.value("key_dim", cfg.transformer.key_dim);
            cfg.transformer.ff_dim = t.value("ff_dim", cfg.transformer.ff_dim);
            cfg.transformer.seq_len = t.value("seq_len", cfg.transformer.seq_len);
        }
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.patience = t.value("patience", cfg.train.patience);
        cfg.train.lr = t.value("lr", cfg.train.lr);
        cfg.seq_stride = t.value("seq_stride", cfg.seq_stride);
    }
    if (j.contains("ensemble")) {
        const json& e = j["ensemble"];
        cfg.percentile_p = e.value("percentile", cfg.percentile_p);
        cfg.weight_mode = e.value("weight_mode", cfg.weight_mode);
        cfg.calib_guard = e.value("calib_guard", cfg.calib_guard);
        if (e.contains("fixed_weights")) {
            cfg.fixed_weights.w1 = e["fixed_weights"].at(0);
            cfg.fixed_weights.w2 = e["fixed_weights"].at(1);
            cfg.fixed_weights.w3 = e["fixed_weights"].at(2);
        }
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        cfg.eval_split = e.value("split", cfg.eval_split);
        cfg.horizon_hours = e.value("horizon_hours", cfg.horizon_hours);
        cfg.importance = e.value("importance", cfg.importance);
        if (e.contains("lead_windows_hours"))
            cfg.lead_windows_hours = e["lead_windows_hours"].get<std::vector<int>>();
    }
    cfg.master_seed = j.value("seed", cfg.master_seed);
    cfg.out_dir = j.value("out", cfg.out_dir);
    cfg.apply_master_seed();
    return cfg;
}

// --- stages -------------------------------------------------------------------

void run_generate(const PipelineConfig& cfg) {
    if (cfg.source != "synth")
        throw ConfigError("generate requires dataset.source == 'synth'");
    fs::create_directories(cfg.out_dir);
    SynthMeta meta;
    TimeSeriesDataset ds = generate_scada(cfg.synth, &meta);
    {
        std::ofstream out(join(cfg.out_dir, "dataset.csv"), std::ios::trunc);
        write_dataset_csv(ds, out);
    }
    {
        std::ofstream out(join(cfg.out_dir, "events.csv"), std::ios::trunc);
        write_events_csv(ds, out);
    }
    json meta_json;
    meta_json["channel_roles"] = meta.channel_roles;
    meta_json["drift_channels"] = meta.drift_channels;
    meta_json["precursor_samples"] = meta.precursor_samples;
    meta_json["event_samples"] = meta.event_samples;
    write_text(join(cfg.out_dir, "synth_meta.json"), meta_json.dump(2) + "\n");
    progress("generate n=" + std::to_string(ds.n()) + " d=" + std::to_string(ds.d()) +
             " events=" + std::to_string(ds.events.size()));
}

namespace {

TimeSeriesDataset load_input_dataset(const PipelineConfig& cfg) {
    std::string path = cfg.dataset_csv;
    std::string events_path = cfg.events_csv;
    if (cfg.source == "synth" || path.empty()) {
        path = join(cfg.out_dir, "dataset.csv");
        events_path = join(cfg.out_dir, "events.csv");
        require_file(path, "generate");
    } else {
        require_file(path, "provide dataset.csv");
    }
    std::ifstream in(path);
    TimeSeriesDataset ds = read_dataset_csv(in);
    if (!events_path.empty() && fs::exists(events_path)) {
        std::ifstream ein(events_path);
        ds.events = read_events_csv(ein, ds);
    }
    ds.validate();
    return ds;
}

} // namespace

void run_featurize(const PipelineConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    TimeSeriesDataset ds = load_input_dataset(cfg);
    const SplitBounds bounds = split_bounds(ds.n(), cfg.split);

    FeatureMatrix fm = build_feature_matrix(ds, cfg.features);

    SplitInfo si;
    si.n = ds.n();
    si.start_epoch = ds.start_epoch_s;
    si.step_seconds = ds.step_seconds;
    si.train_end = bounds.train_end;
    si.val_end = bounds.val_end;
    si.guard_margin = cfg.split.guard_margin;
    si.window = cfg.features.window;
    si.events = ds.events;

    const std::vector<bool> mask = train_row_mask(fm, si);
    std::int64_t n_train_rows = 0;
    for (bool b : mask) n_train_rows += b ? 1 : 0;
    if (n_train_rows < 2) throw DataError("train split empty after event removal");
    Eigen::MatrixXd train_rows(n_train_rows, fm.f());
    std::int64_t r = 0;
    for (std::int64_t i = 0; i < fm.m(); ++i)
        if (mask[static_cast<std::size_t>(i)]) train_rows.row(r++) = fm.rows.row(i);
    const Normalizer norm = fit_normalizer(train_rows);

    {
        std::ofstream out(join(cfg.out_dir, "features.csv"), std::ios::trunc);
        write_features_csv(fm, out);
    }
    write_normalizer(norm, fm.column_names(), join(cfg.out_dir, "normalizer.json"));
    write_split_info(si, join(cfg.out_dir, "split.json"));
    progress("featurize rows=" + std::to_string(fm.m()) + " cols=" + std::to_string(fm.f()) +
             " train_rows=" + std::to_string(n_train_rows));
}

void run_train(const PipelineConfig& cfg) {
    const SplitInfo si = read_split_info(join(cfg.out_dir, "split.json"));
    FeatureMatrix fm = read_features(cfg.out_dir);
    std::vector<std::string> columns;
    const Normalizer norm = read_normalizer(join(cfg.out_dir, "normalizer.json"), &columns);
    if (columns != fm.column_names())
        throw CompatibilityError("features.csv and normalizer.json disagree on columns");
    const Eigen::MatrixXd rows = apply_normalizer(norm, fm.rows);

    const std::vector<bool> mask = train_row_mask(fm, si);
    std::int64_t n_train_rows = 0;
    for (bool b : mask) n_train_rows += b ? 1 : 0;
    if (n_train_rows < 2) throw DataError("train split empty after event removal");

    Eigen::MatrixXd train_rows(n_train_rows, rows.cols());
    std::int64_t r = 0;
    for (std::int64_t i = 0; i < fm.m(); ++i)
        if (mask[static_cast<std::size_t>(i)]) train_rows.row(r++) = rows.row(i);

    const auto [v_lo, v_hi] = position_range(fm, si.train_end, si.val_end);
    if (v_hi - v_lo < 2) throw DataError("validation split has too few feature rows");
    const Eigen::MatrixXd val_rows = rows.middleRows(v_lo, v_hi - v_lo);

    // Sequence starts: train sequences never span removed regions; validation
    // sequences stay inside the validation range.
    const int stride = std::max(1, cfg.seq_stride);
    auto starts_for = [&](int seq_len) {
        std::vector<int> train_starts = masked_sequence_starts(mask, seq_len, stride);
        std::vector<int> val_starts;
        for (Eigen::Index s = v_lo; s + seq_len <= v_hi; s += stride)
            val_starts.push_back(static_cast<int>(s));
        return std::pair(train_starts, val_starts);
    };

    const std::vector<std::string> names = fm.column_names();
    TrainConfig base = cfg.train;

    auto train_vae_task = [&]() {
        TrainConfig tc = base;
        tc.seed = base.seed + 1;
        VaeArch arch = cfg.vae;
        arch.input_dim = static_cast<int>(rows.cols());
        Checkpoint ckpt = train_vae(arch, train_rows, val_rows, tc, names);
        save_checkpoint(ckpt, join(cfg.out_dir, "vae.ckpt"));
        progress("train vae epochs=" + std::to_string(ckpt.epochs_run) +
                 " val_loss=" + format_double(ckpt.best_val_loss));
    };
    auto train_lstm_task = [&]() {
        TrainConfig tc = base;
        tc.seed = base.seed + 2;
        tc.batch_size = std::min(base.batch_size, 64);
        LstmArch arch = cfg.lstm;
        arch.input_dim = static_cast<int>(rows.cols());
        auto [tr, va] = starts_for(arch.seq_len);
        if (tr.empty()) throw DataError("no training sequences for the LSTM autoencoder");
        Checkpoint ckpt = train_lstm(arch, rows, tr, va, tc, names);
        save_checkpoint(ckpt, join(cfg.out_dir, "lstm.ckpt"));
        progress("train lstm epochs=" + std::to_string(ckpt.epochs_run) +
                 " val_loss=" + format_double(ckpt.best_val_loss));
    };
    auto train_transformer_task = [&]() {
        TrainConfig tc = base;
        tc.seed = base.seed + 3;
        tc.batch_size = std::min(base.batch_size, 64);
        TransformerArch arch = cfg.transformer;
        arch.input_dim = static_cast<int>(rows.cols());
        auto [tr, va] = starts_for(arch.seq_len);
        if (tr.empty()) throw DataError("no training sequences for the transformer autoencoder");
        Checkpoint ckpt = train_transformer(arch, rows, tr, va, tc, names);
        save_checkpoint(ckpt, join(cfg.out_dir, "transformer.ckpt"));
        progress("train transformer epochs=" + std::to_string(ckpt.epochs_run) +
                 " val_loss=" + format_double(ckpt.best_val_loss));
    };

    auto f1 = std::async(std::launch::async, train_vae_task);
    auto f2 = std::async(std::launch::async, train_lstm_task);
    auto f3 = std::async(std::launch::async, train_transformer_task);
    f1.get();
    f2.get();
    f3.get();
}

void run_calibrate(const PipelineConfig& cfg) {
    const SplitInfo si = read_split_info(join(cfg.out_dir, "split.json"));
    FeatureMatrix fm = read_features(cfg.out_dir);
    std::vector<std::string> columns;
    const Normalizer norm = read_normalizer(join(cfg.out_dir, "normalizer.json"), &columns);
    const Eigen::MatrixXd rows = apply_normalizer(norm, fm.rows);

    const auto [v_lo, v_hi] = position_range(fm, si.train_end, si.val_end);
    if (v_hi <= v_lo) throw DataError("validation split has no feature rows");
    const ModelScores raw = score_all_models(cfg.out_dir, rows, v_lo, v_hi, columns);

    EnsembleConfig ens;
    ens.percentile_p = cfg.percentile_p;
    ens.norm_vae = fit_score_normalizer(raw.vae);
    ens.norm_lstm = fit_score_normalizer(raw.lstm);
    ens.norm_transformer = fit_score_normalizer(raw.transformer);

    const std::array<Eigen::VectorXd, 3> normalized = {
        normalize_scores(raw.vae, ens.norm_vae), normalize_scores(raw.lstm, ens.norm_lstm),
        normalize_scores(raw.transformer, ens.norm_transformer)};
    const std::vector<int> labels = labels_for_positions(fm, si.events, v_lo, v_hi);

    if (cfg.weight_mode == "learned") {
        ens.weights = learn_weights(normalized, labels);
    } else if (cfg.weight_mode == "equal") {
        ens.weights = EnsembleWeights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    } else if (cfg.weight_mode == "fixed") {
        ens.weights = cfg.fixed_weights;
        ens.weights.validate();
    } else {
        throw ConfigError("weight_mode must be learned, equal or fixed");
    }

    const Eigen::VectorXd fused = fuse(normalized[0], normalized[1], normalized[2], ens.weights);

    // tau comes from validation rows clear of events +/- calib_guard: labeled
    // anomalies and their precursor neighborhoods would inflate the threshold.
    const std::int64_t guard = cfg.calib_guard >= 0 ? cfg.calib_guard : si.guard_margin;
    const std::vector<bool> keep = event_free_mask(si.n, si.events, guard);
    std::vector<double> calib;
    for (Eigen::Index p = v_lo; p < v_hi; ++p) {
        const std::int64_t t = fm.row_index[static_cast<std::size_t>(p)];
        if (keep[static_cast<std::size_t>(t)]) calib.push_back(fused[p - v_lo]);
    }
    if (calib.size() < 10)
        throw CalibrationError("too few event-free validation rows for threshold calibration");
    ens.tau = percentile_threshold(
        Eigen::Map<Eigen::VectorXd>(calib.data(), static_cast<Eigen::Index>(calib.size())),
        ens.percentile_p);

    write_text(join(cfg.out_dir, "ensemble.json"), ens.to_json_string());
    progress("calibrate w=(" + format_double(ens.weights.w1) + "," + format_double(ens.weights.w2) +
             "," + format_double(ens.weights.w3) + ") tau=" + format_double(ens.tau));
}

void run_score(const PipelineConfig& cfg) {
    const SplitInfo si = read_split_info(join(cfg.out_dir, "split.json"));
    FeatureMatrix fm = read_features(cfg.out_dir);
    std::vector<std::string> columns;
    const Normalizer norm = read_normalizer(join(cfg.out_dir, "normalizer.json"), &columns);
    const std::string ens_path = join(cfg.out_dir, "ensemble.json");
    require_file(ens_path, "calibrate");
    const EnsembleConfig ens = EnsembleConfig::from_json_string(read_text(ens_path));

    const Eigen::MatrixXd rows = apply_normalizer(norm, fm.rows);
    const ModelScores raw = score_all_models(cfg.out_dir, rows, 0, fm.m(), columns);

    const Eigen::VectorXd nv = normalize_scores(raw.vae, ens.norm_vae);
    const Eigen::VectorXd nl = normalize_scores(raw.lstm, ens.norm_lstm);
    const Eigen::VectorXd nt = normalize_scores(raw.transformer, ens.norm_transformer);
    const Eigen::VectorXd fused = fuse(nv, nl, nt, ens.weights);
    const std::vector<char> flags = flag(fused, ens.tau);
    const std::vector<int> labels = labels_for_positions(fm, si.events, 0, fm.m());

    std::ofstream out(join(cfg.out_dir, "scores.csv"), std::ios::trunc);
    out << "row_index,timestamp,score_vae,score_lstm,score_transformer,score_fused,flag,label\n";
    for (Eigen::Index p = 0; p < fm.m(); ++p) {
        const std::int64_t t = fm.row_index[static_cast<std::size_t>(p)];
        out << t << ',' << format_iso8601_utc(si.start_epoch + t * si.step_seconds) << ','
            << format_double(nv[p]) << ',' << format_double(nl[p]) << ',' << format_double(nt[p])
            << ',' << format_double(fused[p]) << ',' << int(flags[static_cast<std::size_t>(p)])
            << ',' << labels[static_cast<std::size_t>(p)] << '\n';
    }
    progress("score rows=" + std::to_string(fm.m()) +
             " flagged=" + std::to_string(std::count(flags.begin(), flags.end(), char(1))));
}

namespace {

struct ScoreTimeline {
    std::vector<std::int64_t> row_index;
    Eigen::VectorXd vae, lstm, transformer, fused;
    std::vector<char> flags;
    std::vector<int> labels;
};

ScoreTimeline read_scores_csv(const std::string& path) {
    require_file(path, "score");
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("scores.csv: missing header");
    std::vector<std::int64_t> idx;
    std::vector<double> v, l, t, f;
    std::vector<char> flags;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 8)
            throw ParseError("scores.csv line " + std::to_string(line_no) + ": expected 8 fields");
        idx.push_back(static_cast<std::int64_t>(parse_double(fields[0], line_no)));
        v.push_back(parse_double(fields[2], line_no));
        l.push_back(parse_double(fields[3], line_no));
        t.push_back(parse_double(fields[4], line_no));
        f.push_back(parse_double(fields[5], line_no));
        flags.push_back(fields[6] == "1" ? 1 : 0);
        labels.push_back(fields[7] == "1" ? 1 : 0);
    }
    ScoreTimeline tl;
    tl.row_index = std::move(idx);
    auto to_vec = [](const std::vector<double>& d) {
        return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()))
            .eval();
    };
    tl.vae = to_vec(v);
    tl.lstm = to_vec(l);
    tl.transformer = to_vec(t);
    tl.fused = to_vec(f);
    tl.flags = std::move(flags);
    tl.labels = std::move(labels);
    return tl;
}

} // namespace

void run_evaluate(const PipelineConfig& cfg) {
    const SplitInfo si = read_split_info(join(cfg.out_dir, "split.json"));
    const ScoreTimeline tl = read_scores_csv(join(cfg.out_dir, "scores.csv"));
    const std::int64_t first = tl.row_index.front();
    const Eigen::Index m = static_cast<Eigen::Index>(tl.row_index.size());

    std::int64_t sel_lo_sample = first, sel_hi_sample = si.n;
    if (cfg.eval_split == "test") {
        sel_lo_sample = si.val_end;
    } else if (cfg.eval_split == "val") {
        sel_lo_sample = si.train_end;
        sel_hi_sample = si.val_end;
    } else if (cfg.eval_split != "full") {
        throw ConfigError("eval split must be test, val or full");
    }
    const Eigen::Index p_lo =
        static_cast<Eigen::Index>(std::clamp<std::int64_t>(sel_lo_sample - first, 0, m));
    const Eigen::Index p_hi =
        static_cast<Eigen::Index>(std::clamp<std::int64_t>(sel_hi_sample - first, 0, m));
    if (p_hi <= p_lo) throw DataError("selected evaluation split is empty");

    const Eigen::VectorXd fused = tl.fused.segment(p_lo, p_hi - p_lo);
    const std::vector<char> flags(tl.flags.begin() + p_lo, tl.flags.begin() + p_hi);
    const std::vector<int> labels(tl.labels.begin() + p_lo, tl.labels.begin() + p_hi);

    // Events clipped to the selection, in selection-local coordinates.
    const std::int64_t base_sample = first + p_lo;
    std::vector<FaultEvent> sel_events =
        relabel_events_to_split(si.events, base_sample, first + p_hi);

    json metrics;
    const ThresholdMetrics tm = threshold_metrics(flags, labels);
    metrics["threshold"] = {{"tp", tm.counts.tp},
                            {"fp", tm.counts.fp},
                            {"fn", tm.counts.fn},
                            {"tn", tm.counts.tn},
                            {"precision", tm.precision},
                            {"recall", tm.recall},
                            {"f1", tm.f1},
                            {"degenerate_precision", tm.degenerate_precision}};
    metrics["precision_at_10pct"] = precision_at_fraction(fused, labels, 0.1);
    metrics["auc_roc"] = auc_roc(fused, labels);
    metrics["auc_pr"] = auc_pr(fused, labels);
    metrics["auc_roc_vae"] = auc_roc(tl.vae.segment(p_lo, p_hi - p_lo), labels);
    metrics["auc_roc_lstm"] = auc_roc(tl.lstm.segment(p_lo, p_hi - p_lo), labels);
    metrics["auc_roc_transformer"] = auc_roc(tl.transformer.segment(p_lo, p_hi - p_lo), labels);

    const RangeMetrics rm = range_wise_eval(flags, sel_events);
    metrics["range_wise"] = {{"event_recall", rm.event_recall},
                             {"event_precision", rm.event_precision},
                             {"degenerate_precision", rm.degenerate_precision}};

    // Early detection runs on the full flag timeline so precursor flags just
    // before the selection still count; events are those starting inside it.
    std::vector<FaultEvent> lead_events;
    for (const auto& ev : si.events)
        if (ev.start_index >= base_sample && ev.start_index < first + p_hi) {
            lead_events.push_back(
                {ev.start_index - first, ev.end_index - first, ev.fault_id});
        }
    if (!lead_events.empty()) {
        const auto rates = early_detection(tl.flags, lead_events, cfg.lead_windows_hours,
                                           si.step_seconds, cfg.horizon_hours);
        json ed;
        for (const auto& [w, rate] : rates) ed[std::to_string(w)] = rate;
        metrics["early_detection"] = ed;
    } else {
        metrics["early_detection"] = json::object();
    }

    const ScoreStats stats = score_distribution_stats(fused, labels);
    metrics["score_stats"] = {{"mean_normal", stats.mean_normal},
                              {"std_normal", stats.std_normal},
                              {"mean_anomalous", stats.mean_anom},
                              {"std_anomalous", stats.std_anom},
                              {"overlap_fraction", stats.overlap_fraction}};

    metrics["split"] = cfg.eval_split;
    metrics["rows_evaluated"] = static_cast<std::int64_t>(p_hi - p_lo);

    if (cfg.importance == "channels") {
        // Group permutation per channel over the evaluated rows.
        FeatureMatrix fm = read_features(cfg.out_dir);
        std::vector<std::string> columns;
        const Normalizer norm = read_normalizer(join(cfg.out_dir, "normalizer.json"), &columns);
        const Eigen::MatrixXd rows = apply_normalizer(norm, fm.rows);
        const Eigen::Index lookback =
            static_cast<Eigen::Index>(std::max(cfg.lstm.seq_len, cfg.transformer.seq_len)) - 1;
        const Eigen::Index begin = std::max<Eigen::Index>(0, p_lo - lookback);
        const Eigen::MatrixXd sub = rows.middleRows(begin, p_hi - begin);
        const Eigen::Index off = p_lo - begin;

        const std::string ens_path = join(cfg.out_dir, "ensemble.json");
        require_file(ens_path, "calibrate");
        const EnsembleConfig ens = EnsembleConfig::from_json_string(read_text(ens_path));
        Checkpoint cv = load_checkpoint(join(cfg.out_dir, "vae.ckpt"));
        Checkpoint cl = load_checkpoint(join(cfg.out_dir, "lstm.ckpt"));
        Checkpoint ct = load_checkpoint(join(cfg.out_dir, "transformer.ckpt"));
        RowScorer scorer = [&](const Eigen::MatrixXd& r) {
            const Eigen::VectorXd sv = normalize_scores(score_rows(cv, r), ens.norm_vae);
            const Eigen::VectorXd sl = normalize_scores(score_rows(cl, r), ens.norm_lstm);
            const Eigen::VectorXd st = normalize_scores(score_rows(ct, r), ens.norm_transformer);
            return fuse(sv, sl, st, ens.weights).tail(r.rows() - off).eval();
        };

        std::map<std::string, std::vector<int>> channel_cols;
        for (std::size_t c = 0; c < fm.columns.size(); ++c)
            channel_cols[fm.columns[c].channel].push_back(static_cast<int>(c));
        json imp;
        for (const auto& [channel, cols] : channel_cols) {
            imp[channel] = group_permutation_delta(scorer, sub, labels, cols, cfg.master_seed);
            progress("importance channel=" + channel);
        }
        metrics["feature_importances"] = imp;
    } else {
        metrics["feature_importances"] = json::object();
    }

    write_text(join(cfg.out_dir, "metrics.json"), metrics.dump(2) + "\n");

    {
        std::ofstream out(join(cfg.out_dir, "roc.csv"), std::ios::trunc);
        out << "fpr,tpr,threshold\n";
        for (const auto& pt : roc_curve(fused, labels))
            out << format_double(pt.x) << ',' << format_double(pt.y) << ','
                << format_double(pt.threshold) << '\n';
    }
    {
        std::ofstream out(join(cfg.out_dir, "pr.csv"), std::ios::trunc);
        out << "recall,precision,threshold\n";
        for (const auto& pt : pr_curve(fused, labels))
            out << format_double(pt.x) << ',' << format_double(pt.y) << ','
                << format_double(pt.threshold) << '\n';
    }
    progress("evaluate auc_roc=" + format_double(metrics["auc_roc"].get<double>()) +
             " auc_pr=" + format_double(metrics["auc_pr"].get<double>()));
}

void run_report(const PipelineConfig& cfg) {
    const std::string metrics_path = join(cfg.out_dir, "metrics.json");
    require_file(metrics_path, "evaluate");
    const json metrics = json::parse(read_text(metrics_path));
    const std::string ens_path = join(cfg.out_dir, "ensemble.json");
    require_file(ens_path, "calibrate");
    const EnsembleConfig ens = EnsembleConfig::from_json_string(read_text(ens_path));

    std::ostringstream md;
    md << "# Anomaly detection report\n\n";

    md << "## Models\n\n";
    md << "| model | epochs | best validation loss |\n|---|---|---|\n";
    for (const std::string name : {"vae", "lstm", "transformer"}) {
        const std::string path = join(cfg.out_dir, name + ".ckpt");
        require_file(path, "train");
        const Checkpoint ckpt = load_checkpoint(path);
        md << "| " << name << " | " << ckpt.epochs_run << " | " << format_double(ckpt.best_val_loss)
           << " |\n";
    }

    md << "\n## Calibration\n\n";
    md << "- fusion weights (vae, lstm, transformer): " << format_double(ens.weights.w1) << ", "
       << format_double(ens.weights.w2) << ", " << format_double(ens.weights.w3) << "\n";
    md << "- percentile p: " << format_double(ens.percentile_p) << "\n";
    md << "- threshold tau: " << format_double(ens.tau) << "\n";

    md << "\n## Detection metrics (" << metrics.at("split").get<std::string>() << " split)\n\n";
    md << "| metric | value |\n|---|---|\n";
    md << "| AUC-ROC (ensemble) | " << format_double(metrics.at("auc_roc")) << " |\n";
    md << "| AUC-ROC (vae) | " << format_double(metrics.at("auc_roc_vae")) << " |\n";
    md << "| AUC-ROC (lstm) | " << format_double(metrics.at("auc_roc_lstm")) << " |\n";
    md << "| AUC-ROC (transformer) | " << format_double(metrics.at("auc_roc_transformer")) << " |\n";
    md << "| AUC-PR | " << format_double(metrics.at("auc_pr")) << " |\n";
    md << "| precision | " << format_double(metrics.at("threshold").at("precision")) << " |\n";
    md << "| recall | " << format_double(metrics.at("threshold").at("recall")) << " |\n";
    md << "| F1 | " << format_double(metrics.at("threshold").at("f1")) << " |\n";
    md << "| precision@10% | " << format_double(metrics.at("precision_at_10pct")) << " |\n";
    md << "| event recall | " << format_double(metrics.at("range_wise").at("event_recall"))
       << " |\n";
    md << "| event precision | " << format_double(metrics.at("range_wise").at("event_precision"))
       << " |\n";

    md << "\n## Early detection\n\n";
    const json& ed = metrics.at("early_detection");
    if (ed.empty()) {
        md << "No labeled events in the evaluated split.\n";
    } else {
        md << "| lead window (h) | detection rate |\n|---|---|\n";
        for (auto it = ed.begin(); it != ed.end(); ++it)
            md << "| " << it.key() << " | " << format_double(it.value().get<double>()) << " |\n";
    }

    md << "\n## Score distribution\n\n";
    const json& ss = metrics.at("score_stats");
    md << "- mean fused score (normal): " << format_double(ss.at("mean_normal")) << "\n";
    md << "- mean fused score (anomalous): " << format_double(ss.at("mean_anomalous")) << "\n";
    md << "- overlap fraction: " << format_double(ss.at("overlap_fraction")) << "\n";

    const json& imp = metrics.at("feature_importances");
    if (!imp.empty()) {
        md << "\n## Channel importances (AUC drop under permutation)\n\n";
        std::vector<std::pair<std::string, double>> items;
        for (auto it = imp.begin(); it != imp.end(); ++it) items.push_back({it.key(), it.value()});
        std::stable_sort(items.begin(), items.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        md << "| channel | delta AUC |\n|---|---|\n";
        const std::size_t top = std::min<std::size_t>(items.size(), 20);
        for (std::size_t i = 0; i < top; ++i)
            md << "| " << items[i].first << " | " << format_double(items[i].second) << " |\n";
    }

    write_text(join(cfg.out_dir, "report.md"), md.str());
    progress("report written");
}

} // namespace windae
