// Command-line pipeline: generate -> featurize -> train -> calibrate ->
// score -> evaluate -> report. Stages communicate through on-disk artifacts
// in the output directory, so any stage can be rerun or inspected alone.

#include <cstdio>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "windae/errors.hpp"
#include "windae/pipeline.hpp"

namespace {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const windae::MissingInputError*>(&e)) return 2;
    if (dynamic_cast<const windae::NumericError*>(&e)) return 3;
    if (dynamic_cast<const windae::TrainingError*>(&e)) return 3;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    windae::PipelineConfig cfg;

    // The config file is loaded before flag parsing so that flags win.
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc)
            config_path = argv[i + 1];
        else if (arg.rfind("--config=", 0) == 0)
            config_path = arg.substr(9);
    }
    if (!config_path.empty()) {
        try {
            cfg = windae::load_pipeline_config(config_path);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 1;
        }
    }

    CLI::App app{"windae: autoencoder-ensemble anomaly detection for SCADA telemetry"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string config_dummy;
    app.add_option("--config", config_dummy, "JSON config file (flags override it)");
    bool seed_given = false;
    std::uint64_t seed_value = cfg.master_seed;
    app.add_option("--seed", seed_value, "master seed")->each([&](const std::string&) {
        seed_given = true;
    });
    app.add_option("--out", cfg.out_dir, "output directory");

    std::function<void(const windae::PipelineConfig&)> stage;

    auto* gen = app.add_subcommand("generate", "write dataset.csv + events.csv from the generator");
    std::string preset;
    gen->add_option("--preset", preset, "channel-count preset: farm-a, farm-b, farm-c");
    gen->add_option("--n-samples", cfg.synth.n_samples, "samples to generate");
    gen->add_option("--channels", cfg.synth.n_channels, "channel count");
    gen->add_option("--events", cfg.synth.n_events, "number of fault events");
    gen->add_option("--precursor-hours", cfg.synth.precursor_hours, "drift lead time (hours)");
    gen->add_option("--drift-frac", cfg.synth.drift_channels_frac,
                    "fraction of temp+vib channels that drift");
    gen->add_option("--noise-sigma", cfg.synth.noise_sigma, "noise level");
    gen->add_option("--step-seconds", cfg.synth.step_seconds, "sampling step");
    gen->callback([&]() {
        if (!preset.empty()) {
            auto keep = cfg.synth;
            cfg.synth = windae::synth_preset(preset);
            cfg.synth.n_samples = keep.n_samples;
            cfg.synth.step_seconds = keep.step_seconds;
            cfg.synth.n_events = keep.n_events;
            cfg.synth.precursor_hours = keep.precursor_hours;
            cfg.synth.drift_channels_frac = keep.drift_channels_frac;
            cfg.synth.noise_sigma = keep.noise_sigma;
        }
        stage = windae::run_generate;
    });

    auto* fea = app.add_subcommand("featurize", "write features.csv + normalizer.json + split.json");
    fea->add_option("--dataset-csv", cfg.dataset_csv, "input dataset CSV (default: <out>/dataset.csv)");
    fea->add_option("--events-csv", cfg.events_csv, "events sidecar CSV");
    fea->add_option("--window", cfg.features.window, "sliding window (power of two)");
    fea->add_option("--bands", cfg.features.fft_bands, "FFT energy bands");
    fea->add_option("--train-frac", cfg.split.train_frac, "train fraction");
    fea->add_option("--val-frac", cfg.split.val_frac, "validation fraction");
    fea->add_option("--test-frac", cfg.split.test_frac, "test fraction");
    fea->add_option("--guard", cfg.split.guard_margin, "samples removed around train events");
    fea->callback([&]() {
        if (!cfg.dataset_csv.empty()) cfg.source = "csv";
        stage = windae::run_featurize;
    });

    auto* trn = app.add_subcommand("train", "train the three autoencoders, write *.ckpt");
    trn->add_option("--epochs", cfg.train.max_epochs, "max epochs");
    trn->add_option("--batch", cfg.train.batch_size, "batch size");
    trn->add_option("--patience", cfg.train.patience, "early-stopping patience");
    trn->add_option("--lr", cfg.train.lr, "Adam learning rate");
    trn->add_option("--stride", cfg.seq_stride, "training sequence stride");
    trn->callback([&]() { stage = windae::run_train; });

    auto* cal = app.add_subcommand("calibrate", "learn fusion weights and tau, write ensemble.json");
    cal->add_option("--percentile", cfg.percentile_p, "threshold percentile p in [90, 99.9]");
    cal->add_option("--weight-mode", cfg.weight_mode, "learned | equal | fixed");
    cal->add_option("--calib-guard", cfg.calib_guard,
                    "samples excluded around validation events for tau");
    cal->callback([&]() { stage = windae::run_calibrate; });

    auto* sco = app.add_subcommand("score", "score the full timeline, write scores.csv");
    sco->callback([&]() { stage = windae::run_score; });

    auto* eva = app.add_subcommand("evaluate", "write metrics.json + roc.csv + pr.csv");
    eva->add_option("--eval-split", cfg.eval_split, "test | val | full");
    eva->add_option("--horizon-hours", cfg.horizon_hours, "early-detection search horizon");
    eva->add_option("--importance", cfg.importance, "off | channels");
    eva->callback([&]() { stage = windae::run_evaluate; });

    auto* rep = app.add_subcommand("report", "aggregate artifacts into report.md");
    rep->callback([&]() { stage = windae::run_report; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (seed_given) cfg.master_seed = seed_value;
    cfg.apply_master_seed();

    try {
        stage(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }
    return 0;
}
