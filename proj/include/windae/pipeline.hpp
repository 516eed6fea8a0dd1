#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "windae/dataset.hpp"
#include "windae/ensemble.hpp"
#include "windae/features.hpp"
#include "windae/models.hpp"
#include "windae/synth.hpp"

namespace windae {

// Resolved configuration for all pipeline stages. Values come from defaults,
// then the JSON config file, then command-line flags (flags win).
struct PipelineConfig {
    // dataset source
    std::string source = "synth"; // "synth" | "csv"
    std::string dataset_csv;      // input path when source == "csv"
    std::string events_csv;       // optional events sidecar
    SynthConfig synth;

    SplitSpec split;
    FeatureConfig features;

    VaeArch vae;
    LstmArch lstm;
    TransformerArch transformer;

    TrainConfig train;  // per-model seeds are derived from train.seed
    int seq_stride = 4; // training/validation sequence stride (scoring is stride 1)

    // calibration
    double percentile_p = 97.0;
    std::string weight_mode = "learned"; // learned | equal | fixed
    EnsembleWeights fixed_weights;
    // Samples excluded around validation events when computing tau;
    // -1 means "use split.guard_margin".
    std::int64_t calib_guard = -1;

    // evaluation
    std::string eval_split = "test"; // test | val | full
    std::vector<int> lead_windows_hours = {24, 48, 72, 96};
    double horizon_hours = 168.0;
    std::string importance = "off"; // off | channels

    std::uint64_t master_seed = 42;
    std::string out_dir = "out";

    void apply_master_seed(); // propagates master_seed to synth and training
};

// Loads the JSON config file into a PipelineConfig (defaults for absent keys).
PipelineConfig load_pipeline_config(const std::string& path);

// Stage entry points. Each reads its inputs from cfg.out_dir (or the
// configured CSV paths), writes its artifacts there and throws on error.
void run_generate(const PipelineConfig& cfg);
void run_featurize(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
void run_calibrate(const PipelineConfig& cfg);
void run_score(const PipelineConfig& cfg);
void run_evaluate(const PipelineConfig& cfg);
void run_report(const PipelineConfig& cfg);

} // namespace windae
