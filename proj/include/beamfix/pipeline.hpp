// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "beamfix/dataset.hpp"
#include "beamfix/denoise.hpp"
#include "beamfix/eval.hpp"
#include "beamfix/simulate.hpp"
#include "beamfix/txid.hpp"

namespace beamfix::pipeline {

struct ScenarioConfig {
    sim::SceneGeometry scene;
    sim::TrajectoryConfig trajectory;
};

/// Everything a run needs. Seeds not given explicitly are derived from `seed`.
struct RunConfig {
    int grid_count = 100;
    int codebook_size = 64;
    int num_antennas = 16;
    std::vector<double> noise_levels = {0.1, 0.5, 1.0, 2.0, 3.0};
    double train_fraction = 0.7;
    double histogram_bin_width_m = 0.05;
    std::uint64_t seed = 2024;
    std::uint64_t split_seed = 0;
    std::uint64_t noise_seed = 0;
    std::vector<ScenarioConfig> scenarios;
    txid::TxidOptions txid;
    denoise::DenoiserOptions denoiser;

    /// Two lanes: L2R at 14 m with 1353 samples, R2L at 17.5 m with 1086 samples.
    static RunConfig defaults();

    /// Re-derives every stage seed from `master`.
    void reseed(std::uint64_t master);

    /// Throws ValidationError on any invalid field.
    void validate() const;
};

/// Overlays a JSON document onto `base` (keys mirror the struct fields). Unknown keys
/// are rejected. A "seed" key re-derives all stage seeds before explicit sub-seeds apply.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = RunConfig::defaults());
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Clean bundle for one scenario, after outlier removal.
DatasetBundle simulate_clean(const RunConfig& config, const ScenarioConfig& scenario);

/// Noisy copy of a clean bundle at one level (same noise stream for every level).
DatasetBundle with_noise(const RunConfig& config, const DatasetBundle& clean, double level);

/// File stem for a dataset, e.g. "l2r_clean" or "l2r_rms0.5".
std::string dataset_stem(Direction direction, std::optional<double> level);

struct TrainedArtifacts {
    nn::MlpModel txid_model;
    denoise::DenoiserModel denoiser;
    denoise::LookupTable lut;
};

/// Stage 1 on the labeled training split, then LUT and regressor on stage-1 selections.
TrainedArtifacts train_artifacts(const DatasetBundle& train, const RunConfig& config);

struct LevelEvaluation {
    DatasetBundle test;
    std::vector<txid::TxPrediction> tx_predictions;
    std::vector<eval::MethodPredictions> predictions;  // noisy, lut, mlp
    eval::EvalReport report;
    double identification_accuracy = 0.0;  ///< fraction selecting the labeled TX
};

/// Runs identify -> {LUT, MLP} on `test`, scored against a ground-truth anchor built
/// from `full` (train + test).
LevelEvaluation evaluate_level(const TrainedArtifacts& artifacts, const DatasetBundle& full,
                               const DatasetBundle& test, const RunConfig& config);

/// Persists artifacts (txid.json, denoiser.json, lut.csv) plus `manifest` into `dir`.
void save_artifacts(const TrainedArtifacts& artifacts, const nlohmann::json& manifest,
                    const std::filesystem::path& dir);
TrainedArtifacts load_artifacts(const std::filesystem::path& dir, nlohmann::json* manifest = nullptr);

/// Gradient checks of both trained networks on a few training samples.
nlohmann::json gradient_report(const TrainedArtifacts& artifacts, const DatasetBundle& train);

struct PipelineSummary {
    std::vector<std::filesystem::path> datasets;
    std::vector<eval::ComparisonTable> tables;  // one per scenario
};

/// simulate -> train -> evaluate for every scenario and noise level, writing datasets,
/// artifacts, reports and plot data under `out_dir`.
PipelineSummary run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace beamfix::pipeline
