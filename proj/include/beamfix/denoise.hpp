// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beamfix/dataset.hpp"
#include "beamfix/grid.hpp"
#include "beamfix/nn.hpp"
#include "beamfix/txid.hpp"

namespace beamfix::denoise {

struct LutEntry {
    std::size_t count = 0;
    geo::GeoPosition mean_position;
};

/// Grid index -> mean of the training set's noisy positions in that grid.
struct LookupTable {
    int grid_count = 0;
    std::vector<std::optional<LutEntry>> entries;

    std::size_t populated_count() const;
};

/// Groups training samples by their labeled TX x-center and averages noisy positions.
LookupTable build_lut(const DatasetBundle& train_bundle, int grid_count);
/// Same, for explicit (x-center, noisy position) pairs.
LookupTable build_lut(std::span<const grid::GridPoint> points, int grid_count);

/// Stored mean of the query's grid; an empty grid falls back to the nearest populated one
/// (ties to the lower index). Throws RuntimeFailure if the table is empty.
geo::GeoPosition lut_predict(const LookupTable& lut, double x_center);

/// CSV `grid,count,mean_lat,mean_lon` over populated grids.
std::string format_lut_csv(const LookupTable& lut);
LookupTable parse_lut_csv(std::string_view text, int grid_count);
void save_lut(const LookupTable& lut, const std::filesystem::path& path);
LookupTable load_lut(const std::filesystem::path& path, int grid_count);

/// Which stage-1 center feeds the regressor.
enum class CenterSource { Selected, Estimated };

struct DenoiserOptions {
    std::vector<int> hidden = {64, 64};
    nn::TrainConfig train;
    CenterSource center_source = CenterSource::Selected;
    /// Replace the x-center by its grid midpoint before regression, so the network
    /// estimates the per-grid position that evaluation scores against.
    bool snap_to_grid = true;
    int grid_count = 100;
};

struct DenoiserModel {
    nn::MlpModel mlp;
    bool snap_to_grid = true;
    int grid_count = 100;
    CenterSource center_source = CenterSource::Selected;
};

/// Network input for one stage-1 center.
Eigen::Vector2d denoiser_input(const txid::Point2& center, bool snap_to_grid, int grid_count);

/// The center of `prediction` that the options select.
txid::Point2 chosen_center(const txid::TxPrediction& prediction, CenterSource source);

/// Regresses noisy lat/lon from the stage-1 center of every training sample.
/// Throws ValidationError naming a sample that lacks a noisy position.
DenoiserModel train_denoiser(const DatasetBundle& train_bundle,
                             std::span<const txid::TxPrediction> predictions,
                             const DenoiserOptions& options);

/// Forward pass plus target denormalization back to degrees.
geo::GeoPosition mlp_predict(const DenoiserModel& model, const txid::Point2& center);

}  // namespace beamfix::denoise
