// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beamfix/dataset.hpp"
#include "beamfix/grid.hpp"
#include "beamfix/txid.hpp"

namespace beamfix::eval {

enum class Method { Noisy, Lut, Mlp };
std::string_view to_string(Method m);  // "noisy" / "lut" / "mlp"

/// One predicted position per evaluated sample, in sample order.
struct MethodPredictions {
    Method method = Method::Noisy;
    std::vector<geo::GeoPosition> positions;
};

struct GridErrorRow {
    int grid = 0;
    std::size_t count = 0;
    std::vector<double> mean_error_m;  ///< parallel to EvalReport::methods
};

struct EvalReport {
    std::vector<Method> methods;
    std::vector<GridErrorRow> grids;  ///< populated grids only, increasing index
    std::vector<double> overall_m;    ///< unweighted mean of the per-grid means
    std::size_t flagged_samples = 0;  ///< samples whose grid had no anchor
    double noise_level_m = 0.0;
    int grid_count = 0;
    std::string tag;

    /// Overall error for `m`; throws ValidationError if the method was not evaluated.
    double overall(Method m) const;
};

/// x-center that places each sample in a grid: the labeled TX when present, otherwise
/// the stage-1 selection.
std::vector<double> evaluation_x(std::span<const Sample> samples,
                                 std::span<const txid::TxPrediction> predictions);

/// Per sample: haversine(anchor mean of its grid, prediction); averaged per grid, then
/// across populated grids. A sample whose grid has no anchor is scored against the
/// nearest populated anchor grid and counted in flagged_samples.
EvalReport per_grid_error(std::span<const double> grid_x,
                          std::span<const MethodPredictions> predictions,
                          const grid::GridTable& gt_anchor);

/// Overall error per (noise level x method): the matrix behind the comparison figure.
struct ComparisonTable {
    std::vector<Method> methods;
    struct Row {
        double noise_level_m = 0.0;
        std::string tag;
        std::vector<double> overall_m;
    };
    std::vector<Row> rows;
};

ComparisonTable compare_methods(std::span<const EvalReport> reports);

std::string format_comparison_csv(const ComparisonTable& table);
std::string format_comparison_text(const ComparisonTable& table);
std::string comparison_json(const ComparisonTable& table);
std::string format_pergrid_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);

/// Writes <prefix>positions.csv (`sample_id,kind,lat,lon`), <prefix>pergrid.csv and
/// <prefix>histogram.csv (d_gamma of the bundle's noisy positions, `bin_start_m,count`).
/// `prefix` is a path prefix, e.g. "out/l2r_0.5_".
void export_plot_data(const EvalReport& report, const DatasetBundle& bundle,
                      std::span<const MethodPredictions> predictions, const std::string& prefix,
                      double bin_width_m = 0.05);

}  // namespace beamfix::eval
