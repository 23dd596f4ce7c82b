// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "beamfix/dataset.hpp"
#include "beamfix/error.hpp"
#include "beamfix/geo.hpp"

namespace beamfix::grid {

/// Grid index of a normalized x-center: the gamma with gamma/Z <= x < (gamma+1)/Z,
/// with x = 1 clamped into the last grid. Throws ValidationError for x outside [0, 1]
/// or Z < 1.
int assign_grid(double x_center, int grid_count);

/// Normalized x-center of a grid's midpoint.
double grid_center(int grid, int grid_count);

/// A position tagged with the x-center that decides its grid.
struct GridPoint {
    double x_center = 0.0;
    geo::GeoPosition position;
};

struct GridCell {
    std::size_t count = 0;
    geo::GeoPosition mean_position;  ///< arithmetic mean of lat and lon, degrees
    double avg_displacement_m = 0.0; ///< mean haversine distance to mean_position

    bool populated() const { return count > 0; }
};

struct GridTable {
    int grid_count = 0;
    std::vector<GridCell> cells;  ///< one per grid; empty cells have count == 0

    std::size_t populated_count() const;
    std::size_t total_count() const;
    /// Populated grid closest in index to `grid`, ties to the lower index.
    /// Throws RuntimeFailure when nothing is populated.
    int nearest_populated(int grid) const;
};

enum class PositionSelector { GroundTruth, Noisy };

/// Points for every sample: labeled TX x-center plus the selected position.
std::vector<GridPoint> grid_points(std::span<const Sample> samples, PositionSelector selector);

/// Per-grid count, mean position and average displacement. Results do not depend on the
/// order of `points`.
GridTable build_grid_table(std::span<const GridPoint> points, int grid_count);
GridTable build_grid_table(std::span<const Sample> samples, PositionSelector selector,
                           int grid_count);

/// Distance of every point to its grid mean (the per-sample counterpart of d_gamma).
std::vector<double> per_sample_displacements(std::span<const GridPoint> points, int grid_count);

struct Histogram {
    double bin_width_m = 0.05;
    std::vector<std::size_t> counts;  ///< bin i covers [i*w, (i+1)*w)

    double bin_start(std::size_t i) const { return static_cast<double>(i) * bin_width_m; }
    double bin_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_width_m; }
    std::size_t total() const;
    std::size_t nonzero_bins() const;
};

/// Bins nonnegative values starting at 0.
Histogram make_histogram(std::span<const double> values, double bin_width_m);

/// Histogram of d_gamma over populated grids.
Histogram displacement_histogram(const GridTable& table, double bin_width_m);

/// A * exp(-(x - mean)^2 / (2 sigma^2)) fitted to a histogram's bin centers and counts.
struct GaussianFit {
    double amplitude = 0.0;
    double mean_m = 0.0;
    double sigma_m = 0.0;
    double r_squared = 0.0;
    double adjusted_r_squared = 0.0;
    double bin_width_m = 0.0;
    std::vector<std::size_t> bin_counts;
    int iterations = 0;
    std::vector<double> sse_history;  ///< SSE after each accepted iteration

    double evaluate(double x) const;
};

/// Raised when the fit cannot be computed; carries the last iterate when one exists.
class FitError : public RuntimeFailure {
public:
    FitError(const std::string& what, GaussianFit last) : RuntimeFailure(what), last_(std::move(last)) {}
    const GaussianFit& last_iterate() const { return last_; }

private:
    GaussianFit last_;
};

/// Damped Gauss-Newton (Levenberg-Marquardt) least squares with moment initialization.
/// Converges when the relative SSE change drops below 1e-10; gives up after 200
/// iterations. Requires at least 4 nonzero bins and 5 bins overall (the adjusted R^2
/// with 3 parameters needs n - 4 > 0).
GaussianFit fit_gaussian(const Histogram& histogram);

std::string format_grid_table_csv(const GridTable& table);
std::string format_histogram_csv(const Histogram& histogram);

}  // namespace beamfix::grid
