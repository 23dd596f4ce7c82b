// SPDX-License-Identifier: Apache-2.0
#include "beamfix/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "beamfix/csv.hpp"

namespace beamfix::grid {

int assign_grid(double x_center, int grid_count) {
    if (grid_count < 1) throw ValidationError("grid count must be >= 1");
    if (!(x_center >= 0.0 && x_center <= 1.0)) {
        std::ostringstream os;
        os << "x-center " << x_center << " outside [0, 1]";
        throw ValidationError(os.str());
    }
    const double z = grid_count;
    int g = static_cast<int>(std::floor(z * x_center));
    g = std::clamp(g, 0, grid_count - 1);
    // floor(Z*x) can disagree with the boundary test g/Z <= x < (g+1)/Z by one ulp.
    while (g > 0 && x_center < g / z) --g;
    while (g < grid_count - 1 && x_center >= (g + 1) / z) ++g;
    return g;
}

double grid_center(int grid, int grid_count) { return (grid + 0.5) / grid_count; }

std::size_t GridTable::populated_count() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const GridCell& c) { return c.populated(); }));
}

std::size_t GridTable::total_count() const {
    std::size_t n = 0;
    for (const GridCell& c : cells) n += c.count;
    return n;
}

int GridTable::nearest_populated(int grid) const {
    if (grid >= 0 && grid < grid_count && cells[static_cast<std::size_t>(grid)].populated()) {
        return grid;
    }
    for (int d = 1; d < grid_count; ++d) {
        const int lo = grid - d;
        const int hi = grid + d;
        if (lo >= 0 && lo < grid_count && cells[static_cast<std::size_t>(lo)].populated()) return lo;
        if (hi >= 0 && hi < grid_count && cells[static_cast<std::size_t>(hi)].populated()) return hi;
    }
    throw RuntimeFailure("grid table has no populated grid");
}

std::vector<GridPoint> grid_points(std::span<const Sample> samples, PositionSelector selector) {
    std::vector<GridPoint> points;
    points.reserve(samples.size());
    for (const Sample& s : samples) {
        GridPoint p;
        p.x_center = s.transmitter().x_center;
        if (selector == PositionSelector::GroundTruth) {
            p.position = s.gt_position;
        } else {
            if (!s.noisy_position) {
                throw ValidationError("sample " + std::to_string(s.id) + " has no noisy position");
            }
            p.position = *s.noisy_position;
        }
        points.push_back(p);
    }
    return points;
}

namespace {

std::vector<std::vector<geo::GeoPosition>> group_sorted(std::span<const GridPoint> points,
                                                        int grid_count) {
    std::vector<std::vector<geo::GeoPosition>> groups(static_cast<std::size_t>(grid_count));
    for (const GridPoint& p : points) {
        groups[static_cast<std::size_t>(assign_grid(p.x_center, grid_count))].push_back(p.position);
    }
    // Canonical order makes every floating-point sum independent of input order.
    for (auto& g : groups) {
        std::sort(g.begin(), g.end(), [](const geo::GeoPosition& a, const geo::GeoPosition& b) {
            return a.lat_deg != b.lat_deg ? a.lat_deg < b.lat_deg : a.lon_deg < b.lon_deg;
        });
    }
    return groups;
}

geo::GeoPosition mean_of(const std::vector<geo::GeoPosition>& g) {
    double lat = 0.0;
    double lon = 0.0;
    for (const auto& p : g) {
        lat += p.lat_deg;
        lon += p.lon_deg;
    }
    const double n = static_cast<double>(g.size());
    return {lat / n, lon / n};
}

}  // namespace

GridTable build_grid_table(std::span<const GridPoint> points, int grid_count) {
    if (grid_count < 1) throw ValidationError("grid count must be >= 1");
    const auto groups = group_sorted(points, grid_count);
    GridTable table;
    table.grid_count = grid_count;
    table.cells.resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& members = groups[g];
        if (members.empty()) continue;
        GridCell& cell = table.cells[g];
        cell.count = members.size();
        cell.mean_position = mean_of(members);
        double sum = 0.0;
        for (const auto& p : members) sum += geo::haversine_distance(cell.mean_position, p);
        cell.avg_displacement_m = sum / static_cast<double>(members.size());
    }
    return table;
}

GridTable build_grid_table(std::span<const Sample> samples, PositionSelector selector,
                           int grid_count) {
    const auto points = grid_points(samples, selector);
    return build_grid_table(points, grid_count);
}

std::vector<double> per_sample_displacements(std::span<const GridPoint> points, int grid_count) {
    const GridTable table = build_grid_table(points, grid_count);
    std::vector<double> out;
    out.reserve(points.size());
    for (const GridPoint& p : points) {
        const auto& cell = table.cells[static_cast<std::size_t>(assign_grid(p.x_center, grid_count))];
        out.push_back(geo::haversine_distance(cell.mean_position, p.position));
    }
    return out;
}

std::size_t Histogram::total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

std::size_t Histogram::nonzero_bins() const {
    return static_cast<std::size_t>(
        std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
}

Histogram make_histogram(std::span<const double> values, double bin_width_m) {
    if (!(bin_width_m > 0.0) || !std::isfinite(bin_width_m)) {
        throw ValidationError("histogram bin width must be positive");
    }
    Histogram h;
    h.bin_width_m = bin_width_m;
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ValidationError("histogram values must be finite and nonnegative");
        }
        const auto bin = static_cast<std::size_t>(std::floor(v / bin_width_m));
        if (bin >= h.counts.size()) h.counts.resize(bin + 1, 0);
        ++h.counts[bin];
    }
    return h;
}

Histogram displacement_histogram(const GridTable& table, double bin_width_m) {
    std::vector<double> values;
    for (const GridCell& c : table.cells) {
        if (c.populated()) values.push_back(c.avg_displacement_m);
    }
    if (values.empty()) throw ValidationError("displacement histogram needs a populated grid");
    return make_histogram(values, bin_width_m);
}

double GaussianFit::evaluate(double x) const {
    const double z = (x - mean_m) / sigma_m;
    return amplitude * std::exp(-0.5 * z * z);
}

namespace {

struct Curve {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
};

double sse_at(const Curve& c, const Eigen::Vector3d& p, Eigen::VectorXd* residual = nullptr) {
    const Eigen::Index n = c.x.size();
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z = (c.x[i] - p[1]) / p[2];
        r[i] = c.y[i] - p[0] * std::exp(-0.5 * z * z);
    }
    if (residual) *residual = r;
    return r.squaredNorm();
}

Eigen::MatrixXd jacobian_at(const Curve& c, const Eigen::Vector3d& p) {
    const Eigen::Index n = c.x.size();
    Eigen::MatrixXd j(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = c.x[i] - p[1];
        const double z = d / p[2];
        const double e = std::exp(-0.5 * z * z);
        j(i, 0) = e;
        j(i, 1) = p[0] * e * d / (p[2] * p[2]);
        j(i, 2) = p[0] * e * d * d / (p[2] * p[2] * p[2]);
    }
    return j;
}

}  // namespace

GaussianFit fit_gaussian(const Histogram& histogram) {
    GaussianFit fit;
    fit.bin_width_m = histogram.bin_width_m;
    fit.bin_counts = histogram.counts;

    const std::size_t nonzero = histogram.nonzero_bins();
    if (nonzero <= 1) throw FitError("degenerate histogram: all mass in one bin", fit);
    if (nonzero < 4) {
        throw FitError("Gaussian fit needs at least 4 nonzero bins, got " + std::to_string(nonzero),
                       fit);
    }
    const std::size_t n_bins = histogram.counts.size();
    if (n_bins < 5) throw FitError("Gaussian fit needs at least 5 bins for adjusted R^2", fit);

    Curve curve{Eigen::VectorXd(static_cast<Eigen::Index>(n_bins)),
                Eigen::VectorXd(static_cast<Eigen::Index>(n_bins))};
    double weight = 0.0;
    double wx = 0.0;
    double max_count = 0.0;
    for (std::size_t i = 0; i < n_bins; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        curve.x[ii] = histogram.bin_center(i);
        curve.y[ii] = static_cast<double>(histogram.counts[i]);
        weight += curve.y[ii];
        wx += curve.y[ii] * curve.x[ii];
        max_count = std::max(max_count, curve.y[ii]);
    }
    const double mu0 = wx / weight;
    double wvar = 0.0;
    for (Eigen::Index i = 0; i < curve.x.size(); ++i) {
        wvar += curve.y[i] * (curve.x[i] - mu0) * (curve.x[i] - mu0);
    }
    const double sigma0 = std::max(std::sqrt(wvar / weight), 0.25 * histogram.bin_width_m);

    const double mean_y = curve.y.mean();
    const double sst = (curve.y.array() - mean_y).square().sum();
    if (sst <= 0.0) throw FitError("degenerate histogram: all bins equal", fit);

    Eigen::Vector3d p(max_count, mu0, sigma0);
    Eigen::VectorXd residual;
    double sse = sse_at(curve, p, &residual);
    double lambda = 1e-3;
    bool converged = false;
    constexpr int kMaxIterations = 200;
    int iter = 0;
    for (; iter < kMaxIterations && !converged; ++iter) {
        const Eigen::MatrixXd j = jacobian_at(curve, p);
        const Eigen::Matrix3d jtj = j.transpose() * j;
        const Eigen::Vector3d jtr = j.transpose() * residual;
        bool accepted = false;
        while (!accepted) {
            Eigen::Matrix3d damped = jtj;
            for (int k = 0; k < 3; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-300);
            const Eigen::Vector3d step = damped.ldlt().solve(jtr);
            const Eigen::Vector3d trial = p + step;
            Eigen::VectorXd trial_residual;
            const double trial_sse = trial[2] != 0.0 && step.allFinite()
                                         ? sse_at(curve, trial, &trial_residual)
                                         : std::numeric_limits<double>::infinity();
            if (std::isfinite(trial_sse) && trial_sse <= sse) {
                const double rel = sse > 0.0 ? (sse - trial_sse) / sse : 0.0;
                p = trial;
                residual = std::move(trial_residual);
                sse = trial_sse;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                fit.sse_history.push_back(sse);
                if (rel < 1e-10 || sse <= 1e-28 * sst) converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e16) {
                    // No descent direction left: p is a stationary point.
                    accepted = true;
                    converged = true;
                }
            }
        }
    }

    fit.amplitude = p[0];
    fit.mean_m = p[1];
    fit.sigma_m = std::abs(p[2]);
    fit.iterations = iter;
    const double n = static_cast<double>(n_bins);
    constexpr double kParams = 3.0;
    fit.r_squared = 1.0 - sse / sst;
    fit.adjusted_r_squared = 1.0 - (1.0 - fit.r_squared) * (n - 1.0) / (n - kParams - 1.0);
    if (!converged) throw FitError("Gaussian fit did not converge in 200 iterations", fit);
    if (!(fit.sigma_m > 0.0)) throw FitError("Gaussian fit collapsed to zero width", fit);
    return fit;
}

std::string format_grid_table_csv(const GridTable& table) {
    std::ostringstream os;
    os << "grid,count,mean_lat,mean_lon,avg_displacement_m\n";
    for (std::size_t g = 0; g < table.cells.size(); ++g) {
        const GridCell& c = table.cells[g];
        if (!c.populated()) continue;
        os << g << ',' << c.count << ',' << csv::format_double(c.mean_position.lat_deg) << ','
           << csv::format_double(c.mean_position.lon_deg) << ','
           << csv::format_double(c.avg_displacement_m) << '\n';
    }
    return os.str();
}

std::string format_histogram_csv(const Histogram& histogram) {
    std::ostringstream os;
    os << "bin_start_m,count\n";
    for (std::size_t i = 0; i < histogram.counts.size(); ++i) {
        os << csv::format_double(histogram.bin_start(i)) << ',' << histogram.counts[i] << '\n';
    }
    return os.str();
}

}  // namespace beamfix::grid
