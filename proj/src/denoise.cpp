// SPDX-License-Identifier: Apache-2.0
#include "beamfix/denoise.hpp"

#include <sstream>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"

namespace beamfix::denoise {

std::size_t LookupTable::populated_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.has_value() ? 1 : 0;
    return n;
}

LookupTable build_lut(std::span<const grid::GridPoint> points, int grid_count) {
    if (points.empty()) throw ValidationError("cannot build a lookup table from an empty training set");
    const grid::GridTable table = grid::build_grid_table(points, grid_count);
    LookupTable lut;
    lut.grid_count = grid_count;
    lut.entries.resize(table.cells.size());
    for (std::size_t g = 0; g < table.cells.size(); ++g) {
        const grid::GridCell& c = table.cells[g];
        if (c.populated()) lut.entries[g] = LutEntry{c.count, c.mean_position};
    }
    return lut;
}

LookupTable build_lut(const DatasetBundle& train_bundle, int grid_count) {
    if (train_bundle.empty()) {
        throw ValidationError("cannot build a lookup table from an empty training set");
    }
    const auto points = grid::grid_points(train_bundle.samples, grid::PositionSelector::Noisy);
    return build_lut(points, grid_count);
}

geo::GeoPosition lut_predict(const LookupTable& lut, double x_center) {
    const int g = grid::assign_grid(x_center, lut.grid_count);
    if (lut.entries[static_cast<std::size_t>(g)]) return lut.entries[static_cast<std::size_t>(g)]->mean_position;
    for (int d = 1; d < lut.grid_count; ++d) {
        for (int cand : {g - d, g + d}) {
            if (cand >= 0 && cand < lut.grid_count && lut.entries[static_cast<std::size_t>(cand)]) {
                return lut.entries[static_cast<std::size_t>(cand)]->mean_position;
            }
        }
    }
    throw RuntimeFailure("lookup table has no populated grid");
}

std::string format_lut_csv(const LookupTable& lut) {
    std::ostringstream os;
    os << "grid,count,mean_lat,mean_lon\n";
    for (std::size_t g = 0; g < lut.entries.size(); ++g) {
        if (!lut.entries[g]) continue;
        os << g << ',' << lut.entries[g]->count << ','
           << csv::format_double(lut.entries[g]->mean_position.lat_deg) << ','
           << csv::format_double(lut.entries[g]->mean_position.lon_deg) << '\n';
    }
    return os.str();
}

LookupTable parse_lut_csv(std::string_view text, int grid_count) {
    if (grid_count < 1) throw ValidationError("grid count must be >= 1");
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("grid,count,mean_lat,mean_lon", 0) != 0) {
        throw ValidationError("lookup table: missing 'grid,count,mean_lat,mean_lon' header");
    }
    LookupTable lut;
    lut.grid_count = grid_count;
    lut.entries.resize(static_cast<std::size_t>(grid_count));
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = csv::split_line(line);
        const std::string where = "lookup table row " + std::to_string(row);
        if (f.size() != 4) throw ValidationError(where + ": expected 4 fields");
        const auto g = csv::parse_int(f[0], where + " grid");
        const auto count = csv::parse_int(f[1], where + " count");
        if (g < 0 || g >= grid_count) throw ValidationError(where + ": grid index out of range");
        if (count < 1) throw ValidationError(where + ": populated grids need count >= 1");
        if (lut.entries[static_cast<std::size_t>(g)]) throw ValidationError(where + ": duplicate grid");
        LutEntry e{static_cast<std::size_t>(count),
                   {csv::parse_double(f[2], where + " mean_lat"),
                    csv::parse_double(f[3], where + " mean_lon")}};
        geo::validate(e.mean_position);
        lut.entries[static_cast<std::size_t>(g)] = e;
    }
    return lut;
}

void save_lut(const LookupTable& lut, const std::filesystem::path& path) {
    csv::write_file(path, format_lut_csv(lut));
}

LookupTable load_lut(const std::filesystem::path& path, int grid_count) {
    try {
        return parse_lut_csv(csv::read_file(path), grid_count);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

Eigen::Vector2d denoiser_input(const txid::Point2& center, bool snap_to_grid, int grid_count) {
    const double x = snap_to_grid
                         ? grid::grid_center(grid::assign_grid(center.x, grid_count), grid_count)
                         : center.x;
    return {x, center.y};
}

txid::Point2 chosen_center(const txid::TxPrediction& prediction, CenterSource source) {
    return source == CenterSource::Selected ? prediction.selected_center
                                            : prediction.estimated_center;
}

DenoiserModel train_denoiser(const DatasetBundle& train_bundle,
                             std::span<const txid::TxPrediction> predictions,
                             const DenoiserOptions& options) {
    if (train_bundle.empty()) throw ValidationError("denoiser: empty training set");
    if (predictions.size() != train_bundle.size()) {
        throw ValidationError("denoiser: need one stage-1 prediction per training sample");
    }
    const auto n = static_cast<Eigen::Index>(train_bundle.size());
    Eigen::MatrixXd inputs(2, n);
    Eigen::MatrixXd targets(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Sample& s = train_bundle.samples[static_cast<std::size_t>(i)];
        if (!s.noisy_position) {
            throw ValidationError("denoiser: sample " + std::to_string(s.id) +
                                  " has no noisy position");
        }
        inputs.col(i) = denoiser_input(
            chosen_center(predictions[static_cast<std::size_t>(i)], options.center_source),
            options.snap_to_grid, options.grid_count);
        targets(0, i) = s.noisy_position->lat_deg;
        targets(1, i) = s.noisy_position->lon_deg;
    }

    // Scale floors: 1% of the image for inputs, 1 m for the position targets, so that a
    // degenerate (constant) coordinate never amplifies network error.
    const double mean_lat = targets.row(0).mean();
    const Eigen::Vector2d target_floor(1.0 / geo::meters_per_deg_lat(),
                                       1.0 / geo::meters_per_deg_lon(mean_lat));
    const nn::Normalizer norm =
        nn::Normalizer::fit(inputs, targets, Eigen::Vector2d(0.01, 0.01), target_floor);

    std::vector<int> dims{2};
    dims.insert(dims.end(), options.hidden.begin(), options.hidden.end());
    dims.push_back(2);
    const nn::MlpModel init =
        nn::MlpModel::random(dims, options.train.seed, options.train.weight_init_scale);

    DenoiserModel model;
    model.mlp = nn::train(init, inputs, targets, options.train, norm).model;
    model.snap_to_grid = options.snap_to_grid;
    model.grid_count = options.grid_count;
    model.center_source = options.center_source;
    return model;
}

geo::GeoPosition mlp_predict(const DenoiserModel& model, const txid::Point2& center) {
    if (model.mlp.input_dim() != 2 || model.mlp.output_dim() != 2) {
        throw ValidationError("denoiser network must map 2 inputs to 2 outputs");
    }
    const Eigen::VectorXd out =
        model.mlp.predict(denoiser_input(center, model.snap_to_grid, model.grid_count));
    return {out[0], out[1]};
}

}  // namespace beamfix::denoise
