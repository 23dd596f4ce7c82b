// SPDX-License-Identifier: Apache-2.0
#include "beamfix/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"

namespace beamfix::eval {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::Noisy: return "noisy";
        case Method::Lut: return "lut";
        case Method::Mlp: return "mlp";
    }
    return "?";
}

double EvalReport::overall(Method m) const {
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (methods[i] == m) return overall_m[i];
    }
    throw ValidationError("method '" + std::string(to_string(m)) + "' was not evaluated");
}

std::vector<double> evaluation_x(std::span<const Sample> samples,
                                 std::span<const txid::TxPrediction> predictions) {
    if (!predictions.empty() && predictions.size() != samples.size()) {
        throw ValidationError("prediction count does not match sample count");
    }
    std::vector<double> xs;
    xs.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (const auto tx = samples[i].transmitter_index()) {
            xs.push_back(samples[i].detections[*tx].x_center);
        } else if (!predictions.empty()) {
            xs.push_back(predictions[i].selected_center.x);
        } else {
            throw ValidationError("sample " + std::to_string(samples[i].id) +
                                  " has neither a TX label nor a stage-1 prediction");
        }
    }
    return xs;
}

EvalReport per_grid_error(std::span<const double> grid_x,
                          std::span<const MethodPredictions> predictions,
                          const grid::GridTable& gt_anchor) {
    if (gt_anchor.populated_count() == 0) throw ValidationError("anchor table is empty");
    EvalReport report;
    report.grid_count = gt_anchor.grid_count;
    for (const auto& mp : predictions) {
        if (mp.positions.size() != grid_x.size()) {
            throw ValidationError("method '" + std::string(to_string(mp.method)) +
                                  "' does not cover every evaluated sample");
        }
        report.methods.push_back(mp.method);
    }

    const auto z = static_cast<std::size_t>(gt_anchor.grid_count);
    // errors[grid][method] -> per-sample errors
    std::vector<std::vector<std::vector<double>>> errors(
        z, std::vector<std::vector<double>>(predictions.size()));
    for (std::size_t i = 0; i < grid_x.size(); ++i) {
        const int own = grid::assign_grid(grid_x[i], gt_anchor.grid_count);
        const int g = gt_anchor.nearest_populated(own);
        if (g != own) ++report.flagged_samples;
        const geo::GeoPosition& anchor = gt_anchor.cells[static_cast<std::size_t>(g)].mean_position;
        for (std::size_t m = 0; m < predictions.size(); ++m) {
            errors[static_cast<std::size_t>(g)][m].push_back(
                geo::haversine_distance(anchor, predictions[m].positions[i]));
        }
    }

    report.overall_m.assign(predictions.size(), 0.0);
    for (std::size_t g = 0; g < z; ++g) {
        if (predictions.empty() || errors[g][0].empty()) continue;
        GridErrorRow row;
        row.grid = static_cast<int>(g);
        row.count = errors[g][0].size();
        for (auto& e : errors[g]) {
            // Sorted summation keeps the mean independent of sample order.
            std::sort(e.begin(), e.end());
            double sum = 0.0;
            for (double v : e) sum += v;
            row.mean_error_m.push_back(sum / static_cast<double>(e.size()));
        }
        report.grids.push_back(std::move(row));
    }
    for (std::size_t m = 0; m < predictions.size(); ++m) {
        double sum = 0.0;
        for (const auto& row : report.grids) sum += row.mean_error_m[m];
        report.overall_m[m] = report.grids.empty() ? 0.0 : sum / static_cast<double>(report.grids.size());
    }
    return report;
}

ComparisonTable compare_methods(std::span<const EvalReport> reports) {
    ComparisonTable table;
    if (reports.empty()) return table;
    table.methods = reports.front().methods;
    for (const EvalReport& r : reports) {
        if (r.methods != table.methods) {
            throw ValidationError("reports evaluate different method sets");
        }
        table.rows.push_back({r.noise_level_m, r.tag, r.overall_m});
    }
    return table;
}

std::string format_comparison_csv(const ComparisonTable& table) {
    std::ostringstream os;
    os << "tag,noise_rms_m";
    for (Method m : table.methods) os << ',' << to_string(m) << "_m";
    os << '\n';
    for (const auto& row : table.rows) {
        os << row.tag << ',' << csv::format_double(row.noise_level_m);
        for (double v : row.overall_m) os << ',' << csv::format_double(v);
        os << '\n';
    }
    return os.str();
}

std::string format_comparison_text(const ComparisonTable& table) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "dataset" << std::right << std::setw(10) << "rms [m]";
    for (Method m : table.methods) os << std::setw(12) << (std::string(to_string(m)) + " [m]");
    os << '\n';
    os << std::fixed;
    for (const auto& row : table.rows) {
        os << std::left << std::setw(12) << row.tag << std::right << std::setw(10)
           << std::setprecision(2) << row.noise_level_m;
        for (double v : row.overall_m) os << std::setw(12) << std::setprecision(4) << v;
        os << '\n';
    }
    return os.str();
}

std::string comparison_json(const ComparisonTable& table) {
    nlohmann::json j;
    j["methods"] = nlohmann::json::array();
    for (Method m : table.methods) j["methods"].push_back(std::string(to_string(m)));
    j["rows"] = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json r{{"tag", row.tag}, {"noise_rms_m", row.noise_level_m}};
        for (std::size_t i = 0; i < table.methods.size(); ++i) {
            r[std::string(to_string(table.methods[i])) + "_m"] = row.overall_m[i];
        }
        j["rows"].push_back(r);
    }
    return j.dump(2) + "\n";
}

std::string format_pergrid_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "grid,count";
    for (Method m : report.methods) os << ',' << to_string(m) << "_m";
    os << '\n';
    for (const auto& row : report.grids) {
        os << row.grid << ',' << row.count;
        for (double v : row.mean_error_m) os << ',' << csv::format_double(v);
        os << '\n';
    }
    return os.str();
}

std::string report_json(const EvalReport& report) {
    nlohmann::json j{{"tag", report.tag},
                     {"noise_rms_m", report.noise_level_m},
                     {"grid_count", report.grid_count},
                     {"populated_grids", report.grids.size()},
                     {"flagged_samples", report.flagged_samples}};
    for (std::size_t i = 0; i < report.methods.size(); ++i) {
        j["overall_m"][std::string(to_string(report.methods[i]))] = report.overall_m[i];
    }
    return j.dump(2) + "\n";
}

void export_plot_data(const EvalReport& report, const DatasetBundle& bundle,
                      std::span<const MethodPredictions> predictions, const std::string& prefix,
                      double bin_width_m) {
    std::ostringstream pos;
    pos << "sample_id,kind,lat,lon\n";
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        const Sample& s = bundle.samples[i];
        pos << s.id << ",gt," << csv::format_double(s.gt_position.lat_deg) << ','
            << csv::format_double(s.gt_position.lon_deg) << '\n';
        for (const auto& mp : predictions) {
            if (mp.positions.size() != bundle.size()) {
                throw ValidationError("predictions do not cover the exported bundle");
            }
            const char* kind = mp.method == Method::Noisy ? "noisy"
                               : mp.method == Method::Lut ? "denoised_lut"
                                                          : "denoised_mlp";
            pos << s.id << ',' << kind << ',' << csv::format_double(mp.positions[i].lat_deg) << ','
                << csv::format_double(mp.positions[i].lon_deg) << '\n';
        }
    }
    csv::write_file(prefix + "positions.csv", pos.str());
    csv::write_file(prefix + "pergrid.csv", format_pergrid_csv(report));

    const bool have_noisy = std::all_of(bundle.samples.begin(), bundle.samples.end(),
                                        [](const Sample& s) { return s.noisy_position.has_value(); });
    const auto table = grid::build_grid_table(
        bundle.samples, have_noisy ? grid::PositionSelector::Noisy : grid::PositionSelector::GroundTruth,
        report.grid_count);
    csv::write_file(prefix + "histogram.csv",
                    grid::format_histogram_csv(grid::displacement_histogram(table, bin_width_m)));
}

}  // namespace beamfix::eval
