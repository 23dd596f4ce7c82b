// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include <json.hpp>

#include "beamfix/csv.hpp"
#include "beamfix/denoise.hpp"
#include "beamfix/error.hpp"
#include "beamfix/eval.hpp"
#include "test_util.hpp"

using namespace beamfix;
using namespace beamfix::eval;

namespace {

const geo::GeoPosition kCenter{33.42, -111.929};

std::vector<double> labeled_x(const DatasetBundle& b) { return evaluation_x(b.samples, {}); }

grid::GridTable gt_anchor(const DatasetBundle& b) {
    return grid::build_grid_table(b.samples, grid::PositionSelector::GroundTruth, 100);
}

MethodPredictions noisy_of(const DatasetBundle& b) {
    MethodPredictions mp{Method::Noisy, {}};
    for (const auto& s : b.samples) mp.positions.push_back(*s.noisy_position);
    return mp;
}

MethodPredictions lut_of(const denoise::LookupTable& lut, const DatasetBundle& b) {
    MethodPredictions mp{Method::Lut, {}};
    for (const auto& s : b.samples) mp.positions.push_back(denoise::lut_predict(lut, s.transmitter().x_center));
    return mp;
}

// Independent aggregation: grid -> list of errors, equal-weight mean over grids.
double oracle_overall(const DatasetBundle& b, const grid::GridTable& anchor, const MethodPredictions& mp) {
    std::map<int, std::pair<double, int>> acc;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const int g = grid::assign_grid(b.samples[i].transmitter().x_center, 100);
        auto& [sum, n] = acc[g];
        sum += geo::haversine_distance(anchor.cells[static_cast<std::size_t>(g)].mean_position, mp.positions[i]);
        ++n;
    }
    double total = 0.0;
    for (const auto& [g, v] : acc) total += v.first / v.second;
    return total / static_cast<double>(acc.size());
}

}  // namespace

TEST(PerGridError, ExactAnchorPredictionsScoreZero) {
    const auto b = fixture::synthetic(500);
    const auto anchor = gt_anchor(b);
    MethodPredictions exact{Method::Lut, {}};
    for (const auto& s : b.samples) {
        exact.positions.push_back(
            anchor.cells[static_cast<std::size_t>(grid::assign_grid(s.transmitter().x_center, 100))].mean_position);
    }
    const std::vector<MethodPredictions> preds{exact};
    const auto r = per_grid_error(labeled_x(b), preds, anchor);
    EXPECT_EQ(r.overall(Method::Lut), 0.0);
    EXPECT_EQ(r.flagged_samples, 0u);
    EXPECT_THROW(r.overall(Method::Mlp), ValidationError);
}

TEST(PerGridError, NoisyBaselineAtOneMeter) {
    const auto b = inject_noise(fixture::synthetic(3000), {1.0, 5});
    const auto anchor = gt_anchor(b);
    const std::vector<MethodPredictions> preds{noisy_of(b)};
    const double overall = per_grid_error(labeled_x(b), preds, anchor).overall(Method::Noisy);
    EXPECT_NEAR(overall, oracle_overall(b, anchor, preds[0]), 1e-9);
    // A 2-D Gaussian at RMS r has mean radius r*sqrt(pi)/2; the within-grid spread of the
    // trajectory adds a little on top.
    const double rayleigh_mean = std::sqrt(M_PI) / 2.0;
    EXPECT_GE(overall, rayleigh_mean * 0.95);
    EXPECT_LE(overall, rayleigh_mean * 1.10);
}

TEST(PerGridError, NoisyBaselineTracksRayleighMean) {
    // With zero within-grid spread the error is purely the injected radial noise.
    DatasetBundle clean;
    for (int i = 0; i < 4000; ++i) {
        clean.samples.push_back(fixture::make_sample(i, (i % 50) / 50.0 + 0.01, kCenter, kCenter));
    }
    for (double rms : {0.5, 1.0, 2.0}) {
        const auto b = inject_noise(clean, {rms, 8});
        const std::vector<MethodPredictions> preds{noisy_of(b)};
        const double overall = per_grid_error(labeled_x(b), preds, gt_anchor(b)).overall(Method::Noisy);
        const double rayleigh_mean = rms * std::sqrt(M_PI) / 2.0;
        EXPECT_NEAR(overall / rayleigh_mean, 1.0, 0.05) << rms;
    }
}

TEST(PerGridError, LutAtHalfMeterWithDenseGrids) {
    const auto full = inject_noise(fixture::synthetic(3000, Direction::LeftToRight, 0.0, 3), {0.5, 6});
    const auto [train, test] = split_train_test(full, 0.7, 1);
    const auto lut = denoise::build_lut(train, 100);
    const std::vector<MethodPredictions> preds{noisy_of(test), lut_of(lut, test)};
    const auto r = per_grid_error(labeled_x(test), preds, gt_anchor(full));
    EXPECT_LE(r.overall(Method::Lut), 0.35);
    EXPECT_LT(r.overall(Method::Lut), r.overall(Method::Noisy));
    EXPECT_NEAR(r.overall(Method::Lut), oracle_overall(test, gt_anchor(full), preds[1]), 1e-9);
}

TEST(PerGridError, NoiseFreeLutFromAllSamplesIsExact) {
    const auto b = inject_noise(fixture::synthetic(800), {0.0, 1});
    const auto lut = denoise::build_lut(b, 100);
    const std::vector<MethodPredictions> preds{noisy_of(b), lut_of(lut, b)};
    const auto r = per_grid_error(labeled_x(b), preds, gt_anchor(b));
    EXPECT_LT(r.overall(Method::Lut), 1e-6);
    // The raw baseline keeps only the within-grid spread of the trajectory.
    EXPECT_NEAR(r.overall(Method::Noisy), oracle_overall(b, gt_anchor(b), preds[0]), 1e-9);
    EXPECT_LT(r.overall(Method::Noisy), 0.2);
}

TEST(PerGridError, MissingAnchorGridIsFlagged) {
    DatasetBundle anchor_set;
    anchor_set.samples.push_back(fixture::make_sample(0, 0.105, kCenter, kCenter));
    anchor_set.samples.push_back(fixture::make_sample(1, 0.705, kCenter, kCenter));
    const std::vector<double> xs{0.105, 0.205, 0.655};
    const std::vector<MethodPredictions> preds{{Method::Noisy, {kCenter, kCenter, kCenter}}};
    const auto r = per_grid_error(xs, preds, gt_anchor(anchor_set));
    EXPECT_EQ(r.flagged_samples, 2u);
    ASSERT_EQ(r.grids.size(), 2u);
    EXPECT_EQ(r.grids[0].grid, 10);
    EXPECT_EQ(r.grids[0].count, 2u);
    EXPECT_EQ(r.grids[1].grid, 70);
    EXPECT_THROW(per_grid_error(xs, std::vector<MethodPredictions>{{Method::Noisy, {kCenter}}},
                                gt_anchor(anchor_set)),
                 ValidationError);
}

TEST(PerGridError, DeterministicAndPermutationInvariant) {
    auto b = inject_noise(fixture::synthetic(600), {0.5, 3});
    const auto anchor = gt_anchor(b);
    const std::vector<MethodPredictions> preds{noisy_of(b)};
    const auto r1 = per_grid_error(labeled_x(b), preds, anchor);
    const auto r2 = per_grid_error(labeled_x(b), preds, anchor);
    EXPECT_EQ(r1.overall_m, r2.overall_m);
    Rng rng(4);
    rng.shuffle(std::span<Sample>(b.samples));
    const std::vector<MethodPredictions> shuffled{noisy_of(b)};
    const auto r3 = per_grid_error(labeled_x(b), shuffled, anchor);
    ASSERT_EQ(r1.grids.size(), r3.grids.size());
    for (std::size_t i = 0; i < r1.grids.size(); ++i) EXPECT_EQ(r1.grids[i].mean_error_m, r3.grids[i].mean_error_m);
    EXPECT_EQ(r1.overall_m, r3.overall_m);
}

TEST(CompareMethods, NoisyBaselineIsMonotoneInNoise) {
    const auto clean = fixture::synthetic(2000);
    const auto anchor = gt_anchor(clean);
    std::vector<EvalReport> reports;
    for (double rms : {0.0, 0.1, 0.5, 1.0, 2.0, 3.0}) {
        const auto b = inject_noise(clean, {rms, 12});
        const std::vector<MethodPredictions> preds{noisy_of(b), lut_of(denoise::build_lut(b, 100), b)};
        auto r = per_grid_error(labeled_x(b), preds, anchor);
        r.noise_level_m = rms;
        r.tag = "l2r";
        reports.push_back(r);
    }
    const auto table = compare_methods(reports);
    ASSERT_EQ(table.rows.size(), 6u);
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        EXPECT_GT(table.rows[i].overall_m[0], table.rows[i - 1].overall_m[0]);
    }
    const auto csv_text = format_comparison_csv(table);
    EXPECT_EQ(csv_text.substr(0, csv_text.find('\n')), "tag,noise_rms_m,noisy_m,lut_m");
    const auto j = nlohmann::json::parse(comparison_json(table));
    EXPECT_EQ(j["rows"].size(), 6u);
    EXPECT_DOUBLE_EQ(j["rows"][3]["noisy_m"].get<double>(), table.rows[3].overall_m[0]);
    EXPECT_NE(format_comparison_text(table).find("lut [m]"), std::string::npos);

    reports.back().methods = {Method::Noisy};
    EXPECT_THROW(compare_methods(reports), ValidationError);
}

TEST(ExportPlotData, FilesParseAndOverallIsRecomputable) {
    const auto dir = fixture::scratch_dir("export");
    const auto b = inject_noise(fixture::synthetic(400), {0.5, 3});
    const auto lut = denoise::build_lut(b, 100);
    const std::vector<MethodPredictions> preds{noisy_of(b), lut_of(lut, b)};
    const auto r = per_grid_error(labeled_x(b), preds, gt_anchor(b));
    const std::string prefix = (dir / "l2r_0.5_").string();
    export_plot_data(r, b, preds, prefix);

    const auto pos = csv::read_lines(prefix + "positions.csv");
    ASSERT_EQ(pos.size(), 1 + b.size() * 3);
    EXPECT_EQ(pos[0], "sample_id,kind,lat,lon");
    std::map<std::string, std::size_t> kinds;
    for (std::size_t i = 1; i < pos.size(); ++i) {
        const auto f = csv::split_line(pos[i]);
        ASSERT_EQ(f.size(), 4u);
        csv::parse_int(f[0], "sample_id");
        csv::parse_double(f[2], "lat");
        csv::parse_double(f[3], "lon");
        ++kinds[f[1]];
    }
    EXPECT_EQ(kinds["gt"], b.size());
    EXPECT_EQ(kinds["noisy"], b.size());
    EXPECT_EQ(kinds["denoised_lut"], b.size());

    const auto pergrid = csv::read_lines(prefix + "pergrid.csv");
    ASSERT_EQ(pergrid.size(), 1 + r.grids.size());
    EXPECT_EQ(pergrid[0], "grid,count,noisy_m,lut_m");
    for (std::size_t m = 0; m < 2; ++m) {
        double sum = 0.0;
        for (std::size_t i = 1; i < pergrid.size(); ++i) {
            sum += csv::parse_double(csv::split_line(pergrid[i])[2 + m], "error");
        }
        EXPECT_EQ(sum / static_cast<double>(pergrid.size() - 1), r.overall_m[m]);
    }

    const auto hist = csv::read_lines(prefix + "histogram.csv");
    ASSERT_GE(hist.size(), 2u);
    std::int64_t total = 0;
    for (std::size_t i = 1; i < hist.size(); ++i) total += csv::parse_int(csv::split_line(hist[i])[1], "count");
    // One displacement per populated grid.
    const auto noisy_table = grid::build_grid_table(b.samples, grid::PositionSelector::Noisy, 100);
    EXPECT_EQ(total, static_cast<std::int64_t>(noisy_table.populated_count()));

    const auto j = nlohmann::json::parse(report_json(r));
    EXPECT_EQ(j["populated_grids"].get<std::size_t>(), r.grids.size());
}

TEST(ExportPlotData, ThreeGridReportHasThreeRows) {
    const auto dir = fixture::scratch_dir("export3");
    DatasetBundle b;
    for (int i = 0; i < 6; ++i) b.samples.push_back(fixture::make_sample(i, 0.2 + 0.3 * (i % 3), kCenter, kCenter));
    const std::vector<MethodPredictions> preds{noisy_of(b)};
    const auto r = per_grid_error(labeled_x(b), preds, gt_anchor(b));
    export_plot_data(r, b, preds, (dir / "x_").string());
    EXPECT_EQ(csv::read_lines(dir / "x_pergrid.csv").size(), 4u);
    EXPECT_EQ(csv::read_lines(dir / "x_positions.csv").size(), 1u + 12u);
    csv::write_file(dir / "blocker", "");
    try {
        export_plot_data(r, b, preds, (dir / "blocker" / "x_").string());
        FAIL();
    } catch (const RuntimeFailure& e) {
        EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos) << e.what();
    }
}
