// SPDX-License-Identifier: Apache-2.0
#include "beamfix/pipeline.hpp"

#include <algorithm>
#include <set>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"
#include "beamfix/grid.hpp"
#include "beamfix/rng.hpp"

namespace beamfix::pipeline {

namespace {

using json = nlohmann::json;

enum SeedStream : std::uint64_t {
    kSplit = 1,
    kNoise = 2,
    kTxid = 3,
    kDenoiser = 4,
    kScenarioBase = 100,
};

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!keys.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
    }
}

geo::GeoPosition position_from_json(const json& j, const std::string& where) {
    reject_unknown(j, {"lat_deg", "lon_deg"}, where);
    geo::GeoPosition p{j.at("lat_deg").get<double>(), j.at("lon_deg").get<double>()};
    geo::validate(p);
    return p;
}

json position_to_json(const geo::GeoPosition& p) {
    return {{"lat_deg", p.lat_deg}, {"lon_deg", p.lon_deg}};
}

void train_config_from_json(const json& j, nn::TrainConfig& c, std::vector<int>& hidden,
                            const std::string& where) {
    if (j.contains("hidden")) hidden = j.at("hidden").get<std::vector<int>>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("weight_init_scale")) c.weight_init_scale = j.at("weight_init_scale").get<double>();
    if (j.contains("final_lr_fraction")) c.final_lr_fraction = j.at("final_lr_fraction").get<double>();
    for (int h : hidden) {
        if (h < 1) throw ValidationError(where + ": hidden widths must be positive");
    }
}

json train_config_to_json(const nn::TrainConfig& c, const std::vector<int>& hidden) {
    return {{"hidden", hidden},           {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},         {"batch_size", c.batch_size},
            {"seed", c.seed},             {"weight_init_scale", c.weight_init_scale},
            {"final_lr_fraction", c.final_lr_fraction}};
}

ScenarioConfig default_scenario(Direction dir, int samples, double lane_distance_m) {
    ScenarioConfig s;
    s.scene = sim::SceneGeometry::with_lane(lane_distance_m);
    s.trajectory.direction = dir;
    s.trajectory.num_samples = samples;
    s.trajectory.num_distractors = 2;
    return s;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, Eigen::Index cols) {
    return m.leftCols(std::min(cols, m.cols()));
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.scenarios.push_back(default_scenario(Direction::LeftToRight, 1353, 14.0));
    // The opposite lane is one lane width (~3.5 m) further from the basestation.
    c.scenarios.push_back(default_scenario(Direction::RightToLeft, 1086, 17.5));
    c.txid.hidden = {64, 64};
    c.txid.train = {1e-3, 60, 32, 0, 1.0, 0.01};
    c.denoiser.hidden = {64, 64};
    c.denoiser.train = {1e-3, 150, 32, 0, 1.0, 0.01};
    c.reseed(c.seed);
    return c;
}

void RunConfig::reseed(std::uint64_t master) {
    seed = master;
    split_seed = Rng::derive(master, kSplit);
    noise_seed = Rng::derive(master, kNoise);
    txid.train.seed = Rng::derive(master, kTxid);
    denoiser.train.seed = Rng::derive(master, kDenoiser);
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        scenarios[i].trajectory.seed = Rng::derive(master, kScenarioBase + i);
    }
}

void RunConfig::validate() const {
    if (grid_count < 1) throw ValidationError("grid_count must be >= 1");
    if (num_antennas < 1) throw ValidationError("num_antennas must be >= 1");
    if (codebook_size < num_antennas) throw ValidationError("codebook_size must be >= num_antennas");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ValidationError("train_fraction must lie strictly between 0 and 1");
    }
    if (!(histogram_bin_width_m > 0.0)) throw ValidationError("histogram_bin_width_m must be positive");
    for (double level : noise_levels) {
        if (!(level >= 0.0) || !std::isfinite(level)) {
            throw ValidationError("noise levels must be finite and >= 0");
        }
    }
    if (scenarios.empty()) throw ValidationError("at least one scenario is required");
    std::set<Direction> seen;
    for (const auto& s : scenarios) {
        s.scene.validate();
        s.trajectory.validate();
        if (!seen.insert(s.trajectory.direction).second) {
            throw ValidationError("each direction may appear in only one scenario");
        }
    }
    txid.train.validate();
    denoiser.train.validate();
    if (denoiser.grid_count != grid_count) {
        throw ValidationError("denoiser grid count must equal grid_count");
    }
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
    try {
        reject_unknown(j,
                       {"grid_count", "codebook_size", "num_antennas", "noise_levels",
                        "train_fraction", "histogram_bin_width_m", "seed", "split_seed",
                        "noise_seed", "scenarios", "txid", "denoiser"},
                       "config");
        if (j.contains("seed")) c.reseed(j.at("seed").get<std::uint64_t>());
        if (j.contains("grid_count")) c.grid_count = j.at("grid_count").get<int>();
        if (j.contains("codebook_size")) c.codebook_size = j.at("codebook_size").get<int>();
        if (j.contains("num_antennas")) c.num_antennas = j.at("num_antennas").get<int>();
        if (j.contains("noise_levels")) c.noise_levels = j.at("noise_levels").get<std::vector<double>>();
        if (j.contains("train_fraction")) c.train_fraction = j.at("train_fraction").get<double>();
        if (j.contains("histogram_bin_width_m")) {
            c.histogram_bin_width_m = j.at("histogram_bin_width_m").get<double>();
        }
        if (j.contains("split_seed")) c.split_seed = j.at("split_seed").get<std::uint64_t>();
        if (j.contains("noise_seed")) c.noise_seed = j.at("noise_seed").get<std::uint64_t>();
        if (j.contains("scenarios")) {
            const auto& arr = j.at("scenarios");
            if (!arr.is_array()) throw ValidationError("config: scenarios must be an array");
            std::vector<ScenarioConfig> scenarios;
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const auto& js = arr[i];
                const std::string where = "scenarios[" + std::to_string(i) + "]";
                reject_unknown(js,
                               {"direction", "num_samples", "num_distractors", "seed",
                                "jitter_fraction", "min_distractor_separation", "lane_distance_m",
                                "scene"},
                               where);
                const Direction dir = parse_direction(js.at("direction").get<std::string>());
                ScenarioConfig s = default_scenario(
                    dir, js.value("num_samples", dir == Direction::LeftToRight ? 1353 : 1086),
                    js.value("lane_distance_m", dir == Direction::LeftToRight ? 14.0 : 17.5));
                s.trajectory.seed = Rng::derive(c.seed, kScenarioBase + i);
                if (js.contains("num_distractors")) s.trajectory.num_distractors = js.at("num_distractors").get<int>();
                if (js.contains("seed")) s.trajectory.seed = js.at("seed").get<std::uint64_t>();
                if (js.contains("jitter_fraction")) {
                    s.trajectory.jitter_fraction = js.at("jitter_fraction").get<double>();
                }
                if (js.contains("min_distractor_separation")) {
                    s.trajectory.min_distractor_separation = js.at("min_distractor_separation").get<double>();
                }
                if (js.contains("scene")) {
                    if (js.contains("lane_distance_m")) {
                        throw ValidationError(where + ": give either scene or lane_distance_m");
                    }
                    const auto& jg = js.at("scene");
                    reject_unknown(jg,
                                   {"bs_position", "bs_heading_deg", "camera_hfov_deg", "road_start",
                                    "road_end", "array_normal_deg"},
                                   where + ".scene");
                    s.scene.bs_position = position_from_json(jg.at("bs_position"), where + ".scene.bs_position");
                    s.scene.bs_heading_deg = jg.value("bs_heading_deg", 0.0);
                    s.scene.camera_hfov_deg = jg.value("camera_hfov_deg", 90.0);
                    s.scene.road_start = position_from_json(jg.at("road_start"), where + ".scene.road_start");
                    s.scene.road_end = position_from_json(jg.at("road_end"), where + ".scene.road_end");
                    s.scene.array_normal_deg = jg.value("array_normal_deg", s.scene.bs_heading_deg);
                }
                scenarios.push_back(s);
            }
            c.scenarios = std::move(scenarios);
        }
        if (j.contains("txid")) {
            reject_unknown(j.at("txid"),
                           {"hidden", "learning_rate", "epochs", "batch_size", "seed", "weight_init_scale",
                            "final_lr_fraction"},
                           "config.txid");
            train_config_from_json(j.at("txid"), c.txid.train, c.txid.hidden, "config.txid");
        }
        if (j.contains("denoiser")) {
            const auto& jd = j.at("denoiser");
            reject_unknown(jd,
                           {"hidden", "learning_rate", "epochs", "batch_size", "seed",
                            "weight_init_scale", "final_lr_fraction", "snap_to_grid", "center_source"},
                           "config.denoiser");
            train_config_from_json(jd, c.denoiser.train, c.denoiser.hidden, "config.denoiser");
            if (jd.contains("snap_to_grid")) c.denoiser.snap_to_grid = jd.at("snap_to_grid").get<bool>();
            if (jd.contains("center_source")) {
                const auto src = jd.at("center_source").get<std::string>();
                if (src == "selected") {
                    c.denoiser.center_source = denoise::CenterSource::Selected;
                } else if (src == "estimated") {
                    c.denoiser.center_source = denoise::CenterSource::Estimated;
                } else {
                    throw ValidationError("config.denoiser.center_source must be 'selected' or 'estimated'");
                }
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    c.denoiser.grid_count = c.grid_count;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(csv::read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    // A training manifest embeds the config it was produced with.
    if (j.is_object() && j.contains("config") && j.contains("format")) j = j.at("config");
    try {
        return run_config_from_json(j);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

json to_json(const RunConfig& c) {
    json j;
    j["grid_count"] = c.grid_count;
    j["codebook_size"] = c.codebook_size;
    j["num_antennas"] = c.num_antennas;
    j["noise_levels"] = c.noise_levels;
    j["train_fraction"] = c.train_fraction;
    j["histogram_bin_width_m"] = c.histogram_bin_width_m;
    j["seed"] = c.seed;
    j["split_seed"] = c.split_seed;
    j["noise_seed"] = c.noise_seed;
    j["scenarios"] = json::array();
    for (const auto& s : c.scenarios) {
        j["scenarios"].push_back(
            {{"direction", std::string(to_string(s.trajectory.direction))},
             {"num_samples", s.trajectory.num_samples},
             {"num_distractors", s.trajectory.num_distractors},
             {"seed", s.trajectory.seed},
             {"jitter_fraction", s.trajectory.jitter_fraction},
             {"min_distractor_separation", s.trajectory.min_distractor_separation},
             {"scene",
              {{"bs_position", position_to_json(s.scene.bs_position)},
               {"bs_heading_deg", s.scene.bs_heading_deg},
               {"camera_hfov_deg", s.scene.camera_hfov_deg},
               {"road_start", position_to_json(s.scene.road_start)},
               {"road_end", position_to_json(s.scene.road_end)},
               {"array_normal_deg", s.scene.array_normal_deg}}}});
    }
    j["txid"] = train_config_to_json(c.txid.train, c.txid.hidden);
    json d = train_config_to_json(c.denoiser.train, c.denoiser.hidden);
    d["snap_to_grid"] = c.denoiser.snap_to_grid;
    d["center_source"] =
        c.denoiser.center_source == denoise::CenterSource::Selected ? "selected" : "estimated";
    j["denoiser"] = d;
    return j;
}

DatasetBundle simulate_clean(const RunConfig& config, const ScenarioConfig& scenario) {
    const auto codebook = sim::build_dft_codebook(config.num_antennas, config.codebook_size);
    DatasetBundle clean =
        sim::generate_scenario(scenario.scene, codebook, scenario.trajectory, {0.0, config.noise_seed});
    clean.metadata.grid_count = config.grid_count;
    clean = remove_outliers(clean, config.grid_count);
    return inject_noise(clean, {0.0, config.noise_seed});
}

DatasetBundle with_noise(const RunConfig& config, const DatasetBundle& clean, double level) {
    return inject_noise(clean, {level, config.noise_seed});
}

std::string dataset_stem(Direction direction, std::optional<double> level) {
    std::string stem = direction == Direction::LeftToRight ? "l2r" : "r2l";
    return level ? stem + "_rms" + csv::format_double(*level) : stem + "_clean";
}

TrainedArtifacts train_artifacts(const DatasetBundle& train, const RunConfig& config) {
    if (train.metadata.codebook_size != config.codebook_size) {
        throw ValidationError("dataset codebook size " + std::to_string(train.metadata.codebook_size) +
                              " does not match the configured " + std::to_string(config.codebook_size));
    }
    TrainedArtifacts a;
    a.txid_model = txid::train_txid(train, config.txid);
    const auto selections = txid::identify_all(a.txid_model, train.samples);
    denoise::DenoiserOptions dopt = config.denoiser;
    dopt.grid_count = config.grid_count;
    a.denoiser = denoise::train_denoiser(train, selections, dopt);
    a.lut = denoise::build_lut(train, config.grid_count);
    return a;
}

LevelEvaluation evaluate_level(const TrainedArtifacts& artifacts, const DatasetBundle& full,
                               const DatasetBundle& test, const RunConfig& config) {
    if (artifacts.txid_model.input_dim() != test.metadata.codebook_size) {
        throw ValidationError("transmitter model expects Q = " +
                              std::to_string(artifacts.txid_model.input_dim()) +
                              " but the dataset uses Q = " +
                              std::to_string(test.metadata.codebook_size));
    }
    if (artifacts.lut.grid_count != config.grid_count) {
        throw ValidationError("lookup table grid count does not match the configuration");
    }
    LevelEvaluation ev;
    ev.test = test;
    ev.tx_predictions = txid::identify_all(artifacts.txid_model, test.samples);

    eval::MethodPredictions noisy{eval::Method::Noisy, {}};
    eval::MethodPredictions lut{eval::Method::Lut, {}};
    eval::MethodPredictions mlp{eval::Method::Mlp, {}};
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Sample& s = test.samples[i];
        const auto& p = ev.tx_predictions[i];
        if (!s.noisy_position) {
            throw ValidationError("sample " + std::to_string(s.id) + " has no noisy position");
        }
        noisy.positions.push_back(*s.noisy_position);
        lut.positions.push_back(denoise::lut_predict(artifacts.lut, p.selected_center.x));
        mlp.positions.push_back(denoise::mlp_predict(
            artifacts.denoiser, denoise::chosen_center(p, artifacts.denoiser.center_source)));
        if (s.transmitter_index() == p.selected_detection_index) ++correct;
    }
    ev.identification_accuracy =
        test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
    ev.predictions = {noisy, lut, mlp};

    const auto anchor =
        grid::build_grid_table(full.samples, grid::PositionSelector::GroundTruth, config.grid_count);
    const auto xs = eval::evaluation_x(test.samples, ev.tx_predictions);
    ev.report = eval::per_grid_error(xs, ev.predictions, anchor);
    ev.report.noise_level_m = test.metadata.target_rms_m;
    return ev;
}

void save_artifacts(const TrainedArtifacts& artifacts, const json& manifest,
                    const std::filesystem::path& dir) {
    nn::save_weights(artifacts.txid_model, dir / "txid.json");
    nn::save_weights(artifacts.denoiser.mlp, dir / "denoiser.json");
    denoise::save_lut(artifacts.lut, dir / "lut.csv");
    csv::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

TrainedArtifacts load_artifacts(const std::filesystem::path& dir, json* manifest_out) {
    json manifest;
    try {
        manifest = json::parse(csv::read_file(dir / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw ValidationError((dir / "manifest.json").string() + ": " + e.what());
    }
    const RunConfig config = run_config_from_json(manifest.at("config"));
    TrainedArtifacts a;
    a.txid_model = nn::load_weights(dir / "txid.json");
    a.denoiser.mlp = nn::load_weights(dir / "denoiser.json");
    a.denoiser.grid_count = config.grid_count;
    a.denoiser.snap_to_grid = config.denoiser.snap_to_grid;
    a.denoiser.center_source = config.denoiser.center_source;
    a.lut = denoise::load_lut(dir / "lut.csv", config.grid_count);
    if (manifest_out) *manifest_out = std::move(manifest);
    return a;
}

json gradient_report(const TrainedArtifacts& artifacts, const DatasetBundle& train) {
    constexpr Eigen::Index kBatch = 8;
    Eigen::MatrixXd tx_in;
    Eigen::MatrixXd tx_out;
    txid::txid_training_pairs(train, tx_in, tx_out);
    const auto& tn = artifacts.txid_model.normalizer;
    const auto tx_check = nn::gradient_check(artifacts.txid_model,
                                             gather(tn.normalize_inputs(tx_in), kBatch),
                                             gather(tn.normalize_targets(tx_out), kBatch));

    const auto selections = txid::identify_all(artifacts.txid_model, train.samples);
    const auto n = std::min<Eigen::Index>(kBatch, static_cast<Eigen::Index>(train.size()));
    Eigen::MatrixXd d_in(2, n);
    Eigen::MatrixXd d_out(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        d_in.col(i) = denoise::denoiser_input(
            denoise::chosen_center(selections[k], artifacts.denoiser.center_source),
            artifacts.denoiser.snap_to_grid, artifacts.denoiser.grid_count);
        d_out(0, i) = train.samples[k].noisy_position->lat_deg;
        d_out(1, i) = train.samples[k].noisy_position->lon_deg;
    }
    const auto& dn = artifacts.denoiser.mlp.normalizer;
    const auto dn_check = nn::gradient_check(artifacts.denoiser.mlp, dn.normalize_inputs(d_in),
                                             dn.normalize_targets(d_out));
    auto to_j = [](const nn::GradientCheckResult& r) {
        return json{{"max_relative_error", r.max_relative_error},
                    {"parameters_checked", r.parameters_checked},
                    {"parameters_skipped_at_relu_kinks", r.parameters_skipped}};
    };
    return {{"txid", to_j(tx_check)}, {"denoiser", to_j(dn_check)}};
}

PipelineSummary run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    PipelineSummary summary;
    for (const auto& scenario : config.scenarios) {
        const Direction dir = scenario.trajectory.direction;
        const DatasetBundle clean = simulate_clean(config, scenario);
        const auto clean_path = out_dir / "datasets" / (dataset_stem(dir, std::nullopt) + ".csv");
        save_csv(clean, clean_path);
        summary.datasets.push_back(clean_path);

        std::vector<eval::EvalReport> reports;
        for (double level : config.noise_levels) {
            const std::string stem = dataset_stem(dir, level);
            DatasetBundle noisy = with_noise(config, clean, level);
            const auto data_path = out_dir / "datasets" / (stem + ".csv");
            save_csv(noisy, data_path);
            summary.datasets.push_back(data_path);

            auto [train, test] = split_train_test(noisy, config.train_fraction, config.split_seed);
            const TrainedArtifacts artifacts = train_artifacts(train, config);
            json manifest{{"format", "beamfix-manifest"},
                          {"version", 1},
                          {"dataset", "../../datasets/" + data_path.filename().string()},
                          {"train_samples", train.size()},
                          {"test_samples", test.size()},
                          {"config", to_json(config)}};
            save_artifacts(artifacts, manifest, out_dir / "models" / stem);

            LevelEvaluation ev = evaluate_level(artifacts, noisy, test, config);
            ev.report.tag = stem;
            const auto report_dir = out_dir / "reports";
            eval::export_plot_data(ev.report, ev.test, ev.predictions, (report_dir / (stem + "_")).string(),
                                   config.histogram_bin_width_m);
            csv::write_file(report_dir / (stem + "_predictions.csv"),
                            txid::format_predictions_csv(ev.test.samples, ev.tx_predictions));
            csv::write_file(report_dir / (stem + "_summary.json"), eval::report_json(ev.report));
            reports.push_back(std::move(ev.report));
        }
        const auto table = eval::compare_methods(reports);
        const std::string stem = dir == Direction::LeftToRight ? "l2r" : "r2l";
        csv::write_file(out_dir / "reports" / (stem + "_comparison.csv"), eval::format_comparison_csv(table));
        csv::write_file(out_dir / "reports" / (stem + "_comparison.json"), eval::comparison_json(table));
        summary.tables.push_back(table);
    }
    return summary;
}

}  // namespace beamfix::pipeline
