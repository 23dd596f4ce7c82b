// SPDX-License-Identifier: Apache-2.0
#include "beamfix/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"
#include "beamfix/grid.hpp"
#include "beamfix/pipeline.hpp"

namespace beamfix::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using pipeline::RunConfig;

constexpr const char* kSeedEnv = "BEAMFIX_SEED";

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv(kSeedEnv);
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    const auto v = csv::parse_int(raw, kSeedEnv);
    if (v < 0) throw ValidationError(std::string(kSeedEnv) + " must be a nonnegative integer");
    return static_cast<std::uint64_t>(v);
}

RunConfig resolve_config(const CommonOptions& opts) {
    RunConfig config = opts.config_path.empty() ? RunConfig::defaults()
                                                : pipeline::load_run_config(opts.config_path);
    // The flag wins over the environment.
    if (auto seed = opts.seed ? opts.seed : env_seed()) {
        config.reseed(*seed);
        config.validate();
    }
    return config;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path,
                    "JSON run configuration (a training manifest.json is also accepted); "
                    "built-in defaults when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed,
                    std::string("Master seed; every stage seed is derived from it. Overrides ") +
                        kSeedEnv + " and the config file");
}

grid::PositionSelector pick_positions(const std::string& mode, const DatasetBundle& bundle) {
    if (mode == "gt") return grid::PositionSelector::GroundTruth;
    if (mode == "noisy") return grid::PositionSelector::Noisy;
    for (const auto& s : bundle.samples) {
        if (!s.noisy_position) return grid::PositionSelector::GroundTruth;
    }
    return grid::PositionSelector::Noisy;
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

void print_config_line(std::ostream& out, const RunConfig& c) {
    out << "seed " << c.seed << ", Z = " << c.grid_count << ", Q = " << c.codebook_size
        << ", M = " << c.num_antennas << "\n";
}

int cmd_simulate(const CommonOptions& opts, const fs::path& out_dir, std::ostream& out) {
    const RunConfig config = resolve_config(opts);
    print_config_line(out, config);
    for (const auto& scenario : config.scenarios) {
        const Direction dir = scenario.trajectory.direction;
        const DatasetBundle clean = pipeline::simulate_clean(config, scenario);
        auto write = [&](const DatasetBundle& b, std::optional<double> level) {
            const fs::path path = out_dir / (pipeline::dataset_stem(dir, level) + ".csv");
            save_csv(b, path);
            out << path.string() << "  " << b.size() << " samples\n";
        };
        write(clean, std::nullopt);
        for (double level : config.noise_levels) write(pipeline::with_noise(config, clean, level), level);
    }
    return kExitOk;
}

struct CharacterizeOptions {
    std::string dataset;
    int grids = 100;
    double bin_width = 0.05;
    std::string positions = "auto";
    std::string out;
};

int cmd_characterize(const CharacterizeOptions& o, std::ostream& out) {
    const DatasetBundle bundle = load_csv(o.dataset);
    const auto selector = pick_positions(o.positions, bundle);
    const auto table = grid::build_grid_table(bundle.samples, selector, o.grids);
    const auto hist = grid::displacement_histogram(table, o.bin_width);

    const fs::path out_dir =
        o.out.empty() ? fs::path(o.dataset).parent_path() / (stem_of(o.dataset) + "_characterize") : fs::path(o.out);
    csv::write_file(out_dir / "pergrid.csv", grid::format_grid_table_csv(table));
    csv::write_file(out_dir / "histogram.csv", grid::format_histogram_csv(hist));

    out << o.dataset << ": " << bundle.size() << " samples, " << table.populated_count() << " of "
        << o.grids << " grids populated, positions "
        << (selector == grid::PositionSelector::Noisy ? "noisy" : "gt") << "\n";

    json summary{{"dataset", o.dataset},
                 {"grid_count", o.grids},
                 {"bin_width_m", o.bin_width},
                 {"populated_grids", table.populated_count()}};
    try {
        const auto fit = grid::fit_gaussian(hist);
        summary["fit"] = {{"amplitude", fit.amplitude},
                          {"mean_m", fit.mean_m},
                          {"sigma_m", fit.sigma_m},
                          {"r_squared", fit.r_squared},
                          {"adjusted_r_squared", fit.adjusted_r_squared},
                          {"iterations", fit.iterations}};
        out << "Gaussian fit: A = " << fit.amplitude << ", mu = " << fit.mean_m
            << " m, sigma = " << fit.sigma_m << " m, R^2 = " << fit.r_squared
            << ", adjusted R^2 = " << fit.adjusted_r_squared << "\n";
    } catch (const grid::FitError& e) {
        summary["fit"] = nullptr;
        summary["fit_skipped"] = e.what();
        out << "notice: Gaussian fit skipped: " << e.what() << "\n";
    }
    csv::write_file(out_dir / "fit.json", summary.dump(2) + "\n");
    out << "wrote " << (out_dir / "pergrid.csv").string() << ", " << (out_dir / "histogram.csv").string()
        << ", " << (out_dir / "fit.json").string() << "\n";
    return kExitOk;
}

int cmd_train(const CommonOptions& opts, const std::string& dataset, const fs::path& out_dir,
              std::ostream& out) {
    const RunConfig config = resolve_config(opts);
    const DatasetBundle bundle = load_csv(dataset);
    std::vector<std::int64_t> unlabeled;
    for (const auto& s : bundle.samples) {
        if (!s.transmitter_index()) unlabeled.push_back(s.id);
    }
    if (!unlabeled.empty()) {
        std::ostringstream msg;
        msg << unlabeled.size() << " sample(s) have no TX-labeled detection: ";
        for (std::size_t i = 0; i < unlabeled.size() && i < 10; ++i) msg << (i ? ", " : "") << unlabeled[i];
        if (unlabeled.size() > 10) msg << ", ...";
        throw ValidationError(msg.str());
    }

    auto [train, test] = split_train_test(bundle, config.train_fraction, config.split_seed);
    out << "split " << bundle.size() << " samples into " << train.size() << " train / " << test.size()
        << " test\n";
    const auto artifacts = pipeline::train_artifacts(train, config);
    const json grad = pipeline::gradient_report(artifacts, train);

    fs::create_directories(out_dir);
    const json manifest{{"format", "beamfix-manifest"},
                        {"version", 1},
                        {"dataset", fs::relative(fs::absolute(dataset), fs::absolute(out_dir)).generic_string()},
                        {"train_samples", train.size()},
                        {"test_samples", test.size()},
                        {"gradient_check", grad},
                        {"config", pipeline::to_json(config)}};
    pipeline::save_artifacts(artifacts, manifest, out_dir);
    for (const char* name : {"txid", "denoiser"}) {
        out << "gradient check " << name << ": max relative error "
            << grad.at(name).at("max_relative_error").get<double>() << " over "
            << grad.at(name).at("parameters_checked").get<std::size_t>() << " parameters\n";
    }
    out << "wrote artifacts to " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::vector<std::string>& runs, const std::vector<std::string>& datasets,
                 const fs::path& out_dir, std::ostream& out) {
    if (!datasets.empty() && datasets.size() != runs.size()) {
        throw ValidationError("--dataset must be given once per --run, or not at all");
    }
    std::vector<eval::EvalReport> reports;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        json manifest;
        const auto artifacts = pipeline::load_artifacts(runs[i], &manifest);
        const RunConfig config = pipeline::run_config_from_json(manifest.at("config"));
        const fs::path data_path = datasets.empty()
                                       ? fs::path(runs[i]) / manifest.at("dataset").get<std::string>()
                                       : fs::path(datasets[i]);
        const DatasetBundle full = load_csv(data_path);
        const auto split = split_train_test(full, config.train_fraction, config.split_seed);
        auto ev = pipeline::evaluate_level(artifacts, full, split.second, config);
        const std::string tag = stem_of(data_path);
        ev.report.tag = tag;
        eval::export_plot_data(ev.report, ev.test, ev.predictions, (out_dir / (tag + "_")).string(),
                               config.histogram_bin_width_m);
        csv::write_file(out_dir / (tag + "_predictions.csv"),
                        txid::format_predictions_csv(ev.test.samples, ev.tx_predictions));
        csv::write_file(out_dir / (tag + "_summary.json"), eval::report_json(ev.report));
        out << tag << ": transmitter identified on " << ev.identification_accuracy * 100.0 << "% of "
            << ev.test.size() << " test samples\n";
        reports.push_back(std::move(ev.report));
    }
    const auto table = eval::compare_methods(reports);
    csv::write_file(out_dir / "comparison.csv", eval::format_comparison_csv(table));
    csv::write_file(out_dir / "comparison.json", eval::comparison_json(table));
    out << eval::format_comparison_text(table);
    return kExitOk;
}

int cmd_pipeline(const CommonOptions& opts, const fs::path& out_dir, std::ostream& out) {
    const RunConfig config = resolve_config(opts);
    print_config_line(out, config);
    const auto summary = pipeline::run_pipeline(config, out_dir);
    for (std::size_t i = 0; i < summary.tables.size(); ++i) {
        out << "\n" << to_string(config.scenarios[i].trajectory.direction) << "\n"
            << eval::format_comparison_text(summary.tables[i]);
    }
    out << "\noutputs under " << out_dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"GPS position denoising from camera detections and mmWave beam indices", "beamfix"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.footer(std::string("Environment: ") + kSeedEnv +
               " overrides the master seed (a --seed flag wins).\n"
               "Exit codes: 0 success, 1 runtime failure, 2 validation or configuration error.");

    CommonOptions sim_opts;
    std::string sim_out = "datasets";
    auto* sim = app.add_subcommand("simulate", "Generate clean and noisy synthetic datasets per direction");
    add_common(sim, sim_opts);
    sim->add_option("--out", sim_out, "Output directory for <dir>_clean.csv and <dir>_rms<level>.csv");

    CharacterizeOptions ch;
    auto* chr = app.add_subcommand("characterize", "Per-grid displacement table, histogram and Gaussian fit");
    chr->add_option("--dataset", ch.dataset, "Dataset CSV")->required()->check(CLI::ExistingFile);
    chr->add_option("--grids", ch.grids, "Number of image grids Z")->check(CLI::PositiveNumber);
    chr->add_option("--bin-width", ch.bin_width, "Histogram bin width in meters")->check(CLI::PositiveNumber);
    chr->add_option("--positions", ch.positions,
                    "Positions to characterize: gt, noisy, or auto (noisy when every sample has one)")
        ->check(CLI::IsMember({"auto", "gt", "noisy"}));
    chr->add_option("--out", ch.out, "Output directory (default: <dataset stem>_characterize next to the dataset)");

    CommonOptions train_opts;
    std::string train_dataset;
    std::string train_out = "models";
    auto* trn = app.add_subcommand("train", "Split a dataset, train both networks and build the lookup table");
    add_common(trn, train_opts);
    trn->add_option("--dataset", train_dataset, "Dataset CSV with TX labels")->required()->check(CLI::ExistingFile);
    trn->add_option("--out", train_out, "Artifact directory (txid.json, denoiser.json, lut.csv, manifest.json)");

    std::vector<std::string> eval_runs;
    std::vector<std::string> eval_datasets;
    std::string eval_out = "reports";
    auto* evl = app.add_subcommand("evaluate", "Score noisy, LUT and MLP positions on the test split");
    evl->add_option("--run", eval_runs, "Artifact directory from `train`; repeat once per noise level")
        ->required()
        ->check(CLI::ExistingDirectory);
    evl->add_option("--dataset", eval_datasets,
                    "Dataset CSV per --run, in the same order (default: the dataset named in each manifest)")
        ->check(CLI::ExistingFile);
    evl->add_option("--out", eval_out, "Report directory");

    CommonOptions pipe_opts;
    std::string pipe_out = "out";
    auto* pipe = app.add_subcommand("pipeline", "simulate, train and evaluate every direction and noise level");
    add_common(pipe, pipe_opts);
    pipe->add_option("--out", pipe_out, "Output root (datasets/, models/, reports/)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return kExitValidation;
    }

    try {
        if (*sim) return cmd_simulate(sim_opts, sim_out, out);
        if (*chr) return cmd_characterize(ch, out);
        if (*trn) return cmd_train(train_opts, train_dataset, train_out, out);
        if (*evl) return cmd_evaluate(eval_runs, eval_datasets, eval_out, out);
        if (*pipe) return cmd_pipeline(pipe_opts, pipe_out, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed JSON: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace beamfix::cli
