// SPDX-License-Identifier: Apache-2.0
#include "beamfix/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"
#include "beamfix/grid.hpp"
#include "beamfix/rng.hpp"

namespace beamfix {

namespace {

constexpr std::size_t kFixedColumns = 8;
const char* const kFixedHeader[kFixedColumns] = {"id",        "direction", "beam_index",
                                                 "gt_lat",    "gt_lon",    "noisy_lat",
                                                 "noisy_lon", "num_detections"};

DetectionClass parse_class(std::string_view text) {
    if (text == "TX") return DetectionClass::Transmitter;
    if (text == "DISTRACTOR") return DetectionClass::Distractor;
    throw ValidationError("expected TX or DISTRACTOR, got '" + std::string(text) + "'");
}

std::string row_context(std::size_t row, std::string_view field) {
    std::ostringstream os;
    os << "row " << row << ", field '" << field << "'";
    return os.str();
}

nlohmann::json metadata_to_json(const DatasetMetadata& m) {
    return {{"grid_count", m.grid_count},     {"codebook_size", m.codebook_size},
            {"target_rms_m", m.target_rms_m}, {"seed", m.seed},
            {"noise_seed", m.noise_seed},     {"direction", std::string(to_string(m.direction))},
            {"source", m.source}};
}

DatasetMetadata metadata_from_json(const nlohmann::json& j) {
    DatasetMetadata m;
    m.grid_count = j.at("grid_count").get<int>();
    m.codebook_size = j.at("codebook_size").get<int>();
    m.target_rms_m = j.at("target_rms_m").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.noise_seed = j.value("noise_seed", std::uint64_t{0});
    m.direction = parse_direction(j.at("direction").get<std::string>());
    m.source = j.value("source", std::string("unknown"));
    return m;
}

void check_unit_interval(double v, std::size_t row, std::string_view field) {
    if (!(v >= 0.0 && v <= 1.0)) {
        std::ostringstream os;
        os << row_context(row, field) << ": value " << v << " outside [0, 1]";
        throw ValidationError(os.str());
    }
}

}  // namespace

std::string_view to_string(DetectionClass c) {
    return c == DetectionClass::Transmitter ? "TX" : "DISTRACTOR";
}

std::string_view to_string(Direction d) { return d == Direction::LeftToRight ? "L2R" : "R2L"; }

Direction parse_direction(std::string_view text) {
    if (text == "L2R") return Direction::LeftToRight;
    if (text == "R2L") return Direction::RightToLeft;
    throw ValidationError("expected direction L2R or R2L, got '" + std::string(text) + "'");
}

std::optional<std::size_t> Sample::transmitter_index() const {
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (detections[i].class_label == DetectionClass::Transmitter) return i;
    }
    return std::nullopt;
}

const Detection& Sample::transmitter() const {
    const auto idx = transmitter_index();
    if (!idx) {
        throw ValidationError("sample " + std::to_string(id) + " has no TX-labeled detection");
    }
    return detections[*idx];
}

void DatasetBundle::validate() const {
    if (metadata.codebook_size < 1) throw ValidationError("codebook_size must be >= 1");
    if (metadata.grid_count < 1) throw ValidationError("grid_count must be >= 1");
    std::set<std::int64_t> ids;
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const Sample& s = samples[r];
        const std::string where = "sample " + std::to_string(s.id);
        if (!ids.insert(s.id).second) throw ValidationError(where + ": duplicate id");
        if (s.direction != metadata.direction) {
            throw ValidationError(where + ": direction " + std::string(to_string(s.direction)) +
                                  " differs from bundle direction " +
                                  std::string(to_string(metadata.direction)));
        }
        if (s.detections.empty()) throw ValidationError(where + ": no detections");
        if (s.beam_index < 0 || s.beam_index >= metadata.codebook_size) {
            throw ValidationError(where + ": beam_index " + std::to_string(s.beam_index) +
                                  " outside [0, " + std::to_string(metadata.codebook_size) + ")");
        }
        std::size_t tx = 0;
        for (const Detection& d : s.detections) {
            if (!(d.x_center >= 0.0 && d.x_center <= 1.0 && d.y_center >= 0.0 &&
                  d.y_center <= 1.0)) {
                throw ValidationError(where + ": detection center outside [0, 1]");
            }
            if (d.class_label == DetectionClass::Transmitter) ++tx;
        }
        if (tx > 1) throw ValidationError(where + ": more than one TX-labeled detection");
        geo::validate(s.gt_position);
        if (s.noisy_position) geo::validate(*s.noisy_position);
    }
}

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
    return std::filesystem::path(csv_path.string() + ".meta.json");
}

DatasetBundle parse_csv(std::string_view text, std::string_view source_name) {
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(std::move(line));
        }
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ValidationError(std::string(source_name) + ": missing header row");

    const auto header = csv::split_line(lines.front());
    if (header.size() < kFixedColumns) {
        throw ValidationError(std::string(source_name) + ": header has too few columns");
    }
    for (std::size_t c = 0; c < kFixedColumns; ++c) {
        if (header[c] != kFixedHeader[c]) {
            throw ValidationError(std::string(source_name) + ": header column " +
                                  std::to_string(c) + " is '" + header[c] + "', expected '" +
                                  kFixedHeader[c] + "'");
        }
    }
    if ((header.size() - kFixedColumns) % 3 != 0) {
        throw ValidationError(std::string(source_name) +
                              ": detection columns must come in (class, x, y) triples");
    }

    DatasetBundle bundle;
    bundle.metadata.source = std::string(source_name);
    std::set<std::int64_t> seen_ids;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t row = li;  // data rows numbered from 1
        const auto f = csv::split_line(lines[li]);
        if (f.size() != header.size()) {
            throw ValidationError("row " + std::to_string(row) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(f.size()));
        }
        Sample s;
        s.id = csv::parse_int(f[0], row_context(row, "id"));
        try {
            s.direction = parse_direction(f[1]);
        } catch (const ValidationError& e) {
            throw ValidationError(row_context(row, "direction") + ": " + e.what());
        }
        const auto beam = csv::parse_int(f[2], row_context(row, "beam_index"));
        if (beam < 0 || beam > 1'000'000) {
            throw ValidationError(row_context(row, "beam_index") + ": negative or absurd value");
        }
        s.beam_index = static_cast<int>(beam);
        s.gt_position = {csv::parse_double(f[3], row_context(row, "gt_lat")),
                         csv::parse_double(f[4], row_context(row, "gt_lon"))};
        if (!geo::is_valid(s.gt_position)) {
            throw ValidationError(row_context(row, "gt_lat/gt_lon") + ": coordinates out of range");
        }
        if (f[5].empty() != f[6].empty()) {
            throw ValidationError(row_context(row, "noisy_lat/noisy_lon") +
                                  ": both or neither must be present");
        }
        if (!f[5].empty()) {
            s.noisy_position = geo::GeoPosition{
                csv::parse_double(f[5], row_context(row, "noisy_lat")),
                csv::parse_double(f[6], row_context(row, "noisy_lon"))};
            if (!geo::is_valid(*s.noisy_position)) {
                throw ValidationError(row_context(row, "noisy_lat/noisy_lon") +
                                      ": coordinates out of range");
            }
        }
        const auto n_det = csv::parse_int(f[7], row_context(row, "num_detections"));
        const auto max_det = static_cast<std::int64_t>((header.size() - kFixedColumns) / 3);
        if (n_det < 1 || n_det > max_det) {
            throw ValidationError(row_context(row, "num_detections") + ": value " +
                                  std::to_string(n_det) + " outside [1, " +
                                  std::to_string(max_det) + "]");
        }
        for (std::int64_t d = 0; d < max_det; ++d) {
            const std::size_t base = kFixedColumns + 3 * static_cast<std::size_t>(d);
            const std::string prefix = "det" + std::to_string(d);
            if (d >= n_det) {
                if (!f[base].empty() || !f[base + 1].empty() || !f[base + 2].empty()) {
                    throw ValidationError(row_context(row, prefix + "_class") +
                                          ": populated beyond num_detections");
                }
                continue;
            }
            Detection det;
            try {
                det.class_label = parse_class(f[base]);
            } catch (const ValidationError& e) {
                throw ValidationError(row_context(row, prefix + "_class") + ": " + e.what());
            }
            det.x_center = csv::parse_double(f[base + 1], row_context(row, prefix + "_x"));
            det.y_center = csv::parse_double(f[base + 2], row_context(row, prefix + "_y"));
            check_unit_interval(det.x_center, row, prefix + "_x");
            check_unit_interval(det.y_center, row, prefix + "_y");
            s.detections.push_back(det);
        }
        if (std::count_if(s.detections.begin(), s.detections.end(), [](const Detection& d) {
                return d.class_label == DetectionClass::Transmitter;
            }) > 1) {
            throw ValidationError(row_context(row, "class") + ": more than one TX-labeled detection");
        }
        if (!seen_ids.insert(s.id).second) {
            throw ValidationError(row_context(row, "id") + ": duplicate id " + std::to_string(s.id));
        }
        if (bundle.samples.empty()) {
            bundle.metadata.direction = s.direction;
        } else if (s.direction != bundle.metadata.direction) {
            throw ValidationError(row_context(row, "direction") +
                                  ": mixed directions in one file (split by lane first)");
        }
        bundle.samples.push_back(std::move(s));
    }
    return bundle;
}

DatasetBundle load_csv(const std::filesystem::path& path) {
    DatasetBundle bundle = parse_csv(csv::read_file(path), path.string());
    const auto meta = metadata_path(path);
    if (std::filesystem::exists(meta)) {
        DatasetMetadata m;
        try {
            m = metadata_from_json(nlohmann::json::parse(csv::read_file(meta)));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(meta.string() + ": " + e.what());
        }
        if (!bundle.empty() && m.direction != bundle.metadata.direction) {
            throw ValidationError(meta.string() + ": direction disagrees with the CSV rows");
        }
        bundle.metadata = m;
    }
    try {
        bundle.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return bundle;
}

std::string format_csv(const DatasetBundle& bundle) {
    std::size_t max_det = 1;
    for (const Sample& s : bundle.samples) max_det = std::max(max_det, s.detections.size());

    std::ostringstream os;
    for (std::size_t c = 0; c < kFixedColumns; ++c) os << (c ? "," : "") << kFixedHeader[c];
    for (std::size_t d = 0; d < max_det; ++d) {
        os << ",det" << d << "_class,det" << d << "_x,det" << d << "_y";
    }
    os << '\n';
    for (const Sample& s : bundle.samples) {
        os << s.id << ',' << to_string(s.direction) << ',' << s.beam_index << ','
           << csv::format_double(s.gt_position.lat_deg) << ','
           << csv::format_double(s.gt_position.lon_deg) << ',';
        if (s.noisy_position) {
            os << csv::format_double(s.noisy_position->lat_deg) << ','
               << csv::format_double(s.noisy_position->lon_deg);
        } else {
            os << ',';
        }
        os << ',' << s.detections.size();
        for (std::size_t d = 0; d < max_det; ++d) {
            if (d < s.detections.size()) {
                const Detection& det = s.detections[d];
                os << ',' << to_string(det.class_label) << ',' << csv::format_double(det.x_center)
                   << ',' << csv::format_double(det.y_center);
            } else {
                os << ",,,";
            }
        }
        os << '\n';
    }
    return os.str();
}

void save_csv(const DatasetBundle& bundle, const std::filesystem::path& path) {
    csv::write_file(path, format_csv(bundle));
    csv::write_file(metadata_path(path), metadata_to_json(bundle.metadata).dump(2) + "\n");
}

std::size_t train_split_size(std::size_t n, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ValidationError("train_fraction must lie strictly between 0 and 1");
    }
    // The epsilon absorbs representation error, e.g. 10 * 0.7.
    const double raw = static_cast<double>(n) * train_fraction;
    auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    return std::min(k, n);
}

std::pair<DatasetBundle, DatasetBundle> split_train_test(const DatasetBundle& bundle,
                                                         double train_fraction,
                                                         std::uint64_t seed) {
    if (bundle.empty()) throw ValidationError("cannot split an empty dataset");
    const std::size_t n = bundle.size();
    const std::size_t n_train = train_split_size(n, train_fraction);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<long>(n_train), order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    DatasetBundle train{{}, bundle.metadata};
    DatasetBundle test{{}, bundle.metadata};
    train.samples.reserve(train_idx.size());
    test.samples.reserve(test_idx.size());
    for (std::size_t i : train_idx) train.samples.push_back(bundle.samples[i]);
    for (std::size_t i : test_idx) test.samples.push_back(bundle.samples[i]);
    return {std::move(train), std::move(test)};
}

DatasetBundle remove_outliers(const DatasetBundle& bundle, int grid_count) {
    const auto points = grid::grid_points(bundle.samples, grid::PositionSelector::GroundTruth);
    const grid::GridTable table = grid::build_grid_table(points, grid_count);

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(grid_count));
    for (std::size_t i = 0; i < points.size(); ++i) {
        members[static_cast<std::size_t>(grid::assign_grid(points[i].x_center, grid_count))]
            .push_back(i);
    }

    std::vector<bool> keep(bundle.size(), true);
    for (std::size_t g = 0; g < members.size(); ++g) {
        const auto& idx = members[g];
        if (idx.size() < 3) continue;
        const geo::GeoPosition mean = table.cells[g].mean_position;
        std::vector<double> dist(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            dist[k] = geo::haversine_distance(mean, points[idx[k]].position);
        }
        std::vector<double> sorted = dist;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t m = sorted.size();
        const double median =
            m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
        const double threshold = 3.0 * 1.4826 * median;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (dist[k] > threshold) keep[idx[k]] = false;
        }
    }

    DatasetBundle out{{}, bundle.metadata};
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        if (keep[i]) out.samples.push_back(bundle.samples[i]);
    }
    return out;
}

DatasetBundle inject_noise(const DatasetBundle& bundle, const geo::NoiseSpec& spec) {
    geo::calibrate_axis_sigma(spec);  // validates
    DatasetBundle out = bundle;
    Rng rng(spec.seed);
    for (Sample& s : out.samples) {
        s.noisy_position = geo::add_gps_noise(s.gt_position, spec, rng);
    }
    out.metadata.target_rms_m = spec.target_rms_m;
    out.metadata.noise_seed = spec.seed;
    return out;
}

}  // namespace beamfix
