// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "beamfix/geo.hpp"

namespace beamfix {

enum class DetectionClass { Transmitter, Distractor };
enum class Direction { LeftToRight, RightToLeft };

std::string_view to_string(DetectionClass c);  // "TX" / "DISTRACTOR"
std::string_view to_string(Direction d);       // "L2R" / "R2L"
Direction parse_direction(std::string_view text);

/// Normalized image-plane bounding-box center of one detected object.
struct Detection {
    DetectionClass class_label = DetectionClass::Distractor;
    double x_center = 0.5;
    double y_center = 0.5;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// One capture instant.
struct Sample {
    std::int64_t id = 0;
    Direction direction = Direction::LeftToRight;
    std::vector<Detection> detections;
    int beam_index = 0;
    geo::GeoPosition gt_position;
    std::optional<geo::GeoPosition> noisy_position;

    /// Index of the detection labeled Transmitter, if any.
    std::optional<std::size_t> transmitter_index() const;
    /// The labeled transmitter detection; throws ValidationError naming the sample otherwise.
    const Detection& transmitter() const;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetMetadata {
    int grid_count = 100;
    int codebook_size = 64;
    double target_rms_m = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t noise_seed = 0;
    Direction direction = Direction::LeftToRight;
    std::string source = "unknown";

    friend bool operator==(const DatasetMetadata&, const DatasetMetadata&) = default;
};

struct DatasetBundle {
    std::vector<Sample> samples;
    DatasetMetadata metadata;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    /// Checks every type invariant (ranges, unique ids, one direction, at most one TX).
    void validate() const;

    friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

/// Sidecar path holding bundle metadata next to a CSV file.
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);

/// Parses the dataset CSV. Metadata is read from the sidecar when present; otherwise
/// defaults are used and the direction is taken from the rows.
DatasetBundle load_csv(const std::filesystem::path& path);
DatasetBundle parse_csv(std::string_view text, std::string_view source_name = "<memory>");

/// Writes the CSV (and its metadata sidecar). Floating fields use shortest round-trip text.
void save_csv(const DatasetBundle& bundle, const std::filesystem::path& path);
std::string format_csv(const DatasetBundle& bundle);

/// Seeded uniform shuffle, then the first ceil(n * train_fraction) samples form the
/// training set. Both parts keep the original relative row order.
std::pair<DatasetBundle, DatasetBundle> split_train_test(const DatasetBundle& bundle,
                                                         double train_fraction,
                                                         std::uint64_t seed);

/// Size of the training part for n samples.
std::size_t train_split_size(std::size_t n, double train_fraction);

/// Single pass per grid (grid from the TX x-center): drops samples whose distance to the
/// grid's ground-truth mean exceeds 3 * 1.4826 * median distance. Grids with fewer than
/// three samples are untouched.
DatasetBundle remove_outliers(const DatasetBundle& bundle, int grid_count);

/// Sets noisy_position = add_gps_noise(gt_position) on every sample, in row order, from
/// one stream seeded with spec.seed.
DatasetBundle inject_noise(const DatasetBundle& bundle, const geo::NoiseSpec& spec);

}  // namespace beamfix
