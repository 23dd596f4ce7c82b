// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beamfix/dataset.hpp"
#include "beamfix/nn.hpp"

namespace beamfix::txid {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Stage-1 output for one sample.
struct TxPrediction {
    Point2 estimated_center;  ///< network estimate from the beam index, clamped to [0,1]^2
    std::size_t selected_detection_index = 0;
    Point2 selected_center;   ///< center of the chosen detection
};

/// One-hot vector of length Q. Throws ValidationError if beam_index is outside [0, Q).
Eigen::VectorXd encode_beam(int beam_index, int codebook_size);

struct TxidOptions {
    std::vector<int> hidden = {64, 64};
    nn::TrainConfig train;
};

/// Beam index -> labeled transmitter center regression. Throws ValidationError naming
/// the first sample without a TX label.
nn::MlpModel train_txid(const DatasetBundle& train_bundle, const TxidOptions& options);

/// Training pairs in model space (one column per sample).
void txid_training_pairs(const DatasetBundle& bundle, Eigen::MatrixXd& inputs,
                         Eigen::MatrixXd& targets);

/// Detection nearest (Euclidean, normalized image plane) to `estimate`; ties go to the
/// lower index. Throws ValidationError for an empty list.
TxPrediction select_bounding_box(std::span<const Detection> detections, Point2 estimate);

/// encode_beam -> forward -> denormalize -> select_bounding_box.
TxPrediction identify(const nn::MlpModel& model, const Sample& sample);
std::vector<TxPrediction> identify_all(const nn::MlpModel& model, std::span<const Sample> samples);

/// CSV `sample_id,pred_x,pred_y,selected_index,selected_x,selected_y`.
std::string format_predictions_csv(std::span<const Sample> samples,
                                   std::span<const TxPrediction> predictions);

}  // namespace beamfix::txid
