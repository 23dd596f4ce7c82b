// SPDX-License-Identifier: Apache-2.0
#include "beamfix/txid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"

namespace beamfix::txid {

Eigen::VectorXd encode_beam(int beam_index, int codebook_size) {
    if (codebook_size < 1) throw ValidationError("codebook size must be >= 1");
    if (beam_index < 0 || beam_index >= codebook_size) {
        throw ValidationError("beam index " + std::to_string(beam_index) + " outside [0, " +
                              std::to_string(codebook_size) + ")");
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(codebook_size);
    v[beam_index] = 1.0;
    return v;
}

void txid_training_pairs(const DatasetBundle& bundle, Eigen::MatrixXd& inputs,
                         Eigen::MatrixXd& targets) {
    const int q = bundle.metadata.codebook_size;
    const auto n = static_cast<Eigen::Index>(bundle.size());
    inputs = Eigen::MatrixXd::Zero(q, n);
    targets.resize(2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Sample& s = bundle.samples[static_cast<std::size_t>(i)];
        const Detection& tx = s.transmitter();
        inputs.col(i) = encode_beam(s.beam_index, q);
        targets(0, i) = tx.x_center;
        targets(1, i) = tx.y_center;
    }
}

nn::MlpModel train_txid(const DatasetBundle& train_bundle, const TxidOptions& options) {
    if (train_bundle.empty()) throw ValidationError("transmitter identification: empty training set");
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;
    txid_training_pairs(train_bundle, inputs, targets);

    std::vector<int> dims{static_cast<int>(inputs.rows())};
    dims.insert(dims.end(), options.hidden.begin(), options.hidden.end());
    dims.push_back(2);
    const nn::MlpModel init =
        nn::MlpModel::random(dims, options.train.seed, options.train.weight_init_scale);

    // One-hot inputs stay as they are; centers are standardized (floor 0.01 of the image).
    nn::Normalizer norm = nn::Normalizer::fit(inputs, targets, {}, Eigen::Vector2d(0.01, 0.01));
    norm.input_shift.setZero();
    norm.input_scale.setOnes();
    return nn::train(init, inputs, targets, options.train, norm).model;
}

TxPrediction select_bounding_box(std::span<const Detection> detections, Point2 estimate) {
    if (detections.empty()) throw ValidationError("bounding-box selection needs at least one detection");
    TxPrediction p;
    p.estimated_center = estimate;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const double d = std::hypot(detections[i].x_center - estimate.x,
                                    detections[i].y_center - estimate.y);
        if (d < best) {
            best = d;
            p.selected_detection_index = i;
        }
    }
    const Detection& chosen = detections[p.selected_detection_index];
    p.selected_center = {chosen.x_center, chosen.y_center};
    return p;
}

TxPrediction identify(const nn::MlpModel& model, const Sample& sample) {
    const auto q = static_cast<int>(model.input_dim());
    if (model.output_dim() != 2) throw ValidationError("transmitter model must output 2 values");
    const Eigen::VectorXd out = model.predict(encode_beam(sample.beam_index, q));
    const Point2 estimate{std::clamp(out[0], 0.0, 1.0), std::clamp(out[1], 0.0, 1.0)};
    return select_bounding_box(sample.detections, estimate);
}

std::vector<TxPrediction> identify_all(const nn::MlpModel& model, std::span<const Sample> samples) {
    std::vector<TxPrediction> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(identify(model, s));
    return out;
}

std::string format_predictions_csv(std::span<const Sample> samples,
                                   std::span<const TxPrediction> predictions) {
    if (samples.size() != predictions.size()) {
        throw ValidationError("prediction count does not match sample count");
    }
    std::ostringstream os;
    os << "sample_id,pred_x,pred_y,selected_index,selected_x,selected_y\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const TxPrediction& p = predictions[i];
        os << samples[i].id << ',' << csv::format_double(p.estimated_center.x) << ','
           << csv::format_double(p.estimated_center.y) << ',' << p.selected_detection_index << ','
           << csv::format_double(p.selected_center.x) << ','
           << csv::format_double(p.selected_center.y) << '\n';
    }
    return os.str();
}

}  // namespace beamfix::txid
