// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace beamfix::nn {

/// Per-feature affine maps for inputs and targets: z = (v - shift) / scale.
struct Normalizer {
    Eigen::VectorXd input_shift;
    Eigen::VectorXd input_scale;
    Eigen::VectorXd target_shift;
    Eigen::VectorXd target_scale;

    static Normalizer identity(Eigen::Index input_dim, Eigen::Index target_dim);

    /// Mean / population standard deviation per feature over the columns of `inputs`
    /// and `targets`. A feature whose spread is below its floor uses the floor as scale
    /// (an empty floor vector means 1.0 for every feature).
    static Normalizer fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                          const Eigen::VectorXd& input_scale_floor = {},
                          const Eigen::VectorXd& target_scale_floor = {});

    Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& inputs) const;
    Eigen::MatrixXd normalize_targets(const Eigen::MatrixXd& targets) const;
    Eigen::MatrixXd denormalize_targets(const Eigen::MatrixXd& z) const;

    void validate(Eigen::Index input_dim, Eigen::Index target_dim) const;
};

struct Layer {
    Eigen::MatrixXd weights;  ///< out x in
    Eigen::VectorXd bias;     ///< out
};

/// Fully connected network. Hidden layers use ReLU, the output layer is linear.
/// Batches are matrices with one sample per column.
class MlpModel {
public:
    MlpModel() = default;

    /// All weights and biases zero.
    static MlpModel zeros(const std::vector<int>& layer_dims);
    /// Weights and biases uniform in +/- init_scale * sqrt(1 / fan_in).
    static MlpModel random(const std::vector<int>& layer_dims, std::uint64_t seed,
                           double init_scale = 1.0);
    /// Builds from explicit layers; throws ValidationError on inconsistent shapes.
    static MlpModel from_layers(std::vector<Layer> layers);

    const std::vector<int>& layer_dims() const { return dims_; }
    const std::vector<Layer>& layers() const { return layers_; }
    Eigen::Index input_dim() const { return dims_.empty() ? 0 : dims_.front(); }
    Eigen::Index output_dim() const { return dims_.empty() ? 0 : dims_.back(); }
    std::size_t parameter_count() const;

    /// Raw network output (no normalization). Throws ValidationError on a dimension mismatch.
    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

    /// normalize -> forward -> denormalize, using `normalizer`.
    Eigen::VectorXd predict(const Eigen::VectorXd& input) const;
    Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const;

    /// Parameters flattened layer by layer: weights column-major, then bias.
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);

    Normalizer normalizer;

    friend bool operator==(const MlpModel& a, const MlpModel& b);

private:
    std::vector<int> dims_;
    std::vector<Layer> layers_;
};

/// Mean over samples of the mean squared per-dimension error.
double mse_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets);

/// MSE of the raw network on (inputs, targets) and its gradient w.r.t. parameters().
double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, Eigen::VectorXd& gradient);

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 7;
    double weight_init_scale = 1.0;
    /// Cosine schedule: the rate falls from learning_rate to learning_rate * this over
    /// the run. 1 keeps it constant.
    double final_lr_fraction = 1.0;

    /// learning_rate > 0, epochs >= 0, batch_size >= 1, final_lr_fraction in (0, 1].
    void validate() const;
};

/// Adam moment constants.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct TrainResult {
    MlpModel model;
    std::vector<double> loss_history;  ///< full-set normalized MSE after each epoch
};

/// Mini-batch Adam on the MSE, starting from `initial`. Inputs and targets are raw
/// (one sample per column); `normalizer` maps them into training space and is stored in
/// the returned model. Batches larger than the dataset are clamped to it. The batch
/// order is reshuffled every epoch from a stream seeded with config.seed. Throws
/// RuntimeFailure if the loss becomes non-finite.
TrainResult train(const MlpModel& initial, const Eigen::MatrixXd& inputs,
                  const Eigen::MatrixXd& targets, const TrainConfig& config,
                  const Normalizer& normalizer);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t parameters_checked = 0;
    /// Parameters whose +/- step flips a ReLU on/off; finite differences are not
    /// meaningful across the kink, so they are left out of the maximum.
    std::size_t parameters_skipped = 0;
};

/// Analytic gradient vs central differences (step 1e-5) over every parameter;
/// error per parameter = |g_a - g_n| / max(|g_a|, |g_n|, 1e-6).
GradientCheckResult gradient_check(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& targets, double step = 1e-5);

/// JSON with layer_dims, activations, row-major weights, biases and the normalizer.
std::string to_json(const MlpModel& model);
MlpModel from_json(const std::string& text);
void save_weights(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_weights(const std::filesystem::path& path);

/// CSV `epoch,loss`, epochs numbered from 1.
std::string format_loss_history_csv(std::span<const double> losses);

}  // namespace beamfix::nn
