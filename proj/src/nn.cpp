// SPDX-License-Identifier: Apache-2.0
#include "beamfix/nn.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"
#include "beamfix/rng.hpp"

namespace beamfix::nn {

namespace {

using json = nlohmann::json;

// Below this magnitude a central difference is dominated by rounding in the loss, so
// gradients that small are compared in absolute rather than relative terms.
constexpr double kGradientFloor = 1e-6;

Eigen::VectorXd floor_or_ones(const Eigen::VectorXd& floor, Eigen::Index n) {
    if (floor.size() == 0) return Eigen::VectorXd::Ones(n);
    if (floor.size() != n) throw ValidationError("normalizer scale floor has the wrong size");
    return floor;
}

void fit_affine(const Eigen::MatrixXd& data, const Eigen::VectorXd& floor, Eigen::VectorXd& shift,
                Eigen::VectorXd& scale) {
    const Eigen::Index dim = data.rows();
    const double n = static_cast<double>(data.cols());
    shift = data.rowwise().mean();
    scale.resize(dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        const double var = (data.row(r).array() - shift[r]).square().sum() / n;
        const double sd = std::sqrt(var);
        scale[r] = sd >= floor[r] ? sd : floor[r];
    }
}

struct ForwardTrace {
    std::vector<Eigen::MatrixXd> activations;  // a0 = input, a1..aL
    std::vector<Eigen::MatrixXd> pre;          // z1..zL
};

ForwardTrace trace_forward(const std::vector<Layer>& layers, const Eigen::MatrixXd& inputs) {
    ForwardTrace t;
    t.activations.push_back(inputs);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd z = layers[l].weights * t.activations.back();
        z.colwise() += layers[l].bias;
        t.pre.push_back(z);
        if (l + 1 < layers.size()) {
            t.activations.push_back(z.cwiseMax(0.0));
        } else {
            t.activations.push_back(std::move(z));
        }
    }
    return t;
}

void check_batch(const MlpModel& model, const Eigen::MatrixXd& inputs) {
    if (model.layers().empty()) throw ValidationError("model has no layers");
    if (inputs.rows() != model.input_dim()) {
        throw ValidationError("input has " + std::to_string(inputs.rows()) +
                              " features, model expects " + std::to_string(model.input_dim()));
    }
}

double loss_with_mask(const std::vector<Layer>& layers, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, std::vector<char>& mask) {
    const ForwardTrace t = trace_forward(layers, inputs);
    mask.clear();
    for (std::size_t l = 0; l + 1 < t.pre.size(); ++l) {
        const Eigen::MatrixXd& z = t.pre[l];
        for (Eigen::Index i = 0; i < z.size(); ++i) mask.push_back(z.data()[i] > 0.0 ? 1 : 0);
    }
    return mse_loss(t.activations.back(), targets);
}

json vector_to_json(const Eigen::VectorXd& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j, Eigen::Index expected, const std::string& what) {
    const auto values = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != expected) {
        throw ValidationError(what + ": expected " + std::to_string(expected) + " values, found " +
                              std::to_string(values.size()));
    }
    Eigen::VectorXd v(expected);
    for (Eigen::Index i = 0; i < expected; ++i) {
        if (!std::isfinite(values[static_cast<std::size_t>(i)])) {
            throw ValidationError(what + ": non-finite value");
        }
        v[i] = values[static_cast<std::size_t>(i)];
    }
    return v;
}

}  // namespace

Normalizer Normalizer::identity(Eigen::Index input_dim, Eigen::Index target_dim) {
    return {Eigen::VectorXd::Zero(input_dim), Eigen::VectorXd::Ones(input_dim),
            Eigen::VectorXd::Zero(target_dim), Eigen::VectorXd::Ones(target_dim)};
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           const Eigen::VectorXd& input_scale_floor,
                           const Eigen::VectorXd& target_scale_floor) {
    if (inputs.cols() == 0 || inputs.cols() != targets.cols()) {
        throw ValidationError("normalizer needs matching, nonempty inputs and targets");
    }
    Normalizer n;
    fit_affine(inputs, floor_or_ones(input_scale_floor, inputs.rows()), n.input_shift,
               n.input_scale);
    fit_affine(targets, floor_or_ones(target_scale_floor, targets.rows()), n.target_shift,
               n.target_scale);
    return n;
}

Eigen::MatrixXd Normalizer::normalize_inputs(const Eigen::MatrixXd& inputs) const {
    return (inputs.colwise() - input_shift).array().colwise() / input_scale.array();
}

Eigen::MatrixXd Normalizer::normalize_targets(const Eigen::MatrixXd& targets) const {
    return (targets.colwise() - target_shift).array().colwise() / target_scale.array();
}

Eigen::MatrixXd Normalizer::denormalize_targets(const Eigen::MatrixXd& z) const {
    Eigen::MatrixXd out = z.array().colwise() * target_scale.array();
    out.colwise() += target_shift;
    return out;
}

void Normalizer::validate(Eigen::Index input_dim, Eigen::Index target_dim) const {
    if (input_shift.size() != input_dim || input_scale.size() != input_dim ||
        target_shift.size() != target_dim || target_scale.size() != target_dim) {
        throw ValidationError("normalizer dimensions do not match the model");
    }
    if (!input_shift.allFinite() || !target_shift.allFinite() || !(input_scale.array() > 0).all() ||
        !(target_scale.array() > 0).all() || !input_scale.allFinite() ||
        !target_scale.allFinite()) {
        throw ValidationError("normalizer scales must be finite and positive");
    }
}

MlpModel MlpModel::zeros(const std::vector<int>& layer_dims) {
    if (layer_dims.size() < 2) throw ValidationError("an MLP needs at least input and output dims");
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        if (layer_dims[l] < 1 || layer_dims[l + 1] < 1) {
            throw ValidationError("layer dims must be positive");
        }
        layers.push_back({Eigen::MatrixXd::Zero(layer_dims[l + 1], layer_dims[l]),
                          Eigen::VectorXd::Zero(layer_dims[l + 1])});
    }
    return from_layers(std::move(layers));
}

MlpModel MlpModel::random(const std::vector<int>& layer_dims, std::uint64_t seed,
                          double init_scale) {
    MlpModel m = zeros(layer_dims);
    Rng rng(seed);
    for (Layer& layer : m.layers_) {
        const double bound = init_scale * std::sqrt(1.0 / static_cast<double>(layer.weights.cols()));
        // Column-major fill order is part of the reproducibility contract.
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = rng.uniform(-bound, bound);
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-bound, bound);
    }
    return m;
}

MlpModel MlpModel::from_layers(std::vector<Layer> layers) {
    if (layers.empty()) throw ValidationError("an MLP needs at least one layer");
    MlpModel m;
    m.dims_.push_back(static_cast<int>(layers.front().weights.cols()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        const std::string name = "layer " + std::to_string(l);
        if (layer.weights.cols() != m.dims_.back()) {
            throw ValidationError(name + ": expects " + std::to_string(layer.weights.cols()) +
                                  " inputs but the previous layer produces " +
                                  std::to_string(m.dims_.back()));
        }
        if (layer.bias.size() != layer.weights.rows()) {
            throw ValidationError(name + ": bias length " + std::to_string(layer.bias.size()) +
                                  " does not match " + std::to_string(layer.weights.rows()) +
                                  " outputs");
        }
        if (layer.weights.rows() < 1 || layer.weights.cols() < 1) {
            throw ValidationError(name + ": empty weight matrix");
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw ValidationError(name + ": non-finite parameters");
        }
        m.dims_.push_back(static_cast<int>(layer.weights.rows()));
    }
    m.layers_ = std::move(layers);
    m.normalizer = Normalizer::identity(m.input_dim(), m.output_dim());
    return m;
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

Eigen::VectorXd MlpModel::forward(const Eigen::VectorXd& input) const {
    return forward_batch(input).col(0);
}

Eigen::MatrixXd MlpModel::forward_batch(const Eigen::MatrixXd& inputs) const {
    check_batch(*this, inputs);
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::MatrixXd z = layers_[l].weights * a;
        z.colwise() += layers_[l].bias;
        a = l + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    }
    return a;
}

Eigen::VectorXd MlpModel::predict(const Eigen::VectorXd& input) const {
    return predict_batch(input).col(0);
}

Eigen::MatrixXd MlpModel::predict_batch(const Eigen::MatrixXd& inputs) const {
    check_batch(*this, inputs);
    return normalizer.denormalize_targets(forward_batch(normalizer.normalize_inputs(inputs)));
}

Eigen::VectorXd MlpModel::parameters() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (const Layer& l : layers_) {
        flat.segment(k, l.weights.size()) =
            Eigen::Map<const Eigen::VectorXd>(l.weights.data(), l.weights.size());
        k += l.weights.size();
        flat.segment(k, l.bias.size()) = l.bias;
        k += l.bias.size();
    }
    return flat;
}

void MlpModel::set_parameters(const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
        throw ValidationError("parameter vector has the wrong length");
    }
    Eigen::Index k = 0;
    for (Layer& l : layers_) {
        Eigen::Map<Eigen::VectorXd>(l.weights.data(), l.weights.size()) =
            flat.segment(k, l.weights.size());
        k += l.weights.size();
        l.bias = flat.segment(k, l.bias.size());
        k += l.bias.size();
    }
}

bool operator==(const MlpModel& a, const MlpModel& b) {
    if (a.dims_ != b.dims_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
        if (a.layers_[l].weights != b.layers_[l].weights || a.layers_[l].bias != b.layers_[l].bias) {
            return false;
        }
    }
    const Normalizer& x = a.normalizer;
    const Normalizer& y = b.normalizer;
    return x.input_shift == y.input_shift && x.input_scale == y.input_scale &&
           x.target_shift == y.target_shift && x.target_scale == y.target_scale;
}

double mse_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
        throw ValidationError("mse_loss: prediction and target shapes differ");
    }
    if (predictions.size() == 0) throw ValidationError("mse_loss: empty batch");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

double loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& targets, Eigen::VectorXd& gradient) {
    check_batch(model, inputs);
    const auto& layers = model.layers();
    const ForwardTrace t = trace_forward(layers, inputs);
    const Eigen::MatrixXd& out = t.activations.back();
    const double loss = mse_loss(out, targets);

    gradient.resize(static_cast<Eigen::Index>(model.parameter_count()));
    // Offsets of each layer's block inside the flat parameter vector.
    std::vector<Eigen::Index> offset(layers.size());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        offset[l] = k;
        k += layers[l].weights.size() + layers[l].bias.size();
    }

    Eigen::MatrixXd delta = 2.0 * (out - targets) / static_cast<double>(out.size());
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Eigen::MatrixXd gw = delta * t.activations[l].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        gradient.segment(offset[l], gw.size()) = Eigen::Map<const Eigen::VectorXd>(gw.data(), gw.size());
        gradient.segment(offset[l] + gw.size(), gb.size()) = gb;
        if (l > 0) {
            delta = (layers[l].weights.transpose() * delta).array() *
                    (t.pre[l - 1].array() > 0.0).cast<double>();
        }
    }
    return loss;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("learning_rate must be positive");
    }
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(weight_init_scale >= 0.0)) throw ValidationError("weight_init_scale must be >= 0");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
        throw ValidationError("final_lr_fraction must lie in (0, 1]");
    }
}

TrainResult train(const MlpModel& initial, const Eigen::MatrixXd& inputs,
                  const Eigen::MatrixXd& targets, const TrainConfig& config,
                  const Normalizer& normalizer) {
    config.validate();
    check_batch(initial, inputs);
    if (inputs.cols() == 0) throw ValidationError("training set is empty");
    if (targets.rows() != initial.output_dim() || targets.cols() != inputs.cols()) {
        throw ValidationError("training targets do not match the model output or sample count");
    }
    normalizer.validate(initial.input_dim(), initial.output_dim());

    const Eigen::MatrixXd x = normalizer.normalize_inputs(inputs);
    const Eigen::MatrixXd y = normalizer.normalize_targets(targets);
    const Eigen::Index n = x.cols();
    const Eigen::Index batch = std::min<Eigen::Index>(config.batch_size, n);

    TrainResult result{initial, {}};
    result.model.normalizer = normalizer;
    Eigen::VectorXd params = initial.parameters();
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(params.size());
    Eigen::VectorXd grad;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed);
    long step = 0;

    Eigen::MatrixXd bx(x.rows(), batch);
    Eigen::MatrixXd by(y.rows(), batch);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<Eigen::Index>(order));
        const double progress = config.epochs > 1 ? epoch / (config.epochs - 1.0) : 0.0;
        const double lr = config.learning_rate *
                          (config.final_lr_fraction +
                           (1.0 - config.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
        for (Eigen::Index start = 0; start < n; start += batch) {
            const Eigen::Index len = std::min(batch, n - start);
            bx.resize(x.rows(), len);
            by.resize(y.rows(), len);
            for (Eigen::Index j = 0; j < len; ++j) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + j)];
                bx.col(j) = x.col(src);
                by.col(j) = y.col(src);
            }
            loss_and_gradient(result.model, bx, by, grad);
            ++step;
            m1 = kAdamBeta1 * m1 + (1.0 - kAdamBeta1) * grad;
            m2 = kAdamBeta2 * m2 + (1.0 - kAdamBeta2) * grad.cwiseProduct(grad);
            const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
            params.array() -= lr * (m1.array() / c1) /
                              ((m2.array() / c2).sqrt() + kAdamEpsilon);
            result.model.set_parameters(params);
        }
        const double loss = mse_loss(result.model.forward_batch(x), y);
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "training diverged: loss is " << loss << " after epoch " << (epoch + 1)
               << " (learning_rate " << config.learning_rate << ", batch_size " << batch << ")";
            throw RuntimeFailure(os.str());
        }
        result.loss_history.push_back(loss);
    }
    return result;
}

GradientCheckResult gradient_check(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& targets, double step) {
    Eigen::VectorXd analytic;
    loss_and_gradient(model, inputs, targets, analytic);
    std::vector<char> base_mask;
    std::vector<char> mask;
    loss_with_mask(model.layers(), inputs, targets, base_mask);

    MlpModel probe = model;
    Eigen::VectorXd params = model.parameters();
    GradientCheckResult r;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + step;
        probe.set_parameters(params);
        const double plus = loss_with_mask(probe.layers(), inputs, targets, mask);
        const bool kink_plus = mask != base_mask;
        params[i] = orig - step;
        probe.set_parameters(params);
        const double minus = loss_with_mask(probe.layers(), inputs, targets, mask);
        const bool kink_minus = mask != base_mask;
        params[i] = orig;
        if (kink_plus || kink_minus) {
            ++r.parameters_skipped;
            continue;
        }
        const double numeric = (plus - minus) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradientFloor});
        r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic[i] - numeric) / denom);
        ++r.parameters_checked;
    }
    return r;
}

std::string to_json(const MlpModel& model) {
    json j;
    j["format"] = "beamfix-mlp";
    j["version"] = 1;
    j["layer_dims"] = model.layer_dims();
    json acts = json::array();
    json layers = json::array();
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const Layer& layer = model.layers()[l];
        acts.push_back(l + 1 < model.layers().size() ? "relu" : "identity");
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
        }
        layers.push_back({{"weights", w}, {"bias", vector_to_json(layer.bias)}});
    }
    j["activations"] = acts;
    j["layers"] = layers;
    j["normalizer"] = {{"input_shift", vector_to_json(model.normalizer.input_shift)},
                       {"input_scale", vector_to_json(model.normalizer.input_scale)},
                       {"target_shift", vector_to_json(model.normalizer.target_shift)},
                       {"target_scale", vector_to_json(model.normalizer.target_scale)}};
    return j.dump(1) + "\n";
}

MlpModel from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("weight file is not valid JSON: ") + e.what());
    }
    try {
        if (j.value("format", std::string()) != "beamfix-mlp") {
            throw ValidationError("weight file: unknown format tag");
        }
        const auto dims = j.at("layer_dims").get<std::vector<int>>();
        const auto& jl = j.at("layers");
        const auto acts = j.at("activations").get<std::vector<std::string>>();
        if (dims.size() < 2 || jl.size() != dims.size() - 1 || acts.size() != jl.size()) {
            throw ValidationError("weight file: layer_dims, layers and activations disagree");
        }
        std::vector<Layer> layers;
        for (std::size_t l = 0; l < jl.size(); ++l) {
            const std::string name = "layer " + std::to_string(l);
            const std::string expected_act = l + 1 < jl.size() ? "relu" : "identity";
            if (acts[l] != expected_act) {
                throw ValidationError(name + ": activation '" + acts[l] + "', expected '" +
                                      expected_act + "'");
            }
            if (dims[l] < 1 || dims[l + 1] < 1) throw ValidationError(name + ": non-positive dims");
            const auto w = vector_from_json(jl[l].at("weights"),
                                            static_cast<Eigen::Index>(dims[l]) * dims[l + 1],
                                            name + " weights");
            Layer layer;
            layer.weights.resize(dims[l + 1], dims[l]);
            Eigen::Index k = 0;
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = w[k++];
            }
            layer.bias = vector_from_json(jl[l].at("bias"), dims[l + 1], name + " bias");
            layers.push_back(std::move(layer));
        }
        MlpModel m = MlpModel::from_layers(std::move(layers));
        const auto& jn = j.at("normalizer");
        m.normalizer.input_shift = vector_from_json(jn.at("input_shift"), dims.front(), "input_shift");
        m.normalizer.input_scale = vector_from_json(jn.at("input_scale"), dims.front(), "input_scale");
        m.normalizer.target_shift =
            vector_from_json(jn.at("target_shift"), dims.back(), "target_shift");
        m.normalizer.target_scale =
            vector_from_json(jn.at("target_scale"), dims.back(), "target_scale");
        m.normalizer.validate(m.input_dim(), m.output_dim());
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("weight file: ") + e.what());
    }
}

void save_weights(const MlpModel& model, const std::filesystem::path& path) {
    csv::write_file(path, to_json(model));
}

MlpModel load_weights(const std::filesystem::path& path) {
    try {
        return from_json(csv::read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string format_loss_history_csv(std::span<const double> losses) {
    std::ostringstream os;
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        os << (i + 1) << ',' << csv::format_double(losses[i]) << '\n';
    }
    return os.str();
}

}  // namespace beamfix::nn
