#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "piven/error.hpp"
#include "piven/loss.hpp"
#include "piven/matrix.hpp"
#include "piven/random.hpp"

namespace piven {

/// One affine layer; weights are stored out x in.
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;

    bool operator==(const DenseLayer&) const = default;
};

/// Initial biases of the upper and lower interval heads (normalized-target units).
struct HeadBias {
    double upper = 3.0;
    double lower = -3.0;
};

/// Dense ReLU network whose output layer feeds the loss heads. For interval
/// variants the outputs are (U, L, v-logit); for the Gaussian baseline they
/// are (mean, raw variance).
class FeedForwardModel {
public:
    FeedForwardModel() = default;
    explicit FeedForwardModel(std::vector<std::size_t> layer_sizes) : layer_sizes_(std::move(layer_sizes)) {
        for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
            layers_.push_back({Matrix(layer_sizes_[l + 1], layer_sizes_[l]),
                               std::vector<double>(layer_sizes_[l + 1], 0.0)});
        }
    }

    const std::vector<std::size_t>& layer_sizes() const noexcept { return layer_sizes_; }
    std::size_t input_dim() const noexcept { return layer_sizes_.front(); }
    std::size_t output_dim() const noexcept { return layer_sizes_.back(); }

    std::vector<DenseLayer>& layers() noexcept { return layers_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
        return n;
    }

    bool operator==(const FeedForwardModel&) const = default;

private:
    std::vector<std::size_t> layer_sizes_;
    std::vector<DenseLayer> layers_;
};

/// dLoss/dparameter for every tensor of a model, mirroring its layout.
struct GradientSet {
    std::vector<DenseLayer> layers;

    static GradientSet zeros_like(const FeedForwardModel& model) {
        GradientSet g;
        for (const auto& layer : model.layers()) {
            g.layers.push_back({Matrix(layer.weights.rows(), layer.weights.cols()),
                                std::vector<double>(layer.bias.size(), 0.0)});
        }
        return g;
    }

    bool operator==(const GradientSet&) const = default;
};

/// Flat views over every parameter tensor, in a fixed order (weights then bias, per layer).
inline std::vector<std::span<double>> parameter_blocks(std::vector<DenseLayer>& layers) {
    std::vector<std::span<double>> blocks;
    for (auto& layer : layers) {
        blocks.push_back(layer.weights.flat());
        blocks.emplace_back(layer.bias);
    }
    return blocks;
}

inline std::vector<std::span<const double>> parameter_blocks(const std::vector<DenseLayer>& layers) {
    std::vector<std::span<const double>> blocks;
    for (const auto& layer : layers) {
        blocks.push_back(layer.weights.flat());
        blocks.emplace_back(layer.bias);
    }
    return blocks;
}

inline bool same_shape(const FeedForwardModel& model, const GradientSet& grads) {
    if (model.layers().size() != grads.layers.size()) return false;
    for (std::size_t l = 0; l < grads.layers.size(); ++l) {
        const auto& a = model.layers()[l];
        const auto& b = grads.layers[l];
        if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
            a.bias.size() != b.bias.size()) {
            return false;
        }
    }
    return true;
}

enum class HeadLayout { interval, gaussian };

constexpr std::size_t head_count(HeadLayout layout) noexcept { return layout == HeadLayout::gaussian ? 2 : 3; }

constexpr HeadLayout layout_for(Variant v) noexcept {
    return v == Variant::gauss_nll ? HeadLayout::gaussian : HeadLayout::interval;
}

/// Builds a model with fan-in scaled uniform weights (He range for ReLU-fed
/// layers, LeCun range for the linear output layer), zero hidden biases and the
/// given interval-head biases.
inline FeedForwardModel init_model(std::span<const std::size_t> layer_sizes, std::uint64_t seed,
                                   HeadBias head_bias = {}, HeadLayout layout = HeadLayout::interval) {
    if (layer_sizes.size() < 2) throw ConfigError("init_model: need at least input and output sizes");
    for (auto s : layer_sizes) {
        if (s == 0) throw ConfigError("init_model: layer sizes must be positive");
    }
    if (layer_sizes.back() != head_count(layout)) {
        throw ConfigError("init_model: output layer must have " + std::to_string(head_count(layout)) +
                          " units, got " + std::to_string(layer_sizes.back()));
    }

    FeedForwardModel model(std::vector<std::size_t>(layer_sizes.begin(), layer_sizes.end()));
    Rng rng(seed);
    auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const bool output = l + 1 == layers.size();
        const double fan_in = static_cast<double>(layers[l].weights.cols());
        const double limit = std::sqrt((output ? 3.0 : 6.0) / fan_in);
        for (double& w : layers[l].weights.flat()) w = rng.uniform(-limit, limit);
    }
    if (layout == HeadLayout::interval) {
        auto& bias = layers.back().bias;
        bias[0] = head_bias.upper;
        bias[1] = head_bias.lower;
        bias[2] = 0.0;
    }
    return model;
}

inline FeedForwardModel init_model(std::initializer_list<std::size_t> layer_sizes, std::uint64_t seed,
                                   HeadBias head_bias = {}, HeadLayout layout = HeadLayout::interval) {
    const std::vector<std::size_t> sizes(layer_sizes);
    return init_model(std::span<const std::size_t>(sizes), seed, head_bias, layout);
}

namespace detail {

// out = in * W^T + b
inline Matrix affine(const Matrix& in, const DenseLayer& layer) {
    const std::size_t n = in.rows(), out_dim = layer.weights.rows(), in_dim = layer.weights.cols();
    Matrix out(n, out_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = in.row(i);
        auto z = out.row(i);
        for (std::size_t j = 0; j < out_dim; ++j) {
            const auto w = layer.weights.row(j);
            double acc = layer.bias[j];
            for (std::size_t k = 0; k < in_dim; ++k) acc += w[k] * x[k];
            z[j] = acc;
        }
    }
    return out;
}

inline void relu_inplace(Matrix& m) {
    for (double& x : m.flat()) x = x > 0.0 ? x : 0.0;
}

} // namespace detail

/// Raw output-layer activations, one row per sample.
inline Matrix forward_heads(const FeedForwardModel& model, const Matrix& features) {
    if (features.cols() != model.input_dim()) {
        throw ShapeError("forward: feature dimension " + std::to_string(features.cols()) +
                         " does not match model input " + std::to_string(model.input_dim()));
    }
    Matrix act = features;
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        act = detail::affine(act, layers[l]);
        if (l + 1 < layers.size()) detail::relu_inplace(act);
    }
    return act;
}

/// Interval outputs with the auxiliary-head value prediction.
inline PIOutput forward(const FeedForwardModel& model, const Matrix& features) {
    return interpret_heads(forward_heads(model, features), Variant::piven);
}

/// Outputs as reported by the given training variant (midpoint for QD/MOI, raw head for POO).
inline PIOutput predict(const FeedForwardModel& model, const Matrix& features, Variant variant) {
    return interpret_heads(forward_heads(model, features), variant);
}

inline GaussianOutput predict_gaussian(const FeedForwardModel& model, const Matrix& features) {
    return interpret_gaussian(forward_heads(model, features));
}

inline double evaluate_loss(const FeedForwardModel& model, const Matrix& features, std::span<const double> y,
                            const LossConfig& cfg) {
    return loss_value(forward_heads(model, features), y, cfg);
}

struct LossAndGradient {
    double loss = 0.0;
    GradientSet gradients;
};

/// Mean batch loss and its exact gradient by reverse-mode accumulation.
inline LossAndGradient backward(const FeedForwardModel& model, const Matrix& features, std::span<const double> y,
                                const LossConfig& cfg, std::size_t batch_index = 0) {
    if (features.rows() == 0) throw ShapeError("backward: empty batch");
    if (features.cols() != model.input_dim()) throw ShapeError("backward: feature dimension mismatch");
    require_same_length(features.rows(), y.size(), "backward");
    if (model.output_dim() != head_count(cfg.variant)) {
        throw ConfigError("backward: model has " + std::to_string(model.output_dim()) + " outputs but variant " +
                          to_string(cfg.variant) + " needs " + std::to_string(head_count(cfg.variant)));
    }

    const auto& layers = model.layers();
    const std::size_t depth = layers.size();
    // activations[l] is the input to layer l; pre[l] its affine output.
    std::vector<Matrix> activations(depth + 1), pre(depth);
    activations[0] = features;
    for (std::size_t l = 0; l < depth; ++l) {
        pre[l] = detail::affine(activations[l], layers[l]);
        activations[l + 1] = pre[l];
        if (l + 1 < depth) detail::relu_inplace(activations[l + 1]);
    }

    HeadGradient head = loss_gradient(activations[depth], y, cfg);
    if (!std::isfinite(head.loss)) {
        throw DivergenceError("non-finite loss at batch " + std::to_string(batch_index), batch_index);
    }

    LossAndGradient result{head.loss, GradientSet::zeros_like(model)};
    Matrix delta = std::move(head.d_heads);
    const std::size_t n = features.rows();
    for (std::size_t l = depth; l-- > 0;) {
        auto& g = result.gradients.layers[l];
        const Matrix& input = activations[l];
        const std::size_t out_dim = layers[l].weights.rows(), in_dim = layers[l].weights.cols();
        for (std::size_t i = 0; i < n; ++i) {
            const auto d = delta.row(i);
            const auto x = input.row(i);
            for (std::size_t j = 0; j < out_dim; ++j) {
                if (d[j] == 0.0) continue;
                g.bias[j] += d[j];
                auto gw = g.weights.row(j);
                for (std::size_t k = 0; k < in_dim; ++k) gw[k] += d[j] * x[k];
            }
        }
        if (l == 0) break;
        Matrix next(n, in_dim);
        for (std::size_t i = 0; i < n; ++i) {
            const auto d = delta.row(i);
            auto dn = next.row(i);
            for (std::size_t j = 0; j < out_dim; ++j) {
                if (d[j] == 0.0) continue;
                const auto w = layers[l].weights.row(j);
                for (std::size_t k = 0; k < in_dim; ++k) dn[k] += d[j] * w[k];
            }
            const auto z = pre[l - 1].row(i);
            for (std::size_t k = 0; k < in_dim; ++k) {
                if (!(z[k] > 0.0)) dn[k] = 0.0;
            }
        }
        delta = std::move(next);
    }
    return result;
}

/// Central-difference stencils: three-point has O(h^2) truncation error,
/// five-point O(h^4).
enum class Stencil { three_point, five_point };

/// Central-difference estimate of df/dparams, perturbing one entry at a time.
template <typename F>
std::vector<double> central_difference(std::span<double> params, F&& f, double h,
                                       Stencil stencil = Stencil::three_point) {
    if (!(h > 0.0)) throw ConfigError("central_difference: step h must be positive");
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        const auto at = [&](double offset) {
            params[i] = saved + offset;
            return f();
        };
        if (stencil == Stencil::three_point) {
            grad[i] = (at(h) - at(-h)) / (2.0 * h);
        } else {
            grad[i] = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        }
        params[i] = saved;
    }
    return grad;
}

/// Finite-difference oracle for backward().
inline GradientSet finite_diff_grad(const FeedForwardModel& model, const Matrix& features, std::span<const double> y,
                                    const LossConfig& cfg, double h, Stencil stencil = Stencil::three_point) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step h must be positive");
    FeedForwardModel probe = model;
    GradientSet grads = GradientSet::zeros_like(model);
    auto param_blocks = parameter_blocks(probe.layers());
    auto grad_blocks = parameter_blocks(grads.layers);
    const auto loss = [&] { return evaluate_loss(probe, features, y, cfg); };
    for (std::size_t b = 0; b < param_blocks.size(); ++b) {
        const auto est = central_difference(param_blocks[b], loss, h, stencil);
        std::copy(est.begin(), est.end(), grad_blocks[b].begin());
    }
    return grads;
}

struct AdamConfig {
    double learning_rate = 0.02;
    double decay = 0.995; // learning-rate multiplier applied at each epoch boundary
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    GradientSet first_moment;
    GradientSet second_moment;
    std::uint64_t step = 0;
    double learning_rate = 0.0;

    AdamState() = default;
    AdamState(const FeedForwardModel& model, AdamConfig cfg)
        : config(cfg),
          first_moment(GradientSet::zeros_like(model)),
          second_moment(GradientSet::zeros_like(model)),
          learning_rate(cfg.learning_rate) {
        if (!(cfg.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
        if (!(cfg.decay > 0.0 && cfg.decay <= 1.0)) throw ConfigError("adam: decay must lie in (0,1]");
    }

    void end_epoch() noexcept { learning_rate *= config.decay; }
};

/// One bias-corrected Adam update.
inline void adam_step(AdamState& state, FeedForwardModel& model, const GradientSet& grads) {
    if (!same_shape(model, grads) || !same_shape(model, state.first_moment)) {
        throw ShapeError("adam_step: gradient shapes do not match the model");
    }
    for (auto block : parameter_blocks(grads.layers)) {
        for (double g : block) {
            if (!std::isfinite(g)) throw DivergenceError("adam_step: non-finite gradient", state.step);
        }
    }
    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    auto params = parameter_blocks(model.layers());
    auto m = parameter_blocks(state.first_moment.layers);
    auto v = parameter_blocks(state.second_moment.layers);
    const auto g = parameter_blocks(grads.layers);
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            m[b][i] = c.beta1 * m[b][i] + (1.0 - c.beta1) * g[b][i];
            v[b][i] = c.beta2 * v[b][i] + (1.0 - c.beta2) * g[b][i] * g[b][i];
            const double m_hat = m[b][i] / correction1;
            const double v_hat = v[b][i] / correction2;
            params[b][i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

} // namespace piven
