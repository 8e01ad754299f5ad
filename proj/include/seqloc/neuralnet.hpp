#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqloc/common.hpp"

#include "json.hpp"

namespace seqloc::nn {

enum class Activation { Relu, Identity, Softmax };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
        case Activation::Softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    if (s == "softmax") return Activation::Softmax;
    throw ConfigError("unknown activation: " + s);
}

struct LayerSpec {
    int width = 1;
    Activation activation = Activation::Identity;

    bool operator==(const LayerSpec&) const = default;
};

enum class Loss { CrossEntropy, MeanSquaredError };
enum class OptimizerKind { Sgd, Adam };
enum class InputNormMode {
    None,            // identity
    FixedRssiRange,  // affine [-105, 0] -> [0, 1], same constants for every feature
    FitMinMax,       // per-feature min/max fitted on the training inputs
};

struct TrainConfig {
    Loss loss = Loss::CrossEntropy;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 100;
    std::uint64_t seed = 1;
    int patience = 0;  // early-stop patience in epochs; 0 disables
    InputNormMode input_norm = InputNormMode::None;
    bool normalize_targets = false;  // standardize regression targets per output
};

// (input, target). Targets are one-hot rows for cross-entropy and real
// vectors for mean squared error.
using Sample = std::pair<std::vector<double>, std::vector<double>>;

struct MlpModel {
    int input_width = 0;
    std::vector<LayerSpec> layers;               // hidden layers then output layer
    std::vector<std::vector<double>> weights;    // per layer, row-major (width x fan_in)
    std::vector<std::vector<double>> biases;     // per layer
    std::vector<double> norm_shift, norm_scale;  // x' = (x - shift) * scale, per feature
    std::vector<double> out_shift, out_scale;    // t' = (t - shift) * scale, per output
    std::uint64_t seed = 0;

    int output_width() const { return layers.back().width; }
    std::size_t parameter_count() const {
        std::size_t count = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) count += weights[l].size() + biases[l].size();
        return count;
    }
};

namespace detail {

inline void check_spec(int input_width, const std::vector<LayerSpec>& spec) {
    if (input_width < 1) throw InvalidArgument("network input width must be >= 1");
    if (spec.empty()) throw InvalidArgument("network needs at least one layer");
    for (std::size_t l = 0; l < spec.size(); ++l) {
        if (spec[l].width < 1) throw InvalidArgument("layer widths must be >= 1");
        if (spec[l].activation == Activation::Softmax && l + 1 != spec.size())
            throw InvalidArgument("softmax is only allowed on the final layer");
    }
}

inline int fan_in(const MlpModel& m, std::size_t layer) {
    return layer == 0 ? m.input_width : m.layers[layer - 1].width;
}

inline void softmax_inplace(double* z, int width) {
    double max_z = z[0];
    for (int k = 1; k < width; ++k) max_z = std::max(max_z, z[k]);
    double sum = 0.0;
    for (int k = 0; k < width; ++k) {
        z[k] = std::exp(z[k] - max_z);
        sum += z[k];
    }
    for (int k = 0; k < width; ++k) z[k] /= sum;
}

// act_prev: (batch x fan_in) row-major -> out: (batch x width) pre-activations.
// Four-way partial sums keep the dot product vector-friendly.
inline void affine_forward(const std::vector<double>& act_prev, int batch, int fan_in,
                           const std::vector<double>& w, const std::vector<double>& b, int width,
                           std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(batch) * static_cast<std::size_t>(width), 0.0);
    for (int i = 0; i < batch; ++i) {
        const double* __restrict a =
            act_prev.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(fan_in);
        double* __restrict o = out.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(width);
        for (int u = 0; u < width; ++u) {
            const double* __restrict wr =
                w.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(fan_in);
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            int k = 0;
            for (; k + 4 <= fan_in; k += 4) {
                s0 += wr[k] * a[k];
                s1 += wr[k + 1] * a[k + 1];
                s2 += wr[k + 2] * a[k + 2];
                s3 += wr[k + 3] * a[k + 3];
            }
            double acc = b[static_cast<std::size_t>(u)] + ((s0 + s1) + (s2 + s3));
            for (; k < fan_in; ++k) acc += wr[k] * a[k];
            o[u] = acc;
        }
    }
}

struct BatchBuffers {
    std::vector<std::vector<double>> pre;  // per layer, batch x width
    std::vector<std::vector<double>> act;  // per layer, batch x width (post-activation)
};

// Inputs must already be normalized. Fills pre/act for every layer.
inline void forward_batch(const MlpModel& m, const std::vector<double>& xn, int batch, BatchBuffers& buf) {
    const std::size_t layer_count = m.layers.size();
    buf.pre.resize(layer_count);
    buf.act.resize(layer_count);
    const std::vector<double>* prev = &xn;
    for (std::size_t l = 0; l < layer_count; ++l) {
        const int in_w = fan_in(m, l);
        const int out_w = m.layers[l].width;
        affine_forward(*prev, batch, in_w, m.weights[l], m.biases[l], out_w, buf.pre[l]);
        buf.act[l] = buf.pre[l];
        switch (m.layers[l].activation) {
            case Activation::Relu:
                for (double& v : buf.act[l]) v = v > 0.0 ? v : 0.0;
                break;
            case Activation::Softmax:
                for (int i = 0; i < batch; ++i)
                    softmax_inplace(buf.act[l].data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(out_w),
                                    out_w);
                break;
            case Activation::Identity: break;
        }
        prev = &buf.act[l];
    }
}

inline void normalize_inputs(const MlpModel& m, std::span<const Sample> batch, std::vector<double>& xn) {
    const int d = m.input_width;
    xn.resize(batch.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& x = batch[i].first;
        if (static_cast<int>(x.size()) != d)
            throw InvalidArgument("input has " + std::to_string(x.size()) + " features, network expects " +
                                  std::to_string(d));
        for (int k = 0; k < d; ++k)
            xn[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] =
                (x[static_cast<std::size_t>(k)] - m.norm_shift[static_cast<std::size_t>(k)]) *
                m.norm_scale[static_cast<std::size_t>(k)];
    }
}

inline void normalize_targets(const MlpModel& m, std::span<const Sample> batch, std::vector<double>& tn) {
    const int k_out = m.output_width();
    tn.resize(batch.size() * static_cast<std::size_t>(k_out));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = batch[i].second;
        if (static_cast<int>(t.size()) != k_out)
            throw InvalidArgument("target has " + std::to_string(t.size()) + " values, network outputs " +
                                  std::to_string(k_out));
        for (int k = 0; k < k_out; ++k)
            tn[i * static_cast<std::size_t>(k_out) + static_cast<std::size_t>(k)] =
                (t[static_cast<std::size_t>(k)] - m.out_shift[static_cast<std::size_t>(k)]) *
                m.out_scale[static_cast<std::size_t>(k)];
    }
}

// Mean loss over the batch, in normalized target space. Cross-entropy is
// computed from logits via log-sum-exp.
inline double loss_from_buffers(const MlpModel& m, const BatchBuffers& buf, const std::vector<double>& tn,
                                int batch, Loss loss) {
    const int k_out = m.output_width();
    const auto& out_pre = buf.pre.back();
    const auto& out_act = buf.act.back();
    double total = 0.0;
    for (int i = 0; i < batch; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * static_cast<std::size_t>(k_out);
        if (loss == Loss::CrossEntropy) {
            double max_z = out_pre[base];
            for (int k = 1; k < k_out; ++k) max_z = std::max(max_z, out_pre[base + static_cast<std::size_t>(k)]);
            double lse = 0.0;
            for (int k = 0; k < k_out; ++k) lse += std::exp(out_pre[base + static_cast<std::size_t>(k)] - max_z);
            lse = max_z + std::log(lse);
            for (int k = 0; k < k_out; ++k)
                total -= tn[base + static_cast<std::size_t>(k)] * (out_pre[base + static_cast<std::size_t>(k)] - lse);
        } else {
            for (int k = 0; k < k_out; ++k) {
                const double diff = out_act[base + static_cast<std::size_t>(k)] - tn[base + static_cast<std::size_t>(k)];
                total += diff * diff;
            }
        }
    }
    return total / static_cast<double>(batch);
}

struct Gradients {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    void zero_like(const MlpModel& m) {
        w.resize(m.weights.size());
        b.resize(m.biases.size());
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            w[l].assign(m.weights[l].size(), 0.0);
            b[l].assign(m.biases[l].size(), 0.0);
        }
    }
};

// Backprop through the buffers filled by forward_batch. Scales by 1/batch to
// match loss_from_buffers.
inline void backward_batch(const MlpModel& m, const BatchBuffers& buf, const std::vector<double>& xn,
                           const std::vector<double>& tn, int batch, Loss loss, Gradients& grads) {
    const std::size_t layer_count = m.layers.size();
    const int k_out = m.output_width();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    std::vector<double> delta(static_cast<std::size_t>(batch) * static_cast<std::size_t>(k_out));
    const auto& out_act = buf.act.back();
    for (std::size_t i = 0; i < delta.size(); ++i) {
        // softmax+CE and identity+MSE both reduce to (output - target) terms
        const double diff = out_act[i] - tn[i];
        delta[i] = loss == Loss::CrossEntropy ? diff * inv_batch : 2.0 * diff * inv_batch;
    }
    if (loss == Loss::MeanSquaredError && m.layers.back().activation == Activation::Relu) {
        const auto& out_pre = buf.pre.back();
        for (std::size_t i = 0; i < delta.size(); ++i)
            if (out_pre[i] <= 0.0) delta[i] = 0.0;
    }

    for (std::size_t l = layer_count; l-- > 0;) {
        const int in_w = fan_in(m, l);
        const int out_w = m.layers[l].width;
        const std::vector<double>& prev_act = l == 0 ? xn : buf.act[l - 1];

        auto& gw = grads.w[l];
        auto& gb = grads.b[l];
        for (int i = 0; i < batch; ++i) {
            const double* d = delta.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(out_w);
            const double* __restrict a =
                prev_act.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(in_w);
            for (int u = 0; u < out_w; ++u) {
                const double du = d[u];
                if (du == 0.0) continue;
                gb[static_cast<std::size_t>(u)] += du;
                double* __restrict gwr =
                    gw.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(in_w);
                for (int k = 0; k < in_w; ++k) gwr[k] += du * a[k];
            }
        }

        if (l == 0) break;
        std::vector<double> delta_prev(static_cast<std::size_t>(batch) * static_cast<std::size_t>(in_w), 0.0);
        const auto& w = m.weights[l];
        for (int i = 0; i < batch; ++i) {
            const double* d = delta.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(out_w);
            double* __restrict dp =
                delta_prev.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(in_w);
            for (int u = 0; u < out_w; ++u) {
                const double du = d[u];
                if (du == 0.0) continue;
                const double* __restrict wr =
                    w.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(in_w);
                for (int k = 0; k < in_w; ++k) dp[k] += du * wr[k];
            }
        }
        if (m.layers[l - 1].activation == Activation::Relu) {
            const auto& pre = buf.pre[l - 1];
            for (std::size_t i = 0; i < delta_prev.size(); ++i)
                if (pre[i] <= 0.0) delta_prev[i] = 0.0;
        }
        delta = std::move(delta_prev);
    }
}

}  // namespace detail

// Mean loss of the model over a batch (targets transformed into the model's
// normalized output space first).
inline double loss_on_batch(const MlpModel& m, std::span<const Sample> batch, Loss loss) {
    if (batch.empty()) throw InvalidArgument("loss_on_batch: empty batch");
    std::vector<double> xn, tn;
    detail::normalize_inputs(m, batch, xn);
    detail::normalize_targets(m, batch, tn);
    detail::BatchBuffers buf;
    detail::forward_batch(m, xn, static_cast<int>(batch.size()), buf);
    return detail::loss_from_buffers(m, buf, tn, static_cast<int>(batch.size()), loss);
}

// Deterministic single-input forward pass. Regression outputs are mapped back
// from the model's normalized target space.
inline std::vector<double> forward(const MlpModel& m, std::span<const double> x) {
    if (static_cast<int>(x.size()) != m.input_width)
        throw InvalidArgument("forward: input has " + std::to_string(x.size()) + " features, network expects " +
                              std::to_string(m.input_width));
    std::vector<double> act(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) act[k] = (x[k] - m.norm_shift[k]) * m.norm_scale[k];

    std::vector<double> next;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const int in_w = detail::fan_in(m, l);
        const int out_w = m.layers[l].width;
        next.assign(static_cast<std::size_t>(out_w), 0.0);
        for (int u = 0; u < out_w; ++u) {
            const double* wr = m.weights[l].data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(in_w);
            double acc = m.biases[l][static_cast<std::size_t>(u)];
            for (int k = 0; k < in_w; ++k) acc += wr[k] * act[static_cast<std::size_t>(k)];
            next[static_cast<std::size_t>(u)] = acc;
        }
        switch (m.layers[l].activation) {
            case Activation::Relu:
                for (double& v : next) v = v > 0.0 ? v : 0.0;
                break;
            case Activation::Softmax: detail::softmax_inplace(next.data(), out_w); break;
            case Activation::Identity: break;
        }
        act = std::move(next);
    }
    for (std::size_t k = 0; k < act.size(); ++k) act[k] = act[k] / m.out_scale[k] + m.out_shift[k];
    return act;
}

// Argmax of the (softmax) output; ties break to the lowest index.
inline int predict_class(const MlpModel& m, std::span<const double> x) {
    const auto out = forward(m, x);
    int best = 0;
    for (int k = 1; k < static_cast<int>(out.size()); ++k)
        if (out[static_cast<std::size_t>(k)] > out[static_cast<std::size_t>(best)]) best = k;
    return best;
}

inline std::vector<double> predict_vector(const MlpModel& m, std::span<const double> x) { return forward(m, x); }

// Trains a feed-forward network. Bit-reproducible for a fixed seed; when a
// validation set is given and cfg.patience > 0, early stopping restores the
// best-validation-loss weights.
inline MlpModel train(std::span<const Sample> data, const TrainConfig& cfg, const std::vector<LayerSpec>& spec,
                      std::span<const Sample> validation = {}) {
    if (data.empty()) throw InvalidArgument("train: empty training data");
    if (cfg.learning_rate <= 0.0) throw InvalidArgument("train: learning rate must be > 0");
    if (cfg.batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
    if (cfg.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    const int input_width = static_cast<int>(data.front().first.size());
    detail::check_spec(input_width, spec);
    if (cfg.loss == Loss::CrossEntropy && spec.back().activation != Activation::Softmax)
        throw InvalidArgument("train: cross-entropy requires a softmax output layer");
    if (cfg.loss == Loss::MeanSquaredError && spec.back().activation == Activation::Softmax)
        throw InvalidArgument("train: mean squared error requires a non-softmax output layer");

    MlpModel m;
    m.input_width = input_width;
    m.layers = spec;
    m.seed = cfg.seed;

    // Input normalization constants, fitted on the training inputs only.
    m.norm_shift.assign(static_cast<std::size_t>(input_width), 0.0);
    m.norm_scale.assign(static_cast<std::size_t>(input_width), 1.0);
    if (cfg.input_norm == InputNormMode::FixedRssiRange) {
        for (int k = 0; k < input_width; ++k) {
            m.norm_shift[static_cast<std::size_t>(k)] = -105.0;
            m.norm_scale[static_cast<std::size_t>(k)] = 1.0 / 105.0;
        }
    } else if (cfg.input_norm == InputNormMode::FitMinMax) {
        for (int k = 0; k < input_width; ++k) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (const auto& [x, t] : data) {
                lo = std::min(lo, x[static_cast<std::size_t>(k)]);
                hi = std::max(hi, x[static_cast<std::size_t>(k)]);
            }
            const double span = hi - lo;
            m.norm_shift[static_cast<std::size_t>(k)] = lo;
            m.norm_scale[static_cast<std::size_t>(k)] = span > 1e-12 ? 1.0 / span : 1.0;
        }
    }

    const int k_out = spec.back().width;
    m.out_shift.assign(static_cast<std::size_t>(k_out), 0.0);
    m.out_scale.assign(static_cast<std::size_t>(k_out), 1.0);
    if (cfg.normalize_targets && cfg.loss == Loss::MeanSquaredError) {
        for (int k = 0; k < k_out; ++k) {
            double mean = 0.0;
            for (const auto& [x, t] : data) mean += t[static_cast<std::size_t>(k)];
            mean /= static_cast<double>(data.size());
            double var = 0.0;
            for (const auto& [x, t] : data) {
                const double d = t[static_cast<std::size_t>(k)] - mean;
                var += d * d;
            }
            const double sd = std::sqrt(var / static_cast<double>(data.size()));
            m.out_shift[static_cast<std::size_t>(k)] = mean;
            m.out_scale[static_cast<std::size_t>(k)] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
    }

    // He-style uniform initialization from the seeded generator.
    Rng rng(cfg.seed);
    m.weights.resize(spec.size());
    m.biases.resize(spec.size());
    for (std::size_t l = 0; l < spec.size(); ++l) {
        const int in_w = detail::fan_in(m, l);
        const int out_w = spec[l].width;
        const double limit = std::sqrt(6.0 / static_cast<double>(in_w));
        m.weights[l].resize(static_cast<std::size_t>(in_w) * static_cast<std::size_t>(out_w));
        for (double& w : m.weights[l]) w = rng.uniform(-limit, limit);
        m.biases[l].assign(static_cast<std::size_t>(out_w), 0.0);
    }

    std::vector<double> xn_all, tn_all;
    detail::normalize_inputs(m, data, xn_all);
    detail::normalize_targets(m, data, tn_all);

    detail::Gradients grads;
    grads.zero_like(m);
    detail::Gradients adam_m, adam_v;
    if (cfg.optimizer == OptimizerKind::Adam) {
        adam_m.zero_like(m);
        adam_v.zero_like(m);
    }
    long long adam_step = 0;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const bool early_stop = !validation.empty() && cfg.patience > 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    std::vector<std::vector<double>> best_w, best_b;

    std::vector<double> xb, tb;
    detail::BatchBuffers buf;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                            order.size() - start);
            const int batch = static_cast<int>(count);
            const std::size_t d = static_cast<std::size_t>(input_width);
            const std::size_t ko = static_cast<std::size_t>(k_out);
            xb.resize(count * d);
            tb.resize(count * ko);
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(xn_all.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                            xb.begin() + static_cast<std::ptrdiff_t>(i * d));
                std::copy_n(tn_all.begin() + static_cast<std::ptrdiff_t>(src * ko), ko,
                            tb.begin() + static_cast<std::ptrdiff_t>(i * ko));
            }

            detail::forward_batch(m, xb, batch, buf);
            epoch_loss += detail::loss_from_buffers(m, buf, tb, batch, cfg.loss) * static_cast<double>(count);
            seen += count;

            for (auto& g : grads.w) std::fill(g.begin(), g.end(), 0.0);
            for (auto& g : grads.b) std::fill(g.begin(), g.end(), 0.0);
            detail::backward_batch(m, buf, xb, tb, batch, cfg.loss, grads);

            if (cfg.optimizer == OptimizerKind::Sgd) {
                for (std::size_t l = 0; l < m.weights.size(); ++l) {
                    for (std::size_t i = 0; i < m.weights[l].size(); ++i)
                        m.weights[l][i] -= cfg.learning_rate * grads.w[l][i];
                    for (std::size_t i = 0; i < m.biases[l].size(); ++i)
                        m.biases[l][i] -= cfg.learning_rate * grads.b[l][i];
                }
            } else {
                ++adam_step;
                const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
                const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_step));
                const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_step));
                auto update = [&](std::vector<double>& param, const std::vector<double>& g,
                                  std::vector<double>& mo, std::vector<double>& vo) {
                    for (std::size_t i = 0; i < param.size(); ++i) {
                        mo[i] = beta1 * mo[i] + (1.0 - beta1) * g[i];
                        vo[i] = beta2 * vo[i] + (1.0 - beta2) * g[i] * g[i];
                        param[i] -= cfg.learning_rate * (mo[i] / bc1) / (std::sqrt(vo[i] / bc2) + eps);
                    }
                };
                for (std::size_t l = 0; l < m.weights.size(); ++l) {
                    update(m.weights[l], grads.w[l], adam_m.w[l], adam_v.w[l]);
                    update(m.biases[l], grads.b[l], adam_m.b[l], adam_v.b[l]);
                }
            }
        }
        epoch_loss /= static_cast<double>(seen);
        if (!std::isfinite(epoch_loss))
            throw DivergenceError("training diverged (loss " + format_double(epoch_loss) + ") at epoch " +
                                      std::to_string(epoch) + " with learning rate " +
                                      format_double(cfg.learning_rate),
                                  epoch, cfg.learning_rate);

        if (early_stop) {
            const double val_loss = loss_on_batch(m, validation, cfg.loss);
            if (val_loss < best_val_loss - 1e-12) {
                best_val_loss = val_loss;
                epochs_since_best = 0;
                best_w = m.weights;
                best_b = m.biases;
            } else if (++epochs_since_best >= cfg.patience) {
                break;
            }
        }
    }

    if (early_stop && !best_w.empty()) {
        m.weights = std::move(best_w);
        m.biases = std::move(best_b);
    }
    return m;
}

struct GradientFault {
    std::size_t flat_index = 0;
    double delta = 0.0;
};

// Compares analytic gradients against central finite differences over every
// weight and bias. The return value is the largest per-parameter discrepancy
// relative to the overall gradient magnitude. `fault` perturbs one analytic
// gradient entry, for checking that the check itself catches errors.
inline double gradient_check(const MlpModel& model, std::span<const Sample> batch, Loss loss, double epsilon,
                             std::optional<GradientFault> fault = std::nullopt) {
    if (epsilon <= 0.0 || epsilon > 1e-3) throw InvalidArgument("gradient_check: epsilon must be in (0, 1e-3]");
    if (batch.empty()) throw InvalidArgument("gradient_check: empty batch");

    std::vector<double> xn, tn;
    detail::normalize_inputs(model, batch, xn);
    detail::normalize_targets(model, batch, tn);
    detail::BatchBuffers buf;
    detail::forward_batch(model, xn, static_cast<int>(batch.size()), buf);
    detail::Gradients grads;
    grads.zero_like(model);
    detail::backward_batch(model, buf, xn, tn, static_cast<int>(batch.size()), loss, grads);

    std::vector<double> analytic;
    analytic.reserve(model.parameter_count());
    for (std::size_t l = 0; l < grads.w.size(); ++l) {
        analytic.insert(analytic.end(), grads.w[l].begin(), grads.w[l].end());
        analytic.insert(analytic.end(), grads.b[l].begin(), grads.b[l].end());
    }
    if (fault) analytic.at(fault->flat_index) += fault->delta;

    MlpModel probe = model;
    std::vector<double*> params;
    params.reserve(analytic.size());
    for (std::size_t l = 0; l < probe.weights.size(); ++l) {
        for (auto& w : probe.weights[l]) params.push_back(&w);
        for (auto& b : probe.biases[l]) params.push_back(&b);
    }

    std::vector<double> numeric(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double original = *params[i];
        *params[i] = original + epsilon;
        const double up = loss_on_batch(probe, batch, loss);
        *params[i] = original - epsilon;
        const double down = loss_on_batch(probe, batch, loss);
        *params[i] = original;
        numeric[i] = (up - down) / (2.0 * epsilon);
    }

    double scale = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
        scale = std::max(scale, std::abs(analytic[i]) + std::abs(numeric[i]));
    scale += 1e-300;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    return worst;
}

// ---------------------------------------------------------------------------
// Serialization. JSON holds shortest-round-trip decimals, so a loaded model
// reproduces bit-identical forward outputs.
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const MlpModel& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : m.layers)
        layers.push_back({{"width", layer.width}, {"activation", to_string(layer.activation)}});
    return nlohmann::json{{"format", "seqloc-mlp"},
                          {"version", 1},
                          {"input_width", m.input_width},
                          {"layers", layers},
                          {"norm_shift", m.norm_shift},
                          {"norm_scale", m.norm_scale},
                          {"out_shift", m.out_shift},
                          {"out_scale", m.out_scale},
                          {"seed", m.seed},
                          {"weights", m.weights},
                          {"biases", m.biases}};
}

inline MlpModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "seqloc-mlp") throw ConfigError("not a model file");
    MlpModel m;
    m.input_width = j.at("input_width").get<int>();
    for (const auto& layer : j.at("layers"))
        m.layers.push_back({layer.at("width").get<int>(),
                            activation_from_string(layer.at("activation").get<std::string>())});
    m.norm_shift = j.at("norm_shift").get<std::vector<double>>();
    m.norm_scale = j.at("norm_scale").get<std::vector<double>>();
    m.out_shift = j.at("out_shift").get<std::vector<double>>();
    m.out_scale = j.at("out_scale").get<std::vector<double>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    detail::check_spec(m.input_width, m.layers);
    if (m.weights.size() != m.layers.size() || m.biases.size() != m.layers.size())
        throw ConfigError("model file has " + std::to_string(m.weights.size()) + " weight matrices for " +
                          std::to_string(m.layers.size()) + " layers");
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto expected =
            static_cast<std::size_t>(detail::fan_in(m, l)) * static_cast<std::size_t>(m.layers[l].width);
        if (m.weights[l].size() != expected ||
            m.biases[l].size() != static_cast<std::size_t>(m.layers[l].width))
            throw ConfigError("model layer " + std::to_string(l) + " has inconsistent matrix shape");
    }
    if (m.norm_shift.size() != static_cast<std::size_t>(m.input_width) ||
        m.norm_scale.size() != m.norm_shift.size() ||
        m.out_shift.size() != static_cast<std::size_t>(m.layers.back().width) ||
        m.out_scale.size() != m.out_shift.size())
        throw ConfigError("model normalization constants do not match the layer widths");
    for (const double s : m.norm_scale)
        if (!(s > 0.0)) throw ConfigError("model input-normalization scales must be strictly positive");
    return m;
}

inline std::string model_to_bytes(const MlpModel& m) { return model_to_json(m).dump(); }

inline MlpModel model_from_bytes(const std::string& bytes) {
    return model_from_json(nlohmann::json::parse(bytes));
}

// Convenience: hidden widths (all relu) plus an output layer.
inline std::vector<LayerSpec> make_spec(const std::vector<int>& hidden, int output_width,
                                        Activation output_activation) {
    std::vector<LayerSpec> spec;
    spec.reserve(hidden.size() + 1);
    for (const int w : hidden) spec.push_back({w, Activation::Relu});
    spec.push_back({output_width, output_activation});
    return spec;
}

}  // namespace seqloc::nn
