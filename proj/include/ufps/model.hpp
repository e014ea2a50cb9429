#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ufps/common.hpp"

namespace ufps {

// 2D intensity image, values in [-1, 1].
struct PixelGrid {
    int width = 0;
    int height = 0;
    std::vector<double> intensity;  // row-major, height*width

    double at(int x, int y) const { return intensity[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return intensity[static_cast<std::size_t>(y) * width + x]; }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

// Per-pixel probability vectors of length n_channels (channel 0 = background).
struct ProbMap {
    int width = 0;
    int height = 0;
    int n_channels = 0;
    std::vector<double> values;  // pixel-major: [pixel * n_channels + channel]

    std::span<const double> pixel(std::size_t p) const {
        return {values.data() + p * n_channels, static_cast<std::size_t>(n_channels)};
    }
    std::span<double> pixel(std::size_t p) {
        return {values.data() + p * n_channels, static_cast<std::size_t>(n_channels)};
    }
    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

enum class ModelPart { encoder, decoder, head };

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
};

// Layout of the 9 -> H1 -> H2 -> (N_c+1) per-pixel MLP. The three layers
// map onto encoder / decoder / head so part-scoped aggregation is meaningful.
struct ModelLayout {
    int feature_dim = 9;
    int hidden1 = 16;
    int hidden2 = 16;
    int n_channels = 5;  // N_c foreground classes + background

    std::size_t encoder_size() const {
        return static_cast<std::size_t>(feature_dim) * hidden1 + hidden1;
    }
    std::size_t decoder_size() const {
        return static_cast<std::size_t>(hidden1) * hidden2 + hidden2;
    }
    std::size_t head_size() const {
        return static_cast<std::size_t>(hidden2) * n_channels + n_channels;
    }
    std::size_t total_size() const { return encoder_size() + decoder_size() + head_size(); }

    IndexRange span(ModelPart part) const {
        const std::size_t e = encoder_size();
        const std::size_t d = decoder_size();
        switch (part) {
            case ModelPart::encoder: return {0, e};
            case ModelPart::decoder: return {e, e + d};
            case ModelPart::head: return {e + d, e + d + head_size()};
        }
        return {};
    }
};

// Flat model parameters with part-scoped views.
struct ParamVector {
    ModelLayout layout;
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(const ModelLayout& l) : layout(l), values(l.total_size(), 0.0) {}

    std::size_t size() const { return values.size(); }
    IndexRange part_view(ModelPart part) const { return layout.span(part); }
};

// Uniform [-s, s] initialization with s = 1/sqrt(fan_in) per layer.
inline ParamVector init_params(const ModelLayout& layout, Rng& rng) {
    ParamVector p(layout);
    struct Layer {
        std::size_t offset;
        int fan_in;
        std::size_t count;
    };
    const Layer layers[3] = {
        {0, layout.feature_dim, layout.encoder_size()},
        {layout.encoder_size(), layout.hidden1, layout.decoder_size()},
        {layout.encoder_size() + layout.decoder_size(), layout.hidden2, layout.head_size()},
    };
    for (const auto& L : layers) {
        const double s = 1.0 / std::sqrt(static_cast<double>(L.fan_in));
        for (std::size_t i = 0; i < L.count; ++i)
            p.values[L.offset + i] = rng.uniform(-s, s);
    }
    return p;
}

// 3x3 intensity neighborhood, edge-replicated, row-major. F = 9.
inline std::array<double, 9> extract_features(const PixelGrid& grid, int x, int y) {
    std::array<double, 9> f{};
    int k = 0;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            int cx = std::clamp(x + dx, 0, grid.width - 1);
            int cy = std::clamp(y + dy, 0, grid.height - 1);
            f[k++] = grid.at(cx, cy);
        }
    }
    return f;
}

namespace detail {

// Per-pixel forward pass storing activations for the backward pass.
struct PixelActivations {
    std::array<double, 9> features{};
    std::vector<double> h1;      // tanh outputs, size H1
    std::vector<double> h2;      // tanh outputs, size H2
    std::vector<double> probs;   // softmax outputs, size n_channels
};

inline void forward_pixel(const ParamVector& params, const std::array<double, 9>& feat,
                          PixelActivations& act) {
    const ModelLayout& L = params.layout;
    const double* w = params.values.data();
    const double* enc_w = w;
    const double* enc_b = enc_w + static_cast<std::size_t>(L.feature_dim) * L.hidden1;
    const double* dec_w = w + L.encoder_size();
    const double* dec_b = dec_w + static_cast<std::size_t>(L.hidden1) * L.hidden2;
    const double* head_w = w + L.encoder_size() + L.decoder_size();
    const double* head_b = head_w + static_cast<std::size_t>(L.hidden2) * L.n_channels;

    act.features = feat;
    act.h1.assign(L.hidden1, 0.0);
    for (int j = 0; j < L.hidden1; ++j) {
        double z = enc_b[j];
        for (int i = 0; i < L.feature_dim; ++i) z += enc_w[static_cast<std::size_t>(j) * L.feature_dim + i] * feat[i];
        act.h1[j] = std::tanh(z);
    }
    act.h2.assign(L.hidden2, 0.0);
    for (int j = 0; j < L.hidden2; ++j) {
        double z = dec_b[j];
        for (int i = 0; i < L.hidden1; ++i) z += dec_w[static_cast<std::size_t>(j) * L.hidden1 + i] * act.h1[i];
        act.h2[j] = std::tanh(z);
    }
    act.probs.assign(L.n_channels, 0.0);
    double zmax = -1e300;
    for (int c = 0; c < L.n_channels; ++c) {
        double z = head_b[c];
        for (int i = 0; i < L.hidden2; ++i) z += head_w[static_cast<std::size_t>(c) * L.hidden2 + i] * act.h2[i];
        act.probs[c] = z;
        zmax = std::max(zmax, z);
    }
    double sum = 0.0;
    for (int c = 0; c < L.n_channels; ++c) {
        act.probs[c] = std::exp(act.probs[c] - zmax);
        sum += act.probs[c];
    }
    for (int c = 0; c < L.n_channels; ++c) act.probs[c] /= sum;
}

}  // namespace detail

inline ProbMap forward(const ParamVector& params, const PixelGrid& grid) {
    if (!all_finite(params.values)) throw NumericalError("forward: non-finite parameters");
    const ModelLayout& L = params.layout;
    ProbMap out;
    out.width = grid.width;
    out.height = grid.height;
    out.n_channels = L.n_channels;
    out.values.resize(grid.pixels() * L.n_channels);

    detail::PixelActivations act;
    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) {
            detail::forward_pixel(params, extract_features(grid, x, y), act);
            const std::size_t p = static_cast<std::size_t>(y) * grid.width + x;
            for (int c = 0; c < L.n_channels; ++c) {
                const double v = act.probs[c];
                if (!std::isfinite(v)) throw NumericalError("forward: non-finite probability");
                out.values[p * L.n_channels + c] = v;
            }
        }
    }
    return out;
}

// Analytic gradient of sum_pixels sum_channels upstream * prob w.r.t. every
// parameter. `upstream` holds dLoss/dProb with ProbMap layout.
inline ParamVector backward(const ParamVector& params, const PixelGrid& grid,
                            const ProbMap& upstream) {
    const ModelLayout& L = params.layout;
    if (upstream.width != grid.width || upstream.height != grid.height ||
        upstream.n_channels != L.n_channels)
        throw LengthMismatch("backward: upstream shape mismatch");

    ParamVector grad(L);
    double* g = grad.values.data();
    double* g_enc_w = g;
    double* g_enc_b = g_enc_w + static_cast<std::size_t>(L.feature_dim) * L.hidden1;
    double* g_dec_w = g + L.encoder_size();
    double* g_dec_b = g_dec_w + static_cast<std::size_t>(L.hidden1) * L.hidden2;
    double* g_head_w = g + L.encoder_size() + L.decoder_size();
    double* g_head_b = g_head_w + static_cast<std::size_t>(L.hidden2) * L.n_channels;

    const double* w = params.values.data();
    const double* dec_w = w + L.encoder_size();
    const double* head_w = w + L.encoder_size() + L.decoder_size();

    detail::PixelActivations act;
    std::vector<double> dlogit(L.n_channels), dh2(L.hidden2), dh1(L.hidden1);

    for (int y = 0; y < grid.height; ++y) {
        for (int x = 0; x < grid.width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * grid.width + x;
            detail::forward_pixel(params, extract_features(grid, x, y), act);
            const double* u = upstream.values.data() + p * L.n_channels;

            // softmax jacobian: dL/dz_c = p_c * (u_c - sum_j u_j p_j)
            double dot = 0.0;
            for (int c = 0; c < L.n_channels; ++c) dot += u[c] * act.probs[c];
            for (int c = 0; c < L.n_channels; ++c) dlogit[c] = act.probs[c] * (u[c] - dot);

            for (int c = 0; c < L.n_channels; ++c) {
                g_head_b[c] += dlogit[c];
                for (int i = 0; i < L.hidden2; ++i)
                    g_head_w[static_cast<std::size_t>(c) * L.hidden2 + i] += dlogit[c] * act.h2[i];
            }
            for (int i = 0; i < L.hidden2; ++i) {
                double s = 0.0;
                for (int c = 0; c < L.n_channels; ++c)
                    s += head_w[static_cast<std::size_t>(c) * L.hidden2 + i] * dlogit[c];
                dh2[i] = s * (1.0 - act.h2[i] * act.h2[i]);
            }
            for (int j = 0; j < L.hidden2; ++j) {
                g_dec_b[j] += dh2[j];
                for (int i = 0; i < L.hidden1; ++i)
                    g_dec_w[static_cast<std::size_t>(j) * L.hidden1 + i] += dh2[j] * act.h1[i];
            }
            for (int i = 0; i < L.hidden1; ++i) {
                double s = 0.0;
                for (int j = 0; j < L.hidden2; ++j)
                    s += dec_w[static_cast<std::size_t>(j) * L.hidden1 + i] * dh2[j];
                dh1[i] = s * (1.0 - act.h1[i] * act.h1[i]);
            }
            for (int j = 0; j < L.hidden1; ++j) {
                g_enc_b[j] += dh1[j];
                for (int i = 0; i < L.feature_dim; ++i)
                    g_enc_w[static_cast<std::size_t>(j) * L.feature_dim + i] += dh1[j] * act.features[i];
            }
        }
    }
    if (!all_finite(grad.values)) throw NumericalError("backward: non-finite gradient");
    return grad;
}

}  // namespace ufps
