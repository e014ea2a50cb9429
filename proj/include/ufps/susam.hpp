#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>

#include "ufps/common.hpp"
#include "ufps/model.hpp"

namespace ufps {

// Boolean vector aligned with the flat parameter vector.
struct GradientMask {
    std::vector<std::uint8_t> bits;

    GradientMask() = default;
    explicit GradientMask(std::size_t len, bool value = false)
        : bits(len, value ? 1 : 0) {}

    std::size_t size() const { return bits.size(); }
    std::size_t popcount() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
    }
    bool test(std::size_t i) const { return bits[i] != 0; }
    void set(std::size_t i) { bits[i] = 1; }

    static GradientMask unite(const GradientMask& a, const GradientMask& b) {
        if (a.size() != b.size()) throw LengthMismatch("mask union: length mismatch");
        GradientMask out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out.bits[i] = a.bits[i] | b.bits[i];
        return out;
    }
};

struct MomentumGrad {
    std::vector<double> values;
    double alpha = 0.9;
};

enum class SusamMode { sam_norm, asam_scaled };

struct SusamConfig {
    double rho = 0.7;            // perturbation radius
    double eta = 0.001;          // adaptive-scaling floor (asam_scaled)
    double t_local = 0.4;        // non-masked fraction for the local mask
    double t_global = 0.1;       // fraction for the extra mask
    int r_fre = 5;               // mask refresh period
    int r_start = 300;           // first sUSAM round
    SusamMode mode = SusamMode::asam_scaled;
};

// Mask selecting the k = round(T_L * len) entries of largest |g|;
// ties break toward the lower index.
inline GradientMask topk_mask(const std::vector<double>& g, double t_local) {
    if (g.empty()) throw ConfigError("topk_mask: empty gradient");
    if (!all_finite(g)) throw NumericalError("topk_mask: non-finite gradient");
    const std::size_t k = static_cast<std::size_t>(
        std::llround(t_local * static_cast<double>(g.size())));
    GradientMask mask(g.size());
    if (k == 0) return mask;

    std::vector<std::size_t> idx(g.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(g[a]) > std::abs(g[b]);
    });
    for (std::size_t i = 0; i < std::min(k, g.size()); ++i) mask.set(idx[i]);
    return mask;
}

// G_mo <- alpha*G_mo + (1-alpha)*|g|
inline void update_momentum(MomentumGrad& mo, const std::vector<double>& g) {
    if (mo.values.size() != g.size()) throw LengthMismatch("update_momentum: length mismatch");
    for (std::size_t i = 0; i < g.size(); ++i)
        mo.values[i] = mo.alpha * mo.values[i] + (1.0 - mo.alpha) * std::abs(g[i]);
}

// Nonintersecting global mask: positions whose per-client sum is neither 0
// nor N are set.
inline GradientMask merge_global_mask(const std::vector<GradientMask>& momentum_masks) {
    if (momentum_masks.empty()) throw ConfigError("merge_global_mask: no masks");
    const std::size_t len = momentum_masks.front().size();
    const std::size_t n = momentum_masks.size();
    for (const auto& m : momentum_masks)
        if (m.size() != len) throw LengthMismatch("merge_global_mask: length mismatch");

    GradientMask out(len);
    for (std::size_t i = 0; i < len; ++i) {
        std::size_t sum = 0;
        for (const auto& m : momentum_masks) sum += m.bits[i];
        if (sum != 0 && sum != n) out.set(i);
    }
    return out;
}

// M_E: |M_E| = min(floor(T_G*len), |G_N|) indices drawn uniformly without
// replacement from G_N = (not in M_L) and (in M_G).
inline GradientMask extra_mask(const GradientMask& local, const GradientMask& global,
                               std::size_t grad_len, double t_global, std::uint64_t seed) {
    if (local.size() != grad_len || global.size() != grad_len)
        throw LengthMismatch("extra_mask: mask length mismatch");
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < grad_len; ++i)
        if (!local.test(i) && global.test(i)) candidates.push_back(i);

    const std::size_t want = static_cast<std::size_t>(
        std::floor(t_global * static_cast<double>(grad_len)));
    const std::size_t take = std::min(want, candidates.size());

    GradientMask out(grad_len);
    Rng rng(seed);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.uniform_index(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
        out.set(candidates[i]);
    }
    return out;
}

// w~ = w + rho * (g/||g||) masked; asam_scaled rescales per-entry by
// T = diag(|w|+eta): eps = rho * T^2 g / ||T g||.
inline ParamVector ascent_perturbation(const ParamVector& params,
                                       const std::vector<double>& g_aug,
                                       const GradientMask& mask, const SusamConfig& cfg) {
    if (g_aug.size() != params.size() || mask.size() != params.size())
        throw LengthMismatch("ascent_perturbation: length mismatch");
    double norm2 = 0.0;
    if (cfg.mode == SusamMode::sam_norm) {
        for (double v : g_aug) norm2 += v * v;
    } else {
        for (std::size_t i = 0; i < g_aug.size(); ++i) {
            const double t = std::abs(params.values[i]) + cfg.eta;
            norm2 += t * g_aug[i] * t * g_aug[i];
        }
    }
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) throw ZeroGradient("ascent_perturbation: zero ascent gradient");

    ParamVector out = params;
    const double scale = cfg.rho / norm;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!mask.test(i)) continue;
        if (cfg.mode == SusamMode::sam_norm) {
            out.values[i] += scale * g_aug[i];
        } else {
            const double t = std::abs(params.values[i]) + cfg.eta;
            out.values[i] += scale * t * t * g_aug[i];
        }
    }
    return out;
}

// Per-client optimizer state carried across rounds.
struct SusamState {
    GradientMask local_mask;
    GradientMask extra;
    MomentumGrad momentum;
    bool initialized = false;

    GradientMask momentum_mask(double t_local) const {
        return topk_mask(momentum.values, t_local);
    }
};

// One sUSAM descent step. `grad_aug` evaluates the gradient on the strongly
// augmented batch, `grad_orig` on the original batch; both map a parameter
// vector to a gradient of the same length.
template <typename GradAugFn, typename GradOrigFn>
ParamVector susam_step(ParamVector params, SusamState& state, const GradientMask& global_mask,
                       int r, const SusamConfig& cfg, double lr, std::uint64_t seed,
                       GradAugFn&& grad_aug, GradOrigFn&& grad_orig) {
    const std::vector<double> g_aug = grad_aug(params);
    if (g_aug.size() != params.size()) throw LengthMismatch("susam_step: ascent gradient length");

    const bool refresh = (r - cfg.r_start) % cfg.r_fre == 0;
    if (refresh || !state.initialized) {
        if (!state.initialized) {
            state.momentum.values.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i)
                state.momentum.values[i] = std::abs(g_aug[i]);
            state.initialized = true;
        } else {
            update_momentum(state.momentum, g_aug);
        }
        state.local_mask = topk_mask(g_aug, cfg.t_local);
        state.extra = extra_mask(state.local_mask, global_mask, params.size(), cfg.t_global, seed);
    }

    ParamVector perturbed = params;
    try {
        perturbed = ascent_perturbation(params, g_aug,
                                        GradientMask::unite(state.local_mask, state.extra), cfg);
    } catch (const ZeroGradient&) {
        // flat point, descend unperturbed
    }

    const std::vector<double> g = grad_orig(perturbed);
    if (g.size() != params.size()) throw LengthMismatch("susam_step: descent gradient length");
    for (std::size_t i = 0; i < params.size(); ++i) params.values[i] -= lr * g[i];
    if (!all_finite(params.values)) throw NumericalError("susam_step: non-finite parameters");
    return params;
}

// Relative gradient-difference diagnostic: log|(g_usam - g_base)/g_base|
// per entry; entries with |g_base| < 1e-12 are excluded and counted.
struct GradRatioReport {
    std::vector<double> ratios;
    std::size_t excluded = 0;
};

inline GradRatioReport grad_ratio(const std::vector<double>& g_usam,
                                  const std::vector<double>& g_base) {
    if (g_usam.size() != g_base.size()) throw LengthMismatch("grad_ratio: length mismatch");
    GradRatioReport rep;
    for (std::size_t i = 0; i < g_base.size(); ++i) {
        if (std::abs(g_base[i]) < 1e-12) {
            ++rep.excluded;
            continue;
        }
        const double rel = std::abs((g_usam[i] - g_base[i]) / g_base[i]);
        rep.ratios.push_back(std::log(std::max(rel, 1e-300)));
    }
    return rep;
}

}  // namespace ufps
