#pragma once

#include <map>
#include <string>

#include "ufps/labelmap.hpp"
#include "ufps/model.hpp"

namespace ufps {

struct LossReport {
    double total = 0.0;
    std::map<std::string, double> components;  // {dice, bce, rce}
    double weight_applied = 1.0;
};

// Loss value plus gradient w.r.t. the predicted probabilities.
struct LossGrad {
    double loss = 0.0;
    ProbMap grad;
};

namespace detail {

// Effective one-hot target: label kept if in active_classes or background,
// otherwise collapsed to background (labels outside the active set are
// either withheld or out of the current problem).
inline ClassId effective_target(const LabelMap& target, std::size_t p,
                                const ClassSet& active) {
    const ClassId c = target.classes[p];
    if (c == 0 || active.count(c)) return c;
    return 0;
}

inline ProbMap zero_like(const ProbMap& pred) {
    ProbMap g;
    g.width = pred.width;
    g.height = pred.height;
    g.n_channels = pred.n_channels;
    g.values.assign(pred.values.size(), 0.0);
    return g;
}

}  // namespace detail

// Smoothed soft Dice: per class c, dice_c = (2*sum p_c t_c + 1)/(sum p_c + sum t_c + 1);
// loss = mean over active classes of (1 - dice_c).
inline LossGrad dice_loss(const ProbMap& pred, const LabelMap& target,
                          const ClassSet& active_classes) {
    if (active_classes.empty()) throw ConfigError("dice_loss: empty class set");
    LossGrad out;
    out.grad = detail::zero_like(pred);
    const std::size_t P = pred.pixels();
    const double inv_n = 1.0 / static_cast<double>(active_classes.size());

    for (ClassId c : active_classes) {
        double inter = 0.0, psum = 0.0, tsum = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            const double pc = pred.values[p * pred.n_channels + c];
            const double tc = detail::effective_target(target, p, active_classes) == c ? 1.0 : 0.0;
            inter += pc * tc;
            psum += pc;
            tsum += tc;
        }
        const double num = 2.0 * inter + 1.0;
        const double den = psum + tsum + 1.0;
        out.loss += inv_n * (1.0 - num / den);
        // d dice_c / d p_c = (2 t_c den - num) / den^2
        const double inv_den2 = 1.0 / (den * den);
        for (std::size_t p = 0; p < P; ++p) {
            const double tc = detail::effective_target(target, p, active_classes) == c ? 1.0 : 0.0;
            out.grad.values[p * pred.n_channels + c] -=
                inv_n * (2.0 * tc * den - num) * inv_den2;
        }
    }
    return out;
}

// Per-channel binary cross entropy vs the one-hot target, probabilities
// clamped to [1e-7, 1-1e-7], averaged over pixels and active classes.
inline LossGrad bce_loss(const ProbMap& pred, const LabelMap& target,
                         const ClassSet& active_classes) {
    if (active_classes.empty()) throw ConfigError("bce_loss: empty class set");
    constexpr double kEps = 1e-7;
    LossGrad out;
    out.grad = detail::zero_like(pred);
    const std::size_t P = pred.pixels();
    const double scale = 1.0 / (static_cast<double>(P) * active_classes.size());

    for (std::size_t p = 0; p < P; ++p) {
        const ClassId t = detail::effective_target(target, p, active_classes);
        for (ClassId c : active_classes) {
            const double raw = pred.values[p * pred.n_channels + c];
            const double q = std::clamp(raw, kEps, 1.0 - kEps);
            const double tc = (t == c) ? 1.0 : 0.0;
            out.loss -= scale * (tc * std::log(q) + (1.0 - tc) * std::log(1.0 - q));
            if (raw > kEps && raw < 1.0 - kEps)
                out.grad.values[p * pred.n_channels + c] +=
                    scale * (-tc / q + (1.0 - tc) / (1.0 - q));
        }
    }
    return out;
}

// Schedule factor of the adaptive reverse cross entropy: e^{-20(1 - r/R)}.
inline double arce_schedule(int r, int total_rounds) {
    return std::exp(-20.0 * (1.0 - static_cast<double>(r) / total_rounds));
}

// Reverse cross entropy -sum_c q_c log p_c with the one-hot target p clamped
// at 1e-4, averaged over pixels, scaled by coeff and the round schedule.
inline LossGrad arce_loss(const ProbMap& pred, const LabelMap& target, int r,
                          int total_rounds, double coeff) {
    constexpr double kLabelFloor = 1e-4;
    const double wrong_penalty = -std::log(kLabelFloor);
    const double factor = coeff * arce_schedule(r, total_rounds);
    LossGrad out;
    out.grad = detail::zero_like(pred);
    const std::size_t P = pred.pixels();
    const double scale = factor / static_cast<double>(P);

    for (std::size_t p = 0; p < P; ++p) {
        const ClassId t = target.classes[p];
        for (int c = 0; c < pred.n_channels; ++c) {
            if (c == t) continue;  // -log(1) = 0 on the labeled class
            out.loss += scale * wrong_penalty * pred.values[p * pred.n_channels + c];
            out.grad.values[p * pred.n_channels + c] += scale * wrong_penalty;
        }
    }
    return out;
}

struct LossSchedule {
    int r_warmup = 10;
    int r_ws = 200;        // end round of the weight scheduler, aRCE starts here
    int total_rounds = 500;
    double arce_coeff = 0.01;
};

// Round-scheduled composite: warmup -> Dice+BCE; [r_warmup, r_WS) -> w(U)*(Dice+BCE);
// r >= r_WS -> Dice+BCE+aRCE.
inline std::pair<LossReport, ProbMap> calculate_loss(const ProbMap& pred,
                                                     const LabelMap& target, int r,
                                                     const LossSchedule& sched,
                                                     const ClassSet& active_classes,
                                                     double weight) {
    LossGrad dice = dice_loss(pred, target, active_classes);
    LossGrad bce = bce_loss(pred, target, active_classes);

    LossReport report;
    report.components["dice"] = dice.loss;
    report.components["bce"] = bce.loss;

    ProbMap grad = detail::zero_like(pred);
    double w = 1.0;
    bool use_rce = false;
    if (r < sched.r_warmup) {
        w = 1.0;
    } else if (r < sched.r_ws) {
        w = weight;
    } else {
        w = 1.0;
        use_rce = true;
    }
    report.weight_applied = w;
    report.total = w * (dice.loss + bce.loss);
    for (std::size_t i = 0; i < grad.values.size(); ++i)
        grad.values[i] = w * (dice.grad.values[i] + bce.grad.values[i]);

    if (use_rce) {
        LossGrad rce = arce_loss(pred, target, r, sched.total_rounds, sched.arce_coeff);
        report.components["rce"] = rce.loss;
        report.total += rce.loss;
        for (std::size_t i = 0; i < grad.values.size(); ++i)
            grad.values[i] += rce.grad.values[i];
    }
    return {report, std::move(grad)};
}

}  // namespace ufps
