#pragma once

#include <algorithm>
#include <deque>

#include "ufps/labelmap.hpp"
#include "ufps/model.hpp"
#include "ufps/pseudolabel.hpp"

namespace ufps {

// Unified probability map from per-teacher restricted predictions: each
// foreground channel takes the owning teacher's probability, background is
// the mean of the teachers' background probabilities, then renormalized.
inline ProbMap merged_teacher_probs(const std::vector<ProbMap>& teacher_probs,
                                    const std::vector<ClassSet>& owned_classes) {
    if (teacher_probs.empty()) throw ConfigError("merged_teacher_probs: no teachers");
    if (teacher_probs.size() != owned_classes.size())
        throw LengthMismatch("merged_teacher_probs: teacher/ownership count mismatch");
    const ProbMap& first = teacher_probs.front();

    ProbMap out;
    out.width = first.width;
    out.height = first.height;
    out.n_channels = first.n_channels;
    out.values.assign(first.values.size(), 0.0);

    std::vector<int> owner(out.n_channels, -1);
    for (std::size_t t = 0; t < owned_classes.size(); ++t)
        for (ClassId c : owned_classes[t]) owner[c] = static_cast<int>(t);

    const double inv_teachers = 1.0 / static_cast<double>(teacher_probs.size());
    for (std::size_t p = 0; p < out.pixels(); ++p) {
        double bg = 0.0;
        for (const auto& tp : teacher_probs) bg += tp.values[p * out.n_channels];
        out.values[p * out.n_channels] = bg * inv_teachers;
        double sum = out.values[p * out.n_channels];
        for (int c = 1; c < out.n_channels; ++c) {
            const double v = owner[c] >= 0
                                 ? teacher_probs[owner[c]].values[p * out.n_channels + c]
                                 : 0.0;
            out.values[p * out.n_channels + c] = v;
            sum += v;
        }
        for (int c = 0; c < out.n_channels; ++c) out.values[p * out.n_channels + c] /= sum;
    }
    return out;
}

// Per-pixel average entropy: E = -(1/C) sum_c q log(q + eps), C = all channels.
inline std::vector<double> entropy_map(const ProbMap& probs, double eps = 1e-12) {
    std::vector<double> e(probs.pixels(), 0.0);
    const double inv_c = 1.0 / probs.n_channels;
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
        double s = 0.0;
        for (int c = 0; c < probs.n_channels; ++c) {
            const double q = probs.values[p * probs.n_channels + c];
            s -= q * std::log(q + eps);
        }
        e[p] = std::max(s * inv_c, 0.0);
    }
    return e;
}

// Data-wise uncertainty: U = (1/C') sum_c [sum_vox E * q_c] / [sum_vox q_c + 1]
// over the one-hot unified label map. C' counts classes actually present in
// the map when present_classes_only (the default), all channels otherwise.
inline double sample_uncertainty(const std::vector<double>& entropy, const LabelMap& labels,
                                 int n_channels, bool present_classes_only = true) {
    if (entropy.size() != labels.pixels())
        throw LengthMismatch("sample_uncertainty: map size mismatch");
    std::vector<double> num(n_channels, 0.0);
    std::vector<double> cnt(n_channels, 0.0);
    for (std::size_t p = 0; p < labels.pixels(); ++p) {
        const ClassId c = labels.classes[p];
        num[c] += entropy[p];
        cnt[c] += 1.0;
    }
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < n_channels; ++c) {
        if (cnt[c] > 0.0) ++present;
        sum += num[c] / (cnt[c] + 1.0);
    }
    const int denom = present_classes_only ? std::max(present, 1) : n_channels;
    return sum / denom;
}

// Bounded ring of per-sample uncertainty values, oldest-first eviction.
class UncertaintyBank {
public:
    explicit UncertaintyBank(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("UncertaintyBank: zero capacity");
    }

    void push(double u) {
        if (entries_.size() == capacity_) entries_.pop_front();
        entries_.push_back(u);
        ++total_count_;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t total_count() const { return total_count_; }
    const std::deque<double>& entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::deque<double> entries_;
    std::size_t total_count_ = 0;
};

struct BankStats {
    double mean = 0.0;
    double variance = 0.0;  // biased
    double u_max = 0.0;
    double u_min = 0.0;
    double u_tail = 0.0;  // nearest-rank quantile at the configured threshold
};

inline BankStats bank_stats(const UncertaintyBank& bank, double quantile) {
    if (bank.empty()) throw EmptyBank("bank_stats: uncertainty bank is empty");
    const auto& e = bank.entries();
    BankStats s;
    s.u_max = -1e300;
    s.u_min = 1e300;
    for (double u : e) {
        s.mean += u;
        s.u_max = std::max(s.u_max, u);
        s.u_min = std::min(s.u_min, u);
    }
    s.mean /= static_cast<double>(e.size());
    for (double u : e) s.variance += (u - s.mean) * (u - s.mean);
    s.variance /= static_cast<double>(e.size());

    std::vector<double> sorted(e.begin(), e.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(quantile * static_cast<double>(sorted.size())));
    s.u_tail = sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
    return s;
}

enum class SchedulerKind { TS, BD, RG };

struct SchedulerConfig {
    SchedulerKind kind = SchedulerKind::TS;
    double tail_quantile = 0.7;  // threshold T for U_T
    double bd_alpha = 1.0;       // BD base floor
    double rg_beta = 0.7;        // RG blend
    double rg_width = 0.4;       // RG gaussian width
};

// Loss-weight schedulers over normalized uncertainty.
// norm(U) = (U - mean)/(U_max - U_min), defined as 0 on a degenerate bank.
inline double schedule_weight(double u, const BankStats& stats, int r, int total_rounds,
                              const SchedulerConfig& cfg) {
    const double range = stats.u_max - stats.u_min;
    const double norm = range > 0.0 ? (u - stats.mean) / range : 0.0;
    const double rr = static_cast<double>(r) / total_rounds;

    switch (cfg.kind) {
        case SchedulerKind::TS:
            return u > stats.u_tail ? 2.0 - std::exp(norm - rr) : 2.0 - std::exp(norm);
        case SchedulerKind::BD: {
            const double e = std::exp(1.0);
            const double base = (cfg.bd_alpha - e) / total_rounds * r + e;
            return 2.0 - std::pow(base, norm);
        }
        case SchedulerKind::RG: {
            const double norm_tail = range > 0.0 ? (stats.u_tail - stats.mean) / range : 0.0;
            const double norm_min = range > 0.0 ? (stats.u_min - stats.mean) / range : 0.0;
            const double u_range = norm_tail - norm_min;
            const int half = total_rounds / 2;
            double range_r;
            if (half == 0)
                range_r = 0.0;
            else if (r <= half)
                range_r = u_range * r / half;
            else
                range_r = u_range - u_range * (r - half) / half;
            const double two_pi = 6.283185307179586476925286766559;
            const double d = norm - range_r;  // norm(mean) = 0
            const double g = std::exp(-d * d / (2.0 * cfg.rg_width * cfg.rg_width)) /
                             (std::sqrt(two_pi) * cfg.rg_width);
            return (1.0 - cfg.rg_beta) * g + cfg.rg_beta * (2.0 - std::exp(norm));
        }
    }
    return 1.0;
}

}  // namespace ufps
