#pragma once

#include <functional>
#include <optional>

#include "ufps/losses.hpp"
#include "ufps/model.hpp"
#include "ufps/pseudolabel.hpp"
#include "ufps/susam.hpp"
#include "ufps/synthdata.hpp"
#include "ufps/uncertainty.hpp"

namespace ufps {

// Full protocol configuration. Defaults follow the reference hyper-parameter
// set (500 rounds); desk_benchmark_config() scales the boundaries down.
struct RunConfig {
    int total_rounds = 500;        // R
    int local_rounds = 1;          // K
    int r_warmup = 10;
    int r_ws = 200;                // weight-scheduler end, aRCE start
    int r_ua = 300;
    int r_gmt = 300;
    int batch_size = 4;
    double learning_rate = 0.3;
    double lr_floor_fraction = 0.1;  // cosine decay floor relative to learning_rate
    int pretrain_epochs = 40;
    double pretrain_lr = 0.5;
    double tau_mu = 0.05;
    double tau_sigma = 0.001;
    double gmt_threshold = 0.8;    // v
    double arce_coeff = 0.01;
    std::uint64_t seed = 1;
    int grid_size = 64;
    int hidden1 = 16;
    int hidden2 = 16;

    SusamConfig susam;
    SchedulerConfig scheduler;
    AugmentParams augment;

    // module toggles; all on = UFPS, pseudo_labels only = FedAvg*, all off = FedAvg
    bool enable_pseudo_labels = true;
    bool enable_ws = true;
    bool enable_ua = true;
    bool enable_gmt = true;
    bool enable_susam = true;
    bool enable_arce = true;

    ModelLayout layout() const {
        return ModelLayout{9, hidden1, hidden2, kNumForegroundClasses + 1};
    }

    void validate() const {
        if (total_rounds <= 0 || local_rounds <= 0 || batch_size <= 0)
            throw ConfigError("RunConfig: counts must be positive");
        if (r_warmup > r_ws || r_ws > total_rounds)
            throw ConfigError("RunConfig: require r_warmup <= r_ws <= total_rounds");
        if (r_ua > total_rounds || r_gmt > total_rounds || susam.r_start > total_rounds)
            throw ConfigError("RunConfig: round boundaries exceed total_rounds");
        if (learning_rate <= 0.0 || pretrain_lr <= 0.0)
            throw ConfigError("RunConfig: learning rates must be positive");
        if (gmt_threshold <= 0.0 || gmt_threshold > 1.0)
            throw ConfigError("RunConfig: gmt_threshold must be in (0, 1]");
        if (tau_mu <= 0.0 || tau_sigma <= 0.0)
            throw ConfigError("RunConfig: temperatures must be positive");
        if (scheduler.tail_quantile <= 0.0 || scheduler.tail_quantile >= 1.0)
            throw ConfigError("RunConfig: tail quantile must be in (0, 1)");
    }

    double lr_at(int r) const {
        const double floor = lr_floor_fraction * learning_rate;
        if (r < r_warmup) {
            // ramp from the floor during warmup
            return floor + (learning_rate - floor) * (r + 1) / static_cast<double>(r_warmup);
        }
        const double pi = 3.14159265358979323846;
        const double t = static_cast<double>(r - r_warmup) /
                         std::max(1, total_rounds - r_warmup);
        return floor + 0.5 * (learning_rate - floor) * (1.0 + std::cos(pi * t));
    }
};

struct ClientReport {
    ParamVector params;
    std::optional<double> mu;
    std::optional<double> sigma;
    std::optional<GradientMask> momentum_mask;
};

struct ServerState {
    ParamVector global_params;
    GradientMask global_mask;
    std::vector<double> weights;  // last applied aggregation weights
    int round = 0;
};

inline std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                              std::uint64_t d = 0) {
    std::uint64_t h = 0x9e3779b97f4a7c15ull;
    for (std::uint64_t v : {a, b, c, d}) {
        h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
    }
    return h;
}

inline ClassSet all_classes_with_background() {
    ClassSet s = {0};
    for (ClassId c = 1; c <= kNumForegroundClasses; ++c) s.insert(c);
    return s;
}

// ---------------------------------------------------------------------------
// SGD helpers

namespace detail {

// Mean parameter gradient of the scheduled loss over a span of samples.
// `targets[i]` supplies the label map for sample i; `weights[i]` the w(U).
inline ParamVector batch_gradient(const ParamVector& params,
                                  const std::vector<const PixelGrid*>& images,
                                  const std::vector<const LabelMap*>& targets,
                                  const std::vector<double>& weights, int r,
                                  const LossSchedule& sched, const ClassSet& active) {
    ParamVector acc(params.layout);
    for (std::size_t i = 0; i < images.size(); ++i) {
        ProbMap pred = forward(params, *images[i]);
        auto [report, upstream] = calculate_loss(pred, *targets[i], r, sched, active, weights[i]);
        ParamVector g = backward(params, *images[i], upstream);
        for (std::size_t k = 0; k < acc.size(); ++k) acc.values[k] += g.values[k];
    }
    const double inv = 1.0 / static_cast<double>(images.size());
    for (auto& v : acc.values) v *= inv;
    return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Teacher pretraining (Algorithm 1 analogue)

// Trains one fresh model per client on Dice+BCE over its annotated classes
// plus background; withheld classes collapse to background.
inline TeacherSet pretrain_teachers(const std::vector<ClientDataset>& datasets, int epochs,
                                    const RunConfig& cfg, std::uint64_t seed) {
    TeacherSet ts;
    for (const auto& ds : datasets) {
        if (ds.annotated_classes.empty())
            throw ConfigError("pretrain_teachers: client has no annotated classes");
        Rng rng(seed_mix(seed, 0x7e4c, ds.client_id));
        ParamVector w = init_params(cfg.layout(), rng);

        ClassSet active = ds.annotated_classes;
        active.insert(0);
        LossSchedule plain;
        plain.r_warmup = epochs + 1;  // Dice+BCE throughout
        plain.r_ws = epochs + 1;
        plain.total_rounds = epochs + 1;

        const int n_train = ds.n_train > 0 ? ds.n_train : static_cast<int>(ds.samples.size());
        for (int epoch = 0; epoch < epochs; ++epoch) {
            for (int b = 0; b < n_train; b += cfg.batch_size) {
                std::vector<const PixelGrid*> images;
                std::vector<const LabelMap*> targets;
                std::vector<double> weights;
                for (int i = b; i < std::min(b + cfg.batch_size, n_train); ++i) {
                    images.push_back(&ds.samples[i].image);
                    targets.push_back(&ds.samples[i].labels);
                    weights.push_back(1.0);
                }
                ParamVector g = detail::batch_gradient(w, images, targets, weights, 0, plain, active);
                for (std::size_t k = 0; k < w.size(); ++k)
                    w.values[k] -= cfg.pretrain_lr * g.values[k];
            }
        }
        ts.teachers.push_back({std::move(w), ds.annotated_classes});
    }
    ts.ordering = TeacherSet::default_ordering(ts.teachers);
    return ts;
}

// ---------------------------------------------------------------------------
// Aggregation

inline std::vector<double> proportional_weights(const std::vector<int>& sample_counts) {
    double total = 0.0;
    for (int n : sample_counts) {
        if (n <= 0) throw ConfigError("proportional_weights: counts must be positive");
        total += n;
    }
    std::vector<double> w;
    w.reserve(sample_counts.size());
    for (int n : sample_counts) w.push_back(n / total);
    return w;
}

// Uncertainty-aware weights: (1/3)(softmax(-mu/tau_mu) + softmax(-sigma/tau_sigma) + A^w).
inline std::vector<double> ua_weights(const std::vector<double>& mu,
                                      const std::vector<double>& sigma,
                                      const std::vector<double>& prop, double tau_mu,
                                      double tau_sigma) {
    const std::size_t n = mu.size();
    if (sigma.size() != n || prop.size() != n) throw LengthMismatch("ua_weights: size mismatch");
    auto softmax_neg = [n](const std::vector<double>& x, double tau) {
        std::vector<double> z(n);
        double zmax = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = -x[i] / tau;
            zmax = std::max(zmax, z[i]);
        }
        double sum = 0.0;
        for (auto& v : z) {
            v = std::exp(v - zmax);
            sum += v;
        }
        for (auto& v : z) v /= sum;
        return z;
    };
    const auto sm_mu = softmax_neg(mu, tau_mu);
    const auto sm_sigma = softmax_neg(sigma, tau_sigma);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = (sm_mu[i] + sm_sigma[i] + prop[i]) / 3.0;
    return out;
}

// Weighted parameter sum; when part_scoped is given, indices inside that part
// use the scoped weights and all other indices the base weights. Accumulation
// runs in ascending client order for bit-determinism.
inline ParamVector aggregate(const std::vector<ParamVector>& reports,
                             const std::vector<double>& base_weights,
                             std::optional<std::pair<ModelPart, std::vector<double>>>
                                 part_scoped = std::nullopt) {
    if (reports.empty()) throw ConfigError("aggregate: no reports");
    if (base_weights.size() != reports.size())
        throw LengthMismatch("aggregate: weight count mismatch");
    const std::size_t len = reports.front().size();
    for (const auto& p : reports)
        if (p.size() != len) throw LengthMismatch("aggregate: parameter length mismatch");

    ParamVector out(reports.front().layout);
    if (part_scoped) {
        const IndexRange span = out.part_view(part_scoped->first);
        const auto& scoped = part_scoped->second;
        if (scoped.size() != reports.size())
            throw LengthMismatch("aggregate: scoped weight count mismatch");
        for (std::size_t i = 0; i < reports.size(); ++i)
            for (std::size_t k = 0; k < len; ++k)
                out.values[k] += (span.contains(k) ? scoped[i] : base_weights[i]) *
                                 reports[i].values[k];
    } else {
        for (std::size_t i = 0; i < reports.size(); ++i)
            for (std::size_t k = 0; k < len; ++k)
                out.values[k] += base_weights[i] * reports[i].values[k];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Client runtime

// Per-client mutable state across rounds: uncertainty bank, optimizer state,
// and caches of the (round-independent) teacher outputs.
struct ClientRuntime {
    const ClientDataset* dataset = nullptr;
    UncertaintyBank bank;
    SusamState susam;
    GradientMask server_mask;  // latest M_G received from the server

    // per-train-sample caches, filled on first use
    std::vector<LabelMap> teacher_pseudo;    // merged teacher one-hot maps
    std::vector<LabelMap> base_targets;      // after ground-truth overwrite
    std::vector<double> uncertainties;       // Eq. 6 values from teacher probs
    bool teacher_cache_ready = false;

    explicit ClientRuntime(const ClientDataset& ds)
        : dataset(&ds), bank(static_cast<std::size_t>(std::max(ds.n_train, 1))) {}

    int n_train() const { return dataset->n_train; }
};

namespace detail {

inline LabelMap argmax_labels(const ProbMap& probs, Provenance prov) {
    LabelMap lab(probs.width, probs.height, 0, prov);
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
        int best = 0;
        double best_v = probs.values[p * probs.n_channels];
        for (int c = 1; c < probs.n_channels; ++c) {
            const double v = probs.values[p * probs.n_channels + c];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        lab.classes[p] = best;
    }
    return lab;
}

inline void build_teacher_cache(ClientRuntime& rt, const TeacherSet& teachers,
                                int n_channels) {
    if (rt.teacher_cache_ready) return;
    const auto& ds = *rt.dataset;
    std::vector<ClassSet> owned;
    for (const auto& t : teachers.teachers) owned.push_back(t.owned_classes);

    for (int i = 0; i < rt.n_train(); ++i) {
        const auto& sample = ds.samples[i];
        std::vector<LabelMap> maps;
        std::vector<ProbMap> probs;
        for (const auto& t : teachers.teachers) {
            auto [lab, pm] = teacher_predict(t, sample.image);
            maps.push_back(std::move(lab));
            probs.push_back(std::move(pm));
        }
        LabelMap merged = merge_pseudo(maps, teachers.ordering);

        ProbMap unified = merged_teacher_probs(probs, owned);
        const auto entropy = entropy_map(unified);
        LabelMap unified_onehot = argmax_labels(unified, Provenance::pseudo);
        rt.uncertainties.push_back(
            sample_uncertainty(entropy, unified_onehot, n_channels));

        rt.base_targets.push_back(
            overwrite_ground_truth(merged, sample.labels, ds.annotated_classes));
        rt.teacher_pseudo.push_back(std::move(merged));
    }
    rt.teacher_cache_ready = true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Local training (Algorithm 3 analogue)

inline ClientReport local_round(ClientRuntime& rt, const ParamVector& global_params,
                                const TeacherSet& teachers, int r, const RunConfig& cfg) {
    const auto& ds = *rt.dataset;
    const int n_train = rt.n_train();
    const bool use_pseudo = cfg.enable_pseudo_labels;
    const bool susam_active = cfg.enable_susam && r >= cfg.susam.r_start;
    const bool gmt_active = cfg.enable_gmt && use_pseudo && r >= cfg.r_gmt;
    const double lr = cfg.lr_at(r);

    ClassSet active;
    if (use_pseudo) {
        active = all_classes_with_background();
    } else {
        active = ds.annotated_classes;
        active.insert(0);
    }

    LossSchedule sched;
    sched.r_warmup = cfg.r_warmup;
    sched.r_ws = (cfg.enable_arce && use_pseudo) ? cfg.r_ws : cfg.total_rounds + 1;
    sched.total_rounds = cfg.total_rounds;
    sched.arce_coeff = cfg.arce_coeff;

    if (use_pseudo) detail::build_teacher_cache(rt, teachers, cfg.layout().n_channels);

    // Round-specific targets: GMT refinement forwards the received global
    // model once per sample.
    std::vector<LabelMap> round_targets;
    if (gmt_active) {
        round_targets.reserve(n_train);
        for (int i = 0; i < n_train; ++i) {
            ProbMap gp = forward(global_params, ds.samples[i].image);
            LabelMap global_pred = detail::argmax_labels(gp, Provenance::pseudo);
            LabelMap refined = gmt_refine(global_pred, rt.teacher_pseudo[i], cfg.gmt_threshold);
            round_targets.push_back(
                overwrite_ground_truth(refined, ds.samples[i].labels, ds.annotated_classes));
        }
    }

    // Per-sample loss weights from the scheduler.
    std::vector<double> weights(n_train, 1.0);
    const bool ws_active = cfg.enable_ws && use_pseudo && r >= cfg.r_warmup && r < cfg.r_ws &&
                           !rt.bank.empty();
    std::optional<BankStats> stats;
    if (ws_active || (cfg.enable_ua && !rt.bank.empty()))
        stats = bank_stats(rt.bank, cfg.scheduler.tail_quantile);
    if (ws_active) {
        for (int i = 0; i < n_train; ++i)
            weights[i] = schedule_weight(rt.uncertainties[i], *stats, r, cfg.total_rounds,
                                         cfg.scheduler);
    }

    ParamVector w = global_params;
    for (int k = 0; k < cfg.local_rounds; ++k) {
        for (int b = 0; b < n_train; b += cfg.batch_size) {
            const int b_end = std::min(b + cfg.batch_size, n_train);
            std::vector<const PixelGrid*> images;
            std::vector<const LabelMap*> targets;
            std::vector<double> batch_weights;
            for (int i = b; i < b_end; ++i) {
                images.push_back(&ds.samples[i].image);
                if (use_pseudo)
                    targets.push_back(gmt_active ? &round_targets[i] : &rt.base_targets[i]);
                else
                    targets.push_back(&ds.samples[i].labels);
                batch_weights.push_back(weights[i]);
                if (use_pseudo) rt.bank.push(rt.uncertainties[i]);
            }

            if (!susam_active) {
                ParamVector g =
                    detail::batch_gradient(w, images, targets, batch_weights, r, sched, active);
                for (std::size_t idx = 0; idx < w.size(); ++idx)
                    w.values[idx] -= lr * g.values[idx];
            } else {
                // ascent gradient on the strongly augmented batch, descent on
                // the original one
                std::vector<PixelGrid> aug;
                aug.reserve(images.size());
                for (int i = b; i < b_end; ++i)
                    aug.push_back(strong_augment(
                        ds.samples[i].image, cfg.augment,
                        seed_mix(cfg.seed, 0xa06, seed_mix(ds.client_id, r, k, i))));
                std::vector<const PixelGrid*> aug_ptrs;
                for (const auto& gimg : aug) aug_ptrs.push_back(&gimg);

                auto grad_aug = [&](const ParamVector& p) {
                    return detail::batch_gradient(p, aug_ptrs, targets, batch_weights, r, sched,
                                                  active)
                        .values;
                };
                auto grad_orig = [&](const ParamVector& p) {
                    return detail::batch_gradient(p, images, targets, batch_weights, r, sched,
                                                  active)
                        .values;
                };
                // server-provided mask; all-zero before the first exchange
                const GradientMask global_mask = rt.server_mask.size() == w.size()
                                                     ? rt.server_mask
                                                     : GradientMask(w.size());
                w = susam_step(std::move(w), rt.susam, global_mask, r, cfg.susam, lr,
                               seed_mix(cfg.seed, 0x5e, ds.client_id, seed_mix(r, k, b)),
                               grad_aug, grad_orig);
            }
        }
    }

    ClientReport report;
    report.params = std::move(w);
    if (cfg.enable_ua && use_pseudo && r >= cfg.r_ua) {
        const BankStats s = bank_stats(rt.bank, cfg.scheduler.tail_quantile);
        report.mu = s.mean;
        report.sigma = s.variance;
    }
    if (susam_active && rt.susam.initialized)
        report.momentum_mask = rt.susam.momentum_mask(cfg.susam.t_local);
    return report;
}

// ---------------------------------------------------------------------------
// Federated training (Algorithm 2 analogue)

struct RoundRecord {
    int round = 0;
    std::vector<double> weights;       // applied aggregation weights
    bool ua_applied = false;
    std::size_t global_mask_popcount = 0;
};

struct RunArtifacts {
    ParamVector final_params;
    TeacherSet teachers;
    std::vector<RoundRecord> history;
};

// R rounds of full-participation training. Clients run sequentially in
// ascending id order; aggregation waits for all reports (barrier semantics).
inline RunArtifacts run(const RunConfig& cfg, const std::vector<ClientDataset>& datasets,
                        TeacherSet teachers,
                        const std::function<void(int, const ParamVector&)>& on_round = {}) {
    cfg.validate();
    if (datasets.empty()) throw ConfigError("run: no client datasets");

    std::vector<ClientRuntime> runtimes;
    runtimes.reserve(datasets.size());
    std::vector<int> counts;
    for (const auto& ds : datasets) {
        runtimes.emplace_back(ds);
        counts.push_back(ds.n_train > 0 ? ds.n_train : static_cast<int>(ds.samples.size()));
    }
    const std::vector<double> prop = proportional_weights(counts);

    Rng init_rng(seed_mix(cfg.seed, 0x91));
    ServerState server;
    server.global_params = init_params(cfg.layout(), init_rng);
    server.global_mask = GradientMask(server.global_params.size());

    RunArtifacts art;
    art.teachers = std::move(teachers);

    for (int r = 0; r < cfg.total_rounds; ++r) {
        std::vector<ClientReport> reports;
        reports.reserve(runtimes.size());
        for (auto& rt : runtimes) {
            rt.server_mask = server.global_mask;
            try {
                reports.push_back(local_round(rt, server.global_params, art.teachers, r, cfg));
            } catch (const NumericalError& e) {
                throw NumericalError("client " + std::to_string(rt.dataset->client_id) + ": " +
                                     e.what());
            }
        }

        std::vector<ParamVector> params;
        for (auto& rep : reports) params.push_back(std::move(rep.params));

        RoundRecord rec;
        rec.round = r;
        const bool ua_ready = cfg.enable_ua && cfg.enable_pseudo_labels && r >= cfg.r_ua;
        if (ua_ready) {
            std::vector<double> mu, sigma;
            for (const auto& rep : reports) {
                mu.push_back(rep.mu.value());
                sigma.push_back(rep.sigma.value());
            }
            const auto scoped = ua_weights(mu, sigma, prop, cfg.tau_mu, cfg.tau_sigma);
            server.global_params =
                aggregate(params, prop, std::make_pair(ModelPart::decoder, scoped));
            rec.weights = scoped;
            rec.ua_applied = true;
        } else {
            server.global_params = aggregate(params, prop);
            rec.weights = prop;
        }
        server.weights = rec.weights;
        server.round = r;

        if (cfg.enable_susam && r >= cfg.susam.r_start) {
            std::vector<GradientMask> masks;
            for (const auto& rep : reports)
                if (rep.momentum_mask) masks.push_back(*rep.momentum_mask);
            if (masks.size() == reports.size())
                server.global_mask = merge_global_mask(masks);
        }
        rec.global_mask_popcount = server.global_mask.popcount();
        art.history.push_back(std::move(rec));

        if (on_round) on_round(r, server.global_params);
    }
    art.final_params = std::move(server.global_params);
    return art;
}

}  // namespace ufps
