#pragma once

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include "ufps/federation.hpp"
#include "ufps/metrics.hpp"

namespace ufps {

struct MetricRow {
    std::string run_id;
    int round = 0;
    int client = 0;
    ClassId cls = 0;
    double dice = 0.0, hd = 0.0, jc = 0.0, sen = 0.0, spe = 0.0, rve = 0.0;
};

inline LabelMap predict_labels(const ParamVector& params, const PixelGrid& grid) {
    return detail::argmax_labels(forward(params, grid), Provenance::pseudo);
}

// Per-class metrics of one prediction against the full (provenance-unmasked)
// ground truth.
inline std::vector<MetricRow> evaluate_sample(const LabelMap& pred, const LabelMap& gt,
                                              const std::string& run_id, int round,
                                              int client) {
    std::vector<MetricRow> rows;
    const double penalty = grid_diagonal(gt.width, gt.height);
    for (ClassId c = 1; c <= kNumForegroundClasses; ++c) {
        const ConfusionCounts cc = confusion(pred, gt, c);
        MetricRow row;
        row.run_id = run_id;
        row.round = round;
        row.client = client;
        row.cls = c;
        row.dice = dice_score(cc);
        row.jc = jaccard(cc);
        row.sen = sensitivity(cc);
        row.spe = specificity(cc);
        row.rve = relative_volume_error(cc);
        row.hd = hausdorff(foreground_coords(pred, c), foreground_coords(gt, c), penalty);
        rows.push_back(std::move(row));
    }
    return rows;
}

// Mean per-class metrics of a model over a dataset's test split.
inline std::vector<MetricRow> evaluate_model(const ParamVector& params,
                                             const ClientDataset& ds,
                                             const std::string& run_id, int round,
                                             bool post = false) {
    const int test_begin = ds.n_train + ds.n_val;
    const int test_end = static_cast<int>(ds.samples.size());
    std::map<ClassId, MetricRow> acc;
    int n = 0;
    for (int i = test_begin; i < test_end; ++i) {
        LabelMap pred = predict_labels(params, ds.samples[i].image);
        if (post) pred = postprocess(pred);
        for (auto& row : evaluate_sample(pred, ds.samples[i].labels, run_id, round, ds.client_id)) {
            auto& a = acc[row.cls];
            a.run_id = row.run_id;
            a.round = row.round;
            a.client = row.client;
            a.cls = row.cls;
            a.dice += row.dice;
            a.hd += row.hd;
            a.jc += row.jc;
            a.sen += row.sen;
            a.spe += row.spe;
            a.rve += row.rve;
        }
        ++n;
    }
    std::vector<MetricRow> rows;
    for (auto& [cls, a] : acc) {
        a.dice /= n;
        a.hd /= n;
        a.jc /= n;
        a.sen /= n;
        a.spe /= n;
        a.rve /= n;
        rows.push_back(a);
    }
    return rows;
}

inline double mean_dice(const std::vector<MetricRow>& rows) {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.dice;
    return s / rows.size();
}

inline constexpr const char* kCsvHeader = "run,round,client,class,dice,hd,jc,sen,spe,rve";

inline std::string format_metric(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& os) {
    os << kCsvHeader << "\n";
    for (const auto& r : rows) {
        os << r.run_id << ',' << r.round << ',' << r.client << ',' << r.cls << ','
           << format_metric(r.dice) << ',' << format_metric(r.hd) << ','
           << format_metric(r.jc) << ',' << format_metric(r.sen) << ','
           << format_metric(r.spe) << ',' << format_metric(r.rve) << "\n";
    }
}

inline std::vector<MetricRow> read_metrics_csv(std::istream& is) {
    std::vector<MetricRow> rows;
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("read_metrics_csv: empty file");
    if (line != kCsvHeader) throw ConfigError("read_metrics_csv: unexpected header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        MetricRow r;
        std::getline(ls, r.run_id, ',');
        auto next_d = [&]() {
            std::getline(ls, field, ',');
            return std::stod(field);
        };
        std::getline(ls, field, ',');
        r.round = std::stoi(field);
        std::getline(ls, field, ',');
        r.client = std::stoi(field);
        std::getline(ls, field, ',');
        r.cls = std::stoi(field);
        r.dice = next_d();
        r.hd = next_d();
        r.jc = next_d();
        r.sen = next_d();
        r.spe = next_d();
        r.rve = next_d();
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace ufps
