// Command-line front end: dataset generation, teacher pretraining, federated
// training, evaluation, and single-key ablation sweeps.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ufps/config_json.hpp"
#include "ufps/eval.hpp"
#include "ufps/federation.hpp"

namespace fs = std::filesystem;
using namespace ufps;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_config_file(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (const char* env = std::getenv("UFPS_SEED")) cfg.seed = std::stoull(env);
    cfg.validate();
    return cfg;
}

Benchmark make_benchmark(const RunConfig& cfg) {
    return default_benchmark(seed_mix(cfg.seed, 0xda7a), cfg.grid_size);
}

void write_dataset_file(const ClientDataset& ds, const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path.string());
    dump_dataset(ds, os);
}

std::string teacher_path(const fs::path& dir, int client_id) {
    return (dir / ("teacher_" + std::to_string(client_id) + ".ckpt")).string();
}

TeacherSet pretrain_and_save(const RunConfig& cfg, const Benchmark& bench,
                             const fs::path& out) {
    TeacherSet teachers =
        pretrain_teachers(bench.clients, cfg.pretrain_epochs, cfg, seed_mix(cfg.seed, 0x9e));
    for (std::size_t i = 0; i < teachers.teachers.size(); ++i)
        save_checkpoint(teacher_path(out, bench.clients[i].client_id), cfg, 0,
                        teachers.teachers[i].params);
    return teachers;
}

int run_train(const RunConfig& cfg, const fs::path& out, const std::string& run_id) {
    Benchmark bench = make_benchmark(cfg);
    TeacherSet teachers = pretrain_and_save(cfg, bench, out);
    RunArtifacts art = run(cfg, bench.clients, std::move(teachers));
    save_checkpoint((out / "model.ckpt").string(), cfg, cfg.total_rounds, art.final_params);
    std::cout << "trained " << run_id << ": " << cfg.total_rounds << " rounds, model saved to "
              << (out / "model.ckpt") << "\n";
    return 0;
}

int run_eval(const RunConfig& cfg, const fs::path& out, const std::string& run_id, bool post,
             const std::string& metrics_name) {
    Benchmark bench = make_benchmark(cfg);
    ParamVector params = load_checkpoint((out / "model.ckpt").string(), cfg.layout());

    std::vector<MetricRow> rows;
    auto eval_into = [&](const ClientDataset& ds) {
        for (auto& r : evaluate_model(params, ds, run_id, cfg.total_rounds, post))
            rows.push_back(std::move(r));
    };
    for (const auto& ds : bench.clients) eval_into(ds);
    eval_into(bench.heldout);

    {
        std::ofstream os(out / metrics_name);
        if (!os) throw ConfigError("cannot write metrics file");
        write_metrics_csv(rows, os);
    }
    {
        std::ofstream os(out / "summary.json");
        if (!os) throw ConfigError("cannot write summary.json");
        write_summary_json(rows, os);
    }
    std::cout << "evaluated " << run_id << ": mean dice " << mean_dice(rows) << " over "
              << rows.size() << " rows\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UFPS federated partially-supervised segmentation simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "JSON config file");
        cmd->add_option("--out", opts.out_dir, "output directory");
        cmd->add_option("--seed", opts.seed, "master seed (overrides config)")
            ->each([&](const std::string&) { opts.seed_set = true; });
    };

    auto* gen = app.add_subcommand("gen", "emit the benchmark datasets");
    add_common(gen);
    auto* pretrain = app.add_subcommand("pretrain", "pretrain per-client teacher models");
    add_common(pretrain);
    auto* train = app.add_subcommand("train", "run federated training");
    add_common(train);
    auto* eval = app.add_subcommand("eval", "evaluate the trained model");
    add_common(eval);
    bool post = false;
    eval->add_flag("--post", post, "apply hole-filling / small-component post-processing");
    auto* ablate = app.add_subcommand("ablate", "sweep one config key over listed values");
    add_common(ablate);
    std::string ablate_key, ablate_values;
    ablate->add_option("key", ablate_key, "dotted config key, e.g. scheduler.kind")->required();
    ablate->add_option("values", ablate_values, "comma-separated values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const RunConfig cfg = resolve_config(opts);
        const fs::path out(opts.out_dir);
        fs::create_directories(out);
        const std::string run_id = "ufps-seed" + std::to_string(cfg.seed);

        if (gen->parsed()) {
            Benchmark bench = make_benchmark(cfg);
            json meta;
            for (const auto& ds : bench.clients) {
                const std::string name = "client_" + std::to_string(ds.client_id) + ".ufps";
                write_dataset_file(ds, out / name);
                meta["clients"].push_back(
                    {{"id", ds.client_id},
                     {"file", name},
                     {"annotated_classes", std::vector<int>(ds.annotated_classes.begin(),
                                                            ds.annotated_classes.end())},
                     {"n_train", ds.n_train},
                     {"n_val", ds.n_val}});
            }
            write_dataset_file(bench.heldout, out / "heldout.ufps");
            meta["heldout"] = {{"id", bench.heldout.client_id}, {"file", "heldout.ufps"}};
            std::ofstream os(out / "benchmark.json");
            os << meta.dump(2) << "\n";
            std::cout << "wrote benchmark datasets to " << out << "\n";
            return 0;
        }
        if (pretrain->parsed()) {
            Benchmark bench = make_benchmark(cfg);
            pretrain_and_save(cfg, bench, out);
            std::cout << "wrote teacher checkpoints to " << out << "\n";
            return 0;
        }
        if (train->parsed()) return run_train(cfg, out, run_id);
        if (eval->parsed()) return run_eval(cfg, out, run_id, post, "metrics.csv");
        if (ablate->parsed()) {
            std::vector<std::string> values;
            std::istringstream vs(ablate_values);
            std::string v;
            while (std::getline(vs, v, ',')) values.push_back(v);
            if (values.empty()) throw ConfigError("ablate: no values given");
            for (const auto& value : values) {
                RunConfig swept = config_with_override(cfg, ablate_key, value);
                const std::string sweep_id = run_id + "-" + ablate_key + "=" + value;
                const fs::path sweep_dir = out / (ablate_key + "=" + value);
                fs::create_directories(sweep_dir);
                int rc = run_train(swept, sweep_dir, sweep_id);
                if (rc != 0) return rc;
                rc = run_eval(swept, sweep_dir, sweep_id, false,
                              "metrics_" + ablate_key + "=" + value + ".csv");
                if (rc != 0) return rc;
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
