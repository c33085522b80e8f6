#include "alseg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "alseg/metrics.hpp"

namespace alseg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {
constexpr std::uint64_t kPoolSamplingStream = 0x73616d70ULL;

struct UsageError : Error {
    using Error::Error;
};
} // namespace

ExperimentConfig paper_preset() { return ExperimentConfig{}; }

ExperimentConfig desk_preset() {
    ExperimentConfig c;
    c.m = 10;
    c.n = 400;
    c.k = 5;
    c.iterations = 10;
    c.patch_size = 32;
    c.initial_epochs = 100;
    c.finetune_epochs = 30;
    return c;
}

ExperimentData prepare_data(const data::Volume& volume, const ExperimentConfig& config) {
    auto split = data::split_train_test(volume);
    ExperimentData d;
    d.pool = data::sample_patches(split.train, config.n, config.patch_size,
                                  derive_seed(config.seed, kPoolSamplingStream));
    d.oracle = loop::SimulatedOracle::take_labels(d.pool);
    d.test = data::tile_patches(split.test, config.patch_size);
    return d;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ordered_json config_json(const ExperimentConfig& c) {
    return {{"strategy", strategy_name(c.strategy)},
            {"seed", c.seed},
            {"m", c.m},
            {"n", c.n},
            {"k", c.k},
            {"iterations", c.iterations},
            {"patch_size", c.patch_size},
            {"initial_lr", c.initial_lr},
            {"initial_epochs", c.initial_epochs},
            {"finetune_lr", c.finetune_lr},
            {"finetune_epochs", c.finetune_epochs},
            {"batch_size", c.batch_size},
            {"mc_passes", c.mc_passes},
            {"dropout_rate", c.dropout_rate},
            {"base_width", c.base_width},
            {"final_label_count", c.final_label_count()},
            {"queried_after_seed_set", c.k * c.iterations}};
}

void write_json(const fs::path& path, const ordered_json& j) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << j.dump(2) << '\n';
    if (!os) throw Error("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

/// Flags shared by `run` and `compare`; unset optionals fall back to the preset.
struct ExperimentFlags {
    std::string data;
    std::string preset = "paper";
    std::optional<std::size_t> m, n, k, iters, patch, mc_passes, initial_epochs, finetune_epochs, batch_size,
        base_width;
    std::optional<double> initial_lr, finetune_lr;
    bool dropout_off = false;
    bool quiet = false;
    std::string out;

    void attach(CLI::App& app) {
        app.add_option("--data", data, "Dataset manifest (or its directory)")->required();
        app.add_option("--preset", preset, "Protocol preset")->check(CLI::IsMember({"paper", "desk"}));
        app.add_option("--m", m, "Initial labeled count")->check(CLI::PositiveNumber);
        app.add_option("--n", n, "Pool size")->check(CLI::PositiveNumber);
        app.add_option("--k", k, "Samples queried per iteration")->check(CLI::PositiveNumber);
        app.add_option("--iters", iters, "Query iterations T");
        app.add_option("--patch", patch, "Patch side in px (multiple of 4)")->check(CLI::PositiveNumber);
        app.add_option("--mc-passes", mc_passes, "Stochastic passes for bald")->check(CLI::PositiveNumber);
        app.add_option("--initial-epochs", initial_epochs)->check(CLI::PositiveNumber);
        app.add_option("--finetune-epochs", finetune_epochs)->check(CLI::PositiveNumber);
        app.add_option("--initial-lr", initial_lr)->check(CLI::PositiveNumber);
        app.add_option("--finetune-lr", finetune_lr)->check(CLI::PositiveNumber);
        app.add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
        app.add_option("--base-width", base_width)->check(CLI::PositiveNumber);
        app.add_flag("--dropout-off", dropout_off, "Disable dropout in training and stochastic passes");
        app.add_flag("--quiet", quiet, "Suppress progress records");
    }

    ExperimentConfig config() const {
        ExperimentConfig c = preset == "desk" ? desk_preset() : paper_preset();
        if (m) c.m = *m;
        if (n) c.n = *n;
        if (k) c.k = *k;
        if (iters) c.iterations = *iters;
        if (patch) c.patch_size = *patch;
        if (mc_passes) c.mc_passes = *mc_passes;
        if (initial_epochs) c.initial_epochs = *initial_epochs;
        if (finetune_epochs) c.finetune_epochs = *finetune_epochs;
        if (initial_lr) c.initial_lr = *initial_lr;
        if (finetune_lr) c.finetune_lr = *finetune_lr;
        if (batch_size) c.batch_size = *batch_size;
        if (base_width) c.base_width = *base_width;
        if (dropout_off) c.dropout_rate = 0.0;
        return c;
    }
};

Strategy strategy_or_usage(const std::string& name) {
    if (auto s = parse_strategy(name)) return *s;
    std::string valid;
    for (auto s : all_strategies()) valid += (valid.empty() ? "" : ", ") + std::string(strategy_name(s));
    throw UsageError("unknown strategy '" + name + "'; valid: " + valid);
}

void validate_or_usage(const ExperimentConfig& c) {
    try {
        c.validate();
    } catch (const InvalidConfig& e) {
        throw UsageError(e.what());
    }
}

struct LoadedDataset {
    data::Volume volume;
    std::string path;
    std::uint64_t fingerprint = 0;
};

LoadedDataset load_dataset(const std::string& path) {
    LoadedDataset d;
    d.volume = data::load_volume(path);
    d.path = path;
    d.fingerprint = data::fingerprint(d.volume);
    return d;
}

ordered_json run_manifest(const ExperimentConfig& c, const LoadedDataset& ds) {
    return {{"engine_version", kEngineVersion},
            {"config", config_json(c)},
            {"dataset", {{"path", ds.path}, {"fingerprint", hex64(ds.fingerprint)}}},
            {"artifacts", {{"curve", "curve.csv"}, {"summary", "summary.csv"}, {"selections", "selections.csv"}}}};
}

struct RunArtifacts {
    metrics::LearningCurve curve;
    std::vector<std::pair<std::size_t, Index>> selections;
};

/// Curve, summary and per-iteration selections; the manifest is written before the run starts.
void write_run_outputs(const fs::path& dir, const RunArtifacts& result) {
    const std::vector<metrics::LearningCurve> one{result.curve};
    const auto bundle = metrics::aggregate_curves(one);
    metrics::export_csv(bundle, dir / "curve.csv", dir / "summary.csv");
    std::ofstream sel(dir / "selections.csv");
    if (!sel) throw Error("cannot write " + (dir / "selections.csv").string());
    sel << "iteration,pool_index\n";
    for (const auto& [t, idx] : result.selections) sel << t << ',' << idx << '\n';
}

RunArtifacts execute(const ExperimentConfig& c, ExperimentData& data, const loop::InitialPhase* shared_initial,
                     std::ostream* progress, std::mutex* progress_mutex) {
    RunArtifacts out;
    loop::RunOptions opts;
    if (progress)
        opts.on_progress = [&, c](const loop::ProgressRecord& r) {
            std::unique_lock<std::mutex> lock;
            if (progress_mutex) lock = std::unique_lock(*progress_mutex);
            ordered_json j = nlohmann::json::parse(r.to_json_line());
            j["strategy"] = strategy_name(c.strategy);
            j["seed"] = c.seed;
            *progress << j.dump() << '\n' << std::flush;
        };
    opts.on_selection = [&out](std::size_t t, const strategies::SelectionResult& s) {
        for (Index i : s.chosen) out.selections.emplace_back(t, i);
    };
    loop::SimulatedOracle oracle = data.oracle;
    if (shared_initial) {
        out.curve = loop::run_active_phase(c, data.pool, data.test, oracle, shared_initial->clone(), opts);
    } else {
        auto prototype = loop::make_predictor(c);
        out.curve = loop::run_experiment(c, data.pool, data.test, oracle, *prototype, opts);
    }
    return out;
}

int cmd_synth(const data::SynthParams& params, const std::string& out_dir, std::ostream& out) {
    try {
        (void)data::synthesize_geometry(params);
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
    const auto volume = data::generate_synthetic(params);
    ensure_dir(out_dir);
    const auto manifest = data::save_volume(volume, out_dir);
    out << "wrote " << volume.z << " slices (" << volume.h << "x" << volume.w << ", label fraction "
        << metrics::format_real(volume.label_fraction()) << ") to " << manifest.string() << '\n';
    return kOk;
}

int cmd_run(const ExperimentFlags& flags, const std::string& strategy, std::uint64_t seed, std::ostream& out,
            std::ostream& err) {
    ExperimentConfig c = flags.config();
    c.strategy = strategy_or_usage(strategy);
    c.seed = seed;
    validate_or_usage(c);
    const fs::path dir =
        flags.out.empty() ? fs::path("out") / (std::string(strategy_name(c.strategy)) + "_seed" + std::to_string(seed))
                          : fs::path(flags.out);
    const auto ds = load_dataset(flags.data);
    ensure_dir(dir);
    write_json(dir / "manifest.json", run_manifest(c, ds));
    auto data = prepare_data(ds.volume, c);
    const auto result = execute(c, data, nullptr, flags.quiet ? nullptr : &err, nullptr);
    write_run_outputs(dir, result);
    out << "final jaccard " << metrics::format_real(result.curve.points.back().jaccard) << " at "
        << result.curve.points.back().labels_used << " labels; wrote " << (dir / "curve.csv").string() << '\n';
    return kOk;
}

template <class Fn>
void run_pool(std::size_t tasks, std::size_t workers, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < std::max<std::size_t>(1, std::min(workers, tasks)); ++w)
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < tasks; i = next++) fn(i);
        });
}

int cmd_compare(const ExperimentFlags& flags, const std::vector<std::string>& strategy_names,
                const std::vector<std::uint64_t>& seed_list, std::size_t parallel, std::ostream& out,
                std::ostream& err) {
    std::vector<Strategy> strategies_used;
    for (const auto& name : strategy_names) {
        const Strategy s = strategy_or_usage(name);
        if (std::find(strategies_used.begin(), strategies_used.end(), s) != strategies_used.end()) {
            err << "warning: duplicate strategy '" << name << "' ignored\n";
            continue;
        }
        strategies_used.push_back(s);
    }
    std::vector<std::uint64_t> seeds;
    for (auto s : seed_list) {
        if (std::find(seeds.begin(), seeds.end(), s) != seeds.end()) {
            err << "warning: duplicate seed " << s << " ignored\n";
            continue;
        }
        seeds.push_back(s);
    }
    if (strategies_used.empty() || seeds.empty()) throw UsageError("compare needs at least one strategy and one seed");
    ExperimentConfig base = flags.config();
    validate_or_usage(base);

    const fs::path dir = flags.out.empty() ? fs::path("out") / "compare" : fs::path(flags.out);
    const auto ds = load_dataset(flags.data);
    ensure_dir(dir);
    ordered_json manifest = {
        {"engine_version", kEngineVersion},
        {"config", config_json(base)},
        {"strategies", ordered_json::array()},
        {"seeds", seeds},
        {"dataset", {{"path", ds.path}, {"fingerprint", hex64(ds.fingerprint)}}},
        {"artifacts", {{"curve", "curve.csv"}, {"summary", "summary.csv"}, {"runs", "runs/<strategy>_seed<seed>"}}}};
    manifest["config"].erase("strategy");
    manifest["config"].erase("seed");
    for (auto s : strategies_used) manifest["strategies"].push_back(strategy_name(s));
    write_json(dir / "manifest.json", manifest);

    std::mutex progress_mutex;
    std::ostream* progress = flags.quiet ? nullptr : &err;

    // The first phase does not depend on the strategy, so each seed trains it once.
    std::vector<ExperimentData> per_seed(seeds.size());
    std::vector<std::optional<loop::InitialPhase>> initial(seeds.size());
    std::vector<std::string> seed_errors(seeds.size());
    run_pool(seeds.size(), parallel, [&](std::size_t i) {
        try {
            ExperimentConfig c = base;
            c.seed = seeds[i];
            per_seed[i] = prepare_data(ds.volume, c);
            auto prototype = loop::make_predictor(c);
            loop::SimulatedOracle oracle = per_seed[i].oracle;
            initial[i] = loop::run_initial_phase(c, per_seed[i].pool, per_seed[i].test, oracle, *prototype, {});
        } catch (const std::exception& e) {
            seed_errors[i] = e.what();
        }
    });

    struct Task {
        Strategy strategy;
        std::size_t seed_slot;
    };
    std::vector<Task> tasks;
    for (auto s : strategies_used)
        for (std::size_t i = 0; i < seeds.size(); ++i) tasks.push_back({s, i});
    std::vector<std::optional<metrics::LearningCurve>> curves(tasks.size());
    std::vector<std::string> failures(tasks.size());

    run_pool(tasks.size(), parallel, [&](std::size_t t) {
        const auto& task = tasks[t];
        ExperimentConfig c = base;
        c.strategy = task.strategy;
        c.seed = seeds[task.seed_slot];
        const std::string label = std::string(strategy_name(c.strategy)) + "_seed" + std::to_string(c.seed);
        try {
            if (!initial[task.seed_slot]) throw Error(seed_errors[task.seed_slot]);
            const fs::path run_dir = dir / "runs" / label;
            ensure_dir(run_dir);
            write_json(run_dir / "manifest.json", run_manifest(c, ds));
            auto result = execute(c, per_seed[task.seed_slot], &*initial[task.seed_slot], progress, &progress_mutex);
            write_run_outputs(run_dir, result);
            curves[t] = std::move(result.curve);
        } catch (const std::exception& e) {
            failures[t] = label + ": " + e.what();
        }
    });

    std::vector<metrics::LearningCurve> done;
    std::vector<std::string> failed;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (curves[t]) done.push_back(std::move(*curves[t]));
        if (!failures[t].empty()) failed.push_back(failures[t]);
    }
    if (!done.empty()) {
        const auto bundle = metrics::aggregate_curves(done);
        metrics::export_csv(bundle, dir / "curve.csv", dir / "summary.csv");
        for (const auto& [strategy, rows] : bundle.summary)
            out << strategy_name(strategy) << ": final mean jaccard " << metrics::format_real(rows.back().mean)
                << " (std " << metrics::format_real(rows.back().stddev) << ", " << rows.back().count << " seeds)\n";
    }
    if (!failed.empty()) {
        err << failed.size() << " run(s) failed:\n";
        for (const auto& f : failed) err << "  " << f << '\n';
        return kRuntimeFailure;
    }
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Active-learning benchmark engine for binary image segmentation", "alseg"};
    app.require_subcommand(1);
    // `--h` is the slice-height flag, so help is long-form only.
    app.set_help_flag("--help", "Print this help message and exit");

    data::SynthParams synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic EM-like volume");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--z", synth.z, "Slices")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--h", synth.h, "Rows")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--w", synth.w, "Columns")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--blobs", synth.blob_count, "Ellipses per slice");
    synth_cmd->add_option("--min-axis", synth.min_axis)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--max-axis", synth.max_axis)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--texture-period", synth.texture_period)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--noise", synth.noise_sigma)->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--seed", synth.rng_seed);

    ExperimentFlags run_flags;
    std::string run_strategy = "random";
    std::uint64_t run_seed = 1;
    auto* run_cmd = app.add_subcommand("run", "Run one (strategy, seed) experiment");
    run_flags.attach(*run_cmd);
    run_cmd->add_option("--strategy", run_strategy, "random|max_entropy|least_confidence|bald|kmeans|coreset");
    run_cmd->add_option("--seed", run_seed);
    run_cmd->add_option("--out", run_flags.out, "Output directory");

    ExperimentFlags cmp_flags;
    std::vector<std::string> cmp_strategies;
    std::vector<std::uint64_t> cmp_seeds;
    std::size_t parallel = 1;
    auto* cmp_cmd = app.add_subcommand("compare", "Run strategies x seeds and aggregate");
    cmp_flags.attach(*cmp_cmd);
    cmp_cmd->add_option("--strategies,--strategy", cmp_strategies, "Strategies (comma separated or repeated)")
        ->required()
        ->delimiter(',');
    cmp_cmd->add_option("--seeds,--seed", cmp_seeds, "Seeds (comma separated or repeated)")->required()->delimiter(',');
    cmp_cmd->add_option("--parallel", parallel, "Concurrent runs")->check(CLI::PositiveNumber);
    cmp_cmd->add_option("--out", cmp_flags.out, "Output directory");

    std::vector<std::string> argv_storage{"alseg"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n' << app.help();
        return kUsageError;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth, synth_out, out);
        if (run_cmd->parsed()) return cmd_run(run_flags, run_strategy, run_seed, out, err);
        if (cmp_cmd->parsed()) return cmd_compare(cmp_flags, cmp_strategies, cmp_seeds, parallel, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
    return kUsageError;
}

} // namespace alseg::cli
