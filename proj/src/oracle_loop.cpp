#include "alseg/oracle_loop.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace alseg::loop {

namespace strat = alseg::strategies;
using predictor::Predictor;

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kPoolStream = 1, kInitStream = 2, kTrainStream = 3, kSelectStream = 4, kMcStream = 5;

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t)
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    workers.clear();
    if (failure) std::rethrow_exception(failure);
}

predictor::TrainHyper hyper_for(const ExperimentConfig& c, bool initial, std::size_t iteration) {
    return {initial ? c.initial_lr : c.finetune_lr, initial ? c.initial_epochs : c.finetune_epochs, c.batch_size,
            derive_seed(c.seed, kTrainStream, iteration)};
}

void check_inputs(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                  std::span<const PatchSample> test_set, const SimulatedOracle& oracle) {
    config.validate();
    if (train_pool.size() != config.n)
        throw InvalidConfig("train pool holds " + std::to_string(train_pool.size()) + " samples, n is " +
                            std::to_string(config.n));
    for (std::size_t i = 0; i < train_pool.size(); ++i)
        if (train_pool[i].pool_index != i) throw InvalidArgument("train pool is not indexed 0..n-1 in order");
    if (oracle.size() < config.n) throw InvalidConfig("oracle does not cover the whole pool");
    if (test_set.empty()) throw InvalidArgument("test set is empty");
    for (const auto& s : test_set)
        if (!s.labeled()) throw InvalidArgument("test set contains an unlabeled sample");
}

ProbabilityMap checked(ProbabilityMap map) {
    map.check_normalized();
    return map;
}

} // namespace

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("ALSEG_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && v > 0) return v;
    }
    return 1;
}

SimulatedOracle SimulatedOracle::take_labels(std::vector<PatchSample>& samples) {
    std::vector<Mask> truth;
    truth.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& s = samples[i];
        if (s.pool_index != i) throw InvalidArgument("samples must be indexed 0..n-1 in order");
        if (!s.mask) throw MissingLabel("sample " + std::to_string(i) + " carries no ground truth");
        truth.push_back(std::move(*s.mask));
        s.mask.reset();
    }
    return SimulatedOracle(std::move(truth));
}

std::vector<PatchSample> SimulatedOracle::query(std::span<const PatchSample> pool, std::span<const Index> indices) {
    std::vector<PatchSample> out;
    out.reserve(indices.size());
    for (Index i : indices) {
        if (i >= truth_.size() || i >= pool.size())
            throw MissingLabel("no ground truth for pool index " + std::to_string(i));
        PatchSample s = pool[i];
        s.mask = truth_[i];
        log_.push_back(i);
        out.push_back(std::move(s));
    }
    return out;
}

std::string ProgressRecord::to_json_line() const {
    nlohmann::ordered_json j = {
        {"iteration", iteration}, {"labels_used", labels_used}, {"jaccard", jaccard}, {"seconds", seconds}};
    return j.dump();
}

InitialPhase InitialPhase::clone() const {
    InitialPhase copy;
    copy.pool = pool;
    copy.labeled = labeled;
    copy.model = model ? model->clone() : nullptr;
    copy.jaccard = jaccard;
    return copy;
}

std::unique_ptr<Predictor> make_predictor(const ExperimentConfig& config) {
    predictor::Architecture arch;
    arch.input_size = config.patch_size;
    arch.base_width = config.base_width;
    arch.dropout_rate = config.dropout_rate;
    return std::make_unique<predictor::MiniSegNet>(arch, derive_seed(config.seed, kInitStream));
}

double evaluate(const Predictor& model, std::span<const PatchSample> test_set, std::size_t threads) {
    if (test_set.empty()) throw InvalidArgument("test set is empty");
    std::vector<double> per_patch(test_set.size());
    parallel_for(test_set.size(), threads, [&](std::size_t i) {
        const auto& s = test_set[i];
        if (!s.mask) throw InvalidArgument("test sample without mask");
        per_patch[i] = metrics::jaccard(*s.mask, metrics::binarize(checked(model.predict(s))));
    });
    double sum = 0.0;
    for (double j : per_patch) sum += j;
    return sum / static_cast<double>(per_patch.size());
}

strat::SelectionResult select_batch(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                                    const PoolState& pool, const Predictor& model, std::size_t iteration,
                                    std::size_t threads) {
    const auto unlabeled = pool.unlabeled();
    const std::uint64_t select_seed = derive_seed(config.seed, kSelectStream, iteration);

    auto embed_all = [&](std::span<const Index> which) {
        std::vector<strat::IndexedEmbedding> out(which.size());
        parallel_for(which.size(), threads, [&](std::size_t i) {
            out[i] = {which[i], model.embed(train_pool[which[i]])};
        });
        for (const auto& e : out)
            if (e.second.size() != out.front().second.size())
                throw InvalidArgument("embedding length changed within a round");
        return out;
    };

    auto score_all = [&](auto&& score_one) {
        std::vector<strat::ScoredSample> scores(unlabeled.size());
        parallel_for(unlabeled.size(), threads, [&](std::size_t i) {
            scores[i] = {unlabeled[i], score_one(train_pool[unlabeled[i]])};
        });
        return scores;
    };

    switch (config.strategy) {
    case Strategy::Random:
        return strat::select_random(unlabeled, config.k, select_seed);
    case Strategy::MaxEntropy: {
        auto scores = score_all([&](const PatchSample& s) { return strat::score_max_entropy(checked(model.predict(s))); });
        return strat::select_top_k(scores, config.k, strat::Direction::Maximize);
    }
    case Strategy::LeastConfidence: {
        auto scores =
            score_all([&](const PatchSample& s) { return strat::score_least_confidence(checked(model.predict(s))); });
        return strat::select_top_k(scores, config.k, strat::Direction::Minimize);
    }
    case Strategy::Bald: {
        auto scores = score_all([&](const PatchSample& s) {
            // One independent stream per (iteration, sample) keeps scoring order-free.
            Rng rng(derive_seed(config.seed, kMcStream, (iteration << 32) ^ s.pool_index));
            auto maps = model.predict_stochastic_passes(s, config.mc_passes, rng);
            for (const auto& m : maps) m.check_normalized();
            return strat::score_max_entropy(strat::aggregate_mc(maps));
        });
        return strat::select_top_k(scores, config.k, strat::Direction::Maximize);
    }
    case Strategy::KMeans:
        return strat::select_kmeans(embed_all(unlabeled), config.k, select_seed);
    case Strategy::CoreSet: {
        std::vector<Index> everything(pool.pool_size());
        for (Index i = 0; i < everything.size(); ++i) everything[i] = i;
        return strat::select_coreset(embed_all(everything), pool.labeled(), config.k);
    }
    }
    throw InvalidConfig("unknown strategy");
}

InitialPhase run_initial_phase(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                               std::span<const PatchSample> test_set, SimulatedOracle& oracle,
                               const Predictor& prototype, const RunOptions& options) {
    check_inputs(config, train_pool, test_set, oracle);
    if (needs_embeddings(config.strategy) && !prototype.can_embed())
        throw CapabilityError(std::string(strategy_name(config.strategy)) + " needs predictor embeddings");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t threads = resolve_threads(options.threads);

    InitialPhase phase;
    phase.pool = PoolState::init(config.n, config.m, derive_seed(config.seed, kPoolStream));
    phase.labeled = oracle.query(train_pool, phase.pool.labeled());
    phase.model = prototype.clone();
    phase.model->train(phase.labeled, hyper_for(config, true, 0));
    phase.jaccard = static_cast<float>(evaluate(*phase.model, test_set, threads));
    if (options.on_progress)
        options.on_progress({0, phase.pool.labeled_count(), phase.jaccard,
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
    return phase;
}

metrics::LearningCurve run_active_phase(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                                        std::span<const PatchSample> test_set, SimulatedOracle& oracle,
                                        InitialPhase state, const RunOptions& options) {
    check_inputs(config, train_pool, test_set, oracle);
    if (!state.model) throw InvalidArgument("initial phase carries no model");
    if (needs_embeddings(config.strategy) && !state.model->can_embed())
        throw CapabilityError(std::string(strategy_name(config.strategy)) + " needs predictor embeddings");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t threads = resolve_threads(options.threads);

    metrics::LearningCurve curve;
    curve.strategy = config.strategy;
    curve.seed = config.seed;
    curve.points.push_back({state.pool.labeled_count(), state.jaccard});

    for (std::size_t t = 1; t <= config.iterations; ++t) {
        if (state.pool.unlabeled().size() < config.k) throw InvalidConfig("pool exhausted before iteration " + std::to_string(t));
        auto selection = select_batch(config, train_pool, state.pool, *state.model, t, threads);
        if (options.on_selection) options.on_selection(t, selection);
        state.pool = state.pool.extend(selection.chosen);
        auto fresh = oracle.query(train_pool, selection.chosen);
        for (auto& s : fresh) state.labeled.push_back(std::move(s));
        state.model->train(state.labeled, hyper_for(config, false, t));
        const double j = evaluate(*state.model, test_set, threads);
        curve.points.push_back({state.pool.labeled_count(), static_cast<float>(j)});
        if (options.on_progress)
            options.on_progress({t, state.pool.labeled_count(), j,
                                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
    }
    return curve;
}

metrics::LearningCurve run_experiment(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                                      std::span<const PatchSample> test_set, SimulatedOracle& oracle,
                                      const Predictor& prototype, const RunOptions& options) {
    auto initial = run_initial_phase(config, train_pool, test_set, oracle, prototype, options);
    return run_active_phase(config, train_pool, test_set, oracle, std::move(initial), options);
}

} // namespace alseg::loop
