#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "alseg/core.hpp"
#include "alseg/metrics.hpp"
#include "alseg/predictor.hpp"
#include "alseg/strategies.hpp"

namespace alseg::loop {

/// Ground-truth lookup standing in for a human annotator. Every query is logged.
class SimulatedOracle {
public:
    SimulatedOracle() = default;
    explicit SimulatedOracle(std::vector<Mask> ground_truth) : truth_(std::move(ground_truth)) {}

    /// Moves the masks out of `samples` into a new oracle; the samples stay
    /// behind unlabeled. samples[i].pool_index must equal i.
    static SimulatedOracle take_labels(std::vector<PatchSample>& samples);

    /// Copies of pool[i] with the ground-truth mask attached, for each index.
    /// Throws MissingLabel for an index the oracle has no mask for.
    std::vector<PatchSample> query(std::span<const PatchSample> pool, std::span<const Index> indices);

    std::size_t size() const { return truth_.size(); }
    std::size_t query_count() const { return log_.size(); }
    const std::vector<Index>& query_log() const { return log_; }

private:
    std::vector<Mask> truth_;
    std::vector<Index> log_;
};

struct ProgressRecord {
    std::size_t iteration = 0;
    std::size_t labels_used = 0;
    double jaccard = 0.0;
    double seconds = 0.0;
    /// One JSON object on a single line.
    std::string to_json_line() const;
};

struct RunOptions {
    /// Scoring workers; 0 means ALSEG_THREADS from the environment, else 1.
    std::size_t threads = 0;
    std::function<void(const ProgressRecord&)> on_progress;
    std::function<void(std::size_t iteration, const strategies::SelectionResult&)> on_selection;
};

/// State after the strategy-independent first phase: S_0 drawn, labeled
/// and trained on, and the model evaluated once.
struct InitialPhase {
    PoolState pool;
    std::vector<PatchSample> labeled;
    std::unique_ptr<predictor::Predictor> model;
    float jaccard = 0.0f;

    InitialPhase clone() const;
};

/// The engine's reference predictor for a config (MiniSegNet, seeded from config.seed).
std::unique_ptr<predictor::Predictor> make_predictor(const ExperimentConfig& config);

/// Mean per-patch Jaccard of binarized predictions over a labeled test set.
double evaluate(const predictor::Predictor& model, std::span<const PatchSample> test_set, std::size_t threads = 1);

InitialPhase run_initial_phase(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                               std::span<const PatchSample> test_set, SimulatedOracle& oracle,
                               const predictor::Predictor& prototype, const RunOptions& options = {});

/// The T query iterations, continuing from `initial`.
metrics::LearningCurve run_active_phase(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                                        std::span<const PatchSample> test_set, SimulatedOracle& oracle,
                                        InitialPhase initial, const RunOptions& options = {});

/// Full workflow: initial training, then T rounds of score / select / label / finetune.
metrics::LearningCurve run_experiment(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                                      std::span<const PatchSample> test_set, SimulatedOracle& oracle,
                                      const predictor::Predictor& prototype, const RunOptions& options = {});

/// Selection for one round given the current model; exposed for tests.
strategies::SelectionResult select_batch(const ExperimentConfig& config, std::span<const PatchSample> train_pool,
                                         const PoolState& pool, const predictor::Predictor& model,
                                         std::size_t iteration, std::size_t threads = 1);

std::size_t resolve_threads(std::size_t requested);

} // namespace alseg::loop
