#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "alseg/core.hpp"

namespace alseg::strategies {

struct ScoredSample {
    Index pool_index = 0;
    double score = 0.0;
    bool operator==(const ScoredSample&) const = default;
};

struct SelectionResult {
    std::vector<Index> chosen;
    std::optional<std::vector<ScoredSample>> per_sample_scores;
};

enum class Direction { Maximize, Minimize };

// ─── Uncertainty scores ───────────────────────────────────────
// All accumulate in double. Natural log; 0 * ln 0 is taken as 0.

/// Cumulative pixel-wise Shannon entropy, in [0, N ln C].
double score_max_entropy(const ProbabilityMap& map);

/// Cumulative per-pixel max class probability, in [N/C, N]. Lower is less confident.
double score_least_confidence(const ProbabilityMap& map);

/// Per-pixel mean of T stochastic maps. Uses a running mean so T identical
/// inputs reproduce the input bit-for-bit.
ProbabilityMap aggregate_mc(std::span<const ProbabilityMap> maps);

/// k best by score; ties go to the lower pool index.
SelectionResult select_top_k(std::span<const ScoredSample> scores, std::size_t k, Direction direction);

// ─── Embedding-based selectors ────────────────────────────────

using IndexedEmbedding = std::pair<Index, Embedding>;

struct KMeansResult {
    std::vector<Embedding> centroids;
    std::vector<std::size_t> assignment;
    /// Within-cluster sum of squares after each assignment step.
    std::vector<double> wcss_history;
    double wcss() const { return wcss_history.empty() ? 0.0 : wcss_history.back(); }
};

/// Lloyd's algorithm with k-means++ seeding (single seeded run).
KMeansResult kmeans_fit(std::span<const Embedding> points, std::size_t k, std::size_t max_iters,
                        std::uint64_t seed);

double squared_distance(const Embedding& a, const Embedding& b);

/// Clusters the given (unlabeled) embeddings and returns, per centroid, the
/// nearest sample not already taken.
SelectionResult select_kmeans(std::span<const IndexedEmbedding> embeddings, std::size_t k,
                              std::uint64_t seed, std::size_t max_iters = 100);

/// Greedy k-center over all_embeddings, anchored on the labeled indices.
SelectionResult select_coreset(std::span<const IndexedEmbedding> all_embeddings,
                               std::span<const Index> labeled, std::size_t k);

/// k distinct uniform draws without replacement, in draw order.
SelectionResult select_random(std::span<const Index> unlabeled, std::size_t k, std::uint64_t seed);

} // namespace alseg::strategies
