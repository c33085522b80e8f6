#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alseg/errors.hpp"

namespace alseg {

using Index = std::size_t;
using Rng = std::mt19937_64;

inline constexpr std::size_t kNumClasses = 2;
inline constexpr std::size_t kMinPatchSide = 8;

// Mixes a base seed with stream tags (splitmix64 finalizer) so independent
// random streams never share state.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// Dense row-major 2-D array.
template <class T>
struct Grid {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{})
        : h(rows), w(cols), data(rows * cols, fill) {}

    T& at(std::size_t y, std::size_t x) { return data[y * w + x]; }
    const T& at(std::size_t y, std::size_t x) const { return data[y * w + x]; }
    std::size_t size() const { return data.size(); }

    bool operator==(const Grid&) const = default;
};

using Image = Grid<float>;        // normalized grayscale in [0,1]
using Mask = Grid<std::uint8_t>;  // labels in {0,1}

struct PatchSample {
    Image pixels;
    std::optional<Mask> mask;
    Index pool_index = 0;

    bool labeled() const { return mask.has_value(); }
    /// Throws InvalidArgument when any PatchSample invariant is violated.
    void validate() const;
};

/// Per-pixel class distribution, stored pixel-major (H x W x C).
class ProbabilityMap {
public:
    ProbabilityMap() = default;
    ProbabilityMap(std::size_t h, std::size_t w);

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    std::size_t pixels() const { return h_ * w_; }

    double& prob(std::size_t pixel, std::size_t cls) { return probs_[pixel * kNumClasses + cls]; }
    double prob(std::size_t pixel, std::size_t cls) const { return probs_[pixel * kNumClasses + cls]; }

    std::span<const double> raw() const { return probs_; }

    /// True when every entry is in [0,1] and each pixel sums to 1 within tol.
    bool normalized(double tol = 1e-6) const;
    /// Throws InvalidArgument if not normalized.
    void check_normalized(double tol = 1e-6) const;

    bool operator==(const ProbabilityMap&) const = default;

private:
    std::size_t h_ = 0;
    std::size_t w_ = 0;
    std::vector<double> probs_;
};

using Embedding = std::vector<double>;

/// Labeled-set bookkeeping over the fixed index space [0, n).
class PoolState {
public:
    /// Draws m distinct indices uniformly without replacement.
    static PoolState init(std::size_t n, std::size_t m, std::uint64_t seed);

    /// Returns a new state with new_indices appended and the iteration bumped.
    PoolState extend(std::span<const Index> new_indices) const;

    std::size_t pool_size() const { return n_; }
    std::size_t iteration() const { return iteration_; }
    std::size_t labeled_count() const { return labeled_.size(); }
    /// Labeled indices in acquisition order.
    const std::vector<Index>& labeled() const { return labeled_; }
    bool is_labeled(Index i) const { return i < n_ && member_[i]; }
    /// Unlabeled indices in ascending order.
    std::vector<Index> unlabeled() const;

private:
    std::size_t n_ = 0;
    std::size_t iteration_ = 0;
    std::vector<Index> labeled_;
    std::vector<bool> member_;
};

enum class Strategy { Random, MaxEntropy, LeastConfidence, Bald, KMeans, CoreSet };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);
const std::vector<Strategy>& all_strategies();
/// Whether the strategy consumes embeddings rather than probability maps.
bool needs_embeddings(Strategy s);

struct ExperimentConfig {
    std::size_t m = 20;
    std::size_t n = 2000;
    std::size_t k = 20;
    std::size_t iterations = 25;
    std::size_t patch_size = 128;
    double initial_lr = 1e-3;
    double finetune_lr = 5e-4;
    std::size_t initial_epochs = 500;
    std::size_t finetune_epochs = 200;
    std::size_t mc_passes = 16;
    std::size_t batch_size = 4;
    double dropout_rate = 0.5;
    std::size_t base_width = 8;
    std::uint64_t seed = 1;
    Strategy strategy = Strategy::Random;

    /// Throws InvalidConfig on any violated invariant.
    void validate() const;
    /// m + k * T
    std::size_t final_label_count() const { return m + k * iterations; }
};

} // namespace alseg
