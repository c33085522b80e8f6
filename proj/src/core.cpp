#include "alseg/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace alseg {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ a) ^ b);
}

void PatchSample::validate() const {
    if (pixels.h < kMinPatchSide || pixels.w < kMinPatchSide)
        throw InvalidArgument("patch must be at least 8x8");
    if (pixels.data.size() != pixels.h * pixels.w)
        throw InvalidArgument("patch pixel buffer size mismatch");
    for (float v : pixels.data)
        if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("pixel value outside [0,1]");
    if (mask) {
        if (mask->h != pixels.h || mask->w != pixels.w)
            throw InvalidArgument("mask shape differs from pixels");
        for (auto v : mask->data)
            if (v > 1) throw InvalidArgument("mask is not binary");
    }
}

ProbabilityMap::ProbabilityMap(std::size_t h, std::size_t w)
    : h_(h), w_(w), probs_(h * w * kNumClasses, 0.0) {}

bool ProbabilityMap::normalized(double tol) const {
    for (std::size_t j = 0; j < pixels(); ++j) {
        double sum = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            double p = prob(j, c);
            if (!(p >= 0.0 && p <= 1.0)) return false;
            sum += p;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

void ProbabilityMap::check_normalized(double tol) const {
    if (!normalized(tol)) throw InvalidArgument("probability map is not normalized");
}

PoolState PoolState::init(std::size_t n, std::size_t m, std::uint64_t seed) {
    if (m == 0) throw InvalidConfig("initial labeled count m must be positive");
    if (m > n) throw InvalidConfig("initial labeled count m exceeds pool size n");
    PoolState s;
    s.n_ = n;
    s.member_.assign(n, false);
    // Partial Fisher-Yates: the first m slots are a uniform draw without replacement.
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng(derive_seed(seed, 0x706f6f6cULL));
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
        s.labeled_.push_back(perm[i]);
        s.member_[perm[i]] = true;
    }
    return s;
}

PoolState PoolState::extend(std::span<const Index> new_indices) const {
    PoolState next = *this;
    for (Index i : new_indices) {
        if (i >= n_) throw InvalidSelection("index " + std::to_string(i) + " outside pool");
        if (next.member_[i])
            throw InvalidSelection("index " + std::to_string(i) + " already labeled or duplicated");
        next.member_[i] = true;
        next.labeled_.push_back(i);
    }
    ++next.iteration_;
    return next;
}

std::vector<Index> PoolState::unlabeled() const {
    std::vector<Index> out;
    out.reserve(n_ - labeled_.size());
    for (Index i = 0; i < n_; ++i)
        if (!member_[i]) out.push_back(i);
    return out;
}

namespace {
constexpr std::array<std::pair<Strategy, std::string_view>, 6> kStrategyNames{{
    {Strategy::Random, "random"},
    {Strategy::MaxEntropy, "max_entropy"},
    {Strategy::LeastConfidence, "least_confidence"},
    {Strategy::Bald, "bald"},
    {Strategy::KMeans, "kmeans"},
    {Strategy::CoreSet, "coreset"},
}};
}

std::string_view strategy_name(Strategy s) {
    for (const auto& [value, name] : kStrategyNames)
        if (value == s) return name;
    return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
    for (const auto& [value, n] : kStrategyNames)
        if (n == name) return value;
    return std::nullopt;
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> all = [] {
        std::vector<Strategy> v;
        for (const auto& entry : kStrategyNames) v.push_back(entry.first);
        return v;
    }();
    return all;
}

bool needs_embeddings(Strategy s) { return s == Strategy::KMeans || s == Strategy::CoreSet; }

void ExperimentConfig::validate() const {
    if (m == 0) throw InvalidConfig("m must be positive");
    if (n == 0) throw InvalidConfig("n must be positive");
    if (m + k * iterations > n) throw InvalidConfig("m + k*T exceeds pool size n");
    if (patch_size < kMinPatchSide || patch_size % 4 != 0)
        throw InvalidConfig("patch_size must be a multiple of 4 and at least 8");
    if (!(initial_lr > 0.0) || !(finetune_lr > 0.0)) throw InvalidConfig("learning rates must be positive");
    if (initial_epochs == 0 || finetune_epochs == 0) throw InvalidConfig("epoch counts must be positive");
    if (mc_passes == 0) throw InvalidConfig("mc_passes must be at least 1");
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidConfig("dropout_rate must be in [0,1)");
    if (base_width == 0) throw InvalidConfig("base_width must be positive");
}

} // namespace alseg
