#pragma once

#include <filesystem>
#include <initializer_list>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "alseg/core.hpp"
#include "alseg/data.hpp"

namespace alseg::testing {

/// Map with one row of pixels given as foreground probabilities.
inline ProbabilityMap map_from_fg(std::initializer_list<double> fg) {
    ProbabilityMap m(1, fg.size());
    std::size_t j = 0;
    for (double p : fg) {
        m.prob(j, 1) = p;
        m.prob(j, 0) = 1.0 - p;
        ++j;
    }
    return m;
}

inline ProbabilityMap random_map(std::size_t h, std::size_t w, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityMap m(h, w);
    for (std::size_t j = 0; j < m.pixels(); ++j) {
        const double p = u(rng);
        m.prob(j, 1) = p;
        m.prob(j, 0) = 1.0 - p;
    }
    return m;
}

inline Mask random_mask(std::size_t h, std::size_t w, double density, Rng& rng) {
    std::bernoulli_distribution b(density);
    Mask m(h, w);
    for (auto& v : m.data) v = b(rng) ? 1 : 0;
    return m;
}

/// Patch whose left `fg_cols` columns are dark foreground on a light background.
inline PatchSample striped_patch(std::size_t side, std::size_t fg_cols, Index pool_index = 0) {
    PatchSample s;
    s.pixels = Image(side, side, 0.8f);
    s.mask = Mask(side, side, 0);
    s.pool_index = pool_index;
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < fg_cols && x < side; ++x) {
            s.pixels.at(y, x) = 0.2f;
            s.mask->at(y, x) = 1;
        }
    return s;
}

inline PatchSample noise_patch(std::size_t side, Rng& rng, Index pool_index = 0) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    PatchSample s;
    s.pixels = Image(side, side);
    for (auto& v : s.pixels.data) v = u(rng);
    s.mask = random_mask(side, side, 0.4, rng);
    s.pool_index = pool_index;
    return s;
}

/// Small synthetic volume that keeps loop and CLI tests fast.
inline data::SynthParams small_synth(std::uint64_t seed = 1) {
    data::SynthParams p;
    p.z = 2;
    p.h = 64;
    p.w = 64;
    p.blob_count = 3;
    p.min_axis = 5.0;
    p.max_axis = 12.0;
    p.rng_seed = seed;
    return p;
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("alseg_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace alseg::testing
