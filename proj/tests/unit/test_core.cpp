#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "alseg/core.hpp"

namespace alseg {
namespace {

TEST(PoolInit, AllIndicesForcedWhenMEqualsN) {
    for (std::uint64_t seed : {0u, 1u, 99u}) {
        auto s = PoolState::init(5, 5, seed);
        std::vector<Index> got = s.labeled();
        std::sort(got.begin(), got.end());
        EXPECT_EQ(got, (std::vector<Index>{0, 1, 2, 3, 4}));
        EXPECT_TRUE(s.unlabeled().empty());
    }
}

TEST(PoolInit, DistinctInRangeAtFullScale) {
    auto s = PoolState::init(2000, 20, 7);
    std::set<Index> unique(s.labeled().begin(), s.labeled().end());
    EXPECT_EQ(unique.size(), 20u);
    EXPECT_LT(*unique.rbegin(), 2000u);
    EXPECT_EQ(s.iteration(), 0u);
    EXPECT_EQ(s.unlabeled().size(), 1980u);
}

TEST(PoolInit, DeterministicSingleton) {
    auto a = PoolState::init(3, 1, 42);
    auto b = PoolState::init(3, 1, 42);
    ASSERT_EQ(a.labeled().size(), 1u);
    EXPECT_EQ(a.labeled(), b.labeled());
}

TEST(PoolInit, RejectsBadSizes) {
    EXPECT_THROW(PoolState::init(3, 4, 1), InvalidConfig);
    EXPECT_THROW(PoolState::init(3, 0, 1), InvalidConfig);
}

TEST(PoolInit, UnlabeledIsSortedComplement) {
    auto s = PoolState::init(50, 7, 3);
    auto u = s.unlabeled();
    EXPECT_TRUE(std::is_sorted(u.begin(), u.end()));
    for (Index i = 0; i < 50; ++i)
        EXPECT_NE(s.is_labeled(i), std::binary_search(u.begin(), u.end(), i));
}

TEST(PoolExtend, AppendsAndBumpsIteration) {
    auto base = PoolState::init(10, 1, 5);
    const Index first = base.labeled()[0];
    std::vector<Index> fresh;
    for (Index i = 0; fresh.size() < 2; ++i)
        if (i != first) fresh.push_back(i);
    auto next = base.extend(fresh);
    EXPECT_EQ(next.iteration(), 1u);
    EXPECT_EQ(next.labeled(), (std::vector<Index>{first, fresh[0], fresh[1]}));
    EXPECT_EQ(base.labeled_count(), 1u);  // original left untouched
}

TEST(PoolExtend, RejectsAlreadyLabeled) {
    auto base = PoolState::init(10, 1, 5);
    const std::vector<Index> again{base.labeled()[0]};
    EXPECT_THROW(base.extend(again), InvalidSelection);
}

TEST(PoolExtend, RejectsDuplicatesAndOutOfRange) {
    auto small = PoolState::init(10, 1, 5);
    Index free = small.labeled()[0] == 0 ? 1 : 0;
    EXPECT_THROW(small.extend(std::vector<Index>{free, free}), InvalidSelection);
    EXPECT_THROW(small.extend(std::vector<Index>{10}), InvalidSelection);
}

TEST(PoolExtend, FullScheduleReaches520) {
    auto s = PoolState::init(2000, 20, 11);
    Rng rng(1);
    for (int t = 0; t < 25; ++t) {
        auto u = s.unlabeled();
        std::shuffle(u.begin(), u.end(), rng);
        u.resize(20);
        s = s.extend(u);
    }
    EXPECT_EQ(s.labeled_count(), 520u);
    EXPECT_EQ(s.iteration(), 25u);
}

TEST(PoolProperty, MonotoneGrowthAcrossRandomSchedules) {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 30 + rng() % 50, m = 1 + rng() % 5, k = 1 + rng() % 4;
        auto s = PoolState::init(n, m, rng());
        std::size_t t = 0;
        while (s.unlabeled().size() >= k) {
            auto before = s.labeled();
            auto u = s.unlabeled();
            std::shuffle(u.begin(), u.end(), rng);
            u.resize(k);
            s = s.extend(u);
            ++t;
            ASSERT_EQ(s.labeled_count(), m + t * k);
            ASSERT_TRUE(std::equal(before.begin(), before.end(), s.labeled().begin()));
        }
    }
}

TEST(ProbabilityMapCheck, DetectsUnnormalizedPixels) {
    ProbabilityMap m(1, 2);
    m.prob(0, 0) = 0.3;
    m.prob(0, 1) = 0.7;
    m.prob(1, 0) = 0.5;
    m.prob(1, 1) = 0.5;
    EXPECT_TRUE(m.normalized());
    m.prob(1, 1) = 0.5 + 2e-6;
    EXPECT_FALSE(m.normalized());
    EXPECT_THROW(m.check_normalized(), InvalidArgument);
    m.prob(1, 0) = -0.1;
    m.prob(1, 1) = 1.1;
    EXPECT_FALSE(m.normalized());
}

TEST(PatchSampleCheck, Invariants) {
    PatchSample s;
    s.pixels = Image(8, 8, 0.5f);
    EXPECT_NO_THROW(s.validate());
    s.mask = Mask(8, 8, 1);
    EXPECT_NO_THROW(s.validate());
    s.mask->at(0, 0) = 2;
    EXPECT_THROW(s.validate(), InvalidArgument);
    s.mask = Mask(8, 7, 0);
    EXPECT_THROW(s.validate(), InvalidArgument);
    s.mask.reset();
    s.pixels.at(3, 3) = 1.5f;
    EXPECT_THROW(s.validate(), InvalidArgument);
    PatchSample tiny;
    tiny.pixels = Image(7, 8, 0.0f);
    EXPECT_THROW(tiny.validate(), InvalidArgument);
}

TEST(StrategyNames, RoundTrip) {
    for (Strategy s : all_strategies()) EXPECT_EQ(parse_strategy(strategy_name(s)), s);
    EXPECT_FALSE(parse_strategy("entropy").has_value());
    EXPECT_EQ(all_strategies().size(), 6u);
    EXPECT_TRUE(needs_embeddings(Strategy::KMeans));
    EXPECT_TRUE(needs_embeddings(Strategy::CoreSet));
    EXPECT_FALSE(needs_embeddings(Strategy::Bald));
}

TEST(Config, ValidatesBudgetAndPatchSize) {
    ExperimentConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.final_label_count(), 520u);
    c.iterations = 100;
    EXPECT_THROW(c.validate(), InvalidConfig);
    c = {};
    c.patch_size = 30;
    EXPECT_THROW(c.validate(), InvalidConfig);
    c = {};
    c.mc_passes = 0;
    EXPECT_THROW(c.validate(), InvalidConfig);
    c = {};
    c.initial_lr = 0.0;
    EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(DeriveSeed, StreamsDiffer) {
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
    EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

} // namespace
} // namespace alseg
