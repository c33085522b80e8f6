#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "alseg/data.hpp"
#include "../support/fixtures.hpp"

namespace alseg::data {
namespace {

namespace fs = std::filesystem;

// Pixel (y, x) lies inside the ellipse, written out from the definition.
bool inside(const Ellipse& e, double y, double x) {
    const double dy = y - e.cy, dx = x - e.cx;
    const double u = (dx * std::cos(e.theta) + dy * std::sin(e.theta)) / e.a;
    const double v = (-dx * std::sin(e.theta) + dy * std::cos(e.theta)) / e.b;
    return u * u + v * v <= 1.0 + 1e-12;
}

std::string error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.what();
    }
    return {};
}

TEST(Synthetic, NoBlobsNoLabels) {
    SynthParams p;
    p.z = 2;
    p.blob_count = 0;
    const auto v = generate_synthetic(p);
    for (auto l : v.labels) ASSERT_EQ(l, 0);
}

TEST(Synthetic, ReplaysUnderFixedSeed) {
    for (double noise : {0.0, 0.05}) {
        auto p = testing::small_synth(3);
        p.noise_sigma = noise;
        const auto a = generate_synthetic(p), b = generate_synthetic(p);
        EXPECT_EQ(a.intensity, b.intensity);
        EXPECT_EQ(a.labels, b.labels);
    }
    auto p = testing::small_synth(3);
    auto q = p;
    q.rng_seed = 4;
    EXPECT_NE(generate_synthetic(p).labels, generate_synthetic(q).labels);
}

TEST(Synthetic, LabelsAreExactEllipseInteriors) {
    SynthParams p;
    p.z = 3;
    const auto geometry = synthesize_geometry(p);
    const auto v = generate_synthetic(p);
    std::size_t disagree = 0;
    for (std::size_t z = 0; z < p.z; ++z)
        for (std::size_t y = 0; y < p.h; ++y)
            for (std::size_t x = 0; x < p.w; ++x) {
                bool any = false;
                for (const auto& e : geometry[z]) any = any || inside(e, static_cast<double>(y), static_cast<double>(x));
                disagree += any != (v.labels[v.index(z, y, x)] == 1);
            }
    EXPECT_EQ(disagree, 0u);
}

TEST(Synthetic, DefaultLabelFractionInDeclaredBand) {
    // Area-ratio oracle from the sampled geometry, counted independently.
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthParams p;
        p.rng_seed = seed;
        const auto geometry = synthesize_geometry(p);
        double covered = 0.0, ellipse_area = 0.0;
        for (const auto& slice : geometry) {
            for (const auto& e : slice) ellipse_area += std::numbers::pi * e.a * e.b;
            for (std::size_t y = 0; y < p.h; ++y)
                for (std::size_t x = 0; x < p.w; ++x) {
                    bool any = false;
                    for (const auto& e : slice) any = any || inside(e, static_cast<double>(y), static_cast<double>(x));
                    covered += any;
                }
        }
        const double total = static_cast<double>(p.z * p.h * p.w);
        const double fraction = covered / total;
        EXPECT_GE(fraction, 0.05);
        EXPECT_LE(fraction, 0.35);
        EXPECT_LE(fraction, ellipse_area / total + 1e-3);  // union never exceeds the summed areas
        EXPECT_NEAR(generate_synthetic(p).label_fraction(), fraction, 1e-12);
    }
}

TEST(Synthetic, GeometryStaysInsideSlice) {
    SynthParams p;
    for (const auto& slice : synthesize_geometry(p))
        for (const auto& e : slice) {
            EXPECT_GE(e.a, p.min_axis);
            EXPECT_LE(e.a, p.max_axis);
            EXPECT_GE(e.cy - std::max(e.a, e.b), 0.0);
            EXPECT_LE(e.cx + std::max(e.a, e.b), static_cast<double>(p.w));
        }
}

TEST(Synthetic, IntensitiesClippedAndBlobsDarker) {
    SynthParams p;
    p.z = 2;
    p.noise_sigma = 0.3;
    const auto v = generate_synthetic(p);
    double in = 0, out = 0, n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < v.intensity.size(); ++i) {
        ASSERT_GE(v.intensity[i], 0.0f);
        ASSERT_LE(v.intensity[i], 1.0f);
        (v.labels[i] ? in : out) += v.intensity[i];
        (v.labels[i] ? n_in : n_out) += 1;
    }
    EXPECT_LT(in / n_in, out / n_out);
}

TEST(Synthetic, RejectsImpossibleParams) {
    SynthParams p;
    p.max_axis = 200.0;
    EXPECT_THROW(generate_synthetic(p), InvalidArgument);
    p = {};
    p.min_axis = 20.0;
    p.max_axis = 10.0;
    EXPECT_THROW(generate_synthetic(p), InvalidArgument);
    p = {};
    p.noise_sigma = -0.1;
    EXPECT_THROW(generate_synthetic(p), InvalidArgument);
    p = {};
    p.h = 0;
    EXPECT_THROW(generate_synthetic(p), InvalidArgument);
}

TEST(Split, HundredRows) {
    Volume v(2, 100, 3);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t y = 0; y < 100; ++y)
            for (std::size_t x = 0; x < 3; ++x) v.intensity[v.index(z, y, x)] = static_cast<float>(y) / 100.0f;
    v.labels[v.index(1, 50, 2)] = 1;
    const auto s = split_train_test(v);
    EXPECT_EQ(s.train.h, 50u);
    EXPECT_EQ(s.test.h, 50u);
    EXPECT_EQ(s.train.intensity[s.train.index(0, 49, 0)], 0.49f);
    EXPECT_EQ(s.test.intensity[s.test.index(0, 0, 0)], 0.50f);
    // The boundary voxel (z, H/2, x) appears in test only.
    EXPECT_EQ(s.test.labels[s.test.index(1, 0, 2)], 1);
    EXPECT_EQ(std::count(s.train.labels.begin(), s.train.labels.end(), 1), 0);
}

TEST(Split, OddRowCountFloors) {
    const auto s = split_train_test(Volume(1, 3, 4));
    EXPECT_EQ(s.train.h, 1u);
    EXPECT_EQ(s.test.h, 2u);
    EXPECT_THROW(split_train_test(Volume(1, 1, 4)), InvalidArgument);
}

TEST(Patches, PatchSizedVolumeGivesWholeSlice) {
    SynthParams p;
    p.z = 1;
    p.h = p.w = 32;
    p.blob_count = 1;
    p.min_axis = 4;
    p.max_axis = 8;
    const auto v = generate_synthetic(p);
    const auto patches = sample_patches(v, 1, 32, 5);
    ASSERT_EQ(patches.size(), 1u);
    EXPECT_EQ(patches[0].pixels.data, v.intensity);
    EXPECT_EQ(patches[0].mask->data, v.labels);
    EXPECT_EQ(patches[0].pool_index, 0u);
}

TEST(Patches, AlwaysInsideTheVolume) {
    // Give every voxel a unique value so a patch pins down its origin.
    Volume v(2, 12, 13);
    for (std::size_t i = 0; i < v.intensity.size(); ++i) v.intensity[i] = static_cast<float>(i) / 1000.0f;
    const auto patches = sample_patches(v, 10000, 8, 3);
    for (const auto& s : patches) {
        s.validate();
        const float first = s.pixels.data[0];
        const auto origin = static_cast<std::size_t>(std::lround(first * 1000.0f));
        const std::size_t z = origin / (12 * 13), y = (origin / 13) % 12, x = origin % 13;
        ASSERT_LE(y + 8, 12u);
        ASSERT_LE(x + 8, 13u);
        ASSERT_EQ(s.pixels.at(7, 7), v.intensity[v.index(z, y + 7, x + 7)]);
    }
}

TEST(Patches, ForegroundFractionMatchesWindowExpectation) {
    // Uniform origins cover central pixels more often than border pixels, so
    // the expectation weights each voxel by how many windows contain it.
    SynthParams p;
    const auto v = generate_synthetic(p);
    const std::size_t side = 32;
    auto cover = [&](std::size_t i, std::size_t n) {
        const std::size_t lo = i + 1 > side ? i + 1 - side : 0, hi = std::min(i, n - side);
        return static_cast<double>(hi - lo + 1);
    };
    double expected = 0.0;
    for (std::size_t z = 0; z < v.z; ++z)
        for (std::size_t y = 0; y < v.h; ++y)
            for (std::size_t x = 0; x < v.w; ++x)
                expected += v.labels[v.index(z, y, x)] * cover(y, v.h) * cover(x, v.w);
    const double windows = static_cast<double>(v.z * (v.h - side + 1) * (v.w - side + 1));
    expected /= windows * side * side;

    const auto patches = sample_patches(v, 2000, side, 11);
    double fg = 0.0;
    for (const auto& s : patches)
        for (auto l : s.mask->data) fg += l;
    EXPECT_NEAR(fg / (2000.0 * side * side), expected, 0.05);
}

TEST(Patches, DeterministicAndIndexed) {
    const auto v = generate_synthetic(testing::small_synth());
    const auto a = sample_patches(v, 30, 16, 9), b = sample_patches(v, 30, 16, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].pixels, b[i].pixels);
        EXPECT_EQ(a[i].pool_index, i);
    }
    EXPECT_THROW(sample_patches(v, 1, 65, 9), InvalidArgument);
    EXPECT_THROW(sample_patches(v, 0, 16, 9), InvalidArgument);
}

TEST(Patches, TilingCoversGrid) {
    const Volume v(2, 70, 64);
    const auto tiles = tile_patches(v, 32);
    EXPECT_EQ(tiles.size(), 2u * 2u * 2u);
    for (std::size_t i = 0; i < tiles.size(); ++i) EXPECT_EQ(tiles[i].pool_index, i);
}

TEST(Persistence, RoundTrip) {
    const auto dir = testing::scratch_dir("volume_rt");
    const auto v = generate_synthetic(testing::small_synth(2));
    const auto manifest = save_volume(v, dir);
    EXPECT_EQ(manifest.filename(), "manifest.json");
    for (const auto& path : {manifest, dir})
    {
        const auto back = load_volume(path);
        EXPECT_EQ(back.labels, v.labels);
        ASSERT_EQ(back.intensity.size(), v.intensity.size());
        for (std::size_t i = 0; i < v.intensity.size(); ++i)
            ASSERT_LE(std::abs(back.intensity[i] - v.intensity[i]), 1.0f / 255.0f);
        EXPECT_EQ(fingerprint(back), fingerprint(v));
    }
    EXPECT_TRUE(fs::exists(dir / "images" / "img_0001.pgm"));
    EXPECT_TRUE(fs::exists(dir / "labels" / "img_0001.pgm"));
}

TEST(Persistence, MissingSliceIsNamed) {
    const auto dir = testing::scratch_dir("volume_missing");
    auto p = testing::small_synth();
    p.z = 3;
    save_volume(generate_synthetic(p), dir);
    fs::remove(dir / "images" / "img_0001.pgm");
    const auto msg = error_of([&] { load_volume(dir); });
    EXPECT_NE(msg.find("img_0001.pgm"), std::string::npos) << msg;
}

TEST(Persistence, EmptyOrIncompleteManifest) {
    const auto dir = testing::scratch_dir("volume_empty");
    std::ofstream(dir / "manifest.json") << "{}";
    EXPECT_THROW(load_volume(dir), FormatError);
    std::ofstream(dir / "manifest.json") << R"({"intensity_dir":"i","label_dir":"l","z":0,"h":4,"w":4})";
    EXPECT_THROW(load_volume(dir), FormatError);
    std::ofstream(dir / "manifest.json") << "not json";
    EXPECT_THROW(load_volume(dir), FormatError);
    EXPECT_THROW(load_volume(dir / "nowhere"), FormatError);
}

TEST(Persistence, ShapeMismatchAndBadLabelsAreNamed) {
    const auto dir = testing::scratch_dir("volume_bad");
    save_volume(generate_synthetic(testing::small_synth()), dir);
    write_pgm(dir / "images" / "img_0001.pgm", Grid<std::uint8_t>(10, 10));
    auto msg = error_of([&] { load_volume(dir); });
    EXPECT_NE(msg.find("img_0001.pgm"), std::string::npos) << msg;

    save_volume(generate_synthetic(testing::small_synth()), dir);
    Grid<std::uint8_t> odd(64, 64, 0);
    odd.at(3, 3) = 128;
    write_pgm(dir / "labels" / "img_0000.pgm", odd);
    msg = error_of([&] { load_volume(dir); });
    EXPECT_NE(msg.find("labels"), std::string::npos) << msg;
    EXPECT_NE(msg.find("img_0000.pgm"), std::string::npos) << msg;
}

TEST(Pgm, RoundTripAndMalformed) {
    const auto dir = testing::scratch_dir("pgm");
    Grid<std::uint8_t> g(3, 5);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<std::uint8_t>(i * 17);
    write_pgm(dir / "a.pgm", g);
    EXPECT_EQ(read_pgm(dir / "a.pgm"), g);
    std::ofstream(dir / "b.pgm") << "P2\n3 5\n255\n";
    EXPECT_THROW(read_pgm(dir / "b.pgm"), FormatError);
    std::ofstream(dir / "c.pgm", std::ios::binary) << "P5\n5 3\n255\nabc";
    EXPECT_THROW(read_pgm(dir / "c.pgm"), FormatError);
    EXPECT_EQ(slice_name(7), "img_0007.pgm");
}

TEST(Fingerprint, SensitiveToContent) {
    auto v = generate_synthetic(testing::small_synth());
    const auto before = fingerprint(v);
    v.labels[5] ^= 1;
    EXPECT_NE(fingerprint(v), before);
    EXPECT_EQ(quantize(0.0f), 0);
    EXPECT_EQ(quantize(1.0f), 255);
    EXPECT_EQ(quantize(2.0f), 255);
}

} // namespace
} // namespace alseg::data
