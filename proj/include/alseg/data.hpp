#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "alseg/core.hpp"

namespace alseg::data {

/// Z x H x W intensity volume with binary labels, stored slice-major.
struct Volume {
    std::size_t z = 0, h = 0, w = 0;
    std::vector<float> intensity;       // [0,1]
    std::vector<std::uint8_t> labels;   // {0,1}
    std::array<double, 3> voxel_size_nm{5.0, 5.0, 5.0};

    Volume() = default;
    Volume(std::size_t depth, std::size_t rows, std::size_t cols)
        : z(depth), h(rows), w(cols), intensity(depth * rows * cols, 0.0f), labels(depth * rows * cols, 0) {}

    std::size_t index(std::size_t zi, std::size_t y, std::size_t x) const { return (zi * h + y) * w + x; }
    double label_fraction() const;
    /// Throws InvalidArgument when shapes disagree or labels are not binary.
    void validate() const;
};

struct SynthParams {
    std::size_t z = 8, h = 256, w = 256;
    std::size_t blob_count = 12;
    double min_axis = 12.0, max_axis = 32.0;  // semi-axes, px
    double texture_period = 6.0;              // px
    double noise_sigma = 0.05;
    std::uint64_t rng_seed = 1;
};

struct Ellipse {
    double cy = 0, cx = 0;       // centre, px
    double a = 0, b = 0;         // semi-axes along / across the orientation
    double theta = 0;            // orientation, radians
    double contrast = 0;         // interior darkening relative to background

    /// (u, v) in units of the semi-axes; inside iff u^2 + v^2 <= 1.
    double radius(double y, double x) const;
    bool contains(double y, double x) const { return radius(y, x) <= 1.0; }
};

/// Ellipses placed on each slice, outer index = z.
std::vector<std::vector<Ellipse>> synthesize_geometry(const SynthParams& params);

/// EM-like volume: smooth background, dark-rimmed striped ellipses, Gaussian noise.
Volume generate_synthetic(const SynthParams& params);

struct Split {
    Volume train;
    Volume test;
};

/// Rows [0, H/2) go to train, [H/2, H) to test.
Split split_train_test(const Volume& volume);

/// `count` patches at uniform random positions (overlap allowed), masks attached.
std::vector<PatchSample> sample_patches(const Volume& volume, std::size_t count, std::size_t patch_size,
                                        std::uint64_t seed);

/// Non-overlapping grid of patches covering the volume (remainder rows/cols dropped).
std::vector<PatchSample> tile_patches(const Volume& volume, std::size_t patch_size);

// ─── Persistence ──────────────────────────────────────────────
// Binary PGM (P5) slices `img_0000.pgm` ... under the manifest's
// intensity_dir and label_dir; labels are 0 or 255.

Grid<std::uint8_t> read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Grid<std::uint8_t>& image);

std::string slice_name(std::size_t z);

/// Writes slices plus `manifest.json` into dir; returns the manifest path.
std::filesystem::path save_volume(const Volume& volume, const std::filesystem::path& dir);
/// Accepts a manifest file or a directory containing manifest.json.
Volume load_volume(const std::filesystem::path& manifest_path);

/// FNV-1a over shape, 8-bit quantized intensities and labels.
std::uint64_t fingerprint(const Volume& volume);

std::uint8_t quantize(float v);

} // namespace alseg::data
