#include "alseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace alseg::data {

namespace fs = std::filesystem;

double Volume::label_fraction() const {
    if (labels.empty()) return 0.0;
    std::size_t fg = 0;
    for (auto v : labels) fg += v;
    return static_cast<double>(fg) / static_cast<double>(labels.size());
}

void Volume::validate() const {
    const std::size_t n = z * h * w;
    if (intensity.size() != n || labels.size() != n) throw InvalidArgument("volume buffers do not match shape");
    for (auto v : labels)
        if (v > 1) throw InvalidArgument("volume labels are not binary");
}

double Ellipse::radius(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = (dx * c + dy * s) / a;
    const double v = (-dx * s + dy * c) / b;
    return std::sqrt(u * u + v * v);
}

std::vector<std::vector<Ellipse>> synthesize_geometry(const SynthParams& p) {
    if (p.z == 0 || p.h == 0 || p.w == 0) throw InvalidArgument("synthetic volume needs a nonzero shape");
    if (!(p.min_axis > 0.0) || p.min_axis > p.max_axis) throw InvalidArgument("blob axis range is invalid");
    if (p.blob_count > 0 && 2.0 * p.max_axis + 2.0 > static_cast<double>(std::min(p.h, p.w)))
        throw InvalidArgument("blob axes do not fit inside the slice");
    if (!(p.noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
    if (!(p.texture_period > 0.0)) throw InvalidArgument("texture period must be positive");

    Rng rng(derive_seed(p.rng_seed, 0x67656f6dULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<Ellipse>> slices(p.z);
    for (auto& slice : slices) {
        for (std::size_t i = 0; i < p.blob_count; ++i) {
            Ellipse e;
            e.a = p.min_axis + (p.max_axis - p.min_axis) * unit(rng);
            e.b = p.min_axis + (p.max_axis - p.min_axis) * unit(rng);
            e.theta = std::numbers::pi * unit(rng);
            // The bounding radius max(a, b) keeps every orientation inside the slice.
            const double margin = std::max(e.a, e.b) + 1.0;
            e.cy = margin + (static_cast<double>(p.h) - 2.0 * margin) * unit(rng);
            e.cx = margin + (static_cast<double>(p.w) - 2.0 * margin) * unit(rng);
            e.contrast = 0.06 + 0.22 * unit(rng);
            slice.push_back(e);
        }
    }
    return slices;
}

Volume generate_synthetic(const SynthParams& p) {
    const auto geometry = synthesize_geometry(p);
    Volume vol(p.z, p.h, p.w);
    Rng rng(derive_seed(p.rng_seed, 0x74657874ULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    constexpr double kRimWidth = 2.0;  // px
    constexpr double kRimDarkening = 0.12;

    for (std::size_t zi = 0; zi < p.z; ++zi) {
        // Low-frequency background: a few long-wavelength plane waves.
        struct Wave { double ky, kx, phase, amp; };
        std::vector<Wave> waves;
        for (int i = 0; i < 4; ++i) {
            const double period = 96.0 + 224.0 * unit(rng);
            const double dir = kTwoPi * unit(rng);
            waves.push_back({std::sin(dir) / period, std::cos(dir) / period, kTwoPi * unit(rng),
                             0.05 + 0.05 * unit(rng)});
        }
        std::vector<double> slice(p.h * p.w);
        for (std::size_t y = 0; y < p.h; ++y)
            for (std::size_t x = 0; x < p.w; ++x) {
                double v = 0.58;
                for (const auto& wv : waves)
                    v += wv.amp * std::sin(kTwoPi * (wv.ky * static_cast<double>(y) + wv.kx * static_cast<double>(x)) +
                                           wv.phase);
                slice[y * p.w + x] = v;
            }

        for (const auto& e : geometry[zi]) {
            const double reach = std::max(e.a, e.b) + 1.0;
            const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(e.cy - reach)));
            const auto y1 = static_cast<std::size_t>(std::min<double>(static_cast<double>(p.h), std::ceil(e.cy + reach)));
            const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(e.cx - reach)));
            const auto x1 = static_cast<std::size_t>(std::min<double>(static_cast<double>(p.w), std::ceil(e.cx + reach)));
            const double c = std::cos(e.theta), s = std::sin(e.theta);
            const double inner = 1.0 - kRimWidth / std::min(e.a, e.b);
            for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x) {
                    const double yy = static_cast<double>(y), xx = static_cast<double>(x);
                    const double r = e.radius(yy, xx);
                    if (r > 1.0) continue;
                    const std::size_t idx = vol.index(zi, y, x);
                    vol.labels[idx] = 1;
                    // Stripes run across the minor axis, like cristae.
                    const double across = -(xx - e.cx) * s + (yy - e.cy) * c;
                    const double stripe = 0.5 * e.contrast * std::cos(kTwoPi * across / p.texture_period);
                    double v = slice[y * p.w + x] - e.contrast + stripe;
                    if (r > inner) v -= kRimDarkening;
                    slice[y * p.w + x] = v;
                }
        }

        for (std::size_t i = 0; i < p.h * p.w; ++i) {
            double v = slice[i];
            if (p.noise_sigma > 0.0) v += p.noise_sigma * noise(rng);
            vol.intensity[zi * p.h * p.w + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return vol;
}

Split split_train_test(const Volume& volume) {
    if (volume.h < 2) throw InvalidArgument("volume needs at least two rows to split");
    const std::size_t half = volume.h / 2;
    auto rows = [&](std::size_t from, std::size_t to) {
        Volume part(volume.z, to - from, volume.w);
        part.voxel_size_nm = volume.voxel_size_nm;
        for (std::size_t zi = 0; zi < volume.z; ++zi)
            for (std::size_t y = from; y < to; ++y) {
                const std::size_t src = volume.index(zi, y, 0);
                const std::size_t dst = part.index(zi, y - from, 0);
                std::copy_n(volume.intensity.begin() + static_cast<std::ptrdiff_t>(src), volume.w,
                            part.intensity.begin() + static_cast<std::ptrdiff_t>(dst));
                std::copy_n(volume.labels.begin() + static_cast<std::ptrdiff_t>(src), volume.w,
                            part.labels.begin() + static_cast<std::ptrdiff_t>(dst));
            }
        return part;
    };
    return {rows(0, half), rows(half, volume.h)};
}

namespace {

PatchSample extract(const Volume& v, std::size_t zi, std::size_t y0, std::size_t x0, std::size_t size, Index idx) {
    PatchSample s;
    s.pool_index = idx;
    s.pixels = Image(size, size);
    Mask mask(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const std::size_t src = v.index(zi, y0 + y, x0 + x);
            s.pixels.at(y, x) = v.intensity[src];
            mask.at(y, x) = v.labels[src];
        }
    s.mask = std::move(mask);
    return s;
}

} // namespace

std::vector<PatchSample> sample_patches(const Volume& volume, std::size_t count, std::size_t patch_size,
                                        std::uint64_t seed) {
    if (count == 0) throw InvalidArgument("patch count must be positive");
    if (volume.z == 0 || patch_size == 0 || patch_size > volume.h || patch_size > volume.w)
        throw InvalidArgument("patch of " + std::to_string(patch_size) + " px does not fit the volume");
    Rng rng(derive_seed(seed, 0x70617463ULL));
    std::uniform_int_distribution<std::size_t> pz(0, volume.z - 1);
    std::uniform_int_distribution<std::size_t> py(0, volume.h - patch_size);
    std::uniform_int_distribution<std::size_t> px(0, volume.w - patch_size);
    std::vector<PatchSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t zi = pz(rng), y = py(rng), x = px(rng);
        out.push_back(extract(volume, zi, y, x, patch_size, i));
    }
    return out;
}

std::vector<PatchSample> tile_patches(const Volume& volume, std::size_t patch_size) {
    if (patch_size == 0 || patch_size > volume.h || patch_size > volume.w)
        throw InvalidArgument("patch of " + std::to_string(patch_size) + " px does not fit the volume");
    std::vector<PatchSample> out;
    for (std::size_t zi = 0; zi < volume.z; ++zi)
        for (std::size_t y = 0; y + patch_size <= volume.h; y += patch_size)
            for (std::size_t x = 0; x + patch_size <= volume.w; x += patch_size)
                out.push_back(extract(volume, zi, y, x, patch_size, out.size()));
    return out;
}

// ─── PGM ──────────────────────────────────────────────────────

Grid<std::uint8_t> read_pgm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("missing slice file " + path.string());
    auto token = [&]() {
        std::string t;
        char c;
        while (is.get(c)) {
            if (c == '#') {
                std::string ignored;
                std::getline(is, ignored);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(c);
        }
        return t;
    };
    if (token() != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (maxval != 255) throw FormatError(path.string() + ": only 8-bit PGM is supported");
    Grid<std::uint8_t> img(h, w);
    if (!is.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.size())))
        throw FormatError(path.string() + ": truncated pixel data");
    return img;
}

void write_pgm(const fs::path& path, const Grid<std::uint8_t>& image) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << "P5\n" << image.w << ' ' << image.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.size()));
    if (!os) throw Error("failed writing " + path.string());
}

std::string slice_name(std::size_t z) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%04zu.pgm", z);
    return buf;
}

std::uint8_t quantize(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

fs::path save_volume(const Volume& volume, const fs::path& dir) {
    volume.validate();
    std::error_code ec;
    fs::create_directories(dir / "images", ec);
    fs::create_directories(dir / "labels", ec);
    if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t zi = 0; zi < volume.z; ++zi) {
        Grid<std::uint8_t> img(volume.h, volume.w), lbl(volume.h, volume.w);
        for (std::size_t i = 0; i < volume.h * volume.w; ++i) {
            img.data[i] = quantize(volume.intensity[zi * volume.h * volume.w + i]);
            lbl.data[i] = volume.labels[zi * volume.h * volume.w + i] ? 255 : 0;
        }
        write_pgm(dir / "images" / slice_name(zi), img);
        write_pgm(dir / "labels" / slice_name(zi), lbl);
    }
    nlohmann::ordered_json manifest = {
        {"intensity_dir", "images"},
        {"label_dir", "labels"},
        {"z", volume.z},
        {"h", volume.h},
        {"w", volume.w},
        {"voxel_size_nm", volume.voxel_size_nm},
    };
    const fs::path manifest_path = dir / "manifest.json";
    std::ofstream os(manifest_path);
    if (!os) throw Error("cannot write " + manifest_path.string());
    os << manifest.dump(2) << '\n';
    return manifest_path;
}

Volume load_volume(const fs::path& manifest_arg) {
    fs::path manifest_path = manifest_arg;
    if (fs::is_directory(manifest_path)) manifest_path /= "manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw FormatError("missing manifest " + manifest_path.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    for (const char* key : {"intensity_dir", "label_dir", "z", "h", "w"})
        if (!m.is_object() || !m.contains(key))
            throw FormatError(manifest_path.string() + ": manifest lacks \"" + key + "\"");

    Volume vol;
    try {
        vol = Volume(m.at("z").get<std::size_t>(), m.at("h").get<std::size_t>(), m.at("w").get<std::size_t>());
        if (m.contains("voxel_size_nm")) vol.voxel_size_nm = m.at("voxel_size_nm").get<std::array<double, 3>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    if (vol.z == 0 || vol.h == 0 || vol.w == 0) throw FormatError(manifest_path.string() + ": manifest lists no slices");

    const fs::path base = manifest_path.parent_path();
    const fs::path img_dir = base / m.at("intensity_dir").get<std::string>();
    const fs::path lbl_dir = base / m.at("label_dir").get<std::string>();
    for (std::size_t zi = 0; zi < vol.z; ++zi) {
        for (const auto& path : {img_dir / slice_name(zi), lbl_dir / slice_name(zi)})
            if (!fs::exists(path)) throw FormatError("missing slice file " + path.string());
        const fs::path ipath = img_dir / slice_name(zi), lpath = lbl_dir / slice_name(zi);
        const auto img = read_pgm(ipath);
        const auto lbl = read_pgm(lpath);
        for (const auto& [grid, path] : {std::pair{&img, ipath}, std::pair{&lbl, lpath}})
            if (grid->h != vol.h || grid->w != vol.w)
                throw FormatError(path.string() + ": slice is " + std::to_string(grid->w) + "x" +
                                  std::to_string(grid->h) + ", manifest says " + std::to_string(vol.w) + "x" +
                                  std::to_string(vol.h));
        for (std::size_t i = 0; i < vol.h * vol.w; ++i) {
            const std::uint8_t l = lbl.data[i];
            if (l != 0 && l != 255) throw FormatError(lpath.string() + ": label pixel is neither 0 nor 255");
            vol.intensity[zi * vol.h * vol.w + i] = static_cast<float>(img.data[i]) / 255.0f;
            vol.labels[zi * vol.h * vol.w + i] = l ? 1 : 0;
        }
    }
    return vol;
}

std::uint64_t fingerprint(const Volume& volume) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    auto feed = [&](std::uint8_t byte) {
        hash ^= byte;
        hash *= 0x100000001b3ULL;
    };
    for (std::size_t dim : {volume.z, volume.h, volume.w})
        for (int i = 0; i < 8; ++i) feed(static_cast<std::uint8_t>(dim >> (8 * i)));
    for (float v : volume.intensity) feed(quantize(v));
    for (auto l : volume.labels) feed(l);
    return hash;
}

} // namespace alseg::data
