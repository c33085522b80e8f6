#include "alseg/predictor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string_view>

#include "net_engine.hpp"

namespace alseg::predictor {

using detail::Engine;
using detail::Tensor;
using detail::Trace;

std::vector<ProbabilityMap> Predictor::predict_stochastic_passes(const PatchSample& sample, std::size_t passes,
                                                                 Rng& rng) const {
    std::vector<ProbabilityMap> out;
    out.reserve(passes);
    for (std::size_t t = 0; t < passes; ++t) out.push_back(predict_stochastic(sample, rng));
    return out;
}

Embedding Predictor::embed(const PatchSample&) const {
    throw CapabilityError("this predictor does not provide embeddings");
}

std::vector<ConvLayout> conv_layouts(const Architecture& arch) {
    const std::size_t w = arch.base_width;
    const std::size_t spec[detail::kLayerCount][3] = {
        {1, w, 3},          {w, w, 3},          // encoder level 1
        {w, 2 * w, 3},      {2 * w, 2 * w, 3},  // encoder level 2
        {2 * w, 4 * w, 3},  {4 * w, 4 * w, 3},  // bottleneck
        {6 * w, 2 * w, 3},  {2 * w, 2 * w, 3},  // decoder level 2 (upsampled + skip)
        {3 * w, w, 3},      {w, w, 3},          // decoder level 1 (upsampled + skip)
        {w, kNumClasses, 1},                    // head
    };
    std::vector<ConvLayout> layers;
    std::size_t offset = 0;
    for (const auto& s : spec) {
        ConvLayout L{s[0], s[1], s[2], offset, 0};
        offset += L.weight_count();
        L.bias_offset = offset;
        offset += L.out_channels;
        layers.push_back(L);
    }
    return layers;
}

std::size_t parameter_count(const Architecture& arch) {
    const auto layers = conv_layouts(arch);
    return layers.back().bias_offset + layers.back().out_channels;
}

namespace {

void validate_architecture(const Architecture& arch) {
    if (arch.input_size < kMinPatchSide || arch.input_size % 4 != 0)
        throw InvalidArgument("input size must be a multiple of 4 and at least 8");
    if (arch.base_width == 0) throw InvalidArgument("base width must be positive");
    if (!(arch.dropout_rate >= 0.0 && arch.dropout_rate < 1.0))
        throw InvalidArgument("dropout rate must be in [0,1)");
}

ProbabilityMap to_probability_map(const Tensor<float>& logits) {
    ProbabilityMap map(logits.h, logits.w);
    const float* l0 = logits.channel(0);
    const float* l1 = logits.channel(1);
    for (std::size_t j = 0; j < logits.plane(); ++j) {
        const double p1 = detail::prob_foreground(l0[j], l1[j]);
        map.prob(j, 0) = 1.0 - p1;
        map.prob(j, 1) = p1;
    }
    return map;
}

// Adam with the AMSGrad running maximum on the second moment, which keeps the
// step bounded when gradients shrink to near zero late in training.
struct Adam {
    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0), v_max(n, 0.0) {}

    void step(std::span<float> params, std::span<const float> grads, double lr) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            v_max[i] = std::max(v_max[i], v[i]);
            const double update = lr * (m[i] / c1) / (std::sqrt(v_max[i] / c2) + eps);
            params[i] = static_cast<float>(params[i] - update);
        }
    }

    std::vector<double> m, v, v_max;
    std::size_t t = 0;
};

} // namespace

MiniSegNet::MiniSegNet(const Architecture& arch, std::uint64_t init_seed) : arch_(arch) {
    validate_architecture(arch_);
    params_.assign(parameter_count(arch_), 0.0f);
    Rng rng(derive_seed(init_seed, 0x696e6974ULL));
    const auto layers = conv_layouts(arch_);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        const double fan_in = static_cast<double>(L.in_channels * L.kernel * L.kernel);
        // The head feeds the softmax directly; drawing it at a tenth of the
        // fan-in scale keeps a fresh model's output close to uniform.
        const double gain = l + 1 == layers.size() ? 0.01 : 2.0;
        std::normal_distribution<double> he(0.0, std::sqrt(gain / fan_in));
        for (std::size_t i = 0; i < L.weight_count(); ++i)
            params_[L.weight_offset + i] = static_cast<float>(he(rng));
    }
}

MiniSegNet::MiniSegNet(const Architecture& arch, std::vector<float> parameters)
    : arch_(arch), params_(std::move(parameters)) {
    validate_architecture(arch_);
    if (params_.size() != parameter_count(arch_))
        throw InvalidArgument("parameter vector does not match architecture");
}

void MiniSegNet::check_input(const PatchSample& sample) const {
    if (sample.pixels.h != arch_.input_size || sample.pixels.w != arch_.input_size)
        throw InvalidArgument("sample is " + std::to_string(sample.pixels.h) + "x" +
                              std::to_string(sample.pixels.w) + ", model expects " +
                              std::to_string(arch_.input_size) + "x" + std::to_string(arch_.input_size));
}

TrainReport MiniSegNet::train(std::span<const PatchSample> samples, const TrainHyper& hyper) {
    TrainReport report;
    for (const auto& s : samples) {
        if (!s.labeled()) throw InvalidArgument("training sample " + std::to_string(s.pool_index) + " has no mask");
        check_input(s);
    }
    if (hyper.epochs == 0 || samples.empty()) return report;
    if (hyper.batch_size == 0) throw InvalidArgument("batch size must be positive");
    if (!(hyper.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");

    Rng rng(derive_seed(hyper.rng_seed, 0x747261696eULL));
    Adam adam(params_.size());
    std::vector<float> grads(params_.size());
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double pixels = static_cast<double>(arch_.input_size * arch_.input_size);
    Trace<float> trace;

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t stop = std::min(order.size(), start + hyper.batch_size);
            std::fill(grads.begin(), grads.end(), 0.0f);
            Engine<float> engine(arch_, params_);
            const double scale = 1.0 / (static_cast<double>(stop - start) * pixels);
            for (std::size_t b = start; b < stop; ++b) {
                const auto& s = samples[order[b]];
                engine.forward(s.pixels, trace, &rng);
                epoch_loss += detail::cross_entropy(trace.logits, *s.mask, scale, &trace.g_logits);
                engine.backward(trace, trace.g_logits, grads);
            }
            adam.step(params_, grads, hyper.learning_rate);
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(samples.size()));
    }
    return report;
}

ProbabilityMap MiniSegNet::predict(const PatchSample& sample) const {
    check_input(sample);
    Engine<float> engine(arch_, params_);
    Trace<float> trace;
    engine.forward(sample.pixels, trace, nullptr);
    return to_probability_map(trace.logits);
}

ProbabilityMap MiniSegNet::predict_stochastic(const PatchSample& sample, Rng& rng) const {
    check_input(sample);
    Engine<float> engine(arch_, params_);
    Trace<float> trace;
    engine.forward(sample.pixels, trace, &rng);
    return to_probability_map(trace.logits);
}

std::vector<ProbabilityMap> MiniSegNet::predict_stochastic_passes(const PatchSample& sample, std::size_t passes,
                                                                  Rng& rng) const {
    check_input(sample);
    Engine<float> engine(arch_, params_);
    Trace<float> trace;
    engine.encode(sample.pixels, trace);
    std::vector<ProbabilityMap> out;
    out.reserve(passes);
    for (std::size_t t = 0; t < passes; ++t) {
        engine.apply_dropout(trace, &rng);
        engine.bottleneck_out(trace);
        engine.decode(trace);
        out.push_back(to_probability_map(trace.logits));
    }
    return out;
}

Embedding MiniSegNet::embed(const PatchSample& sample) const {
    check_input(sample);
    Engine<float> engine(arch_, params_);
    Trace<float> trace;
    engine.encode(sample.pixels, trace);
    engine.apply_dropout(trace, nullptr);
    engine.bottleneck_out(trace);
    Embedding z(trace.b2.c, 0.0);
    for (std::size_t c = 0; c < trace.b2.c; ++c) {
        const float* p = trace.b2.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < trace.b2.plane(); ++i) s += p[i];
        z[c] = s / static_cast<double>(trace.b2.plane());
    }
    return z;
}

double MiniSegNet::loss(const PatchSample& sample) const {
    check_input(sample);
    if (!sample.labeled()) throw InvalidArgument("loss needs a labeled sample");
    Engine<float> engine(arch_, params_);
    Trace<float> trace;
    engine.forward(sample.pixels, trace, nullptr);
    return detail::cross_entropy<float>(trace.logits, *sample.mask, 0.0, nullptr);
}

double MiniSegNet::gradient_check(const PatchSample& sample, const GradientCheckOptions& options) const {
    check_input(sample);
    if (!sample.labeled()) throw InvalidArgument("gradient check needs a labeled sample");
    std::vector<double> theta(params_.begin(), params_.end());
    const double pixels = static_cast<double>(sample.pixels.size());

    // Loss at p, and whether p lies in the same piecewise-linear region as theta.
    std::vector<std::uint32_t> base_pattern;
    auto loss_at = [&](const std::vector<double>& p, bool* same_region) {
        Engine<double> engine(arch_, p);
        Trace<double> trace;
        engine.forward(sample.pixels, trace, nullptr);
        if (same_region) *same_region = detail::activation_pattern(trace) == base_pattern;
        return detail::cross_entropy<double>(trace.logits, *sample.mask, 0.0, nullptr);
    };

    std::vector<double> analytic(theta.size(), 0.0);
    {
        Engine<double> engine(arch_, theta);
        Trace<double> trace;
        engine.forward(sample.pixels, trace, nullptr);
        base_pattern = detail::activation_pattern(trace);
        Tensor<double> grad_logits;
        detail::cross_entropy<double>(trace.logits, *sample.mask, 1.0 / pixels, &grad_logits);
        engine.backward(trace, grad_logits, analytic);
    }
    if (options.negate_param) analytic.at(*options.negate_param) = -analytic.at(*options.negate_param);

    // Distinct parameter picks; the mutated one is always included.
    const std::size_t count = std::min(options.num_params, theta.size());
    std::vector<std::size_t> picks(theta.size());
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    Rng rng(derive_seed(options.seed, 0x67726164ULL));
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, picks.size() - 1);
        std::swap(picks[i], picks[pick(rng)]);
    }
    picks.resize(count);
    if (options.negate_param && std::find(picks.begin(), picks.end(), *options.negate_param) == picks.end())
        picks.push_back(*options.negate_param);

    constexpr double kAbsFloor = 1e-8;
    double worst = 0.0;
    // A probe that crosses a ReLU or max-pool kink measures a different linear
    // piece; such parameters are re-probed with a step 100x smaller, twice at most.
    constexpr int kShrinks = 2;
    for (std::size_t idx : picks) {
        auto probe = theta;
        double numeric = 0.0;
        double step = options.step;
        for (int attempt = 0; attempt <= kShrinks; ++attempt, step /= 100.0) {
            bool same_up = true, same_down = true;
            probe[idx] = theta[idx] + step;
            const double up = loss_at(probe, &same_up);
            probe[idx] = theta[idx] - step;
            const double down = loss_at(probe, &same_down);
            numeric = (up - down) / (2.0 * step);
            if (same_up && same_down) break;
        }
        const double a = analytic[idx];
        const double denom = std::max({std::abs(a), std::abs(numeric), kAbsFloor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

// ─── Checkpoint I/O ───────────────────────────────────────────
// Layout (all integers little-endian):
//   "ALSEG01" (7 bytes) | u32 input_size | u32 base_width | u32 num_classes
//   | f32 dropout_rate | u32 parameter_count | parameter_count x f32

namespace {

constexpr std::string_view kMagic = "ALSEG01";

void put_u32(std::ostream& os, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void MiniSegNet::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    put_u32(os, static_cast<std::uint32_t>(arch_.input_size));
    put_u32(os, static_cast<std::uint32_t>(arch_.base_width));
    put_u32(os, static_cast<std::uint32_t>(kNumClasses));
    put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(arch_.dropout_rate)));
    put_u32(os, static_cast<std::uint32_t>(params_.size()));
    for (float p : params_) put_u32(os, std::bit_cast<std::uint32_t>(p));
    if (!os) throw Error("failed writing " + path.string());
}

MiniSegNet MiniSegNet::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    char magic[7];
    if (!is.read(magic, 7) || std::string_view(magic, 7) != kMagic)
        throw FormatError(path.string() + ": bad checkpoint magic");
    Architecture arch;
    arch.input_size = get_u32(is);
    arch.base_width = get_u32(is);
    if (get_u32(is) != kNumClasses) throw FormatError(path.string() + ": unsupported class count");
    arch.dropout_rate = std::bit_cast<float>(get_u32(is));
    const std::uint32_t count = get_u32(is);
    if (count != parameter_count(arch)) throw FormatError(path.string() + ": parameter count mismatch");
    std::vector<float> params(count);
    for (auto& p : params) p = std::bit_cast<float>(get_u32(is));
    return MiniSegNet(arch, std::move(params));
}

} // namespace alseg::predictor
