#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "alseg/core.hpp"

namespace alseg::predictor {

struct TrainHyper {
    double learning_rate = 1e-3;
    std::size_t epochs = 1;
    std::size_t batch_size = 4;
    std::uint64_t rng_seed = 0;
};

struct TrainReport {
    /// Mean per-pixel cross-entropy of each epoch, measured on the fly.
    std::vector<double> epoch_loss;
};

/// The capability set the active-learning driver relies on.
///
/// predict() must be deterministic; predict_stochastic() must be reproducible
/// for a fixed rng stream; embed() returns the same length for the lifetime
/// of the model. Implementations must be safe to call concurrently through
/// const methods once training has finished.
class Predictor {
public:
    virtual ~Predictor() = default;

    virtual TrainReport train(std::span<const PatchSample> samples, const TrainHyper& hyper) = 0;
    virtual ProbabilityMap predict(const PatchSample& sample) const = 0;
    virtual ProbabilityMap predict_stochastic(const PatchSample& sample, Rng& rng) const = 0;

    /// `passes` consecutive predict_stochastic() draws from one rng stream.
    /// Overridable so implementations can share deterministic work.
    virtual std::vector<ProbabilityMap> predict_stochastic_passes(const PatchSample& sample,
                                                                  std::size_t passes, Rng& rng) const;

    virtual bool can_embed() const { return false; }
    /// Throws CapabilityError unless can_embed().
    virtual Embedding embed(const PatchSample& sample) const;

    virtual std::unique_ptr<Predictor> clone() const = 0;
};

/// Architecture constants of the miniature encoder-decoder.
struct Architecture {
    std::size_t input_size = 32;  // square patch side, multiple of 4
    std::size_t base_width = 8;   // channels at level 1; doubled per level
    double dropout_rate = 0.5;    // bottleneck only

    std::size_t embedding_dim() const { return 4 * base_width; }
    bool operator==(const Architecture&) const = default;
};

struct ConvLayout {
    std::size_t in_channels;
    std::size_t out_channels;
    std::size_t kernel;
    std::size_t weight_offset;  // [out][in][ky][kx]
    std::size_t bias_offset;
    std::size_t weight_count() const { return out_channels * in_channels * kernel * kernel; }
};

/// Conv layers in declared order: enc1a enc1b enc2a enc2b bott1 bott2
/// dec2a dec2b dec1a dec1b head.
std::vector<ConvLayout> conv_layouts(const Architecture& arch);
std::size_t parameter_count(const Architecture& arch);

struct GradientCheckOptions {
    std::size_t num_params = 100;
    double step = 1e-4;
    std::uint64_t seed = 0;
    /// Parameter whose analytic gradient is negated before comparison (mutation test).
    std::optional<std::size_t> negate_param;
};

/// U-Net style network: two pooling levels, dropout between the bottleneck
/// convolutions, nearest-neighbour upsampling with skip concatenation, and a
/// 1x1 head to two logits followed by a per-pixel softmax.
class MiniSegNet final : public Predictor {
public:
    /// He-normal weights drawn from `init_seed` (the head at a tenth of that
    /// scale), zero biases.
    MiniSegNet(const Architecture& arch, std::uint64_t init_seed);
    MiniSegNet(const Architecture& arch, std::vector<float> parameters);

    TrainReport train(std::span<const PatchSample> samples, const TrainHyper& hyper) override;
    ProbabilityMap predict(const PatchSample& sample) const override;
    ProbabilityMap predict_stochastic(const PatchSample& sample, Rng& rng) const override;
    std::vector<ProbabilityMap> predict_stochastic_passes(const PatchSample& sample, std::size_t passes,
                                                          Rng& rng) const override;
    bool can_embed() const override { return true; }
    /// Global average of the bottleneck activation (dropout off).
    Embedding embed(const PatchSample& sample) const override;
    std::unique_ptr<Predictor> clone() const override { return std::make_unique<MiniSegNet>(*this); }

    /// Mean per-pixel cross-entropy of one labeled sample, dropout off, double precision.
    double loss(const PatchSample& sample) const;

    /// Max relative error between the analytic gradient and central finite
    /// differences, both in double precision, over randomly chosen parameters.
    /// Probes that cross a ReLU or max-pool kink are repeated with a smaller step.
    double gradient_check(const PatchSample& sample, const GradientCheckOptions& options = {}) const;

    const Architecture& architecture() const { return arch_; }
    std::span<const float> parameters() const { return params_; }
    std::span<float> mutable_parameters() { return params_; }
    void set_dropout_rate(double rate) { arch_.dropout_rate = rate; }

    void save(const std::filesystem::path& path) const;
    static MiniSegNet load(const std::filesystem::path& path);

private:
    void check_input(const PatchSample& sample) const;

    Architecture arch_;
    std::vector<float> params_;
};

} // namespace alseg::predictor
