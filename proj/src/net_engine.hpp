#pragma once
// Forward/backward kernels for MiniSegNet, templated on the scalar type so the
// same code path runs in float for training and in double for gradient checks.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "alseg/predictor.hpp"

namespace alseg::predictor::detail {

template <class T>
struct Tensor {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(std::size_t channels, std::size_t rows, std::size_t cols)
        : c(channels), h(rows), w(cols), v(channels * rows * cols, T(0)) {}
    std::size_t plane() const { return h * w; }
    /// Reshapes in place, reusing capacity; contents are unspecified unless `zero`.
    void reset(std::size_t channels, std::size_t rows, std::size_t cols, bool zero = false) {
        c = channels;
        h = rows;
        w = cols;
        v.resize(c * h * w);
        if (zero) std::fill(v.begin(), v.end(), T(0));
    }
    T* channel(std::size_t i) { return v.data() + i * plane(); }
    const T* channel(std::size_t i) const { return v.data() + i * plane(); }
};

enum Layer : std::size_t {
    kEnc1a, kEnc1b, kEnc2a, kEnc2b, kBott1, kBott2, kDec2a, kDec2b, kDec1a, kDec1b, kHead, kLayerCount
};

/// Everything backward() needs from one forward pass.
template <class T>
struct Trace {
    Tensor<T> x, e1a, e1b, p1, e2a, e2b, p2, b1, b1d, b2, c2, d2a, d2b, c1, d1a, d1b, logits;
    std::vector<std::uint32_t> pool1_arg, pool2_arg;
    std::vector<T> drop_scale;  // empty when dropout is inactive
    std::vector<std::vector<T>> cols = std::vector<std::vector<T>>(kLayerCount);
    // Backward scratch, kept here so repeated passes reuse allocations.
    Tensor<T> g_d1b, g_d1a, g_c1, g_d2b, g_d2a, g_c2, g_b2, g_b1d, g_p2, g_e2b, g_e2a, g_p1, g_e1b, g_e1a, g_logits;
    std::vector<T> dcol;
};

/// Which ReLUs are active and which max-pool inputs won: the piecewise region
/// of the network that a forward pass landed in.
template <class T>
std::vector<std::uint32_t> activation_pattern(const Trace<T>& t) {
    std::vector<std::uint32_t> out;
    for (const Tensor<T>* a : {&t.e1a, &t.e1b, &t.e2a, &t.e2b, &t.b1, &t.b2, &t.d2a, &t.d2b, &t.d1a, &t.d1b})
        for (T v : a->v) out.push_back(v > T(0) ? 1u : 0u);
    out.insert(out.end(), t.pool1_arg.begin(), t.pool1_arg.end());
    out.insert(out.end(), t.pool2_arg.begin(), t.pool2_arg.end());
    return out;
}

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void im2col(const Tensor<T>& in, std::size_t k, std::vector<T>& col) {
    const std::size_t hw = in.plane();
    col.resize(in.c * k * k * hw);
    if (k == 1) {
        std::copy(in.v.begin(), in.v.end(), col.begin());
        return;
    }
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(in.h), W = static_cast<std::ptrdiff_t>(in.w);
    for (std::size_t ic = 0; ic < in.c; ++ic) {
        const T* src = in.channel(ic);
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* row = col.data() + ((ic * k + ky) * k + kx) * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + dy;
                    T* dst = row + y * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(dst, dst + W, T(0));
                        continue;
                    }
                    const T* s = src + sy * W + dx;
                    for (std::ptrdiff_t x = 0; x < x0; ++x) dst[x] = T(0);
                    for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] = s[x];
                    for (std::ptrdiff_t x = x1; x < W; ++x) dst[x] = T(0);
                }
            }
    }
}

template <class T>
void col2im_add(const std::vector<T>& col, std::size_t k, Tensor<T>& out) {
    const std::size_t hw = out.plane();
    if (k == 1) {
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += col[i];
        return;
    }
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(out.h), W = static_cast<std::ptrdiff_t>(out.w);
    for (std::size_t ic = 0; ic < out.c; ++ic) {
        T* dst = out.channel(ic);
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* row = col.data() + ((ic * k + ky) * k + kx) * hw;
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    const T* s = row + y * W;
                    T* d = dst + sy * W + dx;
                    for (std::ptrdiff_t x = x0; x < x1; ++x) d[x] += s[x];
                }
            }
    }
}

template <class T>
class Engine {
public:
    Engine(const Architecture& arch, std::span<const T> params)
        : arch_(arch), layout_(conv_layouts(arch)), params_(params) {}

    void conv(std::size_t layer, const Tensor<T>& in, Tensor<T>& out, std::vector<T>& col, bool relu) const {
        const auto& L = layout_[layer];
        im2col(in, L.kernel, col);
        out.reset(L.out_channels, in.h, in.w);
        const auto hw = static_cast<Eigen::Index>(in.plane());
        const auto depth = static_cast<Eigen::Index>(L.in_channels * L.kernel * L.kernel);
        const auto oc = static_cast<Eigen::Index>(L.out_channels);
        Eigen::Map<const MatR<T>> W(params_.data() + L.weight_offset, oc, depth);
        Eigen::Map<const MatR<T>> C(col.data(), depth, hw);
        Eigen::Map<MatR<T>> O(out.v.data(), oc, hw);
        O.noalias() = W * C;
        for (std::size_t o = 0; o < L.out_channels; ++o) {
            const T b = params_[L.bias_offset + o];
            T* p = out.channel(o);
            if (relu) {
                for (std::size_t i = 0; i < out.plane(); ++i) p[i] = std::max(p[i] + b, T(0));
            } else {
                for (std::size_t i = 0; i < out.plane(); ++i) p[i] += b;
            }
        }
    }

    /// `grad_out` is dL/d(output); when `relu` it is masked in place by the
    /// stored activation. Writes dL/d(input) into `grad_in` (if non-null).
    void conv_backward(std::size_t layer, const std::vector<T>& col, const Tensor<T>& out, Tensor<T>& grad_out,
                       Tensor<T>* grad_in, std::span<T> grads, bool relu, std::vector<T>& dcol) const {
        const auto& L = layout_[layer];
        if (relu)
            for (std::size_t i = 0; i < grad_out.v.size(); ++i)
                if (!(out.v[i] > T(0))) grad_out.v[i] = T(0);
        const auto hw = static_cast<Eigen::Index>(out.plane());
        const auto depth = static_cast<Eigen::Index>(L.in_channels * L.kernel * L.kernel);
        const auto oc = static_cast<Eigen::Index>(L.out_channels);
        Eigen::Map<const MatR<T>> G(grad_out.v.data(), oc, hw);
        Eigen::Map<const MatR<T>> C(col.data(), depth, hw);
        Eigen::Map<MatR<T>> dW(grads.data() + L.weight_offset, oc, depth);
        dW.noalias() += G * C.transpose();
        for (std::size_t o = 0; o < L.out_channels; ++o) {
            T s = T(0);
            const T* g = grad_out.channel(o);
            for (std::size_t i = 0; i < out.plane(); ++i) s += g[i];
            grads[L.bias_offset + o] += s;
        }
        if (grad_in) {
            Eigen::Map<const MatR<T>> W(params_.data() + L.weight_offset, oc, depth);
            dcol.resize(static_cast<std::size_t>(depth * hw));
            Eigen::Map<MatR<T>> DC(dcol.data(), depth, hw);
            DC.noalias() = W.transpose() * G;
            grad_in->reset(L.in_channels, out.h, out.w, true);
            col2im_add(dcol, L.kernel, *grad_in);
        }
    }

    static void maxpool(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>& arg) {
        out.reset(in.c, in.h / 2, in.w / 2);
        arg.resize(out.v.size());
        for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t y = 0; y < out.h; ++y)
                for (std::size_t x = 0; x < out.w; ++x) {
                    std::size_t best = (c * in.h + 2 * y) * in.w + 2 * x;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = (c * in.h + 2 * y + dy) * in.w + 2 * x + dx;
                            if (in.v[idx] > in.v[best]) best = idx;
                        }
                    const std::size_t o = (c * out.h + y) * out.w + x;
                    out.v[o] = in.v[best];
                    arg[o] = static_cast<std::uint32_t>(best);
                }
    }

    static void maxpool_backward(const Tensor<T>& grad_out, const std::vector<std::uint32_t>& arg,
                                 Tensor<T>& grad_in) {
        for (std::size_t o = 0; o < grad_out.v.size(); ++o) grad_in.v[arg[o]] += grad_out.v[o];
    }

    /// Nearest-neighbour 2x upsample of `low`, concatenated with `skip` along channels.
    static void upsample_concat(const Tensor<T>& low, const Tensor<T>& skip, Tensor<T>& out) {
        out.reset(low.c + skip.c, skip.h, skip.w);
        for (std::size_t c = 0; c < low.c; ++c) {
            const T* s = low.channel(c);
            T* d = out.channel(c);
            for (std::size_t y = 0; y < out.h; ++y)
                for (std::size_t x = 0; x < out.w; ++x) d[y * out.w + x] = s[(y / 2) * low.w + x / 2];
        }
        std::copy(skip.v.begin(), skip.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(low.c * out.plane()));
    }

    /// Splits dL/d(concat) into the (downsampled-summed) low part and the skip part (added).
    static void upsample_concat_backward(const Tensor<T>& grad, Tensor<T>& grad_low, Tensor<T>& grad_skip_acc) {
        for (std::size_t c = 0; c < grad_low.c; ++c) {
            const T* g = grad.channel(c);
            T* d = grad_low.channel(c);
            std::fill(d, d + grad_low.plane(), T(0));
            for (std::size_t y = 0; y < grad.h; ++y)
                for (std::size_t x = 0; x < grad.w; ++x) d[(y / 2) * grad_low.w + x / 2] += g[y * grad.w + x];
        }
        const T* g = grad.channel(grad_low.c);
        for (std::size_t i = 0; i < grad_skip_acc.v.size(); ++i) grad_skip_acc.v[i] += g[i];
    }

    void encode(const Image& image, Trace<T>& t) const {
        t.x.reset(1, image.h, image.w);
        for (std::size_t i = 0; i < image.size(); ++i) t.x.v[i] = static_cast<T>(image.data[i]);
        conv(kEnc1a, t.x, t.e1a, t.cols[kEnc1a], true);
        conv(kEnc1b, t.e1a, t.e1b, t.cols[kEnc1b], true);
        maxpool(t.e1b, t.p1, t.pool1_arg);
        conv(kEnc2a, t.p1, t.e2a, t.cols[kEnc2a], true);
        conv(kEnc2b, t.e2a, t.e2b, t.cols[kEnc2b], true);
        maxpool(t.e2b, t.p2, t.pool2_arg);
        conv(kBott1, t.p2, t.b1, t.cols[kBott1], true);
    }

    /// Inverted dropout at `rate` when rng is given; identity otherwise.
    void apply_dropout(Trace<T>& t, Rng* rng) const {
        const double rate = arch_.dropout_rate;
        if (!rng || rate <= 0.0) {
            t.drop_scale.clear();
            t.b1d = t.b1;
            return;
        }
        const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        t.drop_scale.resize(t.b1.v.size());
        t.b1d = t.b1;
        for (std::size_t i = 0; i < t.b1.v.size(); ++i) {
            t.drop_scale[i] = u(*rng) < rate ? T(0) : keep_scale;
            t.b1d.v[i] *= t.drop_scale[i];
        }
    }

    void bottleneck_out(Trace<T>& t) const { conv(kBott2, t.b1d, t.b2, t.cols[kBott2], true); }

    void decode(Trace<T>& t) const {
        upsample_concat(t.b2, t.e2b, t.c2);
        conv(kDec2a, t.c2, t.d2a, t.cols[kDec2a], true);
        conv(kDec2b, t.d2a, t.d2b, t.cols[kDec2b], true);
        upsample_concat(t.d2b, t.e1b, t.c1);
        conv(kDec1a, t.c1, t.d1a, t.cols[kDec1a], true);
        conv(kDec1b, t.d1a, t.d1b, t.cols[kDec1b], true);
        conv(kHead, t.d1b, t.logits, t.cols[kHead], false);
    }

    void forward(const Image& image, Trace<T>& t, Rng* dropout_rng) const {
        encode(image, t);
        apply_dropout(t, dropout_rng);
        bottleneck_out(t);
        decode(t);
    }

    /// Backpropagates dL/d(logits), accumulating parameter gradients.
    void backward(Trace<T>& t, Tensor<T>& grad_logits, std::span<T> grads) const {
        auto& d = t.dcol;
        conv_backward(kHead, t.cols[kHead], t.logits, grad_logits, &t.g_d1b, grads, false, d);
        conv_backward(kDec1b, t.cols[kDec1b], t.d1b, t.g_d1b, &t.g_d1a, grads, true, d);
        conv_backward(kDec1a, t.cols[kDec1a], t.d1a, t.g_d1a, &t.g_c1, grads, true, d);
        t.g_d2b.reset(t.d2b.c, t.d2b.h, t.d2b.w);
        t.g_e1b.reset(t.e1b.c, t.e1b.h, t.e1b.w, true);
        upsample_concat_backward(t.g_c1, t.g_d2b, t.g_e1b);
        conv_backward(kDec2b, t.cols[kDec2b], t.d2b, t.g_d2b, &t.g_d2a, grads, true, d);
        conv_backward(kDec2a, t.cols[kDec2a], t.d2a, t.g_d2a, &t.g_c2, grads, true, d);
        t.g_b2.reset(t.b2.c, t.b2.h, t.b2.w);
        t.g_e2b.reset(t.e2b.c, t.e2b.h, t.e2b.w, true);
        upsample_concat_backward(t.g_c2, t.g_b2, t.g_e2b);
        conv_backward(kBott2, t.cols[kBott2], t.b2, t.g_b2, &t.g_b1d, grads, true, d);
        if (!t.drop_scale.empty())
            for (std::size_t i = 0; i < t.g_b1d.v.size(); ++i) t.g_b1d.v[i] *= t.drop_scale[i];
        conv_backward(kBott1, t.cols[kBott1], t.b1, t.g_b1d, &t.g_p2, grads, true, d);
        maxpool_backward(t.g_p2, t.pool2_arg, t.g_e2b);
        conv_backward(kEnc2b, t.cols[kEnc2b], t.e2b, t.g_e2b, &t.g_e2a, grads, true, d);
        conv_backward(kEnc2a, t.cols[kEnc2a], t.e2a, t.g_e2a, &t.g_p1, grads, true, d);
        maxpool_backward(t.g_p1, t.pool1_arg, t.g_e1b);
        conv_backward(kEnc1b, t.cols[kEnc1b], t.e1b, t.g_e1b, &t.g_e1a, grads, true, d);
        conv_backward(kEnc1a, t.cols[kEnc1a], t.e1a, t.g_e1a, nullptr, grads, true, d);
    }

private:
    Architecture arch_;
    std::vector<ConvLayout> layout_;
    std::span<const T> params_;
};

/// log p(label) for a 2-logit pixel, computed stably in double.
inline double log_prob(double l0, double l1, int label) {
    const double d = label == 1 ? l0 - l1 : l1 - l0;  // other - target
    const double softplus = d > 0.0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d));
    return -softplus;
}

/// p(class 1) for a 2-logit pixel.
inline double prob_foreground(double l0, double l1) { return 1.0 / (1.0 + std::exp(l0 - l1)); }

/// Mean cross-entropy of `logits` against `mask`; fills dL/d(logits) scaled by `grad_scale` if requested.
template <class T>
double cross_entropy(const Tensor<T>& logits, const Mask& mask, double grad_scale, Tensor<T>* grad) {
    const std::size_t n = logits.plane();
    const T* l0 = logits.channel(0);
    const T* l1 = logits.channel(1);
    if (grad) grad->reset(2, logits.h, logits.w);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const int y = mask.data[j];
        const double a = static_cast<double>(l0[j]), b = static_cast<double>(l1[j]);
        total -= log_prob(a, b, y);
        if (grad) {
            const double p1 = prob_foreground(a, b);
            const double p0 = 1.0 - p1;
            grad->v[j] = static_cast<T>((p0 - (y == 0 ? 1.0 : 0.0)) * grad_scale);
            grad->v[n + j] = static_cast<T>((p1 - (y == 1 ? 1.0 : 0.0)) * grad_scale);
        }
    }
    return total / static_cast<double>(n);
}

} // namespace alseg::predictor::detail
