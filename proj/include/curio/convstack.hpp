#pragma once

#include "curio/arena.hpp"
#include "curio/numcore.hpp"

#include <string>
#include <vector>

namespace curio::num {

// HWC float pixels into a [3,H,W] double block at dst.
inline void observation_to_chw(const Observation& o, double* dst) {
    for (int r = 0; r < o.height; ++r)
        for (int c = 0; c < o.width; ++c)
            for (int ch = 0; ch < 3; ++ch)
                dst[(ch * o.height + r) * o.width + c] =
                    double(o.pixels[size_t((r * o.width + c) * 3 + ch)]);
}

inline Tensor observations_to_chw(const std::vector<const Observation*>& obs,
                                  int height, int width) {
    Tensor x({int(obs.size()), 3, height, width});
    for (size_t i = 0; i < obs.size(); ++i) {
        const Observation& o = *obs[i];
        if (o.height != height || o.width != width)
            throw ShapeMismatch("observation resolution mismatch");
        observation_to_chw(o, x.data() + i * 3 * size_t(height) * size_t(width));
    }
    return x;
}

// Stack of stride-2 3x3 conv + ReLU blocks used (with identical topology) by
// the VAE encoder, the feature encoders, and the policy's visual front end.
struct ConvStackSpec {
    int in_channels = 3;
    std::vector<int> channels = {16, 32, 32, 64};
    int kernel = 3;
    int stride = 2;
    int pad = 1;
};

inline int conv_out_size(int s, int kernel, int stride, int pad) {
    return (s + 2 * pad - kernel) / stride + 1;
}

// Spatial sizes after each block, starting from (h, w).
inline std::vector<std::pair<int, int>> conv_stack_sizes(const ConvStackSpec& spec,
                                                         int h, int w) {
    std::vector<std::pair<int, int>> out;
    for (size_t i = 0; i < spec.channels.size(); ++i) {
        h = conv_out_size(h, spec.kernel, spec.stride, spec.pad);
        w = conv_out_size(w, spec.kernel, spec.stride, spec.pad);
        out.emplace_back(h, w);
    }
    return out;
}

// Flattened feature length for an (h, w) input.
inline int conv_stack_out_dim(const ConvStackSpec& spec, int h, int w) {
    auto sizes = conv_stack_sizes(spec, h, w);
    return spec.channels.back() * sizes.back().first * sizes.back().second;
}

inline std::string conv_name(const std::string& prefix, size_t i, const char* part) {
    return prefix + "conv" + std::to_string(i) + "/" + part;
}

inline void conv_stack_init(ParamMap& params, const std::string& prefix,
                            const ConvStackSpec& spec, Rng& rng,
                            bool orthogonal = false) {
    int in_c = spec.in_channels;
    for (size_t i = 0; i < spec.channels.size(); ++i) {
        int out_c = spec.channels[i];
        int fan_in = in_c * spec.kernel * spec.kernel;
        Tensor w;
        if (orthogonal && out_c <= fan_in) {
            w = reshape(orthogonal_init(out_c, fan_in, std::sqrt(2.0), rng),
                        {out_c, in_c, spec.kernel, spec.kernel});
        } else {
            w = he_init({out_c, in_c, spec.kernel, spec.kernel}, fan_in, rng);
        }
        params[conv_name(prefix, i, "w")] = std::move(w);
        params[conv_name(prefix, i, "b")] = Tensor({out_c});
        in_c = out_c;
    }
}

struct ConvStackCache {
    std::vector<Conv2dCache> conv;
    std::vector<ReluCache> relu;
};

// x is [N, C, H, W]; returns the last block's [N, C_out, h, w] activation.
inline Tensor conv_stack_forward(const ParamMap& params, const std::string& prefix,
                                 const ConvStackSpec& spec, const Tensor& x,
                                 ConvStackCache* cache = nullptr) {
    Tensor cur = x;
    if (cache) {
        cache->conv.resize(spec.channels.size());
        cache->relu.resize(spec.channels.size());
    }
    for (size_t i = 0; i < spec.channels.size(); ++i) {
        cur = conv2d(cur, params.at(conv_name(prefix, i, "w")),
                     params.at(conv_name(prefix, i, "b")), spec.stride, spec.pad,
                     cache ? &cache->conv[i] : nullptr);
        cur = relu(cur, cache ? &cache->relu[i] : nullptr);
    }
    return cur;
}

inline void conv_stack_backward(const ParamMap& params, const std::string& prefix,
                                const ConvStackSpec& spec,
                                const ConvStackCache& cache,
                                const Tensor& grad_out, Tensor& grad_input,
                                ParamMap& grads) {
    Tensor g = grad_out;
    for (size_t i = spec.channels.size(); i-- > 0;) {
        Tensor g_pre;
        relu_backward(cache.relu[i], g, g_pre);
        Tensor gx;
        conv2d_backward(cache.conv[i], params.at(conv_name(prefix, i, "w")), g_pre,
                        gx, grads[conv_name(prefix, i, "w")],
                        grads[conv_name(prefix, i, "b")]);
        g = std::move(gx);
    }
    grad_input = std::move(g);
}

} // namespace curio::num
