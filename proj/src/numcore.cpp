#include "curio/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace curio::num {

namespace {

int shape_product(const std::vector<int>& shape) {
    long long n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeMismatch("non-positive dimension in shape");
        n *= d;
    }
    if (n > (1ll << 31)) throw ShapeMismatch("tensor too large");
    return int(n);
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(size_t(shape_product(shape_)), fill) {}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    if (shape_product(shape) != int(data.size()))
        throw ShapeMismatch("data length does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

void Tensor::require_shape(const std::vector<int>& s, const char* what) const {
    if (shape_ != s)
        throw ShapeMismatch(std::string(what) + ": expected " + shape_str(s) +
                            ", got " + shape_str(shape_));
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const ParamMap& params) {
    for (const auto& [name, t] : params)
        if (!t.all_finite()) return false;
    return true;
}

void accumulate(ParamMap& dst, const ParamMap& src) {
    for (const auto& [name, g] : src) {
        auto it = dst.find(name);
        if (it == dst.end()) {
            dst.emplace(name, g);
            continue;
        }
        if (!it->second.same_shape(g))
            throw ShapeMismatch("accumulate: shape mismatch for " + name);
        double* d = it->second.data();
        const double* s = g.data();
        for (int i = 0; i < g.size(); ++i) d[i] += s[i];
    }
}

Tensor randn_tensor(std::vector<int> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
    return t;
}

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    return randn_tensor(std::move(shape), std::sqrt(2.0 / double(fan_in)), rng);
}

Tensor orthogonal_init(int rows, int cols, double gain, Rng& rng) {
    if (rows > cols)
        throw ShapeMismatch("orthogonal_init: rows must not exceed cols");
    Tensor t = randn_tensor({rows, cols}, 1.0, rng);
    for (int r = 0; r < rows; ++r) {
        double* vr = t.data() + size_t(r) * size_t(cols);
        for (int p = 0; p < r; ++p) {
            const double* vp = t.data() + size_t(p) * size_t(cols);
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += vr[j] * vp[j];
            for (int j = 0; j < cols; ++j) vr[j] -= dot * vp[j];
        }
        double norm = 0.0;
        for (int j = 0; j < cols; ++j) norm += vr[j] * vr[j];
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw Error("orthogonal_init: degenerate row");
        for (int j = 0; j < cols; ++j) vr[j] /= norm; // unit rows first
    }
    for (int i = 0; i < t.size(); ++i) t[i] *= gain;
    return t;
}

// Column tiles keep the streamed panel cache-resident for large n; the
// per-element accumulation order (p ascending) is unchanged by tiling, so
// results are bit-identical to the untiled loops.
namespace {
constexpr int kGemmTile = 512;
}

void gemm_nn(const double* __restrict__ a, const double* __restrict__ b,
             double* __restrict__ c, int m, int k, int n) {
    // Blocked over rows so b panels are reused, and unrolled four deep in p
    // so each c element makes one memory round trip per four updates. The
    // fused chain applies the p terms in ascending order, which keeps the
    // result bit-identical to the naive triple loop.
    const int ib = 4;
    for (int j0 = 0; j0 < n; j0 += kGemmTile) {
        const int jn = j0 + kGemmTile < n ? j0 + kGemmTile : n;
        for (int i0 = 0; i0 < m; i0 += ib) {
            const int in = i0 + ib < m ? i0 + ib : m;
            int p = 0;
            for (; p + 3 < k; p += 4) {
                const double* b0 = b + size_t(p) * size_t(n);
                const double* b1 = b0 + n;
                const double* b2 = b1 + n;
                const double* b3 = b2 + n;
                for (int i = i0; i < in; ++i) {
                    const double* ai = a + size_t(i) * size_t(k) + size_t(p);
                    double a0 = ai[0], a1 = ai[1], a2 = ai[2], a3 = ai[3];
                    double* ci = c + size_t(i) * size_t(n);
                    for (int j = j0; j < jn; ++j)
                        ci[j] = ((((ci[j] + a0 * b0[j]) + a1 * b1[j]) +
                                  a2 * b2[j]) +
                                 a3 * b3[j]);
                }
            }
            for (; p < k; ++p) {
                const double* bp = b + size_t(p) * size_t(n);
                for (int i = i0; i < in; ++i) {
                    double av = a[size_t(i) * size_t(k) + size_t(p)];
                    double* ci = c + size_t(i) * size_t(n);
                    for (int j = j0; j < jn; ++j) ci[j] += av * bp[j];
                }
            }
        }
    }
}

void gemm_nt(const double* __restrict__ a, const double* __restrict__ b,
             double* __restrict__ c, int m, int k, int n) {
    // Panels of both operands stay cache-resident; k is tiled so the gradient
    // shapes with k in the tens of thousands stop streaming from memory.
    const int ib = 64, jb = 64, kb = 512;
    for (int k0 = 0; k0 < k; k0 += kb) {
        const int kn = k0 + kb < k ? k0 + kb : k;
        for (int i0 = 0; i0 < m; i0 += ib) {
            const int in = i0 + ib < m ? i0 + ib : m;
            for (int j0 = 0; j0 < n; j0 += jb) {
                const int jn = j0 + jb < n ? j0 + jb : n;
                for (int i = i0; i < in; ++i) {
                    const double* ai = a + size_t(i) * size_t(k);
                    double* ci = c + size_t(i) * size_t(n);
                    int j = j0;
                    // Four dots in flight hide the FMA latency of a single
                    // serial chain; each dot's own order is untouched.
                    for (; j + 3 < jn; j += 4) {
                        const double* b0 = b + size_t(j) * size_t(k);
                        const double* b1 = b + size_t(j + 1) * size_t(k);
                        const double* b2 = b + size_t(j + 2) * size_t(k);
                        const double* b3 = b + size_t(j + 3) * size_t(k);
                        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                        for (int p = k0; p < kn; ++p) {
                            double av = ai[p];
                            a0 += av * b0[p];
                            a1 += av * b1[p];
                            a2 += av * b2[p];
                            a3 += av * b3[p];
                        }
                        ci[j] += a0;
                        ci[j + 1] += a1;
                        ci[j + 2] += a2;
                        ci[j + 3] += a3;
                    }
                    for (; j < jn; ++j) {
                        const double* bj = b + size_t(j) * size_t(k);
                        double acc = 0.0;
                        for (int p = k0; p < kn; ++p) acc += ai[p] * bj[p];
                        ci[j] += acc;
                    }
                }
            }
        }
    }
}

void gemm_tn(const double* __restrict__ a, const double* __restrict__ b,
             double* __restrict__ c, int m, int k, int n) {
    // Transposing the small a operand turns this into gemm_nn, whose blocked
    // sweep keeps each c row in cache instead of cycling the whole c panel
    // once per k row. Per-element accumulation order is unchanged.
    std::vector<double> at(size_t(m) * size_t(k));
    for (int p = 0; p < k; ++p)
        for (int i = 0; i < m; ++i)
            at[size_t(i) * size_t(k) + size_t(p)] = a[size_t(p) * size_t(m) + size_t(i)];
    gemm_nn(at.data(), b, c, m, k, n);
}

// ---- conv2d ----

namespace {

struct ConvDims {
    int n, c, h, w, f, kh, kw, ho, wo, ckk, how;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight,
                   const Tensor& bias, int stride, int pad) {
    if (input.rank() != 4) throw ShapeMismatch("conv2d: input must be rank 4");
    if (weight.rank() != 4) throw ShapeMismatch("conv2d: weight must be rank 4");
    if (stride < 1) throw ShapeMismatch("conv2d: stride must be >= 1");
    ConvDims d;
    d.n = input.dim(0);
    d.c = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.f = weight.dim(0);
    d.kh = weight.dim(2);
    d.kw = weight.dim(3);
    if (weight.dim(1) != d.c)
        throw ShapeMismatch("conv2d: weight channel count != input channels");
    bias.require_shape({d.f}, "conv2d bias");
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.ho < 1 || d.wo < 1) throw ShapeMismatch("conv2d: kernel exceeds input");
    d.ckk = d.c * d.kh * d.kw;
    d.how = d.ho * d.wo;
    return d;
}

// Writes one sample's patch matrix into a [C*kh*kw, row_len] buffer at
// column offset col0; the whole batch shares one matrix so the conv runs
// as a single gemm.
void im2col(const double* x, const ConvDims& d, int stride, int pad,
            double* col, size_t row_len, size_t col0) {
    for (int c = 0; c < d.c; ++c) {
        const double* xc = x + size_t(c) * size_t(d.h) * size_t(d.w);
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                double* row =
                    col + size_t((c * d.kh + ki) * d.kw + kj) * row_len + col0;
                for (int ho = 0; ho < d.ho; ++ho) {
                    int hi = ho * stride - pad + ki;
                    double* out = row + size_t(ho) * size_t(d.wo);
                    if (hi < 0 || hi >= d.h) {
                        std::fill(out, out + d.wo, 0.0);
                        continue;
                    }
                    const double* xr = xc + size_t(hi) * size_t(d.w);
                    for (int wo = 0; wo < d.wo; ++wo) {
                        int wi = wo * stride - pad + kj;
                        out[wo] = (wi >= 0 && wi < d.w) ? xr[wi] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvDims& d, int stride, int pad,
                double* x, size_t row_len, size_t col0) {
    for (int c = 0; c < d.c; ++c) {
        double* xc = x + size_t(c) * size_t(d.h) * size_t(d.w);
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                const double* row =
                    col + size_t((c * d.kh + ki) * d.kw + kj) * row_len + col0;
                for (int ho = 0; ho < d.ho; ++ho) {
                    int hi = ho * stride - pad + ki;
                    if (hi < 0 || hi >= d.h) continue;
                    double* xr = xc + size_t(hi) * size_t(d.w);
                    const double* in = row + size_t(ho) * size_t(d.wo);
                    for (int wo = 0; wo < d.wo; ++wo) {
                        int wi = wo * stride - pad + kj;
                        if (wi >= 0 && wi < d.w) xr[wi] += in[wo];
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad, Conv2dCache* cache) {
    ConvDims d = conv_dims(input, weight, bias, stride, pad);
    Tensor out({d.n, d.f, d.ho, d.wo});
    const size_t cols = size_t(d.n) * size_t(d.how);
    std::vector<double> col(size_t(d.ckk) * cols);
    for (int n = 0; n < d.n; ++n)
        im2col(input.data() + size_t(n) * size_t(d.c) * size_t(d.h) * size_t(d.w),
               d, stride, pad, col.data(), cols, size_t(n) * size_t(d.how));

    // One gemm for the whole batch into [f, n*how], then scatter per image.
    // The scatter also adds bias, so batch size does not affect the
    // per-element rounding sequence.
    std::vector<double> prod(size_t(d.f) * cols, 0.0);
    gemm_nn(weight.data(), col.data(), prod.data(), d.f, d.ckk, int(cols));
    for (int n = 0; n < d.n; ++n) {
        double* o = out.data() + size_t(n) * size_t(d.f) * size_t(d.how);
        for (int f = 0; f < d.f; ++f) {
            const double* p = prod.data() + size_t(f) * cols + size_t(n) * size_t(d.how);
            double* of = o + size_t(f) * size_t(d.how);
            double bf = bias[f];
            for (int q = 0; q < d.how; ++q) of[q] = p[q] + bf;
        }
    }
    if (cache) {
        cache->input = input;
        cache->stride = stride;
        cache->pad = pad;
    }
    return out;
}

void conv2d_backward(const Conv2dCache& cache, const Tensor& weight,
                     const Tensor& grad_out, Tensor& grad_input,
                     Tensor& grad_weight, Tensor& grad_bias) {
    const Tensor& input = cache.input;
    Tensor bias({weight.dim(0)});
    ConvDims d = conv_dims(input, weight, bias, cache.stride, cache.pad);
    grad_out.require_shape({d.n, d.f, d.ho, d.wo}, "conv2d_backward grad_out");

    grad_input = Tensor(input.shape());
    grad_weight = Tensor(weight.shape());
    grad_bias = Tensor({d.f});

    const size_t cols = size_t(d.n) * size_t(d.how);
    std::vector<double> col(size_t(d.ckk) * cols);
    for (int n = 0; n < d.n; ++n)
        im2col(input.data() + size_t(n) * size_t(d.c) * size_t(d.h) * size_t(d.w),
               d, cache.stride, cache.pad, col.data(), cols,
               size_t(n) * size_t(d.how));

    // Gather grad_out as [f, n*how] so the weight and column gradients are
    // each a single gemm over the batch.
    std::vector<double> g_all(size_t(d.f) * cols);
    for (int n = 0; n < d.n; ++n) {
        const double* g = grad_out.data() + size_t(n) * size_t(d.f) * size_t(d.how);
        for (int f = 0; f < d.f; ++f)
            std::copy(g + size_t(f) * size_t(d.how),
                      g + size_t(f + 1) * size_t(d.how),
                      g_all.data() + size_t(f) * cols + size_t(n) * size_t(d.how));
    }

    for (int f = 0; f < d.f; ++f) {
        const double* gf = g_all.data() + size_t(f) * cols;
        double acc = 0.0;
        for (size_t q = 0; q < cols; ++q) acc += gf[q];
        grad_bias[f] = acc;
    }
    gemm_nt(g_all.data(), col.data(), grad_weight.data(), d.f, int(cols), d.ckk);

    std::vector<double> gcol(size_t(d.ckk) * cols, 0.0);
    gemm_tn(weight.data(), g_all.data(), gcol.data(), d.ckk, d.f, int(cols));
    for (int n = 0; n < d.n; ++n)
        col2im_add(gcol.data(), d, cache.stride, cache.pad,
                   grad_input.data() +
                       size_t(n) * size_t(d.c) * size_t(d.h) * size_t(d.w),
                   cols, size_t(n) * size_t(d.how));
}

// ---- dense ----

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias,
             DenseCache* cache) {
    if (input.rank() != 2) throw ShapeMismatch("dense: input must be rank 2");
    if (weight.rank() != 2) throw ShapeMismatch("dense: weight must be rank 2");
    int n = input.dim(0), d = input.dim(1), o = weight.dim(0);
    if (weight.dim(1) != d) throw ShapeMismatch("dense: weight/input dim mismatch");
    bias.require_shape({o}, "dense bias");

    Tensor out({n, o});
    for (int i = 0; i < n; ++i)
        std::copy(bias.data(), bias.data() + o, out.data() + size_t(i) * size_t(o));
    gemm_nt(input.data(), weight.data(), out.data(), n, d, o);
    if (cache) cache->input = input;
    return out;
}

void dense_backward(const DenseCache& cache, const Tensor& weight,
                    const Tensor& grad_out, Tensor& grad_input,
                    Tensor& grad_weight, Tensor& grad_bias) {
    const Tensor& input = cache.input;
    int n = input.dim(0), d = input.dim(1), o = weight.dim(0);
    grad_out.require_shape({n, o}, "dense_backward grad_out");

    grad_input = Tensor({n, d});
    grad_weight = Tensor({o, d});
    grad_bias = Tensor({o});

    gemm_nn(grad_out.data(), weight.data(), grad_input.data(), n, o, d);
    gemm_tn(grad_out.data(), input.data(), grad_weight.data(), o, n, d);
    for (int i = 0; i < n; ++i) {
        const double* g = grad_out.data() + size_t(i) * size_t(o);
        for (int j = 0; j < o; ++j) grad_bias[j] += g[j];
    }
}

Tensor reshape(Tensor t, std::vector<int> shape) {
    if (shape_product(shape) != t.size())
        throw ShapeMismatch("reshape: size mismatch to " + shape_str(shape));
    std::vector<double> data(t.data(), t.data() + t.size());
    return Tensor::from(std::move(shape), std::move(data));
}

Tensor upsample_nearest(const Tensor& input, int out_h, int out_w) {
    if (input.rank() != 4) throw ShapeMismatch("upsample: input must be rank 4");
    int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    Tensor out({n, c, out_h, out_w});
    for (int nc = 0; nc < n * c; ++nc) {
        const double* src = input.data() + size_t(nc) * size_t(h) * size_t(w);
        double* dst = out.data() + size_t(nc) * size_t(out_h) * size_t(out_w);
        for (int i = 0; i < out_h; ++i) {
            const double* sr = src + size_t(i * h / out_h) * size_t(w);
            double* dr = dst + size_t(i) * size_t(out_w);
            for (int j = 0; j < out_w; ++j) dr[j] = sr[size_t(j * w / out_w)];
        }
    }
    return out;
}

void upsample_nearest_backward(const Tensor& grad_out, int in_h, int in_w,
                               Tensor& grad_input) {
    int n = grad_out.dim(0), c = grad_out.dim(1);
    int out_h = grad_out.dim(2), out_w = grad_out.dim(3);
    grad_input = Tensor({n, c, in_h, in_w});
    for (int nc = 0; nc < n * c; ++nc) {
        const double* g = grad_out.data() + size_t(nc) * size_t(out_h) * size_t(out_w);
        double* d = grad_input.data() + size_t(nc) * size_t(in_h) * size_t(in_w);
        for (int i = 0; i < out_h; ++i) {
            double* dr = d + size_t(i * in_h / out_h) * size_t(in_w);
            const double* gr = g + size_t(i) * size_t(out_w);
            for (int j = 0; j < out_w; ++j) dr[size_t(j * in_w / out_w)] += gr[j];
        }
    }
}

// ---- relu ----

Tensor relu(const Tensor& input, ReluCache* cache) {
    Tensor out = input;
    for (int i = 0; i < out.size(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
    if (cache) cache->input = input;
    return out;
}

void relu_backward(const ReluCache& cache, const Tensor& grad_out,
                   Tensor& grad_input) {
    grad_out.require_shape(cache.input.shape(), "relu_backward grad_out");
    grad_input = grad_out;
    for (int i = 0; i < grad_input.size(); ++i)
        if (cache.input[i] <= 0.0) grad_input[i] = 0.0;
}

// ---- lstm ----

void lstm_step(const Tensor& input, const Tensor& h_prev, const Tensor& c_prev,
               const Tensor& w_ih, const Tensor& w_hh, const Tensor& b,
               Tensor& h_out, Tensor& c_out, LstmCache* cache,
               const double* gates_x) {
    if (input.rank() != 2 || h_prev.rank() != 2 || c_prev.rank() != 2)
        throw ShapeMismatch("lstm_step: states must be rank 2");
    int n = input.dim(0), in_dim = input.dim(1);
    int hidden = h_prev.dim(1);
    if (h_prev.dim(0) != n || c_prev.dim(0) != n || c_prev.dim(1) != hidden)
        throw ShapeMismatch("lstm_step: batch/state dims inconsistent");
    w_ih.require_shape({4 * hidden, in_dim}, "lstm w_ih");
    w_hh.require_shape({4 * hidden, hidden}, "lstm w_hh");
    b.require_shape({4 * hidden}, "lstm bias");

    // Pre-activations a = x W_ih^T + h W_hh^T + b, laid out [N, 4H]. When the
    // caller precomputed x W_ih^T (gates_x), adding it to the bias gives the
    // same value as running the input gemm here, bit for bit.
    Tensor a({n, 4 * hidden});
    if (gates_x) {
        for (int i = 0; i < n; ++i) {
            const double* gx = gates_x + size_t(i) * size_t(4 * hidden);
            double* ai = a.data() + size_t(i) * size_t(4 * hidden);
            for (int j = 0; j < 4 * hidden; ++j) ai[j] = b[j] + gx[j];
        }
    } else {
        for (int i = 0; i < n; ++i)
            std::copy(b.data(), b.data() + 4 * hidden,
                      a.data() + size_t(i) * size_t(4 * hidden));
        gemm_nt(input.data(), w_ih.data(), a.data(), n, in_dim, 4 * hidden);
    }
    gemm_nt(h_prev.data(), w_hh.data(), a.data(), n, hidden, 4 * hidden);

    h_out = Tensor({n, hidden});
    c_out = Tensor({n, hidden});
    Tensor gi({n, hidden}), gf({n, hidden}), gg({n, hidden}), go({n, hidden});
    Tensor tc({n, hidden});
    for (int i = 0; i < n; ++i) {
        const double* ai = a.data() + size_t(i) * size_t(4 * hidden);
        for (int j = 0; j < hidden; ++j) {
            double vi = sigmoid(ai[j]);
            double vf = sigmoid(ai[hidden + j]);
            double vg = std::tanh(ai[2 * hidden + j]);
            double vo = sigmoid(ai[3 * hidden + j]);
            double c_new = vf * c_prev[i * hidden + j] + vi * vg;
            double tanh_c = std::tanh(c_new);
            gi[i * hidden + j] = vi;
            gf[i * hidden + j] = vf;
            gg[i * hidden + j] = vg;
            go[i * hidden + j] = vo;
            c_out[i * hidden + j] = c_new;
            tc[i * hidden + j] = tanh_c;
            h_out[i * hidden + j] = vo * tanh_c;
        }
    }
    if (cache) {
        cache->input = input;
        cache->h_prev = h_prev;
        cache->c_prev = c_prev;
        cache->gate_i = std::move(gi);
        cache->gate_f = std::move(gf);
        cache->gate_g = std::move(gg);
        cache->gate_o = std::move(go);
        cache->c_new = c_out;
        cache->tanh_c_new = std::move(tc);
    }
}

namespace {

// Gate pre-activation gradients da [N,4H] and grad_c_prev from the cached
// forward values.
void lstm_gate_grads(const LstmCache& cache, const Tensor& grad_h,
                     const Tensor& grad_c, Tensor& da, Tensor& grad_c_prev) {
    int n = cache.input.dim(0);
    int hidden = cache.h_prev.dim(1);
    grad_h.require_shape({n, hidden}, "lstm_step_backward grad_h");
    grad_c.require_shape({n, hidden}, "lstm_step_backward grad_c");

    da = Tensor({n, 4 * hidden});
    grad_c_prev = Tensor({n, hidden});
    for (int i = 0; i < n; ++i) {
        double* dai = da.data() + size_t(i) * size_t(4 * hidden);
        for (int j = 0; j < hidden; ++j) {
            int idx = i * hidden + j;
            double vi = cache.gate_i[idx], vf = cache.gate_f[idx];
            double vg = cache.gate_g[idx], vo = cache.gate_o[idx];
            double tc = cache.tanh_c_new[idx];

            double dh = grad_h[idx];
            double dc = grad_c[idx] + dh * vo * (1.0 - tc * tc);

            double di = dc * vg;
            double df = dc * cache.c_prev[idx];
            double dg = dc * vi;
            double dout = dh * tc;

            dai[j] = di * vi * (1.0 - vi);
            dai[hidden + j] = df * vf * (1.0 - vf);
            dai[2 * hidden + j] = dg * (1.0 - vg * vg);
            dai[3 * hidden + j] = dout * vo * (1.0 - vo);
            grad_c_prev[idx] = dc * vf;
        }
    }
}

} // namespace

void lstm_step_backward(const LstmCache& cache, const Tensor& w_ih,
                        const Tensor& w_hh, const Tensor& grad_h,
                        const Tensor& grad_c, Tensor& grad_input,
                        Tensor& grad_h_prev, Tensor& grad_c_prev,
                        Tensor& grad_w_ih, Tensor& grad_w_hh, Tensor& grad_b) {
    int n = cache.input.dim(0), in_dim = cache.input.dim(1);
    int hidden = cache.h_prev.dim(1);

    if (grad_w_ih.size() == 0) grad_w_ih = Tensor({4 * hidden, in_dim});
    if (grad_w_hh.size() == 0) grad_w_hh = Tensor({4 * hidden, hidden});
    if (grad_b.size() == 0) grad_b = Tensor({4 * hidden});

    Tensor da;
    lstm_gate_grads(cache, grad_h, grad_c, da, grad_c_prev);

    grad_input = Tensor({n, in_dim});
    grad_h_prev = Tensor({n, hidden});
    gemm_nn(da.data(), w_ih.data(), grad_input.data(), n, 4 * hidden, in_dim);
    gemm_nn(da.data(), w_hh.data(), grad_h_prev.data(), n, 4 * hidden, hidden);
    gemm_tn(da.data(), cache.input.data(), grad_w_ih.data(), 4 * hidden, n,
            in_dim);
    gemm_tn(da.data(), cache.h_prev.data(), grad_w_hh.data(), 4 * hidden, n,
            hidden);
    for (int i = 0; i < n; ++i) {
        const double* dai = da.data() + size_t(i) * size_t(4 * hidden);
        for (int j = 0; j < 4 * hidden; ++j) grad_b[j] += dai[j];
    }
}

void lstm_step_backward_light(const LstmCache& cache, const Tensor& w_hh,
                              const Tensor& grad_h, const Tensor& grad_c,
                              Tensor& gate_grads, Tensor& grad_h_prev,
                              Tensor& grad_c_prev) {
    int n = cache.input.dim(0);
    int hidden = cache.h_prev.dim(1);
    lstm_gate_grads(cache, grad_h, grad_c, gate_grads, grad_c_prev);
    grad_h_prev = Tensor({n, hidden});
    gemm_nn(gate_grads.data(), w_hh.data(), grad_h_prev.data(), n, 4 * hidden,
            hidden);
}

// ---- softmax / sampling ----

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

SampleResult softmax_sample(const std::vector<double>& logits, Rng& rng) {
    SampleResult r;
    r.probs = softmax(logits);
    double u = rng.uniform();
    double cum = 0.0;
    r.index = int(r.probs.size()) - 1; // fallback when rounding leaves cum < 1
    for (size_t i = 0; i < r.probs.size(); ++i) {
        cum += r.probs[i];
        if (u < cum) {
            r.index = int(i);
            break;
        }
    }
    r.log_prob = log_softmax(logits)[size_t(r.index)];
    return r;
}

// ---- optimizer ----

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               double lr) {
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue; // parameter not touched this step
        const Tensor& g = git->second;
        if (!g.same_shape(p))
            throw ShapeMismatch("adam_step: gradient shape mismatch for " + name);
        Tensor& m = state.m.try_emplace(name, Tensor(p.shape())).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(p.shape())).first->second;
        for (int i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double clip_grad_norm(ParamMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (int i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (auto& [name, g] : grads)
            for (int i = 0; i < g.size(); ++i) g[i] *= scale;
    }
    return norm;
}

// ---- gradient checking ----

GradCheckReport grad_check(const std::function<double(const ParamMap&)>& f,
                           const ParamMap& params, const ParamMap& analytic,
                           double h, int max_probes_per_tensor, Rng* rng) {
    GradCheckReport report;
    ParamMap work = params;
    for (const auto& [name, p] : params) {
        auto ait = analytic.find(name);
        if (ait == analytic.end())
            throw ShapeMismatch("grad_check: missing analytic gradient for " + name);
        const Tensor& a = ait->second;
        if (!a.same_shape(p))
            throw ShapeMismatch("grad_check: analytic shape mismatch for " + name);

        std::vector<int> indices;
        if (max_probes_per_tensor > 0 && p.size() > max_probes_per_tensor) {
            if (!rng) throw Error("grad_check: subsampling requires an rng");
            for (int k = 0; k < max_probes_per_tensor; ++k)
                indices.push_back(rng->uniform_int(p.size()));
        } else {
            indices.resize(size_t(p.size()));
            for (int i = 0; i < p.size(); ++i) indices[size_t(i)] = i;
        }

        Tensor& wp = work.at(name);
        for (int idx : indices) {
            double saved = wp[idx];
            wp[idx] = saved + h;
            double fp = f(work);
            wp[idx] = saved - h;
            double fm = f(work);
            wp[idx] = saved;

            double numeric = (fp - fm) / (2.0 * h);
            double denom = std::max({std::abs(a[idx]), std::abs(numeric), 1.0});
            double rel = std::abs(a[idx] - numeric) / denom;
            ++report.probes;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = name;
                report.worst_index = idx;
            }
        }
    }
    return report;
}

// ---- checkpoint I/O ----

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(char(v & 0xFF));
    out.push_back(char((v >> 8) & 0xFF));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError("truncated checkpoint");
    }
    uint8_t u8() {
        need(1);
        return uint8_t(buf[pos++]);
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(uint8_t(buf[pos])) |
                     uint16_t(uint16_t(uint8_t(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string serialize_params(const ParamMap& params) {
    std::string out;
    out += "CKPT";
    put_u16(out, 1);
    put_u32(out, uint32_t(params.size()));
    for (const auto& [name, t] : params) {
        if (name.size() > 0xFFFF) throw CheckpointError("tensor name too long");
        put_u16(out, uint16_t(name.size()));
        out += name;
        if (t.rank() > 0xFF) throw CheckpointError("tensor rank too large");
        out.push_back(char(t.rank()));
        for (int i = 0; i < t.rank(); ++i) put_u32(out, uint32_t(t.dim(i)));
        for (int i = 0; i < t.size(); ++i) put_f32(out, float(t[i]));
    }
    return out;
}

} // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
    std::string bytes = serialize_params(params);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open for write: " + path);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw CheckpointError("write failed: " + path);
}

ParamMap load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    ByteReader r{buf};
    if (r.bytes(4) != "CKPT") throw CheckpointError("bad magic in " + path);
    uint16_t version = r.u16();
    if (version != 1) throw CheckpointError("unsupported checkpoint version");
    uint32_t count = r.u32();
    ParamMap out;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t name_len = r.u16();
        std::string name = r.bytes(name_len);
        uint8_t rank = r.u8();
        std::vector<int> shape;
        long long total = 1;
        for (int d = 0; d < rank; ++d) {
            uint32_t dim = r.u32();
            if (dim == 0 || dim > (1u << 30))
                throw CheckpointError("bad dimension in " + path);
            shape.push_back(int(dim));
            total *= dim;
        }
        if (total > (1ll << 31)) throw CheckpointError("tensor too large");
        size_t count_d = size_t(total);
        std::vector<double> data(count_d);
        for (long long k = 0; k < total; ++k) data[size_t(k)] = double(r.f32());
        if (!out.emplace(std::move(name), Tensor::from(shape, std::move(data)))
                 .second)
            throw CheckpointError("duplicate tensor name in " + path);
    }
    return out;
}

uint64_t params_checksum(const ParamMap& params) {
    std::string bytes = serialize_params(params);
    Fnv1a h;
    // Skip the 10-byte header so the checksum covers only tensor records.
    h.update(bytes.data() + 10, bytes.size() - 10);
    return h.value();
}

} // namespace curio::num
