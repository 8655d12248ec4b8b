#pragma once

#include "curio/common.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace curio::num {

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

// Dense row-major tensor of 64-bit reals. Plain value type; layers are free
// functions so every op is independently testable.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    static Tensor from(std::vector<int> shape, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    int dim(int i) const { return shape_[size_t(i)]; }
    int size() const { return int(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int i) { return data_[size_t(i)]; }
    double operator[](int i) const { return data_[size_t(i)]; }

    bool operator==(const Tensor& o) const = default;

    void require_shape(const std::vector<int>& s, const char* what) const;
    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// std::map keeps iteration order deterministic, which the checkpoint format
// and checksums rely on.
using ParamMap = std::map<std::string, Tensor>;

bool all_finite(const ParamMap& params);

// Accumulate matching-shape gradients: dst[k] += src[k].
void accumulate(ParamMap& dst, const ParamMap& src);

// ---- initializers ----

Tensor randn_tensor(std::vector<int> shape, double stddev, Rng& rng);
Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng);
// Rows orthonormalized by Gram-Schmidt (rows <= cols), scaled by gain.
Tensor orthogonal_init(int rows, int cols, double gain, Rng& rng);

// ---- GEMM kernels (C += op(A) * op(B)) ----

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n);
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n);
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n);

// ---- layers ----

struct Conv2dCache {
    Tensor input;
    int stride = 1, pad = 0;
};

// input [N,C,H,W], weight [F,C,kh,kw], bias [F] -> [N,F,Ho,Wo];
// Ho = (H + 2*pad - kh)/stride + 1 (cross-correlation).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad, Conv2dCache* cache = nullptr);
void conv2d_backward(const Conv2dCache& cache, const Tensor& weight,
                     const Tensor& grad_out, Tensor& grad_input,
                     Tensor& grad_weight, Tensor& grad_bias);

struct DenseCache {
    Tensor input;
};

// input [N,D], weight [O,D], bias [O] -> [N,O].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias,
             DenseCache* cache = nullptr);
void dense_backward(const DenseCache& cache, const Tensor& weight,
                    const Tensor& grad_out, Tensor& grad_input,
                    Tensor& grad_weight, Tensor& grad_bias);

// Reinterprets the flat data under a new shape of equal total size.
Tensor reshape(Tensor t, std::vector<int> shape);

// Nearest-neighbor resize of [N,C,h,w] to [N,C,out_h,out_w]; source index is
// floor(i*h/out_h). Backward scatter-adds.
Tensor upsample_nearest(const Tensor& input, int out_h, int out_w);
void upsample_nearest_backward(const Tensor& grad_out, int in_h, int in_w,
                               Tensor& grad_input);

struct ReluCache {
    Tensor input;
};

Tensor relu(const Tensor& input, ReluCache* cache = nullptr);
void relu_backward(const ReluCache& cache, const Tensor& grad_out,
                   Tensor& grad_input);

struct LstmCache {
    Tensor input, h_prev, c_prev;
    Tensor gate_i, gate_f, gate_g, gate_o; // post-activation, [N,H]
    Tensor c_new, tanh_c_new;
};

// Gate order inside w_ih [4H,I], w_hh [4H,H], b [4H]: input, forget,
// candidate, output. Returns h' (also the step output); writes h', c'.
// gates_x, if given, is a precomputed x W_ih^T row block [N,4H] (no bias);
// passing it gives bit-identical results to the in-call input gemm.
void lstm_step(const Tensor& input, const Tensor& h_prev, const Tensor& c_prev,
               const Tensor& w_ih, const Tensor& w_hh, const Tensor& b,
               Tensor& h_out, Tensor& c_out, LstmCache* cache = nullptr,
               const double* gates_x = nullptr);
// grad_h: dL/dh' (including any downstream-step contribution);
// grad_c: dL/dc' carried from the next step (zero at sequence end).
// Outputs gradients w.r.t. input and previous state; accumulates into the
// parameter gradients.
void lstm_step_backward(const LstmCache& cache, const Tensor& w_ih,
                        const Tensor& w_hh, const Tensor& grad_h,
                        const Tensor& grad_c, Tensor& grad_input,
                        Tensor& grad_h_prev, Tensor& grad_c_prev,
                        Tensor& grad_w_ih, Tensor& grad_w_hh, Tensor& grad_b);
// State-path slice of the step backward: emits the gate pre-activation
// gradients [N,4H] and the previous-state gradients, leaving the input and
// parameter gradients to the caller (one batched product per sequence beats
// a rank-1 update per step).
void lstm_step_backward_light(const LstmCache& cache, const Tensor& w_hh,
                              const Tensor& grad_h, const Tensor& grad_c,
                              Tensor& gate_grads, Tensor& grad_h_prev,
                              Tensor& grad_c_prev);

// ---- softmax / sampling ----

std::vector<double> softmax(const std::vector<double>& logits);
std::vector<double> log_softmax(const std::vector<double>& logits);

struct SampleResult {
    int index = 0;
    double log_prob = 0.0;
    std::vector<double> probs;
};

// Max-shifted softmax then inverse-CDF on a single uniform draw.
SampleResult softmax_sample(const std::vector<double>& logits, Rng& rng);

// ---- optimizer ----

struct AdamState {
    ParamMap m, v;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               double lr);

// Scales all gradients so the global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_grad_norm(ParamMap& grads, double max_norm);

// ---- gradient checking ----

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    int probes = 0;

    bool pass(double tolerance) const { return max_rel_err < tolerance; }
};

// Central differences with step h against the supplied analytic gradients.
// Relative error uses denominator max(|analytic|, |numeric|, 1).
// max_probes_per_tensor == 0 checks every element; otherwise a random
// subsample (requires rng).
GradCheckReport grad_check(const std::function<double(const ParamMap&)>& f,
                           const ParamMap& params, const ParamMap& analytic,
                           double h = 1e-5, int max_probes_per_tensor = 0,
                           Rng* rng = nullptr);

// ---- checkpoint I/O ----

class CheckpointError : public Error {
public:
    using Error::Error;
};

// Format: magic "CKPT", version u16, count u32, then per tensor:
// name length u16 + UTF-8 bytes, rank u8, dims u32 each, f32 payload.
// All integers and floats little-endian. Training doubles are narrowed to
// f32 on save.
void save_checkpoint(const std::string& path, const ParamMap& params);
ParamMap load_checkpoint(const std::string& path);

// FNV-1a 64 over the per-tensor records exactly as serialized (names, dims,
// f32 payloads) in map order. Stable across save/load.
uint64_t params_checksum(const ParamMap& params);

} // namespace curio::num
