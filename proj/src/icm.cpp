#include "curio/icm.hpp"

#include <algorithm>
#include <cmath>

namespace curio::icm {

using namespace curio::num;

ForwardModel build_forward_model(int feature_dim, int hidden, Rng& rng) {
    if (feature_dim < 1 || hidden < 1)
        throw Error("build_forward_model: dims must be positive");
    ForwardModel m;
    m.feature_dim = feature_dim;
    m.hidden = hidden;
    int in = feature_dim + kActionCount;
    m.params["fwd/fc1/w"] = he_init({hidden, in}, in, rng);
    m.params["fwd/fc1/b"] = Tensor({hidden});
    m.params["fwd/fc2/w"] = he_init({hidden, hidden}, hidden, rng);
    m.params["fwd/fc2/b"] = Tensor({hidden});
    m.params["fwd/out/w"] = he_init({feature_dim, hidden}, hidden, rng);
    m.params["fwd/out/b"] = Tensor({feature_dim});
    return m;
}

namespace {

struct FwdCache {
    DenseCache fc1, fc2, out;
    ReluCache r1, r2;
};

Tensor fwd_batch(const ForwardModel& model, const Tensor& x, FwdCache* cache) {
    Tensor h1 = dense(x, model.params.at("fwd/fc1/w"), model.params.at("fwd/fc1/b"),
                      cache ? &cache->fc1 : nullptr);
    Tensor h1r = relu(h1, cache ? &cache->r1 : nullptr);
    Tensor h2 = dense(h1r, model.params.at("fwd/fc2/w"),
                      model.params.at("fwd/fc2/b"), cache ? &cache->fc2 : nullptr);
    Tensor h2r = relu(h2, cache ? &cache->r2 : nullptr);
    return dense(h2r, model.params.at("fwd/out/w"), model.params.at("fwd/out/b"),
                 cache ? &cache->out : nullptr);
}

Tensor pack_inputs(const ForwardModel& model,
                   const std::vector<std::vector<double>>& phi_s,
                   const std::vector<int>& actions) {
    int b = int(phi_s.size());
    int in = model.feature_dim + kActionCount;
    Tensor x({b, in});
    for (int i = 0; i < b; ++i) {
        if (int(phi_s[size_t(i)].size()) != model.feature_dim)
            throw ShapeMismatch("forward model: feature dim mismatch");
        int a = actions[size_t(i)];
        if (a < 0 || a >= kActionCount)
            throw ShapeMismatch("forward model: action index out of range");
        double* row = x.data() + size_t(i) * size_t(in);
        std::copy(phi_s[size_t(i)].begin(), phi_s[size_t(i)].end(), row);
        row[model.feature_dim + a] = 1.0;
    }
    return x;
}

} // namespace

std::vector<double> forward_predict(const ForwardModel& model,
                                    const std::vector<double>& phi_s, int action) {
    Tensor x = pack_inputs(model, {phi_s}, {action});
    Tensor y = fwd_batch(model, x, nullptr);
    return std::vector<double>(y.data(), y.data() + y.size());
}

double intrinsic_reward(const std::vector<double>& phi_hat_next,
                        const std::vector<double>& phi_next) {
    if (phi_hat_next.size() != phi_next.size())
        throw ShapeMismatch("intrinsic_reward: dim mismatch");
    double sq = 0.0;
    for (size_t i = 0; i < phi_next.size(); ++i) {
        double d = phi_hat_next[i] - phi_next[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

std::vector<double> intrinsic_rewards(
    const ForwardModel& model, const std::vector<std::vector<double>>& phi_s,
    const std::vector<int>& actions,
    const std::vector<std::vector<double>>& phi_next) {
    size_t b = phi_s.size();
    if (b == 0 || actions.size() != b || phi_next.size() != b)
        throw ShapeMismatch("intrinsic_rewards: inconsistent batch");
    Tensor x = pack_inputs(model, phi_s, actions);
    Tensor y = fwd_batch(model, x, nullptr);
    const int d = model.feature_dim;
    std::vector<double> out(b);
    for (size_t i = 0; i < b; ++i) {
        if (int(phi_next[i].size()) != d)
            throw ShapeMismatch("intrinsic_rewards: feature dim mismatch");
        const double* row = y.data() + i * size_t(d);
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = row[j] - phi_next[i][j];
            sq += diff * diff;
        }
        out[i] = std::sqrt(sq);
    }
    return out;
}

double icm_loss(const ForwardModel& model, const IcmBatch& batch,
                ParamMap* grads) {
    int b = int(batch.phi_s.size());
    if (b == 0) throw Error("icm_loss: empty batch");
    if (batch.actions.size() != size_t(b) || batch.phi_next.size() != size_t(b))
        throw ShapeMismatch("icm_loss: inconsistent batch");

    Tensor x = pack_inputs(model, batch.phi_s, batch.actions);
    FwdCache cache;
    Tensor y = fwd_batch(model, x, grads ? &cache : nullptr);

    double loss = 0.0;
    Tensor g_y({b, model.feature_dim});
    for (int i = 0; i < b; ++i) {
        const std::vector<double>& target = batch.phi_next[size_t(i)];
        if (int(target.size()) != model.feature_dim)
            throw ShapeMismatch("icm_loss: target dim mismatch");
        for (int j = 0; j < model.feature_dim; ++j) {
            double d = y[i * model.feature_dim + j] - target[size_t(j)];
            loss += d * d;
            g_y[i * model.feature_dim + j] = 2.0 * d / b;
        }
    }
    loss /= b;

    if (grads) {
        Tensor g_h2r, g_h2, g_h1r, g_h1, g_x;
        dense_backward(cache.out, model.params.at("fwd/out/w"), g_y, g_h2r,
                       (*grads)["fwd/out/w"], (*grads)["fwd/out/b"]);
        relu_backward(cache.r2, g_h2r, g_h2);
        dense_backward(cache.fc2, model.params.at("fwd/fc2/w"), g_h2, g_h1r,
                       (*grads)["fwd/fc2/w"], (*grads)["fwd/fc2/b"]);
        relu_backward(cache.r1, g_h1r, g_h1);
        dense_backward(cache.fc1, model.params.at("fwd/fc1/w"), g_h1, g_x,
                       (*grads)["fwd/fc1/w"], (*grads)["fwd/fc1/b"]);
    }
    return loss;
}

double icm_update(ForwardModel& model, const IcmBatch& batch, double lr) {
    ParamMap grads;
    double loss = icm_loss(model, batch, &grads);
    adam_step(model.params, grads, model.adam, lr);
    return loss;
}

double RunningStd::std() const {
    if (n < 2) return 1.0;
    return std::sqrt(m2 / double(n - 1));
}

double combine_rewards(double r_ext, double r_int, RewardMix& mix) {
    if (r_int < 0.0) throw Error("combine_rewards: negative intrinsic reward");
    double r_tilde = r_int;
    if (mix.normalize) {
        mix.stats.observe(r_int);
        r_tilde = r_int / std::max(mix.stats.std(), 1e-8);
    }
    return r_ext + mix.lambda_c * r_tilde;
}

} // namespace curio::icm
