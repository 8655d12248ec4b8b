#pragma once

#include "curio/arena.hpp"
#include "curio/numcore.hpp"

#include <vector>

namespace curio::icm {

// Forward-dynamics model: concat(phi(s_t), one_hot(a_t)) -> two ReLU hidden
// layers -> predicted phi(s_{t+1}). Trained on its own; gradients never reach
// the encoder that produced the features.
struct ForwardModel {
    int feature_dim = 0;
    int hidden = 256;
    num::ParamMap params;
    num::AdamState adam;
};

ForwardModel build_forward_model(int feature_dim, int hidden, Rng& rng);

std::vector<double> forward_predict(const ForwardModel& model,
                                    const std::vector<double>& phi_s, int action);

// L2 norm of the prediction error.
double intrinsic_reward(const std::vector<double>& phi_hat_next,
                        const std::vector<double>& phi_next);

// Batched predict-and-measure; element i matches the single-sample path.
std::vector<double> intrinsic_rewards(
    const ForwardModel& model, const std::vector<std::vector<double>>& phi_s,
    const std::vector<int>& actions,
    const std::vector<std::vector<double>>& phi_next);

struct IcmBatch {
    std::vector<std::vector<double>> phi_s;
    std::vector<int> actions;
    std::vector<std::vector<double>> phi_next;
};

// Mean over the batch of the squared prediction error norm. grads may be null.
double icm_loss(const ForwardModel& model, const IcmBatch& batch,
                num::ParamMap* grads);

// One Adam step on icm_loss; returns the pre-step loss.
double icm_update(ForwardModel& model, const IcmBatch& batch, double lr);

// Welford running moments. std() uses the n-1 denominator and reports 1.0
// until two samples have been seen.
struct RunningStd {
    long long n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void observe(double x) {
        ++n;
        double d = x - mean;
        mean += d / double(n);
        m2 += d * (x - mean);
    }
    double std() const;
};

struct RewardMix {
    double lambda_c = 0.0;
    bool normalize = false; // divide r_int by a running std when set
    RunningStd stats;
};

// r_ext + lambda_c * r_int, with r_int first divided by the running std of
// all intrinsic rewards seen so far (including this one) when mix.normalize
// is set. The divisor is floored at 1e-8.
double combine_rewards(double r_ext, double r_int, RewardMix& mix);

} // namespace curio::icm
