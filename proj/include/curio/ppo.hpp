#pragma once

#include "curio/arena.hpp"
#include "curio/convstack.hpp"
#include "curio/encoders.hpp"
#include "curio/icm.hpp"
#include "curio/numcore.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace curio::ppo {

struct PolicySpec {
    num::ConvStackSpec conv;
    int height = 32, width = 32;
    int lstm_hidden = 128;
};

// Conv stack -> LSTM -> action-logit and value heads. The visual front end is
// the policy's own; it never shares parameters with the curiosity encoder.
struct PolicyNet {
    PolicySpec spec;
    int input_dim = 0; // flattened conv output feeding the LSTM
    num::ParamMap params;
    num::AdamState adam;
};

PolicyNet build_policy(const PolicySpec& spec, Rng& rng);

struct RecurrentState {
    num::Tensor h, c; // [1, hidden]
};

RecurrentState zero_state(int hidden);

struct PolicyOut {
    std::vector<double> logits;
    double value = 0.0;
};

// Single-observation forward; advances the recurrent state in place.
PolicyOut policy_step(const PolicyNet& policy, const Observation& obs,
                      RecurrentState& state);

struct Transition {
    Observation obs, next_obs;
    int action = 0;
    double log_prob = 0.0; // collecting policy's log pi(a|s)
    double value = 0.0;    // collecting policy's V(s)
    double reward_ext = 0.0;
    double reward_int = 0.0; // raw prediction-error norm, before any scaling
    double reward = 0.0;     // combined signal driving GAE
    bool done = false;
    std::vector<double> phi_s, phi_next;
};

struct Rollout {
    int lanes = 0, horizon = 0, bptt = 0;
    std::vector<Transition> data;             // lane-major: lane*horizon + t
    std::vector<RecurrentState> chunk_states; // entry state of each BPTT chunk
    std::vector<double> bootstrap;            // V(s_horizon) per lane
    std::vector<double> advantages, returns;  // filled by compute_gae
    std::vector<double> ep_returns_ext, ep_returns_int; // episodes finished here

    int chunks_per_lane() const { return horizon / bptt; }
    const Transition& at(int lane, int t) const {
        return data[size_t(lane * horizon + t)];
    }
};

// Environment lanes whose episode and recurrent state persist across
// rollouts, so episodes may span update boundaries. Each lane holds its own
// spec, redrawn from the generator at every episode start; lessons with
// per-episode randomization (arm lengths, goal quadrants) rely on this.
struct LanePool {
    std::function<ArenaSpec(Rng&)> make_spec;
    Kinematics kin;
    int height = 32, width = 32;
    std::vector<ArenaSpec> specs;
    std::vector<EpisodeState> states;
    std::vector<RecurrentState> rec;
    std::vector<Observation> frames;
    std::vector<double> ep_ext, ep_int; // running per-episode accumulators

    // Draws a spec per lane, respawns it, and zeroes the recurrent state.
    void configure(std::function<ArenaSpec(Rng&)> make, int lane_count,
                   int lstm_hidden, Rng& rng);
    void configure(const ArenaSpec& fixed, int lane_count, int lstm_hidden,
                   Rng& rng);
};

// Lockstep collection: one batched policy forward and feature encode across
// all lanes per timestep, then per-lane sampling, env stepping, and reward
// mixing. Terminal lanes auto-reset and their recurrent state returns to
// zeros. Stored transitions stay lane-major. with_features = false skips
// encoding and intrinsic rewards entirely (phi fields stay empty, reward_int
// is 0); combined rewards are unchanged when mix.lambda_c is 0, and no rng
// draws are affected either way.
Rollout collect_rollout(const PolicyNet& policy, LanePool& pool,
                        const enc::Encoder& encoder,
                        const icm::ForwardModel& fwd, icm::RewardMix& mix,
                        int horizon, int bptt, Rng& rng,
                        bool with_features = true);

// delta_t = r_t + gamma*V(s_{t+1})*(1-done) - V(s_t);
// A_t = delta_t + gamma*lambda*(1-done)*A_{t+1}; returns = A + V.
void compute_gae(Rollout& rollout, double gamma, double gae_lambda);

struct TrainSchedule {
    long long total_steps = 0;
    double lr_init = 3e-4; // decays linearly to 0 over total_steps
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip_eps = 0.2;
    int epochs = 3;
    int minibatch = 256; // transitions; must be a multiple of bptt
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    double grad_clip = 0.5;
    int horizon = 512;
    int lanes = 4;
    int bptt = 64;
};

double lr_at(const TrainSchedule& sched, long long step_count);

struct PpoCoeffs {
    double clip_eps = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
};

struct PpoLossStats {
    double policy_loss = 0, value_loss = 0, entropy = 0, total = 0;
    double mean_ratio = 0;
    double max_log_prob_err = 0; // recomputed vs stored, over the minibatch
    int samples = 0;
};

// Loss over a minibatch of whole BPTT chunks, identified by (lane, chunk)
// pairs. Scalars are per-sample means; gradients (when requested) accumulate
// into `grads` scaled consistently with `total`.
PpoLossStats ppo_losses(const PolicyNet& policy, const Rollout& rollout,
                        const std::vector<std::pair<int, int>>& chunks,
                        const PpoCoeffs& coeffs, num::ParamMap* grads);

struct PpoMetrics {
    double loss_policy = 0, loss_value = 0, entropy = 0;
    double mean_ratio = 1.0;
    double lr = 0;
    double grad_norm = 0; // mean pre-clip norm across minibatches
    double reward_ext_mean = 0, reward_int_mean = 0; // per-step means
    double max_log_prob_err = 0;
    double adv_mean = 0, adv_std = 1; // after normalization
};

// Normalizes advantages in place, verifies stored log-probs against the
// pre-update policy (tolerance 1e-9), then runs the epoch/minibatch schedule
// at the linearly decayed learning rate.
PpoMetrics ppo_update(PolicyNet& policy, Rollout& rollout,
                      const TrainSchedule& sched, long long step_count,
                      Rng& rng);

} // namespace curio::ppo
