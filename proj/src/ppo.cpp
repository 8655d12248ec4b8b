#include "curio/ppo.hpp"

#include <algorithm>
#include <cmath>

namespace curio::ppo {

using namespace curio::num;

PolicyNet build_policy(const PolicySpec& spec, Rng& rng) {
    PolicyNet p;
    p.spec = spec;
    p.input_dim = conv_stack_out_dim(spec.conv, spec.height, spec.width);
    conv_stack_init(p.params, "pol/", spec.conv, rng);

    int hid = spec.lstm_hidden;
    p.params["pol/lstm/w_ih"] = he_init({4 * hid, p.input_dim}, p.input_dim, rng);
    p.params["pol/lstm/w_hh"] = he_init({4 * hid, hid}, hid, rng);
    Tensor b({4 * hid});
    for (int i = hid; i < 2 * hid; ++i) b[i] = 1.0; // open forget gates
    p.params["pol/lstm/b"] = std::move(b);

    // Small logits head keeps the initial policy near uniform.
    Tensor lw = he_init({kActionCount, hid}, hid, rng);
    for (int i = 0; i < lw.size(); ++i) lw[i] *= 0.01;
    p.params["pol/logits/w"] = std::move(lw);
    p.params["pol/logits/b"] = Tensor({kActionCount});
    p.params["pol/value/w"] = he_init({1, hid}, hid, rng);
    p.params["pol/value/b"] = Tensor({1});
    return p;
}

RecurrentState zero_state(int hidden) {
    return RecurrentState{Tensor({1, hidden}), Tensor({1, hidden})};
}

namespace {

Tensor trunk_step(const PolicyNet& p, const Observation& obs,
                  RecurrentState& state) {
    std::vector<const Observation*> one = {&obs};
    Tensor x = observations_to_chw(one, p.spec.height, p.spec.width);
    Tensor act = conv_stack_forward(p.params, "pol/", p.spec.conv, x, nullptr);
    Tensor flat = reshape(std::move(act), {1, p.input_dim});
    Tensor h, c;
    lstm_step(flat, state.h, state.c, p.params.at("pol/lstm/w_ih"),
              p.params.at("pol/lstm/w_hh"), p.params.at("pol/lstm/b"), h, c,
              nullptr);
    state.h = h;
    state.c = c;
    return h;
}

} // namespace

PolicyOut policy_step(const PolicyNet& policy, const Observation& obs,
                      RecurrentState& state) {
    Tensor h = trunk_step(policy, obs, state);
    Tensor logits = dense(h, policy.params.at("pol/logits/w"),
                          policy.params.at("pol/logits/b"), nullptr);
    Tensor value = dense(h, policy.params.at("pol/value/w"),
                         policy.params.at("pol/value/b"), nullptr);
    PolicyOut out;
    out.logits.assign(logits.data(), logits.data() + logits.size());
    out.value = value[0];
    return out;
}

void LanePool::configure(std::function<ArenaSpec(Rng&)> make, int lane_count,
                         int lstm_hidden, Rng& rng) {
    make_spec = std::move(make);
    specs.clear();
    states.clear();
    rec.clear();
    frames.clear();
    ep_ext.assign(size_t(lane_count), 0.0);
    ep_int.assign(size_t(lane_count), 0.0);
    for (int l = 0; l < lane_count; ++l) {
        specs.push_back(make_spec(rng));
        states.push_back(spawn_episode(specs.back(), rng, kin));
        rec.push_back(zero_state(lstm_hidden));
        frames.push_back(render(specs.back(), states.back(), height, width));
    }
}

void LanePool::configure(const ArenaSpec& fixed, int lane_count, int lstm_hidden,
                         Rng& rng) {
    configure([fixed](Rng&) { return fixed; }, lane_count, lstm_hidden, rng);
}

namespace {

// One batched policy forward for a set of frames with per-lane states.
// Row arithmetic is batch-size independent, so each lane's outputs equal
// what policy_step would produce for it alone.
void lane_forward(const PolicyNet& policy,
                  const std::vector<const Observation*>& frames,
                  std::vector<RecurrentState>& rec, int height, int width,
                  Tensor& logits, Tensor& values) {
    const int lanes = int(frames.size());
    const int hid = policy.spec.lstm_hidden;
    Tensor x = observations_to_chw(frames, height, width);
    Tensor act = conv_stack_forward(policy.params, "pol/", policy.spec.conv, x,
                                    nullptr);
    Tensor flat = reshape(std::move(act), {lanes, policy.input_dim});

    Tensor hs({lanes, hid}), cs({lanes, hid});
    for (int l = 0; l < lanes; ++l) {
        std::copy(rec[size_t(l)].h.data(), rec[size_t(l)].h.data() + hid,
                  hs.data() + size_t(l) * size_t(hid));
        std::copy(rec[size_t(l)].c.data(), rec[size_t(l)].c.data() + hid,
                  cs.data() + size_t(l) * size_t(hid));
    }
    Tensor h2, c2;
    lstm_step(flat, hs, cs, policy.params.at("pol/lstm/w_ih"),
              policy.params.at("pol/lstm/w_hh"), policy.params.at("pol/lstm/b"),
              h2, c2, nullptr);
    for (int l = 0; l < lanes; ++l) {
        std::copy(h2.data() + size_t(l) * size_t(hid),
                  h2.data() + size_t(l + 1) * size_t(hid), rec[size_t(l)].h.data());
        std::copy(c2.data() + size_t(l) * size_t(hid),
                  c2.data() + size_t(l + 1) * size_t(hid), rec[size_t(l)].c.data());
    }
    logits = dense(h2, policy.params.at("pol/logits/w"),
                   policy.params.at("pol/logits/b"), nullptr);
    values = dense(h2, policy.params.at("pol/value/w"),
                   policy.params.at("pol/value/b"), nullptr);
}

} // namespace

Rollout collect_rollout(const PolicyNet& policy, LanePool& pool,
                        const enc::Encoder& encoder,
                        const icm::ForwardModel& fwd, icm::RewardMix& mix,
                        int horizon, int bptt, Rng& rng, bool with_features) {
    if (horizon < 1 || bptt < 1 || horizon % bptt != 0)
        throw Error("collect_rollout: horizon must be a positive multiple of bptt");
    const int lanes = int(pool.states.size());
    if (lanes == 0) throw Error("collect_rollout: pool not configured");
    const int cpl = horizon / bptt;

    Rollout ro;
    ro.lanes = lanes;
    ro.horizon = horizon;
    ro.bptt = bptt;
    ro.data.resize(size_t(lanes * horizon));
    ro.chunk_states.resize(size_t(lanes * cpl));
    ro.bootstrap.resize(size_t(lanes));

    const size_t nl = size_t(lanes);

    // Features of the frames entering this rollout, under current encoder
    // params; within the rollout each phi_next becomes the next phi_s.
    std::vector<const Observation*> frames(nl);
    for (int l = 0; l < lanes; ++l) frames[size_t(l)] = &pool.frames[size_t(l)];
    std::vector<std::vector<double>> phi = enc::encode_batch(encoder, frames);

    std::vector<int> actions(nl);
    for (int t = 0; t < horizon; ++t) {
        if (t % bptt == 0)
            for (int l = 0; l < lanes; ++l)
                ro.chunk_states[size_t(l * cpl + t / bptt)] = pool.rec[size_t(l)];

        for (int l = 0; l < lanes; ++l) frames[size_t(l)] = &pool.frames[size_t(l)];
        Tensor logits, values;
        lane_forward(policy, frames, pool.rec, pool.height, pool.width, logits,
                     values);

        for (int l = 0; l < lanes; ++l) {
            Transition& tr = ro.data[size_t(l * horizon + t)];
            tr.obs = pool.frames[size_t(l)];
            std::vector<double> row(logits.data() + size_t(l) * kActionCount,
                                    logits.data() + size_t(l + 1) * kActionCount);
            SampleResult pick = softmax_sample(row, rng);
            tr.action = pick.index;
            tr.log_prob = pick.log_prob;
            tr.value = values[l];
            actions[size_t(l)] = pick.index;

            StepResult res = step(pool.specs[size_t(l)], pool.states[size_t(l)],
                                  action_from_index(pick.index), pool.kin);
            tr.next_obs = render(pool.specs[size_t(l)], pool.states[size_t(l)],
                                 pool.height, pool.width);
            tr.reward_ext = res.reward;
            tr.done = res.done;
            tr.phi_s = phi[size_t(l)];
        }

        std::vector<const Observation*> next(nl);
        for (int l = 0; l < lanes; ++l)
            next[size_t(l)] = &ro.data[size_t(l * horizon + t)].next_obs;
        std::vector<std::vector<double>> phi_next =
            enc::encode_batch(encoder, next);
        std::vector<double> r_int =
            icm::intrinsic_rewards(fwd, phi, actions, phi_next);

        for (int l = 0; l < lanes; ++l) {
            Transition& tr = ro.data[size_t(l * horizon + t)];
            tr.phi_next = phi_next[size_t(l)];
            tr.reward_int = r_int[size_t(l)];
            tr.reward = icm::combine_rewards(tr.reward_ext, tr.reward_int, mix);

            pool.ep_ext[size_t(l)] += tr.reward_ext;
            pool.ep_int[size_t(l)] += tr.reward_int;
            if (tr.done) {
                ro.ep_returns_ext.push_back(pool.ep_ext[size_t(l)]);
                ro.ep_returns_int.push_back(pool.ep_int[size_t(l)]);
                pool.ep_ext[size_t(l)] = 0.0;
                pool.ep_int[size_t(l)] = 0.0;
                pool.specs[size_t(l)] = pool.make_spec(rng);
                pool.states[size_t(l)] =
                    spawn_episode(pool.specs[size_t(l)], rng, pool.kin);
                pool.rec[size_t(l)] = zero_state(policy.spec.lstm_hidden);
                pool.frames[size_t(l)] =
                    render(pool.specs[size_t(l)], pool.states[size_t(l)],
                           pool.height, pool.width);
                phi[size_t(l)] = enc::encode(encoder, pool.frames[size_t(l)]);
            } else {
                pool.frames[size_t(l)] = tr.next_obs;
                phi[size_t(l)] = std::move(phi_next[size_t(l)]);
            }
        }
    }

    // Value peek for the bootstrap; the committed states are untouched.
    std::vector<RecurrentState> peek = pool.rec;
    for (int l = 0; l < lanes; ++l) frames[size_t(l)] = &pool.frames[size_t(l)];
    Tensor logits, values;
    lane_forward(policy, frames, peek, pool.height, pool.width, logits, values);
    for (int l = 0; l < lanes; ++l) ro.bootstrap[size_t(l)] = values[l];
    return ro;
}

void compute_gae(Rollout& ro, double gamma, double gae_lambda) {
    size_t n = ro.data.size();
    ro.advantages.assign(n, 0.0);
    ro.returns.assign(n, 0.0);
    for (int l = 0; l < ro.lanes; ++l) {
        double carry = 0.0;
        for (int t = ro.horizon - 1; t >= 0; --t) {
            size_t i = size_t(l * ro.horizon + t);
            const Transition& tr = ro.data[i];
            double nonterm = tr.done ? 0.0 : 1.0;
            double v_next = (t == ro.horizon - 1) ? ro.bootstrap[size_t(l)]
                                                  : ro.data[i + 1].value;
            double delta = tr.reward + gamma * v_next * nonterm - tr.value;
            carry = delta + gamma * gae_lambda * nonterm * carry;
            ro.advantages[i] = carry;
            ro.returns[i] = carry + tr.value;
        }
    }
}

double lr_at(const TrainSchedule& sched, long long step_count) {
    if (sched.total_steps <= 0) throw Error("lr_at: total_steps must be positive");
    double frac = double(step_count) / double(sched.total_steps);
    return sched.lr_init * std::max(0.0, 1.0 - frac);
}

namespace {

struct ChunkResult {
    PpoLossStats sums; // loss fields hold per-sample sums, not means
};

ChunkResult chunk_pass(const PolicyNet& policy, const Rollout& ro, int lane,
                       int chunk, const PpoCoeffs& coeffs, int total_samples,
                       ParamMap* grads) {
    int T = ro.bptt;
    int base = lane * ro.horizon + chunk * T;
    int hid = policy.spec.lstm_hidden;

    RecurrentState st =
        ro.chunk_states[size_t(lane * ro.chunks_per_lane() + chunk)];

    // The conv trunk has no cross-step state, so all T frames go through it as
    // one batch; per-image values match the batch-1 path taken at collection.
    const size_t nt = size_t(T);
    std::vector<const Observation*> obs_ptrs(nt);
    for (int t = 0; t < T; ++t) obs_ptrs[size_t(t)] = &ro.data[size_t(base + t)].obs;
    Tensor x = observations_to_chw(obs_ptrs, policy.spec.height, policy.spec.width);
    ConvStackCache conv_cache;
    Tensor act = conv_stack_forward(policy.params, "pol/", policy.spec.conv, x,
                                    grads ? &conv_cache : nullptr);
    Tensor flats = reshape(std::move(act), {T, policy.input_dim});

    // x W_ih^T has no recurrent dependence, so it runs as one gemm for the
    // whole chunk; only the h path advances step by step.
    Tensor gxall({T, 4 * hid});
    gemm_nt(flats.data(), policy.params.at("pol/lstm/w_ih").data(), gxall.data(),
            T, policy.input_dim, 4 * hid);

    std::vector<LstmCache> lstm_caches{size_t(T)};
    Tensor hmat({T, hid});
    Tensor hprev_mat({T, hid});
    for (int t = 0; t < T; ++t) {
        Tensor xt({1, policy.input_dim});
        std::copy(flats.data() + size_t(t) * size_t(policy.input_dim),
                  flats.data() + size_t(t + 1) * size_t(policy.input_dim),
                  xt.data());
        std::copy(st.h.data(), st.h.data() + hid,
                  hprev_mat.data() + size_t(t) * size_t(hid));
        Tensor h, c;
        lstm_step(xt, st.h, st.c, policy.params.at("pol/lstm/w_ih"),
                  policy.params.at("pol/lstm/w_hh"), policy.params.at("pol/lstm/b"),
                  h, c, grads ? &lstm_caches[size_t(t)] : nullptr,
                  gxall.data() + size_t(t) * size_t(4 * hid));
        std::copy(h.data(), h.data() + hid, hmat.data() + size_t(t) * size_t(hid));
        st.h = std::move(h);
        st.c = std::move(c);
        if (ro.data[size_t(base + t)].done) st = zero_state(hid);
    }

    DenseCache logits_cache, value_cache;
    Tensor logits = dense(hmat, policy.params.at("pol/logits/w"),
                          policy.params.at("pol/logits/b"),
                          grads ? &logits_cache : nullptr);
    Tensor values = dense(hmat, policy.params.at("pol/value/w"),
                          policy.params.at("pol/value/b"),
                          grads ? &value_cache : nullptr);

    ChunkResult res;
    res.sums.samples = T;
    Tensor g_logits({T, kActionCount});
    Tensor g_values({T, 1});
    double inv_n = 1.0 / double(total_samples);

    for (int t = 0; t < T; ++t) {
        const Transition& tr = ro.data[size_t(base + t)];
        std::vector<double> row(logits.data() + size_t(t) * kActionCount,
                                logits.data() + size_t(t + 1) * kActionCount);
        std::vector<double> lp = log_softmax(row);

        double lp_a = lp[size_t(tr.action)];
        res.sums.max_log_prob_err =
            std::max(res.sums.max_log_prob_err, std::abs(lp_a - tr.log_prob));

        double adv = ro.advantages[size_t(base + t)];
        double ratio = std::exp(lp_a - tr.log_prob);
        double objective, dobj_dratio;
        if (adv >= 0.0) {
            bool unclipped = ratio <= 1.0 + coeffs.clip_eps;
            objective = adv * std::min(ratio, 1.0 + coeffs.clip_eps);
            dobj_dratio = unclipped ? adv : 0.0;
        } else {
            bool unclipped = ratio >= 1.0 - coeffs.clip_eps;
            objective = adv * std::max(ratio, 1.0 - coeffs.clip_eps);
            dobj_dratio = unclipped ? adv : 0.0;
        }

        double entropy = 0.0;
        for (double v : lp) entropy -= std::exp(v) * v;

        double ret = ro.returns[size_t(base + t)];
        double verr = values[t] - ret;

        res.sums.policy_loss += -objective;
        res.sums.value_loss += verr * verr;
        res.sums.entropy += entropy;
        res.sums.mean_ratio += ratio;
        res.sums.total += -objective + coeffs.value_coef * verr * verr -
                          coeffs.entropy_coef * entropy;

        if (grads) {
            double dl_dlpa = -dobj_dratio * ratio * inv_n;
            for (int k = 0; k < kActionCount; ++k) {
                double p = std::exp(lp[size_t(k)]);
                double g = dl_dlpa * ((k == tr.action ? 1.0 : 0.0) - p);
                g += coeffs.entropy_coef * p * (lp[size_t(k)] + entropy) * inv_n;
                g_logits[t * kActionCount + k] = g;
            }
            g_values[t] = 2.0 * coeffs.value_coef * verr * inv_n;
        }
    }

    if (grads) {
        ParamMap local;
        Tensor dh_logits, dh_value;
        dense_backward(logits_cache, policy.params.at("pol/logits/w"), g_logits,
                       dh_logits, local["pol/logits/w"], local["pol/logits/b"]);
        dense_backward(value_cache, policy.params.at("pol/value/w"), g_values,
                       dh_value, local["pol/value/w"], local["pol/value/b"]);

        Tensor dh_next({1, hid}), dc_next({1, hid});
        auto sizes =
            conv_stack_sizes(policy.spec.conv, policy.spec.height, policy.spec.width);
        // The recurrence fixes the step order, but the input and parameter
        // gradients factor over steps, so they run as one product each once
        // the gate gradients for the whole chunk are known.
        Tensor dgates({T, 4 * hid});
        for (int t = T - 1; t >= 0; --t) {
            const Transition& tr = ro.data[size_t(base + t)];
            Tensor dh({1, hid});
            for (int j = 0; j < hid; ++j) {
                dh[j] = dh_logits[t * hid + j] + dh_value[t * hid + j];
                if (!tr.done) dh[j] += dh_next[j];
            }
            Tensor dc = tr.done ? Tensor({1, hid}) : dc_next;

            Tensor g_gates, g_h_prev, g_c_prev;
            lstm_step_backward_light(lstm_caches[size_t(t)],
                                     policy.params.at("pol/lstm/w_hh"), dh, dc,
                                     g_gates, g_h_prev, g_c_prev);
            dh_next = std::move(g_h_prev);
            dc_next = std::move(g_c_prev);
            std::copy(g_gates.data(), g_gates.data() + 4 * hid,
                      dgates.data() + size_t(t) * size_t(4 * hid));
        }

        Tensor dflats({T, policy.input_dim});
        gemm_nn(dgates.data(), policy.params.at("pol/lstm/w_ih").data(),
                dflats.data(), T, 4 * hid, policy.input_dim);
        Tensor& gwih = local["pol/lstm/w_ih"];
        gwih = Tensor({4 * hid, policy.input_dim});
        gemm_tn(dgates.data(), flats.data(), gwih.data(), 4 * hid, T,
                policy.input_dim);
        Tensor& gwhh = local["pol/lstm/w_hh"];
        gwhh = Tensor({4 * hid, hid});
        gemm_tn(dgates.data(), hprev_mat.data(), gwhh.data(), 4 * hid, T, hid);
        Tensor& gb = local["pol/lstm/b"];
        gb = Tensor({4 * hid});
        for (int t = 0; t < T; ++t) {
            const double* row = dgates.data() + size_t(t) * size_t(4 * hid);
            for (int j = 0; j < 4 * hid; ++j) gb[j] += row[j];
        }

        Tensor g_act =
            reshape(std::move(dflats), {T, policy.spec.conv.channels.back(),
                                        sizes.back().first, sizes.back().second});
        ParamMap conv_map;
        Tensor g_input;
        conv_stack_backward(policy.params, "pol/", policy.spec.conv, conv_cache,
                            g_act, g_input, conv_map);
        accumulate(local, conv_map);
        accumulate(*grads, local);
    }
    return res;
}

} // namespace

PpoLossStats ppo_losses(const PolicyNet& policy, const Rollout& rollout,
                        const std::vector<std::pair<int, int>>& chunks,
                        const PpoCoeffs& coeffs, ParamMap* grads) {
    if (chunks.empty()) throw Error("ppo_losses: empty minibatch");
    if (rollout.advantages.size() != rollout.data.size())
        throw Error("ppo_losses: advantages not computed");
    int total = int(chunks.size()) * rollout.bptt;

    PpoLossStats out;
    for (auto [lane, chunk] : chunks) {
        if (lane < 0 || lane >= rollout.lanes || chunk < 0 ||
            chunk >= rollout.chunks_per_lane())
            throw Error("ppo_losses: chunk index out of range");
        ChunkResult r = chunk_pass(policy, rollout, lane, chunk, coeffs, total,
                                   grads);
        out.policy_loss += r.sums.policy_loss;
        out.value_loss += r.sums.value_loss;
        out.entropy += r.sums.entropy;
        out.total += r.sums.total;
        out.mean_ratio += r.sums.mean_ratio;
        out.max_log_prob_err =
            std::max(out.max_log_prob_err, r.sums.max_log_prob_err);
        out.samples += r.sums.samples;
    }
    double inv = 1.0 / double(total);
    out.policy_loss *= inv;
    out.value_loss *= inv;
    out.entropy *= inv;
    out.total *= inv;
    out.mean_ratio *= inv;
    return out;
}

PpoMetrics ppo_update(PolicyNet& policy, Rollout& rollout,
                      const TrainSchedule& sched, long long step_count,
                      Rng& rng) {
    size_t n = rollout.data.size();
    if (rollout.advantages.size() != n)
        throw Error("ppo_update: run compute_gae first");
    if (sched.minibatch % sched.bptt != 0 || rollout.bptt != sched.bptt)
        throw Error("ppo_update: minibatch must be whole bptt chunks");
    int total_chunks = rollout.lanes * rollout.chunks_per_lane();
    int chunks_per_mb = sched.minibatch / sched.bptt;
    if (total_chunks % chunks_per_mb != 0)
        throw Error("ppo_update: rollout does not divide into minibatches");

    PpoMetrics met;
    met.lr = lr_at(sched, step_count);

    // Per-update advantage normalization.
    double mean = 0.0;
    for (double a : rollout.advantages) mean += a;
    mean /= double(n);
    double var = 0.0;
    for (double a : rollout.advantages) var += (a - mean) * (a - mean);
    double sd = std::sqrt(var / double(n));
    double div = std::max(sd, 1e-8);
    for (double& a : rollout.advantages) a = (a - mean) / div;

    double post_mean = 0.0;
    for (double a : rollout.advantages) post_mean += a;
    post_mean /= double(n);
    double post_var = 0.0;
    for (double a : rollout.advantages) post_var += (a - post_mean) * (a - post_mean);
    met.adv_mean = post_mean;
    met.adv_std = std::sqrt(post_var / double(n));
    if (std::abs(met.adv_mean) >= 1e-9)
        throw Error("ppo_update: advantage mean not centered");
    if (sd > 1e-6 && std::abs(met.adv_std - 1.0) >= 1e-6)
        throw Error("ppo_update: advantage std not unit");

    PpoCoeffs coeffs{sched.clip_eps, sched.value_coef, sched.entropy_coef};

    // Stored log-probs must match a recomputation under pre-update params.
    std::vector<std::pair<int, int>> all_chunks;
    for (int l = 0; l < rollout.lanes; ++l)
        for (int k = 0; k < rollout.chunks_per_lane(); ++k)
            all_chunks.emplace_back(l, k);
    PpoLossStats check = ppo_losses(policy, rollout, all_chunks, coeffs, nullptr);
    met.max_log_prob_err = check.max_log_prob_err;
    if (check.max_log_prob_err >= 1e-9)
        throw Error("ppo_update: stored log-probs diverge from policy");

    double sum_policy = 0, sum_value = 0, sum_entropy = 0, sum_ratio = 0,
           sum_norm = 0;
    int passes = 0;
    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        std::vector<std::pair<int, int>> order = all_chunks;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.uniform_int(int(i)))]);

        for (size_t start = 0; start < order.size();
             start += size_t(chunks_per_mb)) {
            std::vector<std::pair<int, int>> mb(
                order.begin() + long(start),
                order.begin() + long(start) + chunks_per_mb);
            ParamMap grads;
            PpoLossStats stats = ppo_losses(policy, rollout, mb, coeffs, &grads);
            sum_norm += clip_grad_norm(grads, sched.grad_clip);
            adam_step(policy.params, grads, policy.adam, met.lr);
            sum_policy += stats.policy_loss;
            sum_value += stats.value_loss;
            sum_entropy += stats.entropy;
            sum_ratio += stats.mean_ratio;
            ++passes;
        }
    }
    met.loss_policy = sum_policy / passes;
    met.loss_value = sum_value / passes;
    met.entropy = sum_entropy / passes;
    met.mean_ratio = sum_ratio / passes;
    met.grad_norm = sum_norm / passes;

    double ext = 0, intr = 0;
    for (const Transition& tr : rollout.data) {
        ext += tr.reward_ext;
        intr += tr.reward_int;
    }
    met.reward_ext_mean = ext / double(n);
    met.reward_int_mean = intr / double(n);
    return met;
}

} // namespace curio::ppo
