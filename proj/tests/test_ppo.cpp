#include "curio/generators.hpp"
#include "curio/ppo.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace curio;
using namespace curio::num;
using namespace curio::ppo;

namespace {

PolicySpec tiny_policy_spec() {
    PolicySpec spec;
    spec.conv.channels = {4, 8};
    spec.height = 16;
    spec.width = 16;
    spec.lstm_hidden = 8;
    return spec;
}

// Pixels encoder plus matching forward model at the pool resolution.
struct Setup {
    PolicyNet policy;
    LanePool pool;
    enc::Encoder encoder;
    icm::ForwardModel fwd;
    icm::RewardMix mix;

    Setup(int lanes, uint64_t seed, const ArenaSpec& arena) {
        Rng rng(seed);
        policy = build_policy(tiny_policy_spec(), rng);
        enc::EncoderOptions eopt;
        eopt.height = 16;
        eopt.width = 16;
        encoder = enc::build_encoder(enc::EncoderKind::Pixels, eopt, rng);
        fwd = icm::build_forward_model(encoder.output_dim, 16, rng);
        pool.height = 16;
        pool.width = 16;
        pool.configure(arena, lanes, tiny_policy_spec().lstm_hidden, rng);
    }
};

ArenaSpec open_arena(int time_limit = 40) {
    ArenaSpec spec = parse_arena(
        "arena 16 16 40\ngoal green 13 8 1 1\nagent random 2 2 12 12\n");
    spec.time_limit = time_limit;
    return spec;
}

} // namespace

TEST_CASE("policy: parameter layout and initial behavior") {
    Rng rng(3);
    PolicyNet p = build_policy(PolicySpec{}, rng);
    CHECK(p.input_dim == 256);
    CHECK(p.params.at("pol/lstm/w_ih").shape() == std::vector<int>{512, 256});
    CHECK(p.params.at("pol/lstm/w_hh").shape() == std::vector<int>{512, 128});
    CHECK(p.params.at("pol/logits/w").shape() == std::vector<int>{9, 128});
    CHECK(p.params.at("pol/value/w").shape() == std::vector<int>{1, 128});

    const Tensor& b = p.params.at("pol/lstm/b");
    for (int i = 0; i < 128; ++i) {
        CHECK(b[i] == 0.0);
        CHECK(b[128 + i] == 1.0);
    }

    ArenaSpec arena = open_arena();
    Rng srng(9);
    EpisodeState st = spawn_episode(arena, srng);
    Observation obs = render(arena, st, 32, 32);
    RecurrentState rec = zero_state(128);
    PolicyOut out = policy_step(p, obs, rec);
    REQUIRE(out.logits.size() == 9);
    for (double v : out.logits) CHECK(std::isfinite(v));
    CHECK(std::isfinite(out.value));

    // Near-uniform start: entropy within 2% of the 9-action maximum.
    std::vector<double> lp = log_softmax(out.logits);
    double h = 0;
    for (double v : lp) h -= std::exp(v) * v;
    CHECK(h > 0.98 * std::log(9.0));
}

TEST_CASE("policy: recurrent state carries history") {
    Rng rng(5);
    PolicyNet p = build_policy(tiny_policy_spec(), rng);
    ArenaSpec arena = open_arena();
    Rng srng(2);
    EpisodeState st = spawn_episode(arena, srng);
    Observation obs = render(arena, st, 16, 16);

    RecurrentState fresh = zero_state(8);
    PolicyOut first = policy_step(p, obs, fresh);

    RecurrentState warmed = zero_state(8);
    policy_step(p, obs, warmed);
    PolicyOut second = policy_step(p, obs, warmed);
    CHECK(first.logits != second.logits);

    RecurrentState again = zero_state(8);
    PolicyOut repeat = policy_step(p, obs, again);
    CHECK(repeat.logits == first.logits);
    CHECK(repeat.value == first.value);
}

TEST_CASE("rollout: lane-major shape and bookkeeping") {
    Setup s(2, 11, open_arena());
    Rng rng(21);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 4, 2,
                                 rng);
    CHECK(ro.lanes == 2);
    CHECK(ro.horizon == 4);
    CHECK(ro.data.size() == 8);
    CHECK(ro.chunk_states.size() == 4); // 2 lanes x 2 chunks
    CHECK(ro.bootstrap.size() == 2);
    CHECK(ro.chunks_per_lane() == 2);
    for (const Transition& tr : ro.data) {
        CHECK(tr.phi_s.size() == size_t(s.encoder.output_dim));
        CHECK(tr.phi_next.size() == size_t(s.encoder.output_dim));
        CHECK(tr.reward_int >= 0.0);
        CHECK(tr.action >= 0);
        CHECK(tr.action < 9);
    }
    CHECK_THROWS_AS(
        collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 5, 2, rng),
        Error);
}

TEST_CASE("rollout: zero curiosity weight stores extrinsic rewards verbatim") {
    Setup s(2, 13, open_arena(8));
    s.mix.lambda_c = 0.0;
    Rng rng(31);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 32, 8,
                                 rng);
    for (const Transition& tr : ro.data) CHECK(tr.reward == tr.reward_ext);
}

TEST_CASE("rollout: nonzero curiosity weight mixes the prediction error in") {
    Setup s(1, 17, open_arena(8));
    s.mix.lambda_c = 0.1;
    Rng rng(37);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 16, 8,
                                 rng);
    for (const Transition& tr : ro.data)
        CHECK(tr.reward ==
              doctest::Approx(tr.reward_ext + 0.1 * tr.reward_int).epsilon(1e-14));
}

TEST_CASE("rollout: deterministic under a fixed seed") {
    auto run = [] {
        Setup s(1, 19, open_arena(12));
        Rng rng(41);
        return collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 100, 50,
                               rng);
    };
    Rollout a = run();
    Rollout b = run();
    REQUIRE(a.data.size() == b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) {
        CHECK(a.data[i].obs.pixels == b.data[i].obs.pixels);
        CHECK(a.data[i].action == b.data[i].action);
        CHECK(a.data[i].log_prob == b.data[i].log_prob);
        CHECK(a.data[i].value == b.data[i].value);
        CHECK(a.data[i].reward == b.data[i].reward);
        CHECK(a.data[i].done == b.data[i].done);
    }
    CHECK(a.bootstrap == b.bootstrap);
    CHECK(a.ep_returns_ext == b.ep_returns_ext);
}

TEST_CASE("rollout: terminal lanes reset and episodes are recorded") {
    ArenaSpec quick = open_arena(5); // episodes end within five steps
    Setup s(2, 23, quick);
    Rng rng(47);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 20, 5,
                                 rng);
    int dones = 0;
    for (const Transition& tr : ro.data)
        if (tr.done) ++dones;
    CHECK(dones >= 6);
    CHECK(ro.ep_returns_ext.size() == size_t(dones));
    CHECK(ro.ep_returns_int.size() == size_t(dones));
}

TEST_CASE("gae: hand-computed discounted returns") {
    Rollout ro;
    ro.lanes = 1;
    ro.horizon = 3;
    ro.bptt = 3;
    ro.bootstrap = {7.5}; // masked by the terminal flag
    for (int t = 0; t < 3; ++t) {
        Transition tr;
        tr.reward = (t == 2) ? 1.0 : 0.0;
        tr.value = 0.0;
        tr.done = (t == 2);
        ro.data.push_back(tr);
    }
    compute_gae(ro, 0.99, 1.0);
    REQUIRE(ro.returns.size() == 3);
    CHECK(ro.returns[0] == doctest::Approx(0.9801).epsilon(1e-12));
    CHECK(ro.returns[1] == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(ro.returns[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ro.advantages == ro.returns); // V was identically zero
}

TEST_CASE("gae: myopic discount reduces to reward minus value") {
    Rng rng(53);
    Rollout ro;
    ro.lanes = 2;
    ro.horizon = 5;
    ro.bptt = 5;
    ro.bootstrap = {rng.normal(), rng.normal()};
    for (int i = 0; i < 10; ++i) {
        Transition tr;
        tr.reward = rng.normal();
        tr.value = rng.normal();
        tr.done = rng.uniform() < 0.3;
        ro.data.push_back(tr);
    }
    compute_gae(ro, 0.0, 0.95);
    for (size_t i = 0; i < ro.data.size(); ++i)
        CHECK(ro.advantages[i] ==
              doctest::Approx(ro.data[i].reward - ro.data[i].value).epsilon(1e-12));
}

TEST_CASE("gae: silent rollout has zero advantage") {
    Rollout ro;
    ro.lanes = 1;
    ro.horizon = 6;
    ro.bptt = 3;
    ro.bootstrap = {0.0};
    ro.data.assign(6, Transition{});
    compute_gae(ro, 0.99, 0.95);
    for (double a : ro.advantages) CHECK(a == 0.0);
    for (double r : ro.returns) CHECK(r == 0.0);
}

TEST_CASE("gae: bootstrap value leaks through a non-terminal tail") {
    Rollout ro;
    ro.lanes = 1;
    ro.horizon = 1;
    ro.bptt = 1;
    ro.bootstrap = {2.0};
    ro.data.assign(1, Transition{});
    compute_gae(ro, 0.99, 0.95);
    CHECK(ro.advantages[0] == doctest::Approx(1.98).epsilon(1e-12));
}

TEST_CASE("ppo losses: identity ratio right after collection") {
    Setup s(2, 29, open_arena());
    Rng rng(59);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 8, 4,
                                 rng);
    compute_gae(ro, 0.99, 0.95);

    std::vector<std::pair<int, int>> chunks = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    PpoCoeffs coeffs;
    PpoLossStats stats = ppo_losses(s.policy, ro, chunks, coeffs, nullptr);

    CHECK(stats.samples == 16);
    CHECK(stats.max_log_prob_err < 1e-9);
    CHECK(stats.mean_ratio == doctest::Approx(1.0).epsilon(1e-9));

    double mean_adv = 0;
    for (double a : ro.advantages) mean_adv += a;
    mean_adv /= double(ro.advantages.size());
    CHECK(stats.policy_loss == doctest::Approx(-mean_adv).epsilon(1e-9));
    CHECK(stats.entropy == doctest::Approx(std::log(9.0)).epsilon(0.02));
}

TEST_CASE("ppo losses: clip formula hand values") {
    Setup s(1, 37, open_arena());
    Rng rng(61);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 1, 1,
                                 rng);
    compute_gae(ro, 0.99, 0.95);

    // Recompute the collecting log-prob so the ratio can be dialed exactly.
    RecurrentState rec = ro.chunk_states[0];
    PolicyOut out = policy_step(s.policy, ro.data[0].obs, rec);
    double lp = log_softmax(out.logits)[size_t(ro.data[0].action)];

    PpoCoeffs coeffs;
    coeffs.clip_eps = 0.2;
    coeffs.value_coef = 0.0;
    coeffs.entropy_coef = 0.0;
    std::vector<std::pair<int, int>> mb = {{0, 0}};

    ro.data[0].log_prob = lp - std::log(1.5); // ratio 1.5
    ro.advantages[0] = 1.0;
    PpoLossStats up = ppo_losses(s.policy, ro, mb, coeffs, nullptr);
    CHECK(up.policy_loss == doctest::Approx(-1.2).epsilon(1e-9));
    CHECK(up.total == doctest::Approx(-1.2).epsilon(1e-9));

    ro.data[0].log_prob = lp + std::log(2.0); // ratio 0.5
    ro.advantages[0] = -1.0;
    PpoLossStats down = ppo_losses(s.policy, ro, mb, coeffs, nullptr);
    CHECK(down.policy_loss == doctest::Approx(0.8).epsilon(1e-9));

    // Inside the trust region the surrogate tracks the ratio itself.
    ro.data[0].log_prob = lp - std::log(1.1); // ratio 1.1
    ro.advantages[0] = 1.0;
    PpoLossStats mid = ppo_losses(s.policy, ro, mb, coeffs, nullptr);
    CHECK(mid.policy_loss == doctest::Approx(-1.1).epsilon(1e-9));
}

TEST_CASE("ppo losses: gradients match finite differences on a toy batch") {
    Setup s(1, 43, open_arena());
    Rng rng(67);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix, 4, 4,
                                 rng);
    compute_gae(ro, 0.99, 0.95);
    // Spread advantages so both clip branches stay active somewhere.
    Rng arng(71);
    for (double& a : ro.advantages) a = arng.normal();
    for (size_t i = 0; i < ro.returns.size(); ++i)
        ro.returns[i] += 0.3 * arng.normal();

    PpoCoeffs coeffs;
    std::vector<std::pair<int, int>> mb = {{0, 0}};
    ParamMap analytic;
    ppo_losses(s.policy, ro, mb, coeffs, &analytic);

    auto f = [&](const ParamMap& p) {
        PolicyNet probe = s.policy;
        probe.params = p;
        return ppo_losses(probe, ro, mb, coeffs, nullptr).total;
    };
    Rng prng(73);
    GradCheckReport rep =
        grad_check(f, s.policy.params, analytic, 1e-5, 12, &prng);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("schedule: learning rate is exactly linear") {
    TrainSchedule sched;
    sched.total_steps = 200000;
    CHECK(lr_at(sched, 0) == 3e-4);
    CHECK(lr_at(sched, 200000) == 0.0);
    CHECK(lr_at(sched, 300000) == 0.0); // past the end stays at zero
    Rng rng(79);
    for (int i = 0; i < 200; ++i) {
        long long k = rng.uniform_int(200001);
        CHECK(lr_at(sched, k) == 3e-4 * (1.0 - double(k) / 200000.0));
    }
}

namespace {

TrainSchedule small_sched() {
    TrainSchedule sched;
    sched.total_steps = 4096;
    sched.horizon = 16;
    sched.lanes = 2;
    sched.bptt = 4;
    sched.minibatch = 8; // two chunks per minibatch
    return sched;
}

} // namespace

TEST_CASE("ppo update: invariants hold and parameters move") {
    Setup s(2, 47, open_arena());
    TrainSchedule sched = small_sched();
    Rng rng(83);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix,
                                 sched.horizon, sched.bptt, rng);
    compute_gae(ro, sched.gamma, sched.gae_lambda);

    uint64_t before = params_checksum(s.policy.params);
    PpoMetrics met = ppo_update(s.policy, ro, sched, 0, rng);

    CHECK(met.lr == 3e-4);
    CHECK(std::abs(met.adv_mean) < 1e-9);
    CHECK(std::abs(met.adv_std - 1.0) < 1e-6);
    CHECK(met.max_log_prob_err < 1e-9);
    CHECK(std::isfinite(met.loss_policy));
    CHECK(std::isfinite(met.loss_value));
    CHECK(met.entropy > 0.0);
    CHECK(params_checksum(s.policy.params) != before);

    // The rollout's advantages were normalized in place.
    double mean = 0;
    for (double a : ro.advantages) mean += a;
    CHECK(std::abs(mean / double(ro.advantages.size())) < 1e-9);
}

TEST_CASE("ppo update: zero learning rate leaves parameters untouched") {
    Setup s(2, 53, open_arena());
    TrainSchedule sched = small_sched();
    Rng rng(89);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix,
                                 sched.horizon, sched.bptt, rng);
    compute_gae(ro, sched.gamma, sched.gae_lambda);

    ParamMap before = s.policy.params;
    PpoMetrics met = ppo_update(s.policy, ro, sched, sched.total_steps, rng);
    CHECK(met.lr == 0.0);
    CHECK(s.policy.params == before);
}

TEST_CASE("ppo update: guards against misuse") {
    Setup s(2, 59, open_arena());
    TrainSchedule sched = small_sched();
    Rng rng(97);
    Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd, s.mix,
                                 sched.horizon, sched.bptt, rng);
    CHECK_THROWS_AS(ppo_update(s.policy, ro, sched, 0, rng), Error); // no GAE

    compute_gae(ro, sched.gamma, sched.gae_lambda);
    TrainSchedule bad = sched;
    bad.minibatch = 6; // not a multiple of bptt
    CHECK_THROWS_AS(ppo_update(s.policy, ro, bad, 0, rng), Error);
}

TEST_CASE("ppo update: bit-identical across identical seeded runs") {
    auto run = [] {
        Setup s(2, 61, open_arena());
        TrainSchedule sched = small_sched();
        Rng rng(101);
        for (int u = 0; u < 2; ++u) {
            Rollout ro = collect_rollout(s.policy, s.pool, s.encoder, s.fwd,
                                         s.mix, sched.horizon, sched.bptt, rng);
            compute_gae(ro, sched.gamma, sched.gae_lambda);
            ppo_update(s.policy, ro, sched, u * sched.horizon * sched.lanes, rng);
        }
        return params_checksum(s.policy.params);
    };
    CHECK(run() == run());
}

TEST_CASE("ppo learns to walk into a goal straight ahead [slow]") {
    ArenaSpec lesson = gen_idc_lesson(0);
    Rng rng(7);
    PolicyNet policy = build_policy(PolicySpec{}, rng);
    enc::EncoderOptions eopt;
    enc::Encoder encoder = enc::build_encoder(enc::EncoderKind::Pixels, eopt, rng);
    icm::ForwardModel fwd = icm::build_forward_model(encoder.output_dim, 64, rng);
    icm::RewardMix mix; // lambda zero: pure extrinsic
    LanePool pool;
    pool.configure(lesson, 4, 128, rng);

    TrainSchedule sched;
    sched.total_steps = 50000;
    std::vector<double> episode_returns;
    long long steps = 0;
    while (steps < sched.total_steps) {
        Rollout ro = collect_rollout(policy, pool, encoder, fwd, mix,
                                     sched.horizon, sched.bptt, rng);
        compute_gae(ro, sched.gamma, sched.gae_lambda);
        ppo_update(policy, ro, sched, steps, rng);
        for (double r : ro.ep_returns_ext) episode_returns.push_back(r);
        steps += sched.horizon * sched.lanes;
    }

    REQUIRE(episode_returns.size() >= 50);
    std::vector<double> tail(episode_returns.end() - 50, episode_returns.end());
    std::nth_element(tail.begin(), tail.begin() + 25, tail.end());
    CHECK(tail[25] > 0.9);
}
