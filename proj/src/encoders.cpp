#include "curio/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace curio::enc {

using namespace curio::num;

EncoderKind encoder_kind_from_string(const std::string& s) {
    if (s == "pixels") return EncoderKind::Pixels;
    if (s == "rf") return EncoderKind::RandomFeatures;
    if (s == "idf") return EncoderKind::IDF;
    if (s == "online_vae") return EncoderKind::OnlineVAE;
    if (s == "fixed_vae") return EncoderKind::FixedVAE;
    throw Error("unknown encoder kind: " + s);
}

std::string to_string(EncoderKind kind) {
    switch (kind) {
    case EncoderKind::Pixels: return "pixels";
    case EncoderKind::RandomFeatures: return "rf";
    case EncoderKind::IDF: return "idf";
    case EncoderKind::OnlineVAE: return "online_vae";
    case EncoderKind::FixedVAE: return "fixed_vae";
    }
    return "?";
}

namespace {

void init_feature_trunk(Encoder& e, Rng& rng, bool orthogonal) {
    conv_stack_init(e.params, "feat/", e.conv, rng, orthogonal);
    int flat = conv_stack_out_dim(e.conv, e.opt.height, e.opt.width);
    if (orthogonal && e.opt.feature_dim <= flat) {
        e.params["feat/head/w"] =
            orthogonal_init(e.opt.feature_dim, flat, 1.0, rng);
    } else {
        e.params["feat/head/w"] = he_init({e.opt.feature_dim, flat}, flat, rng);
    }
    e.params["feat/head/b"] = Tensor({e.opt.feature_dim});
}

// Batched trunk forward: observations -> [B, feature_dim].
struct TrunkCache {
    Tensor x;
    ConvStackCache conv;
    Tensor flat;
    DenseCache head;
};

Tensor trunk_forward(const Encoder& e, const std::vector<const Observation*>& obs,
                     TrunkCache* cache) {
    int b = int(obs.size());
    for (const Observation* o : obs)
        if (o->height != e.opt.height || o->width != e.opt.width)
            throw ResolutionMismatch("observation resolution does not match encoder");
    Tensor x = observations_to_chw(obs, e.opt.height, e.opt.width);
    Tensor act = conv_stack_forward(e.params, "feat/", e.conv, x,
                                    cache ? &cache->conv : nullptr);
    int flat = conv_stack_out_dim(e.conv, e.opt.height, e.opt.width);
    Tensor flat_t = reshape(std::move(act), {b, flat});
    Tensor out = dense(flat_t, e.params.at("feat/head/w"),
                       e.params.at("feat/head/b"), cache ? &cache->head : nullptr);
    if (cache) {
        cache->x = std::move(x);
        cache->flat = std::move(flat_t);
    }
    return out;
}

void trunk_backward(const Encoder& e, const TrunkCache& cache,
                    const Tensor& grad_feat, ParamMap& grads) {
    Tensor g_flat, g_head_in;
    dense_backward(cache.head, e.params.at("feat/head/w"), grad_feat, g_flat,
                   grads["feat/head/w"], grads["feat/head/b"]);
    auto sizes = conv_stack_sizes(e.conv, e.opt.height, e.opt.width);
    Tensor g_act = reshape(std::move(g_flat),
                           {grad_feat.dim(0), e.conv.channels.back(),
                            sizes.back().first, sizes.back().second});
    Tensor g_input;
    conv_stack_backward(e.params, "feat/", e.conv, cache.conv, g_act, g_input,
                        grads);
}

} // namespace

Encoder build_encoder(EncoderKind kind, const EncoderOptions& opt, Rng& rng,
                      const vae::VaeModel* model) {
    Encoder e;
    e.kind = kind;
    e.opt = opt;

    switch (kind) {
    case EncoderKind::Pixels:
        e.output_dim = opt.height * opt.width * 3;
        e.trainable = false;
        break;

    case EncoderKind::RandomFeatures:
        e.output_dim = opt.feature_dim;
        e.trainable = false;
        init_feature_trunk(e, rng, /*orthogonal=*/true);
        break;

    case EncoderKind::IDF: {
        e.output_dim = opt.feature_dim;
        e.trainable = true;
        init_feature_trunk(e, rng, /*orthogonal=*/false);
        int in = 2 * opt.feature_dim;
        e.params["inv/fc1/w"] = he_init({opt.idf_hidden, in}, in, rng);
        e.params["inv/fc1/b"] = Tensor({opt.idf_hidden});
        e.params["inv/fc2/w"] =
            he_init({kActionCount, opt.idf_hidden}, opt.idf_hidden, rng);
        e.params["inv/fc2/b"] = Tensor({kActionCount});
        break;
    }

    case EncoderKind::OnlineVAE: {
        e.trainable = true;
        if (model) {
            if (model->height != opt.height || model->width != opt.width)
                throw ResolutionMismatch("vae resolution does not match encoder");
            e.vae = *model;
            e.vae.frozen = false;
        } else {
            vae::VaeConfig cfg;
            cfg.latent_dim = opt.feature_dim;
            cfg.height = opt.height;
            cfg.width = opt.width;
            e.vae = vae::build_vae(cfg, rng);
        }
        e.output_dim = e.vae.latent_dim;
        break;
    }

    case EncoderKind::FixedVAE:
        if (!model) throw MissingModel("fixed_vae requires a pretrained model");
        if (!model->frozen)
            throw MissingModel("fixed_vae requires a frozen model");
        if (model->height != opt.height || model->width != opt.width)
            throw ResolutionMismatch("vae resolution does not match encoder");
        e.vae = *model;
        e.output_dim = e.vae.latent_dim;
        e.trainable = false;
        break;
    }
    return e;
}

std::vector<double> encode(const Encoder& encoder, const Observation& obs) {
    return encode_batch(encoder, {&obs})[0];
}

std::vector<std::vector<double>> encode_batch(
    const Encoder& encoder, const std::vector<const Observation*>& obs) {
    if (obs.empty()) throw Error("encode_batch: empty batch");
    std::vector<std::vector<double>> out(obs.size());
    switch (encoder.kind) {
    case EncoderKind::Pixels: {
        for (size_t i = 0; i < obs.size(); ++i) {
            const Observation& o = *obs[i];
            if (o.height != encoder.opt.height || o.width != encoder.opt.width)
                throw ResolutionMismatch(
                    "observation resolution does not match encoder");
            out[i].resize(o.pixels.size());
            for (size_t j = 0; j < o.pixels.size(); ++j)
                out[i][j] = double(o.pixels[j]);
        }
        return out;
    }
    case EncoderKind::RandomFeatures:
    case EncoderKind::IDF: {
        Tensor f = trunk_forward(encoder, obs, nullptr);
        int d = encoder.output_dim;
        for (size_t i = 0; i < obs.size(); ++i)
            out[i].assign(f.data() + i * size_t(d), f.data() + (i + 1) * size_t(d));
        return out;
    }
    case EncoderKind::OnlineVAE:
    case EncoderKind::FixedVAE: {
        std::vector<vae::LatentCode> codes = vae::vae_encode_batch(encoder.vae, obs);
        for (size_t i = 0; i < obs.size(); ++i) out[i] = std::move(codes[i].mu);
        return out;
    }
    }
    throw Error("unreachable encoder kind");
}

double idf_update(Encoder& encoder, const IdfBatch& batch, double lr) {
    if (encoder.kind != EncoderKind::IDF)
        throw WrongKind("idf_update requires an IDF encoder");
    int b = int(batch.actions.size());
    if (b == 0 || batch.s.size() != size_t(b) || batch.s_next.size() != size_t(b))
        throw Error("idf_update: inconsistent batch");

    // Both towers in one pass: rows 0..b-1 are s_t, rows b..2b-1 are s_{t+1}.
    std::vector<const Observation*> all;
    all.reserve(size_t(2 * b));
    for (const Observation* o : batch.s) all.push_back(o);
    for (const Observation* o : batch.s_next) all.push_back(o);

    TrunkCache trunk;
    Tensor feats = trunk_forward(encoder, all, &trunk);
    int d = encoder.opt.feature_dim;

    Tensor cat({b, 2 * d});
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < d; ++j) {
            cat[i * 2 * d + j] = feats[i * d + j];
            cat[i * 2 * d + d + j] = feats[(b + i) * d + j];
        }

    DenseCache fc1_c, fc2_c;
    ReluCache relu_c;
    Tensor h1 = dense(cat, encoder.params.at("inv/fc1/w"),
                      encoder.params.at("inv/fc1/b"), &fc1_c);
    Tensor h1r = relu(h1, &relu_c);
    Tensor logits = dense(h1r, encoder.params.at("inv/fc2/w"),
                          encoder.params.at("inv/fc2/b"), &fc2_c);

    double loss = 0.0;
    Tensor g_logits({b, kActionCount});
    for (int i = 0; i < b; ++i) {
        std::vector<double> row(logits.data() + size_t(i) * kActionCount,
                                logits.data() + size_t(i + 1) * kActionCount);
        std::vector<double> lp = log_softmax(row);
        int a = batch.actions[size_t(i)];
        loss -= lp[size_t(a)];
        for (int k = 0; k < kActionCount; ++k)
            g_logits[i * kActionCount + k] =
                (std::exp(lp[size_t(k)]) - (k == a ? 1.0 : 0.0)) / b;
    }
    loss /= b;

    ParamMap grads;
    Tensor g_h1r, g_h1, g_cat;
    dense_backward(fc2_c, encoder.params.at("inv/fc2/w"), g_logits, g_h1r,
                   grads["inv/fc2/w"], grads["inv/fc2/b"]);
    relu_backward(relu_c, g_h1r, g_h1);
    dense_backward(fc1_c, encoder.params.at("inv/fc1/w"), g_h1, g_cat,
                   grads["inv/fc1/w"], grads["inv/fc1/b"]);

    Tensor g_feats({2 * b, d});
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < d; ++j) {
            g_feats[i * d + j] = g_cat[i * 2 * d + j];
            g_feats[(b + i) * d + j] = g_cat[i * 2 * d + d + j];
        }
    trunk_backward(encoder, trunk, g_feats, grads);

    adam_step(encoder.params, grads, encoder.idf_adam, lr);
    return loss;
}

int idf_predict(const Encoder& encoder, const Observation& s,
                const Observation& s_next) {
    if (encoder.kind != EncoderKind::IDF)
        throw WrongKind("idf_predict requires an IDF encoder");
    std::vector<double> a = encode(encoder, s);
    std::vector<double> b = encode(encoder, s_next);
    int d = encoder.opt.feature_dim;
    Tensor cat({1, 2 * d});
    std::copy(a.begin(), a.end(), cat.data());
    std::copy(b.begin(), b.end(), cat.data() + d);
    Tensor h1 = dense(cat, encoder.params.at("inv/fc1/w"),
                      encoder.params.at("inv/fc1/b"), nullptr);
    Tensor h1r = relu(h1, nullptr);
    Tensor logits = dense(h1r, encoder.params.at("inv/fc2/w"),
                          encoder.params.at("inv/fc2/b"), nullptr);
    int best = 0;
    for (int k = 1; k < kActionCount; ++k)
        if (logits[k] > logits[best]) best = k;
    return best;
}

double online_vae_update(Encoder& encoder,
                         const std::vector<const Observation*>& batch, double lr,
                         Rng& rng) {
    if (encoder.kind != EncoderKind::OnlineVAE)
        throw WrongKind("online_vae_update requires an OnlineVAE encoder");
    vae::ElboParts parts =
        vae::vae_update_step(encoder.vae, batch, encoder.vae_adam, lr, rng);
    return parts.total;
}

uint64_t encoder_checksum(const Encoder& encoder) {
    switch (encoder.kind) {
    case EncoderKind::Pixels: return 0;
    case EncoderKind::RandomFeatures:
    case EncoderKind::IDF: return params_checksum(encoder.params);
    case EncoderKind::OnlineVAE:
    case EncoderKind::FixedVAE: return vae::vae_checksum(encoder.vae);
    }
    return 0;
}

double probe_drift(const Encoder& before, const Encoder& after,
                   const std::vector<Observation>& probes) {
    if (probes.empty()) throw Error("probe_drift: empty probe set");
    double total = 0.0;
    for (const Observation& o : probes) {
        std::vector<double> a = encode(before, o);
        std::vector<double> b = encode(after, o);
        if (a.size() != b.size()) throw ShapeMismatch("probe_drift: dim mismatch");
        double sq = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            double dd = a[i] - b[i];
            sq += dd * dd;
        }
        total += std::sqrt(sq);
    }
    return total / double(probes.size());
}

} // namespace curio::enc
