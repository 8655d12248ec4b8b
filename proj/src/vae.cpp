#include "curio/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace curio::vae {

using namespace curio::num;

namespace {

constexpr double kLogVarClamp = 10.0;

// Decoder layout derived from the encoder's size sequence so the mirror is
// exact for any input resolution the conv arithmetic accepts.
struct DecoderPlan {
    std::vector<std::pair<int, int>> targets; // post-upsample size per block
    std::vector<int> channels;                // output channels per block
    int start_h = 0, start_w = 0;             // dec_fc reshape size
};

DecoderPlan decoder_plan(const ConvStackSpec& enc, int height, int width) {
    auto sizes = conv_stack_sizes(enc, height, width);
    DecoderPlan plan;
    plan.start_h = sizes.back().first;
    plan.start_w = sizes.back().second;
    size_t n = enc.channels.size();
    for (size_t i = 0; i + 1 < n; ++i) {
        plan.targets.push_back(sizes[n - 2 - i]);
        plan.channels.push_back(enc.channels[n - 2 - i]);
    }
    plan.targets.emplace_back(height, width);
    plan.channels.push_back(enc.in_channels);
    return plan;
}

int flat_dim(const VaeModel& m) {
    return conv_stack_out_dim(m.enc_spec, m.height, m.width);
}

Tensor batch_to_chw(const std::vector<const Observation*>& batch, int height,
                    int width) {
    int b = int(batch.size());
    Tensor x({b, 3, height, width});
    for (int i = 0; i < b; ++i) {
        const Observation& o = *batch[size_t(i)];
        if (o.height != height || o.width != width)
            throw ShapeMismatch("observation resolution does not match model");
        double* dst = x.data() + size_t(i) * 3 * size_t(height) * size_t(width);
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    dst[(ch * height + r) * width + c] =
                        double(o.pixels[size_t((r * width + c) * 3 + ch)]);
    }
    return x;
}

struct ForwardCache {
    Tensor x;           // [B,3,H,W]
    ConvStackCache enc;
    Tensor flat;        // [B,F]
    DenseCache mu_c, lv_c, fc_c;
    Tensor mu, lv_raw, lv, eps, z; // [B,L]
    ReluCache fc_relu;
    std::vector<Conv2dCache> dec_conv;
    std::vector<ReluCache> dec_relu;
    std::vector<std::pair<int, int>> pre_up_sizes; // input size of each upsample
    Tensor xhat; // [B,3,H,W], post-sigmoid
};

// Full batched forward; eps must be [B, L].
void forward_pass(const VaeModel& m, const Tensor& x, const Tensor& eps,
                  ForwardCache& fc) {
    int b = x.dim(0);
    fc.x = x;
    fc.eps = eps;

    Tensor act = conv_stack_forward(m.params, "enc/", m.enc_spec, x, &fc.enc);
    fc.flat = reshape(act, {b, flat_dim(m)});
    fc.mu = dense(fc.flat, m.params.at("enc/mu/w"), m.params.at("enc/mu/b"),
                  &fc.mu_c);
    fc.lv_raw = dense(fc.flat, m.params.at("enc/logvar/w"),
                      m.params.at("enc/logvar/b"), &fc.lv_c);
    fc.lv = fc.lv_raw;
    for (int i = 0; i < fc.lv.size(); ++i)
        fc.lv[i] = std::clamp(fc.lv[i], -kLogVarClamp, kLogVarClamp);

    fc.z = Tensor({b, m.latent_dim});
    for (int i = 0; i < fc.z.size(); ++i)
        fc.z[i] = fc.mu[i] + std::exp(0.5 * fc.lv[i]) * eps[i];

    Tensor d0 = dense(fc.z, m.params.at("dec/fc/w"), m.params.at("dec/fc/b"),
                      &fc.fc_c);
    Tensor d0r = relu(d0, &fc.fc_relu);

    DecoderPlan plan = decoder_plan(m.enc_spec, m.height, m.width);
    Tensor cur = reshape(d0r, {b, m.enc_spec.channels.back(), plan.start_h,
                               plan.start_w});
    fc.dec_conv.resize(plan.targets.size());
    fc.dec_relu.resize(plan.targets.size());
    fc.pre_up_sizes.resize(plan.targets.size());
    for (size_t i = 0; i < plan.targets.size(); ++i) {
        fc.pre_up_sizes[i] = {cur.dim(2), cur.dim(3)};
        cur = upsample_nearest(cur, plan.targets[i].first, plan.targets[i].second);
        cur = conv2d(cur, m.params.at(conv_name("dec/", i, "w")),
                     m.params.at(conv_name("dec/", i, "b")), 1, 1,
                     &fc.dec_conv[i]);
        if (i + 1 < plan.targets.size()) cur = relu(cur, &fc.dec_relu[i]);
    }
    fc.xhat = cur;
    for (int i = 0; i < fc.xhat.size(); ++i)
        fc.xhat[i] = 1.0 / (1.0 + std::exp(-fc.xhat[i]));
}

ElboParts elbo_from_cache(const VaeModel& m, const ForwardCache& fc) {
    int b = fc.x.dim(0);
    double recon = 0.0;
    for (int i = 0; i < fc.x.size(); ++i) {
        double d = fc.xhat[i] - fc.x[i];
        recon += d * d;
    }
    recon /= b;
    double kl = 0.0;
    for (int i = 0; i < fc.mu.size(); ++i)
        kl += 0.5 * (fc.mu[i] * fc.mu[i] + std::exp(fc.lv[i]) - 1.0 - fc.lv[i]);
    kl /= b;
    ElboParts parts;
    parts.recon = recon;
    parts.kl = kl;
    parts.total = recon + m.beta * kl;
    return parts;
}

void backward_pass(const VaeModel& m, const ForwardCache& fc, ParamMap& grads) {
    int b = fc.x.dim(0);
    DecoderPlan plan = decoder_plan(m.enc_spec, m.height, m.width);

    // d total / d xhat, then through the sigmoid.
    Tensor g(fc.xhat.shape());
    for (int i = 0; i < g.size(); ++i) {
        double s = fc.xhat[i];
        g[i] = 2.0 * (s - fc.x[i]) / b * s * (1.0 - s);
    }

    for (size_t i = plan.targets.size(); i-- > 0;) {
        if (i + 1 < plan.targets.size()) {
            Tensor g_pre;
            relu_backward(fc.dec_relu[i], g, g_pre);
            g = std::move(g_pre);
        }
        Tensor g_up;
        conv2d_backward(fc.dec_conv[i], m.params.at(conv_name("dec/", i, "w")), g,
                        g_up, grads[conv_name("dec/", i, "w")],
                        grads[conv_name("dec/", i, "b")]);
        Tensor g_down;
        upsample_nearest_backward(g_up, fc.pre_up_sizes[i].first,
                                  fc.pre_up_sizes[i].second, g_down);
        g = std::move(g_down);
    }

    Tensor g_flat_dec = reshape(std::move(g), {b, flat_dim(m)});
    Tensor g_fc_pre;
    relu_backward(fc.fc_relu, g_flat_dec, g_fc_pre);
    Tensor g_z;
    dense_backward(fc.fc_c, m.params.at("dec/fc/w"), g_fc_pre, g_z,
                   grads["dec/fc/w"], grads["dec/fc/b"]);

    // z = mu + exp(lv/2) * eps, plus the beta-weighted KL terms.
    Tensor g_mu({b, m.latent_dim}), g_lv({b, m.latent_dim});
    for (int i = 0; i < g_z.size(); ++i) {
        g_mu[i] = g_z[i] + m.beta * fc.mu[i] / b;
        double g_lv_val = g_z[i] * fc.eps[i] * 0.5 * std::exp(0.5 * fc.lv[i]) +
                          m.beta * 0.5 * (std::exp(fc.lv[i]) - 1.0) / b;
        // Clamped units pass no gradient.
        bool clamped = fc.lv_raw[i] <= -kLogVarClamp || fc.lv_raw[i] >= kLogVarClamp;
        g_lv[i] = clamped ? 0.0 : g_lv_val;
    }

    Tensor g_flat_mu, g_flat_lv;
    dense_backward(fc.mu_c, m.params.at("enc/mu/w"), g_mu, g_flat_mu,
                   grads["enc/mu/w"], grads["enc/mu/b"]);
    dense_backward(fc.lv_c, m.params.at("enc/logvar/w"), g_lv, g_flat_lv,
                   grads["enc/logvar/w"], grads["enc/logvar/b"]);
    for (int i = 0; i < g_flat_mu.size(); ++i) g_flat_mu[i] += g_flat_lv[i];

    auto sizes = conv_stack_sizes(m.enc_spec, m.height, m.width);
    Tensor g_act = reshape(std::move(g_flat_mu),
                           {b, m.enc_spec.channels.back(), sizes.back().first,
                            sizes.back().second});
    Tensor g_input;
    conv_stack_backward(m.params, "enc/", m.enc_spec, fc.enc, g_act, g_input,
                        grads);
}

} // namespace

VaeModel build_vae(const VaeConfig& cfg, Rng& rng) {
    if (cfg.latent_dim < 1) throw Error("latent_dim must be >= 1");
    if (cfg.beta < 1.0) throw Error("beta must be >= 1");
    VaeModel m;
    m.latent_dim = cfg.latent_dim;
    m.beta = cfg.beta;
    m.height = cfg.height;
    m.width = cfg.width;

    conv_stack_init(m.params, "enc/", m.enc_spec, rng);
    int f = flat_dim(m);
    m.params["enc/mu/w"] = he_init({cfg.latent_dim, f}, f, rng);
    m.params["enc/mu/b"] = Tensor({cfg.latent_dim});
    m.params["enc/logvar/w"] = he_init({cfg.latent_dim, f}, f, rng);
    m.params["enc/logvar/b"] = Tensor({cfg.latent_dim});
    m.params["dec/fc/w"] = he_init({f, cfg.latent_dim}, cfg.latent_dim, rng);
    m.params["dec/fc/b"] = Tensor({f});

    DecoderPlan plan = decoder_plan(m.enc_spec, m.height, m.width);
    int in_c = m.enc_spec.channels.back();
    for (size_t i = 0; i < plan.channels.size(); ++i) {
        int out_c = plan.channels[i];
        int fan_in = in_c * 9;
        m.params[conv_name("dec/", i, "w")] =
            he_init({out_c, in_c, 3, 3}, fan_in, rng);
        m.params[conv_name("dec/", i, "b")] = Tensor({out_c});
        in_c = out_c;
    }
    return m;
}

ArenaSpec with_random_spawn(ArenaSpec spec) {
    spec.spawn.random = true;
    spec.spawn.x = 0.0;
    spec.spawn.y = 0.0;
    spec.spawn.w = spec.width;
    spec.spawn.h = spec.height;
    spec.spawn.heading_deg = 0.0;
    return spec;
}

ObsLabel label_for_pose(const ArenaSpec& spec, const EpisodeState& state,
                        int columns) {
    std::vector<ColumnHit> hits = raycast_columns(spec, state, columns, {});
    int goal_cols = 0, trans_cols = 0;
    for (const ColumnHit& h : hits) {
        if (h.surface == SurfaceKind::Goal) ++goal_cols;
        if (!h.transparent_ts.empty()) ++trans_cols;
    }
    if (goal_cols >= std::max(1, columns / 32)) return ObsLabel::GoalVisible;
    if (trans_cols > int(0.3 * columns)) return ObsLabel::TransparentDominant;
    return ObsLabel::OuterWallOnly;
}

ObservationDataset collect_observation_dataset(const std::vector<ArenaSpec>& specs,
                                               int n, int height, int width,
                                               Rng& rng) {
    if (specs.empty()) throw DatasetError("no specs to sample from");
    if (n < 1) throw DatasetError("dataset size must be >= 1");
    for (const ArenaSpec& s : specs)
        if (!s.spawn.random)
            throw DatasetError("dataset specs must use random spawns");

    ObservationDataset ds;
    ds.height = height;
    ds.width = width;
    ds.observations.reserve(size_t(n));
    ds.labels.reserve(size_t(n));
    for (int k = 0; k < n; ++k) {
        const ArenaSpec& spec = specs[size_t(rng.uniform_int(int(specs.size())))];
        EpisodeState st = spawn_episode(spec, rng);
        ds.observations.push_back(render(spec, st, height, width));
        ds.labels.push_back(uint8_t(label_for_pose(spec, st, width)));
    }
    return ds;
}

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(char(v & 0xFF));
    out.push_back(char((v >> 8) & 0xFF));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

} // namespace

void save_dataset(const std::string& path, const ObservationDataset& ds) {
    std::string out;
    out += "OBSD";
    put_u16(out, 1);
    put_u32(out, uint32_t(ds.count()));
    put_u16(out, uint16_t(ds.height));
    put_u16(out, uint16_t(ds.width));
    out.push_back(char(ds.channels));
    out.push_back(char(ds.labeled() ? 1 : 0));
    for (int i = 0; i < ds.count(); ++i) {
        if (ds.labeled()) out.push_back(char(ds.labels[size_t(i)]));
        const Observation& o = ds.observations[size_t(i)];
        for (float v : o.pixels) {
            double c = std::clamp(double(v), 0.0, 1.0);
            out.push_back(char(uint8_t(std::lround(c * 255.0))));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DatasetError("cannot open for write: " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw DatasetError("write failed: " + path);
}

ObservationDataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DatasetError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > buf.size()) throw DatasetError("truncated dataset file");
    };
    auto u8 = [&] {
        need(1);
        return uint8_t(buf[pos++]);
    };
    auto u16 = [&] {
        need(2);
        uint16_t v = uint16_t(uint8_t(buf[pos])) |
                     uint16_t(uint16_t(uint8_t(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    };
    auto u32 = [&] {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    };
    need(4);
    if (buf.substr(0, 4) != "OBSD") throw DatasetError("bad magic in " + path);
    pos = 4;
    if (u16() != 1) throw DatasetError("unsupported dataset version");
    uint32_t count = u32();
    ObservationDataset ds;
    ds.height = u16();
    ds.width = u16();
    ds.channels = u8();
    if (ds.channels != 3) throw DatasetError("unsupported channel count");
    bool labeled = u8() != 0;
    size_t per = size_t(ds.height) * size_t(ds.width) * 3;
    for (uint32_t i = 0; i < count; ++i) {
        if (labeled) ds.labels.push_back(u8());
        need(per);
        Observation o;
        o.height = ds.height;
        o.width = ds.width;
        o.pixels.resize(per);
        for (size_t k = 0; k < per; ++k)
            o.pixels[k] = float(uint8_t(buf[pos + k])) / 255.0f;
        pos += per;
        ds.observations.push_back(std::move(o));
    }
    return ds;
}

LatentCode vae_encode(const VaeModel& model, const Observation& obs) {
    return vae_encode_batch(model, {&obs})[0];
}

std::vector<LatentCode> vae_encode_batch(
    const VaeModel& model, const std::vector<const Observation*>& obs) {
    if (obs.empty()) throw ShapeMismatch("vae_encode_batch: empty batch");
    const int b = int(obs.size());
    Tensor x = batch_to_chw(obs, model.height, model.width);

    Tensor act = conv_stack_forward(model.params, "enc/", model.enc_spec, x, nullptr);
    Tensor flat = reshape(std::move(act), {b, flat_dim(model)});
    Tensor mu = dense(flat, model.params.at("enc/mu/w"), model.params.at("enc/mu/b"));
    Tensor lv = dense(flat, model.params.at("enc/logvar/w"),
                      model.params.at("enc/logvar/b"));
    const int d = model.latent_dim;
    std::vector<LatentCode> out(obs.size());
    for (int i = 0; i < b; ++i) {
        LatentCode& code = out[size_t(i)];
        code.mu.assign(mu.data() + size_t(i) * size_t(d),
                       mu.data() + size_t(i + 1) * size_t(d));
        code.log_var.resize(size_t(d));
        for (int j = 0; j < d; ++j)
            code.log_var[size_t(j)] =
                std::clamp(lv[i * d + j], -kLogVarClamp, kLogVarClamp);
    }
    return out;
}

LatentCode reparameterize(const LatentCode& code, Rng& rng) {
    std::vector<double> eps(code.mu.size());
    for (double& e : eps) e = rng.normal();
    return reparameterize_with_eps(code, eps);
}

LatentCode reparameterize_with_eps(const LatentCode& code,
                                   const std::vector<double>& eps) {
    if (eps.size() != code.mu.size())
        throw ShapeMismatch("reparameterize: eps length mismatch");
    LatentCode out = code;
    out.z.resize(code.mu.size());
    for (size_t i = 0; i < code.mu.size(); ++i)
        out.z[i] = code.mu[i] + std::exp(0.5 * code.log_var[i]) * eps[i];
    return out;
}

Observation vae_decode(const VaeModel& model, const std::vector<double>& z) {
    if (int(z.size()) != model.latent_dim)
        throw ShapeMismatch("vae_decode: z length != latent_dim");
    Tensor zt = Tensor::from({1, model.latent_dim}, z);
    Tensor d0 = dense(zt, model.params.at("dec/fc/w"), model.params.at("dec/fc/b"));
    Tensor d0r = relu(d0);
    DecoderPlan plan = decoder_plan(model.enc_spec, model.height, model.width);
    Tensor cur = reshape(std::move(d0r), {1, model.enc_spec.channels.back(),
                                          plan.start_h, plan.start_w});
    for (size_t i = 0; i < plan.targets.size(); ++i) {
        cur = upsample_nearest(cur, plan.targets[i].first, plan.targets[i].second);
        cur = conv2d(cur, model.params.at(conv_name("dec/", i, "w")),
                     model.params.at(conv_name("dec/", i, "b")), 1, 1);
        if (i + 1 < plan.targets.size()) cur = relu(cur);
    }
    Observation out;
    out.height = model.height;
    out.width = model.width;
    out.pixels.resize(size_t(model.height) * size_t(model.width) * 3);
    // CHW double logits -> HWC float pixels through the sigmoid.
    for (int r = 0; r < model.height; ++r)
        for (int c = 0; c < model.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                double v = cur[(ch * model.height + r) * model.width + c];
                out.pixels[size_t((r * model.width + c) * 3 + ch)] =
                    float(1.0 / (1.0 + std::exp(-v)));
            }
    return out;
}

double kl_diag_gaussian(const std::vector<double>& mu,
                        const std::vector<double>& log_var) {
    if (mu.size() != log_var.size())
        throw ShapeMismatch("kl_diag_gaussian: length mismatch");
    double kl = 0.0;
    for (size_t i = 0; i < mu.size(); ++i)
        kl += 0.5 * (mu[i] * mu[i] + std::exp(log_var[i]) - 1.0 - log_var[i]);
    return kl;
}

ElboParts elbo_loss(const VaeModel& model, const Observation& obs, Rng& rng) {
    std::vector<const Observation*> batch = {&obs};
    return vae_elbo_batch(model, batch, rng, nullptr);
}

ElboParts vae_elbo_batch(const VaeModel& model,
                         const std::vector<const Observation*>& batch, Rng& rng,
                         ParamMap* grads) {
    Tensor eps({int(batch.size()), model.latent_dim});
    for (int i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    return vae_elbo_batch_eps(model, batch, eps, grads);
}

ElboParts vae_elbo_batch_eps(const VaeModel& model,
                             const std::vector<const Observation*>& batch,
                             const Tensor& eps, ParamMap* grads) {
    if (batch.empty()) throw DatasetError("empty batch");
    if (grads && model.frozen)
        throw FrozenViolation("gradient request on a frozen model");
    Tensor x = batch_to_chw(batch, model.height, model.width);
    eps.require_shape({x.dim(0), model.latent_dim}, "vae eps");

    ForwardCache fc;
    forward_pass(model, x, eps, fc);
    ElboParts parts = elbo_from_cache(model, fc);
    if (grads) backward_pass(model, fc, *grads);
    return parts;
}

ElboParts vae_update_step(VaeModel& model,
                          const std::vector<const Observation*>& batch,
                          num::AdamState& adam, double lr, Rng& rng) {
    if (model.frozen) throw FrozenViolation("update on a frozen model");
    ParamMap grads;
    ElboParts parts = vae_elbo_batch(model, batch, rng, &grads);
    adam_step(model.params, grads, adam, lr);
    return parts;
}

VaeModel train_vae_offline(const ObservationDataset& ds,
                           const TrainVaeOptions& opt, Rng& rng,
                           std::vector<EpochLog>* log) {
    if (ds.count() < 1) throw DatasetError("empty dataset");
    VaeConfig cfg;
    cfg.latent_dim = opt.latent_dim;
    cfg.beta = opt.beta;
    cfg.height = ds.height;
    cfg.width = ds.width;
    VaeModel model = build_vae(cfg, rng);

    AdamState adam;
    std::vector<int> order(size_t(ds.count()));
    for (int i = 0; i < ds.count(); ++i) order[size_t(i)] = i;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (int i = ds.count() - 1; i > 0; --i)
            std::swap(order[size_t(i)], order[size_t(rng.uniform_int(i + 1))]);

        double recon_sum = 0.0, kl_sum = 0.0;
        int items = 0;
        for (int start = 0; start < ds.count(); start += opt.batch) {
            int end = std::min(start + opt.batch, ds.count());
            std::vector<const Observation*> batch;
            for (int i = start; i < end; ++i)
                batch.push_back(&ds.observations[size_t(order[size_t(i)])]);
            ElboParts parts = vae_update_step(model, batch, adam, opt.lr, rng);
            recon_sum += parts.recon * (end - start);
            kl_sum += parts.kl * (end - start);
            items += end - start;
        }
        if (log) log->push_back({recon_sum / items, kl_sum / items});
    }
    model.frozen = true;
    return model;
}

double reconstruction_mse(const VaeModel& model, const ObservationDataset& ds) {
    if (ds.count() < 1) throw DatasetError("empty dataset");
    double total = 0.0;
    for (const Observation& o : ds.observations) {
        LatentCode code = vae_encode(model, o);
        Observation rec = vae_decode(model, code.mu);
        double s = 0.0;
        for (size_t i = 0; i < o.pixels.size(); ++i) {
            double d = double(rec.pixels[i]) - double(o.pixels[i]);
            s += d * d;
        }
        total += s;
    }
    return total / ds.count();
}

uint64_t vae_checksum(const VaeModel& model) {
    return params_checksum(model.params);
}

void save_vae(const std::string& path, const VaeModel& model) {
    ParamMap out = model.params;
    out["meta"] = Tensor::from(
        {5}, {double(model.latent_dim), model.beta, double(model.height),
              double(model.width), model.frozen ? 1.0 : 0.0});
    save_checkpoint(path, out);
}

VaeModel load_vae(const std::string& path) {
    ParamMap in = load_checkpoint(path);
    auto it = in.find("meta");
    if (it == in.end())
        throw CheckpointError("not a vae checkpoint (missing meta): " + path);
    const Tensor& meta = it->second;
    meta.require_shape({5}, "vae meta");
    VaeModel m;
    m.latent_dim = int(meta[0]);
    m.beta = meta[1];
    m.height = int(meta[2]);
    m.width = int(meta[3]);
    m.frozen = meta[4] != 0.0;
    in.erase(it);
    m.params = std::move(in);
    return m;
}

} // namespace curio::vae
