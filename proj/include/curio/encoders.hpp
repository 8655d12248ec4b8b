#pragma once

#include "curio/arena.hpp"
#include "curio/convstack.hpp"
#include "curio/numcore.hpp"
#include "curio/vae.hpp"

#include <string>
#include <vector>

namespace curio::enc {

class MissingModel : public Error {
public:
    using Error::Error;
};

class ResolutionMismatch : public Error {
public:
    using Error::Error;
};

class WrongKind : public Error {
public:
    using Error::Error;
};

enum class EncoderKind { Pixels, RandomFeatures, IDF, OnlineVAE, FixedVAE };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string to_string(EncoderKind kind);

struct EncoderOptions {
    int height = 32, width = 32;
    int feature_dim = 32;    // ignored by Pixels
    int idf_hidden = 128;    // inverse-dynamics head width
};

// One interface over the five feature maps. RandomFeatures and FixedVAE are
// immutable after construction; IDF trains via idf_update and OnlineVAE via
// online_vae_update.
struct Encoder {
    EncoderKind kind = EncoderKind::Pixels;
    EncoderOptions opt;
    int output_dim = 0;
    bool trainable = false;

    num::ParamMap params;        // conv trunk + heads (RF / IDF)
    num::ConvStackSpec conv;
    vae::VaeModel vae;           // OnlineVAE (unfrozen) / FixedVAE (frozen)
    num::AdamState idf_adam;
    num::AdamState vae_adam;
};

// model: required frozen for FixedVAE; optional warm start for OnlineVAE
// (copied and unfrozen), which otherwise initializes fresh from rng.
Encoder build_encoder(EncoderKind kind, const EncoderOptions& opt, Rng& rng,
                      const vae::VaeModel* model = nullptr);

std::vector<double> encode(const Encoder& encoder, const Observation& obs);

// Batched encode; row i matches encode(encoder, *obs[i]) exactly.
std::vector<std::vector<double>> encode_batch(
    const Encoder& encoder, const std::vector<const Observation*>& obs);

struct IdfBatch {
    std::vector<const Observation*> s;
    std::vector<const Observation*> s_next;
    std::vector<int> actions; // indices in [0, 9)
};

// One cross-entropy Adam step on the inverse-dynamics objective; gradients
// flow through both feature towers into the shared trunk. Returns the batch
// loss. IDF only.
double idf_update(Encoder& encoder, const IdfBatch& batch, double lr);

// Argmax action under the inverse head for a transition. IDF only.
int idf_predict(const Encoder& encoder, const Observation& s,
                const Observation& s_next);

// One ELBO Adam step on the freshest observations. OnlineVAE only.
double online_vae_update(Encoder& encoder,
                         const std::vector<const Observation*>& batch, double lr,
                         Rng& rng);

// Covers whichever parameters the kind owns (0 for Pixels, which has none).
uint64_t encoder_checksum(const Encoder& encoder);

// Mean L2 distance between the two encoders' features over a probe set; the
// operational stability measure.
double probe_drift(const Encoder& before, const Encoder& after,
                   const std::vector<Observation>& probes);

} // namespace curio::enc
