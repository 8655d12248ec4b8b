#pragma once

#include "curio/arena.hpp"
#include "curio/convstack.hpp"
#include "curio/numcore.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace curio::vae {

using num::ParamMap;
using num::Tensor;

class FrozenViolation : public Error {
public:
    using Error::Error;
};

class DatasetError : public Error {
public:
    using Error::Error;
};

// Coarse content category of an observation, assigned by raycast heuristics.
// Used for latent-space purity analysis, not by any training loss.
enum class ObsLabel : uint8_t {
    OuterWallOnly = 0,
    TransparentDominant = 1,
    GoalVisible = 2,
};
inline constexpr int kLabelCount = 3;

struct ObservationDataset {
    int height = 0, width = 0, channels = 3;
    std::vector<Observation> observations;
    std::vector<uint8_t> labels; // empty when unlabeled, else one per item

    int count() const { return int(observations.size()); }
    bool labeled() const { return !labels.empty(); }
};

struct VaeConfig {
    int latent_dim = 32;
    double beta = 10.0;
    int height = 32, width = 32;
};

struct VaeModel {
    ParamMap params;
    num::ConvStackSpec enc_spec;
    int latent_dim = 32;
    double beta = 10.0;
    int height = 32, width = 32;
    bool frozen = false;
};

struct LatentCode {
    std::vector<double> mu, log_var, z;
};

struct ElboParts {
    double recon = 0.0, kl = 0.0, total = 0.0;
};

struct EpochLog {
    double recon = 0.0, kl = 0.0;
};

VaeModel build_vae(const VaeConfig& cfg, Rng& rng);

// Replaces the spawn rule with a random region covering the whole arena (used
// when sampling observation datasets from fixed-spawn lessons).
ArenaSpec with_random_spawn(ArenaSpec spec);

ObsLabel label_for_pose(const ArenaSpec& spec, const EpisodeState& state,
                        int columns);

// Draws n observations by repeatedly picking a spec uniformly, spawning at a
// random free pose, and rendering at (height, width). Labels every item.
ObservationDataset collect_observation_dataset(const std::vector<ArenaSpec>& specs,
                                               int n, int height, int width,
                                               Rng& rng);

void save_dataset(const std::string& path, const ObservationDataset& ds);
ObservationDataset load_dataset(const std::string& path);

LatentCode vae_encode(const VaeModel& model, const Observation& obs);
// Batched encode; item i matches vae_encode(model, *obs[i]) exactly.
std::vector<LatentCode> vae_encode_batch(const VaeModel& model,
                                         const std::vector<const Observation*>& obs);
LatentCode reparameterize(const LatentCode& code, Rng& rng);
LatentCode reparameterize_with_eps(const LatentCode& code,
                                   const std::vector<double>& eps);
Observation vae_decode(const VaeModel& model, const std::vector<double>& z);

double kl_diag_gaussian(const std::vector<double>& mu,
                        const std::vector<double>& log_var);

ElboParts elbo_loss(const VaeModel& model, const Observation& obs, Rng& rng);

// One forward/backward over a batch; per-image means. grads may be null for
// evaluation. Throws FrozenViolation when asked for gradients on a frozen
// model.
ElboParts vae_elbo_batch(const VaeModel& model,
                         const std::vector<const Observation*>& batch, Rng& rng,
                         ParamMap* grads);

// Same with caller-supplied reparameterization noise [B, latent_dim]
// (deterministic; used by gradient checks).
ElboParts vae_elbo_batch_eps(const VaeModel& model,
                             const std::vector<const Observation*>& batch,
                             const Tensor& eps, ParamMap* grads);

// One Adam step on a batch; returns the batch ElboParts.
ElboParts vae_update_step(VaeModel& model,
                          const std::vector<const Observation*>& batch,
                          num::AdamState& adam, double lr, Rng& rng);

struct TrainVaeOptions {
    int epochs = 30;
    double beta = 10.0;
    int latent_dim = 32;
    double lr = 1e-3;
    int batch = 64;
};

// Minibatch Adam over the dataset; returns a frozen model.
VaeModel train_vae_offline(const ObservationDataset& ds,
                           const TrainVaeOptions& opt, Rng& rng,
                           std::vector<EpochLog>* log = nullptr);

// Mean per-image sum-of-squares reconstruction error (mu-based decode, no
// sampling) over a dataset; the held-out evaluation metric.
double reconstruction_mse(const VaeModel& model, const ObservationDataset& ds);

uint64_t vae_checksum(const VaeModel& model);

void save_vae(const std::string& path, const VaeModel& model);
VaeModel load_vae(const std::string& path);

} // namespace curio::vae
