#pragma once

#include "curio/curriculum.hpp"
#include "curio/encoders.hpp"
#include "curio/icm.hpp"
#include "curio/vae.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace curio::harness {

class ParseError : public Error {
public:
    using Error::Error;
};

class UnknownKey : public Error {
public:
    using Error::Error;
};

class InvalidValue : public Error {
public:
    using Error::Error;
};

class DegenerateCovariance : public Error {
public:
    using Error::Error;
};

class EmptyLog : public Error {
public:
    using Error::Error;
};

// Flat key=value experiment file. Optional [section] headers are allowed for
// organization but carry no meaning; keys live in one namespace and may
// appear once each.
struct ExperimentConfig {
    uint64_t seed = 0; // required in the file
    enc::EncoderKind encoder = enc::EncoderKind::Pixels;
    double lambda_c = 0.01; // phase 2 curiosity weight; phase 1 is always 0
    int resolution = 32;
    std::string curriculum = "xmc"; // idc | xmc | file:<path>
    long long idc_budget_steps = 300000;  // paper scale: 1000000
    long long xmc_budget_steps = 600000;  // paper scale: 2500000
    std::string vae_checkpoint;           // required key for fixed_vae
    std::string output_dir = "runs";
    bool deterministic = true;
    bool normalize_intrinsic = false;
    std::string dataset = "observations.obsd";
    int dataset_size = 5000;
    int vae_epochs = 30;
    double vae_beta = 10.0;
    int vae_latent = 32;
    double vae_lr = 1e-3;
    int eval_episodes = 10;
};

ExperimentConfig load_config(const std::string& path);

// One row per PPO update.
struct CsvRow {
    long long step = 0;
    int lesson = 0;
    int cycle = 0;
    double ep_return_ext_mean = 0;
    double ep_return_int_mean = 0;
    double loss_policy = 0;
    double loss_value = 0;
    double loss_forward = 0;
    double loss_vae_online = 0;
    double entropy = 0;
    double lr = 0;
    double lesson_pass_rate = 0;
};

struct PhaseSummary {
    std::string name;
    int lesson_count = 0;
    bool completed = false;          // FixedCycles curricula only
    long long steps_to_complete = -1; // phase step of the final advance
    std::vector<long long> cycle_steps; // phase step at which each cycle closed
    int final_lesson_index = 0;
    int final_cycle_index = 0;
    int final_flat_index = 0; // cycle * lesson_count + lesson
    long long steps_used = 0;
};

struct RunLog {
    std::vector<CsvRow> rows;
    std::vector<PhaseSummary> phases;
    double training_score = 0;
    double test_score = 0;
    uint64_t encoder_checksum_start = 0;
    uint64_t encoder_checksum_end = 0;
    uint64_t vae_checkpoint_checksum = 0; // fixed_vae runs
    double online_probe_drift = 0;        // online_vae runs
    long long total_env_steps = 0;
};

// Phase 1: detour curriculum at lambda_c = 0 for two cycles. Phase 2 (when
// curriculum = xmc): arm-maze curriculum at the configured lambda_c until
// the step budget runs out. Stability of frozen encoders and drift of the
// online one are asserted before returning. Artifacts (CSV, summary JSON,
// checkpoints) land in output_dir.
RunLog run_experiment(const ExperimentConfig& cfg);

void write_csv(const RunLog& log, const std::string& path);
void write_summary_json(const RunLog& log, const ExperimentConfig& cfg,
                        const std::string& path);
// Rows only; summary fields stay default.
RunLog load_runlog_csv(const std::string& path);

struct LatentAnalysis {
    std::vector<std::array<double, 2>> projection; // PCA top-2 coordinates
    double purity = 0.0; // mean fraction of k-NN sharing the item's label
};

// Feature-space core: PCA projection (power iteration, sign fixed so the
// largest-magnitude component of each axis is positive) plus k=10 nearest
// neighbor label purity.
LatentAnalysis analyze_features(const std::vector<std::vector<double>>& features,
                                const std::vector<uint8_t>& labels);

// Encodes the dataset to mu and analyzes. Needs labels and >= 10 items.
LatentAnalysis latent_analysis(const vae::VaeModel& model,
                               const vae::ObservationDataset& ds);

// Lesson-progress curves. One SVG per run; with two or more runs, also a
// combined plot of the mean with a 90% Gaussian confidence band
// (mean +- 1.645 * sigma / sqrt(n)). Returns the written paths.
std::vector<std::string> emit_plots(const std::vector<const RunLog*>& logs,
                                    const std::string& out_dir);

// Top-down debug view of an arena: walls, goals, spawn area.
void render_arena_svg(const ArenaSpec& spec, const std::string& out_path);

} // namespace curio::harness
