#pragma once

#include "curio/arena.hpp"
#include "curio/generators.hpp"
#include "curio/ppo.hpp"

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace curio::cur {

class WindowNotFull : public Error {
public:
    using Error::Error;
};

class CurriculumComplete : public Error {
public:
    using Error::Error;
};

// Sum of positive goal values; the best return any episode can collect.
double max_achievable_return(const ArenaSpec& spec);

struct Lesson {
    std::string name;
    std::function<ArenaSpec(Rng&)> make; // fresh spec per episode
    double max_return = 1.0;
    double threshold = 0.9; // rolling mean to beat, strictly
    int eval_window = 10;   // episodes
};

enum class CycleMode {
    FixedCycles, // raise CurriculumComplete after cycles_target full passes
    UntilBudget  // wrap forever; the caller's step budget ends training
};

struct Curriculum {
    std::vector<Lesson> lessons;
    int cycles_target = 2;
    CycleMode mode = CycleMode::FixedCycles;
};

// Lessons from the deterministic detour generator; threshold 0.9x and the
// two-pass cycling rule.
Curriculum make_idc_curriculum(const IdcOptions& opt = {});

// Arm-maze lessons with per-episode randomization; cycles until the budget.
Curriculum make_xmc_curriculum(const XmcOptions& opt = {});

// Loads a lesson list file: one "<dsl-path> <threshold>" pair per line,
// blank lines and #-comments skipped, paths relative to the list file.
// Two fixed cycles, like the detour curriculum.
Curriculum make_file_curriculum(const std::string& list_path);

struct CurriculumState {
    int lesson_index = 0;
    int cycle_index = 0;
    std::deque<double> window; // recent episode returns on the current lesson
    long long total_steps = 0;
    std::map<std::pair<int, int>, long long> cell_steps; // (cycle, lesson)
};

// Bookkeeping: episode returns feed the rolling window, steps feed the
// per-cell attribution.
void record_episode(CurriculumState& state, const Curriculum& cur,
                    double ext_return);
void record_steps(CurriculumState& state, long long steps);

bool window_full(const CurriculumState& state, const Curriculum& cur);

// True iff the rolling mean strictly beats the lesson threshold. Throws
// WindowNotFull until eval_window episodes have been seen.
bool should_advance(const CurriculumState& state, const Curriculum& cur);

// Next lesson, wrapping into the next cycle; clears the window. FixedCycles
// raises CurriculumComplete instead of starting cycle `cycles_target`.
CurriculumState advance(const CurriculumState& state, const Curriculum& cur);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Action source for deterministic evaluation episodes.
class Controller {
public:
    virtual ~Controller() = default;
    virtual void reset() = 0;
    virtual int act(const ArenaSpec& spec, const EpisodeState& state,
                    const Observation& obs) = 0;
};

// Greedy argmax over the policy logits; recurrent state threads per episode.
class PolicyController : public Controller {
public:
    explicit PolicyController(const ppo::PolicyNet& policy);
    void reset() override;
    int act(const ArenaSpec& spec, const EpisodeState& state,
            const Observation& obs) override;

private:
    const ppo::PolicyNet& policy_;
    ppo::RecurrentState rec_;
};

class RandomController : public Controller {
public:
    explicit RandomController(uint64_t seed) : rng_(seed) {}
    void reset() override {}
    int act(const ArenaSpec&, const EpisodeState&, const Observation&) override {
        return rng_.uniform_int(kActionCount);
    }

private:
    Rng rng_;
};

// Privileged controller that steers toward the highest-value live goal,
// detouring around a blocking wall via its corners. No learning; used to
// exercise curriculum machinery and as a scoring sanity hook.
class OracleController : public Controller {
public:
    void reset() override {}
    int act(const ArenaSpec& spec, const EpisodeState& state,
            const Observation& obs) override;
};

struct SpecScore {
    double mean_return = 0.0;
    bool solved = false;
};

struct SuiteScore {
    double fraction_solved = 0.0;
    std::vector<SpecScore> per_spec;
};

// Runs episodes_per_spec evaluation episodes per spec (spawns drawn from
// rng); a spec counts as solved when its mean extrinsic return reaches
// pass_threshold. Rendering resolution must match the policy's input.
SuiteScore score_suite(Controller& controller,
                       const std::vector<ArenaSpec>& specs,
                       int episodes_per_spec, double pass_threshold, Rng& rng,
                       int height = 32, int width = 32);

} // namespace curio::cur
