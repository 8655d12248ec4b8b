#pragma once

#include "curio/arena.hpp"

namespace curio {

class IndexOutOfRange : public Error {
public:
    using Error::Error;
};

// Initial Detour Curriculum analogue: basic navigation lessons of
// nondecreasing difficulty. Deterministic per index.
struct IdcOptions {
    int lesson_count = 12; // scaled-down default; configurable up to 40
};

ArenaSpec gen_idc_lesson(int index, const IdcOptions& opt = {});

// X-Maze Curriculum analogue: four transparent arms around the center,
// agent and goal in different quadrants. The rng draws the per-episode arm
// length inside the lesson's band and the quadrant assignment; spawn
// position and heading randomize via the spec's random spawn region.
struct XmcOptions {
    int lesson_count = 6; // configurable up to 18
};

// Arm length band for a lesson; bands of successive lessons are disjoint
// and increasing.
struct ArmBand {
    double lo = 0, hi = 0;
};

ArmBand xmc_arm_band(int index, const XmcOptions& opt = {});

ArenaSpec gen_xmc_lesson(int index, Rng& rng, const XmcOptions& opt = {});

// Held-out evaluation arenas: 8 detour families x 3 size variants, disjoint
// from everything the training generators emit. At least two families place
// opaque walls between spawn and goal.
std::vector<ArenaSpec> gen_test_suite();

} // namespace curio
