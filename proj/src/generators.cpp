#include "curio/generators.hpp"

#include <cmath>

namespace curio {

namespace {

GoalSpec green_goal(double x, double y, double radius = 1.0) {
    return GoalSpec{GoalColor::Green, x, y, radius, 1.0};
}

SpawnRule fixed_spawn(double x, double y, double heading_deg) {
    SpawnRule s;
    s.random = false;
    s.x = x;
    s.y = y;
    s.heading_deg = heading_deg;
    return s;
}

SpawnRule random_spawn(double x, double y, double w, double h) {
    SpawnRule s;
    s.random = true;
    s.x = x;
    s.y = y;
    s.w = w;
    s.h = h;
    return s;
}

WallSpec transparent_wall(double x, double y, double w, double h) {
    return WallSpec{WallKind::Transparent, x, y, w, h, {}};
}

WallSpec opaque_wall(double x, double y, double w, double h) {
    return WallSpec{WallKind::Opaque, x, y, w, h, {0.50, 0.38, 0.28}};
}

} // namespace

ArenaSpec gen_idc_lesson(int index, const IdcOptions& opt) {
    const int n = opt.lesson_count;
    if (index < 0 || index >= n)
        throw IndexOutOfRange("IDC lesson index " + std::to_string(index) +
                              " out of range [0, " + std::to_string(n) + ")");

    double f = n > 1 ? double(index) / double(n - 1) : 0.0;
    ArenaSpec spec;
    spec.width = spec.height = 20.0 + std::floor(8.0 * f);
    spec.time_limit = 250;
    const double cx = spec.width / 2.0, cy = spec.height / 2.0;

    if (f < 1.0 / 3.0) {
        // Open arena, goal at a growing bearing off the initial heading.
        double u = f * 3.0;
        double bearing = deg_to_rad(90.0 * u);
        double dist = 5.0 + 3.0 * u;
        spec.goals.push_back(green_goal(cx + dist * std::cos(bearing),
                                        cy + dist * std::sin(bearing)));
        spec.spawn = fixed_spawn(cx, cy, 0.0);
    } else if (f < 2.0 / 3.0) {
        // Goal behind the agent: rotation of more than 90 degrees required.
        double u = (f - 1.0 / 3.0) * 3.0;
        double bearing = deg_to_rad(100.0 + 80.0 * u);
        double dist = 6.0;
        spec.goals.push_back(green_goal(cx + dist * std::cos(bearing),
                                        cy + dist * std::sin(bearing)));
        spec.spawn = fixed_spawn(cx, cy, 0.0);
    } else {
        // A single opaque bar between agent and goal.
        double u = (f - 2.0 / 3.0) * 3.0;
        double half_len = 2.5 + 3.0 * u;
        double wx = spec.width * 0.48;
        spec.walls.push_back(opaque_wall(wx - 0.5, cy - half_len, 1.0, 2.0 * half_len));
        spec.goals.push_back(green_goal(spec.width * 0.72, cy));
        spec.spawn = fixed_spawn(spec.width * 0.25, cy, 0.0);
    }
    validate_arena(spec);
    return spec;
}

ArmBand xmc_arm_band(int index, const XmcOptions& opt) {
    const int n = opt.lesson_count;
    if (index < 0 || index >= n)
        throw IndexOutOfRange("XMC lesson index " + std::to_string(index) +
                              " out of range [0, " + std::to_string(n) + ")");
    double lo = 4.0 + 1.1 * double(index);
    return ArmBand{lo, lo + 0.8};
}

ArenaSpec gen_xmc_lesson(int index, Rng& rng, const XmcOptions& opt) {
    ArmBand band = xmc_arm_band(index, opt);
    double arm = rng.uniform(band.lo, band.hi);

    ArenaSpec spec;
    double c = arm + 3.5; // half arena side; 3.5-unit corridor past arm ends
    spec.width = spec.height = 2.0 * c;
    spec.time_limit = 400 + 30 * index;

    const double t = 0.8; // arm thickness
    spec.walls.push_back(transparent_wall(c - t / 2, c - arm, t, arm)); // down
    spec.walls.push_back(transparent_wall(c - t / 2, c, t, arm));      // up
    spec.walls.push_back(transparent_wall(c - arm, c - t / 2, arm, t)); // left
    spec.walls.push_back(transparent_wall(c, c - t / 2, arm, t));       // right

    // Quadrant sign pairs; spawn and goal land in different quadrants, both
    // within one arm length of the center so no straight line reaches the
    // goal without crossing an arm.
    static const int sx[4] = {-1, 1, -1, 1};
    static const int sy[4] = {-1, -1, 1, 1};
    int q_agent = rng.uniform_int(4);
    int q_goal = (q_agent + 1 + rng.uniform_int(3)) % 4;

    double region_half = 0.2 * arm;
    double rcx = c + sx[q_agent] * 0.45 * arm;
    double rcy = c + sy[q_agent] * 0.45 * arm;
    spec.spawn = random_spawn(rcx - region_half, rcy - region_half,
                              2.0 * region_half, 2.0 * region_half);

    spec.goals.push_back(green_goal(c + sx[q_goal] * 0.5 * arm,
                                    c + sy[q_goal] * 0.5 * arm, 0.7));
    validate_arena(spec);
    return spec;
}

// ---------------------------------------------------------------------------
// Held-out test arenas
// ---------------------------------------------------------------------------

namespace {

// Family 1: plus-maze with opaque arms (wall kind unseen in this position).
ArenaSpec family_opaque_maze(int v) {
    ArenaSpec spec;
    double arm = 5.0 + 1.5 * v;
    double c = arm + 4.0;
    spec.width = spec.height = 2.0 * c;
    spec.time_limit = 500;
    const double t = 0.8;
    spec.walls.push_back(opaque_wall(c - t / 2, c - arm, t, arm));
    spec.walls.push_back(opaque_wall(c - t / 2, c, t, arm));
    spec.walls.push_back(opaque_wall(c - arm, c - t / 2, arm, t));
    spec.walls.push_back(opaque_wall(c, c - t / 2, arm, t));
    spec.spawn = random_spawn(c - 0.65 * arm, c - 0.65 * arm, 0.4 * arm, 0.4 * arm);
    spec.goals.push_back(green_goal(c + 0.5 * arm, c + 0.5 * arm, 0.7));
    return spec;
}

// Family 2: single opaque bar across the line to the goal.
ArenaSpec family_opaque_bar(int v) {
    ArenaSpec spec;
    spec.width = spec.height = 19.0 + 2.0 * v;
    spec.time_limit = 500;
    double cy = spec.height / 2.0;
    double half_len = 3.0 + 0.8 * v;
    spec.walls.push_back(opaque_wall(spec.width * 0.52 - 0.5, cy - half_len,
                                     1.0, 2.0 * half_len));
    spec.goals.push_back(green_goal(spec.width * 0.8, cy));
    spec.spawn = random_spawn(spec.width * 0.12, cy - 2.0, 3.0, 4.0);
    return spec;
}

// Family 3: short transparent bar, shorter than any training arm.
ArenaSpec family_short_transparent(int v) {
    ArenaSpec spec;
    spec.width = spec.height = 17.0 + 2.0 * v;
    spec.time_limit = 500;
    double cy = spec.height / 2.0;
    double half_len = 1.6 + 0.5 * v;
    spec.walls.push_back(transparent_wall(spec.width * 0.5 - 0.4, cy - half_len,
                                          0.8, 2.0 * half_len));
    spec.goals.push_back(green_goal(spec.width * 0.78, cy));
    spec.spawn = random_spawn(spec.width * 0.1, cy - 1.5, 2.5, 3.0);
    return spec;
}

// Family 4: goal in a three-sided transparent pocket opening away from the
// agent.
ArenaSpec family_pocket(int v) {
    ArenaSpec spec;
    spec.width = spec.height = 21.0 + 2.0 * v;
    spec.time_limit = 500;
    double cx = spec.width * 0.62, cy = spec.height / 2.0;
    double half = 2.6 + 0.4 * v;
    const double t = 0.8;
    spec.walls.push_back(transparent_wall(cx - half, cy - half, t, 2.0 * half));
    spec.walls.push_back(transparent_wall(cx - half, cy - half, 2.0 * half, t));
    spec.walls.push_back(transparent_wall(cx - half, cy + half - t, 2.0 * half, t));
    spec.goals.push_back(green_goal(cx, cy, 0.8));
    spec.spawn = random_spawn(spec.width * 0.08, cy - 2.0, 3.0, 4.0);
    return spec;
}

// Family 5: two staggered transparent bars forming a slalom. Both bars
// overlap the midline so the agent has to weave over then under.
ArenaSpec family_slalom(int v) {
    ArenaSpec spec;
    spec.width = spec.height = 22.0 + 2.0 * v;
    spec.time_limit = 500;
    double cy = spec.height / 2.0;
    spec.walls.push_back(transparent_wall(spec.width * 0.38, 0.0, 0.8, cy + 2.0));
    spec.walls.push_back(transparent_wall(spec.width * 0.62, cy - 2.0, 0.8,
                                          spec.height - (cy - 2.0)));
    spec.goals.push_back(green_goal(spec.width * 0.85, cy));
    spec.spawn = random_spawn(spec.width * 0.08, cy - 2.0, 3.0, 4.0);
    return spec;
}

// Family 6: opaque L-shape shielding the goal.
ArenaSpec family_opaque_corner(int v) {
    ArenaSpec spec;
    spec.width = spec.height = 20.0 + 2.0 * v;
    spec.time_limit = 500;
    double gx = spec.width * 0.7, gy = spec.height * 0.66;
    double len = 4.5 + 0.8 * v;
    spec.walls.push_back(opaque_wall(gx - len * 0.7, gy - len * 0.8, 1.0, len));
    spec.walls.push_back(opaque_wall(gx - len * 0.7, gy - len * 0.8, len, 1.0));
    spec.goals.push_back(green_goal(gx, gy));
    spec.spawn = random_spawn(spec.width * 0.1, spec.height * 0.12, 3.0, 3.0);
    return spec;
}

// Family 7: plus-maze with arms beyond the training band, goal in an
// adjacent quadrant.
ArenaSpec family_long_maze(int v) {
    ArenaSpec spec;
    double arm = 11.5 + 1.0 * v;
    double c = arm + 3.5;
    spec.width = spec.height = 2.0 * c;
    spec.time_limit = 600;
    const double t = 0.8;
    spec.walls.push_back(transparent_wall(c - t / 2, c - arm, t, arm));
    spec.walls.push_back(transparent_wall(c - t / 2, c, t, arm));
    spec.walls.push_back(transparent_wall(c - arm, c - t / 2, arm, t));
    spec.walls.push_back(transparent_wall(c, c - t / 2, arm, t));
    spec.spawn = random_spawn(c - 0.65 * arm, c + 0.25 * arm, 0.4 * arm, 0.4 * arm);
    spec.goals.push_back(green_goal(c + 0.5 * arm, c + 0.5 * arm, 0.7));
    return spec;
}

// Family 8: full-width transparent wall with a gap far off the goal line.
ArenaSpec family_offset_gap(int v) {
    ArenaSpec spec;
    spec.width = spec.height = 20.0 + 2.0 * v;
    spec.time_limit = 500;
    double cy = spec.height / 2.0;
    double wx = spec.width * 0.5 - 0.4;
    double gap_lo = spec.height - 3.2; // gap hugs the top edge
    spec.walls.push_back(transparent_wall(wx, 0.0, 0.8, gap_lo));
    spec.goals.push_back(green_goal(spec.width * 0.82, cy * 0.7));
    spec.spawn = random_spawn(spec.width * 0.08, cy - 2.0, 3.0, 4.0);
    return spec;
}

} // namespace

std::vector<ArenaSpec> gen_test_suite() {
    using Family = ArenaSpec (*)(int);
    static const Family families[] = {
        family_opaque_maze, family_opaque_bar, family_short_transparent,
        family_pocket, family_slalom, family_opaque_corner,
        family_long_maze, family_offset_gap,
    };
    std::vector<ArenaSpec> out;
    for (Family f : families)
        for (int v = 0; v < 3; ++v) {
            ArenaSpec spec = f(v);
            validate_arena(spec);
            out.push_back(std::move(spec));
        }
    return out;
}

} // namespace curio
