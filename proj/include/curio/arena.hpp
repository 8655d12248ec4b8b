#pragma once

#include "curio/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace curio {

// ---------------------------------------------------------------------------
// Arena description
// ---------------------------------------------------------------------------

struct Color {
    double r = 0, g = 0, b = 0;
    bool operator==(const Color&) const = default;
};

enum class WallKind { Opaque, Transparent };

struct WallSpec {
    WallKind kind = WallKind::Opaque;
    double x = 0, y = 0, w = 0, h = 0;
    Color color; // opaque walls only; transparent walls use the global tint
    bool operator==(const WallSpec&) const = default;
};

enum class GoalColor { Green, Gold, Red };

struct GoalSpec {
    GoalColor color = GoalColor::Green;
    double x = 0, y = 0;
    double radius = 0;
    double value = 0;
    bool operator==(const GoalSpec&) const = default;
};

// Spawn rule. Fixed spawns store the heading in degrees, exactly as written
// in the DSL, so serialization round-trips bit-for-bit; spawn_episode
// converts to radians.
struct SpawnRule {
    bool random = false;
    double x = 0, y = 0;           // fixed: position; random: region origin
    double w = 0, h = 0;           // random region extent
    double heading_deg = 0;        // fixed only
    bool operator==(const SpawnRule&) const = default;
};

struct ArenaSpec {
    double width = 0, height = 0;
    int time_limit = 0;
    std::vector<WallSpec> walls;
    std::vector<GoalSpec> goals;
    SpawnRule spawn;
    bool operator==(const ArenaSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Episode state
// ---------------------------------------------------------------------------

// 3x3 discrete action: move in {-1,0,+1} crossed with turn in {-1,0,+1}.
struct Action {
    int move = 0;
    int turn = 0;
};

inline constexpr int kActionCount = 9;

inline Action action_from_index(int idx) {
    return Action{idx / 3 - 1, idx % 3 - 1};
}

inline int action_index(Action a) { return (a.move + 1) * 3 + (a.turn + 1); }

struct Kinematics {
    double agent_radius = 0.5;
    double accel = 0.15;          // units/step^2
    double speed_decay = 0.9;     // inertia coefficient
    double max_speed = 1.0;       // units/step
    double turn_rate_deg = 6.0;   // degrees/step
};

struct EpisodeState {
    double x = 0, y = 0;
    double heading = 0;           // radians in [0, 2*pi)
    double speed = 0;
    int steps_elapsed = 0;
    std::vector<char> goal_alive; // parallel to spec.goals
    bool terminal = false;
};

struct StepResult {
    double reward = 0;
    bool done = false;
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

struct Observation {
    int height = 0, width = 0;
    std::vector<float> pixels;    // H*W*3 row-major, values in [0,1]

    float at(int row, int col, int ch) const {
        return pixels[size_t(row * width + col) * 3 + size_t(ch)];
    }
};

struct RenderConfig {
    double fov_deg = 60.0;
    double attenuation = 0.06;          // brightness = 1/(1 + attenuation*d)
    double wall_height = 1.0;           // world height of opaque columns
    double transparent_height = 0.5;    // half-height walls
    double transparent_alpha = 0.35;
    Color boundary_color{0.45, 0.45, 0.55};
    Color floor_color{0.22, 0.20, 0.18};
    Color ceiling_color{0.65, 0.70, 0.78};
    Color transparent_tint{0.55, 0.78, 0.90};
};

enum class SurfaceKind { Boundary, Wall, Goal };

// Per-column raycast result, also used by the dataset labeler.
struct ColumnHit {
    SurfaceKind surface = SurfaceKind::Boundary;
    int index = -1;                     // wall/goal index, -1 for boundary
    double distance = 0;                // along the ray
    double perp_distance = 0;           // fisheye-corrected
    std::vector<double> transparent_ts; // entry distances of tinting walls
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class SyntaxError : public Error {
public:
    SyntaxError(int line, int col, const std::string& expected)
        : Error("syntax error at line " + std::to_string(line) + ", col " +
                std::to_string(col) + ": expected " + expected),
          line(line), col(col), expected(expected) {}
    int line, col;
    std::string expected;
};

class SemanticError : public Error {
public:
    using Error::Error;
};

class SpawnExhausted : public Error {
public:
    using Error::Error;
};

class SteppedTerminal : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

ArenaSpec parse_arena(const std::string& text);
std::string serialize_arena(const ArenaSpec& spec);

// Validates invariants of a hand-built spec; throws SemanticError.
void validate_arena(const ArenaSpec& spec);

EpisodeState spawn_episode(const ArenaSpec& spec, Rng& rng,
                           const Kinematics& kin = {});

StepResult step(const ArenaSpec& spec, EpisodeState& state, Action action,
                const Kinematics& kin = {});

std::vector<ColumnHit> raycast_columns(const ArenaSpec& spec,
                                       const EpisodeState& state, int columns,
                                       const RenderConfig& cfg = {});

Observation render(const ArenaSpec& spec, const EpisodeState& state,
                   int height, int width, const RenderConfig& cfg = {});

Color goal_display_color(GoalColor c);

// Geometry helpers shared with generators, the oracle policy and tests.
bool disc_intersects_rect(double cx, double cy, double r, double rx, double ry,
                          double rw, double rh);
bool segment_intersects_rect(double x0, double y0, double x1, double y1,
                             double rx, double ry, double rw, double rh);

} // namespace curio
