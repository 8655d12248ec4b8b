#include "curio/arena.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace curio {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Default paint for opaque walls declared without an RGB triple.
const Color kDefaultWallColor{0.50, 0.38, 0.28};

struct Token {
    std::string text;
    int col; // 1-based start column
};

std::vector<Token> tokenize_line(const std::string& line) {
    std::vector<Token> out;
    size_t i = 0;
    while (i < line.size()) {
        if (line[i] == '#') break;
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) &&
               line[i] != '#')
            ++i;
        out.push_back({line.substr(start, i - start), int(start) + 1});
    }
    return out;
}

class LineParser {
public:
    LineParser(const std::vector<Token>& toks, int line)
        : toks_(toks), line_(line) {}

    const Token& next(const char* expected) {
        if (pos_ >= toks_.size()) {
            int col = toks_.empty() ? 1 : toks_.back().col + int(toks_.back().text.size());
            throw SyntaxError(line_, col, expected);
        }
        return toks_[pos_++];
    }

    double real(const char* what) {
        const Token& t = next(what);
        double v;
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size())
            throw SyntaxError(line_, t.col, what);
        return v;
    }

    int integer(const char* what) {
        const Token& t = next(what);
        int v;
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size())
            throw SyntaxError(line_, t.col, what);
        return v;
    }

    bool done() const { return pos_ >= toks_.size(); }

    void expect_done() {
        if (!done())
            throw SyntaxError(line_, toks_[pos_].col, "end of line");
    }

    size_t remaining() const { return toks_.size() - pos_; }

private:
    const std::vector<Token>& toks_;
    int line_;
    size_t pos_ = 0;
};

bool rect_in_bounds(double x, double y, double w, double h, const ArenaSpec& s) {
    return x >= 0 && y >= 0 && x + w <= s.width && y + h <= s.height;
}

} // namespace

bool disc_intersects_rect(double cx, double cy, double r, double rx, double ry,
                          double rw, double rh) {
    double nx = std::clamp(cx, rx, rx + rw);
    double ny = std::clamp(cy, ry, ry + rh);
    double dx = cx - nx, dy = cy - ny;
    return dx * dx + dy * dy < r * r;
}

bool segment_intersects_rect(double x0, double y0, double x1, double y1,
                             double rx, double ry, double rw, double rh) {
    // Liang-Barsky clip of the parametric segment against the rect slabs.
    double dx = x1 - x0, dy = y1 - y0;
    double t0 = 0.0, t1 = 1.0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {x0 - rx, rx + rw - x0, y0 - ry, ry + rh - y0};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
        } else {
            double t = q[i] / p[i];
            if (p[i] < 0.0) {
                if (t > t1) return false;
                if (t > t0) t0 = t;
            } else {
                if (t < t0) return false;
                if (t < t1) t1 = t;
            }
        }
    }
    return true;
}

void validate_arena(const ArenaSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0)
        throw SemanticError("arena dimensions must be positive");
    if (spec.time_limit < 1)
        throw SemanticError("time limit must be at least 1");
    for (size_t i = 0; i < spec.walls.size(); ++i) {
        const WallSpec& w = spec.walls[i];
        if (w.w <= 0 || w.h <= 0)
            throw SemanticError("wall " + std::to_string(i) + " has non-positive extent");
        if (!rect_in_bounds(w.x, w.y, w.w, w.h, spec))
            throw SemanticError("wall " + std::to_string(i) + " out of bounds");
    }
    if (spec.goals.empty()) throw SemanticError("no goal");
    for (size_t i = 0; i < spec.goals.size(); ++i) {
        const GoalSpec& g = spec.goals[i];
        if (g.radius <= 0)
            throw SemanticError("goal " + std::to_string(i) + " has non-positive radius");
        if (g.color == GoalColor::Red ? g.value >= 0 : g.value <= 0)
            throw SemanticError("goal " + std::to_string(i) + " value sign mismatch");
        if (!rect_in_bounds(g.x - g.radius, g.y - g.radius, 2 * g.radius,
                            2 * g.radius, spec))
            throw SemanticError("goal " + std::to_string(i) + " out of bounds");
    }
    const double r = Kinematics{}.agent_radius;
    const SpawnRule& sp = spec.spawn;
    if (sp.random) {
        if (sp.w <= 0 || sp.h <= 0)
            throw SemanticError("spawn region has non-positive extent");
        if (!rect_in_bounds(sp.x, sp.y, sp.w, sp.h, spec))
            throw SemanticError("spawn region out of bounds");
    } else {
        if (sp.x < r || sp.y < r || sp.x > spec.width - r || sp.y > spec.height - r)
            throw SemanticError("spawn point out of bounds");
        for (const WallSpec& w : spec.walls)
            if (disc_intersects_rect(sp.x, sp.y, r, w.x, w.y, w.w, w.h))
                throw SemanticError("spawn point inside wall");
        for (const GoalSpec& g : spec.goals) {
            double dx = sp.x - g.x, dy = sp.y - g.y;
            double rr = r + g.radius;
            if (dx * dx + dy * dy < rr * rr)
                throw SemanticError("spawn point inside goal");
        }
    }
}

ArenaSpec parse_arena(const std::string& text) {
    ArenaSpec spec;
    bool have_arena = false, have_agent = false;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<Token> toks = tokenize_line(line);
        if (toks.empty()) continue;
        LineParser p(toks, lineno);
        const Token& head = p.next("statement");

        if (!have_arena && head.text != "arena")
            throw SyntaxError(lineno, head.col, "'arena'");

        if (head.text == "arena") {
            if (have_arena) throw SemanticError("duplicate arena statement");
            spec.width = p.real("width");
            spec.height = p.real("height");
            spec.time_limit = p.integer("time limit (integer)");
            p.expect_done();
            have_arena = true;
        } else if (head.text == "wall") {
            WallSpec w;
            const Token& kind = p.next("'opaque' or 'transparent'");
            if (kind.text == "opaque") {
                w.kind = WallKind::Opaque;
            } else if (kind.text == "transparent") {
                w.kind = WallKind::Transparent;
            } else {
                throw SyntaxError(lineno, kind.col, "'opaque' or 'transparent'");
            }
            w.x = p.real("x");
            w.y = p.real("y");
            w.w = p.real("w");
            w.h = p.real("h");
            if (w.kind == WallKind::Opaque) {
                if (p.remaining() >= 3) {
                    w.color.r = p.real("r");
                    w.color.g = p.real("g");
                    w.color.b = p.real("b");
                } else {
                    w.color = kDefaultWallColor;
                }
            }
            p.expect_done();
            spec.walls.push_back(w);
        } else if (head.text == "goal") {
            GoalSpec g;
            const Token& color = p.next("'green', 'gold' or 'red'");
            if (color.text == "green") g.color = GoalColor::Green;
            else if (color.text == "gold") g.color = GoalColor::Gold;
            else if (color.text == "red") g.color = GoalColor::Red;
            else throw SyntaxError(lineno, color.col, "'green', 'gold' or 'red'");
            g.x = p.real("x");
            g.y = p.real("y");
            g.radius = p.real("radius");
            g.value = p.real("value");
            p.expect_done();
            spec.goals.push_back(g);
        } else if (head.text == "agent") {
            if (have_agent) throw SemanticError("duplicate agent statement");
            const Token& first = p.next("'random' or x");
            if (first.text == "random") {
                spec.spawn.random = true;
                spec.spawn.x = p.real("x");
                spec.spawn.y = p.real("y");
                spec.spawn.w = p.real("w");
                spec.spawn.h = p.real("h");
            } else {
                double x;
                auto res = std::from_chars(first.text.data(),
                                           first.text.data() + first.text.size(), x);
                if (res.ec != std::errc{} ||
                    res.ptr != first.text.data() + first.text.size())
                    throw SyntaxError(lineno, first.col, "'random' or x");
                spec.spawn.random = false;
                spec.spawn.x = x;
                spec.spawn.y = p.real("y");
                spec.spawn.heading_deg = p.real("heading (degrees)");
            }
            p.expect_done();
            have_agent = true;
        } else {
            throw SyntaxError(lineno, head.col,
                              "'arena', 'wall', 'goal' or 'agent'");
        }
    }

    if (!have_arena) throw SyntaxError(1, 1, "'arena'");
    if (!have_agent) throw SemanticError("no agent spawn");
    validate_arena(spec);
    return spec;
}

std::string serialize_arena(const ArenaSpec& spec) {
    std::string out;
    out += "arena " + format_double(spec.width) + " " + format_double(spec.height) +
           " " + std::to_string(spec.time_limit) + "\n";
    for (const WallSpec& w : spec.walls) {
        if (w.kind == WallKind::Opaque) {
            out += "wall opaque " + format_double(w.x) + " " + format_double(w.y) +
                   " " + format_double(w.w) + " " + format_double(w.h) + " " +
                   format_double(w.color.r) + " " + format_double(w.color.g) + " " +
                   format_double(w.color.b) + "\n";
        } else {
            out += "wall transparent " + format_double(w.x) + " " +
                   format_double(w.y) + " " + format_double(w.w) + " " +
                   format_double(w.h) + "\n";
        }
    }
    for (const GoalSpec& g : spec.goals) {
        const char* c = g.color == GoalColor::Green ? "green"
                      : g.color == GoalColor::Gold ? "gold" : "red";
        out += std::string("goal ") + c + " " + format_double(g.x) + " " +
               format_double(g.y) + " " + format_double(g.radius) + " " +
               format_double(g.value) + "\n";
    }
    if (spec.spawn.random) {
        out += "agent random " + format_double(spec.spawn.x) + " " +
               format_double(spec.spawn.y) + " " + format_double(spec.spawn.w) + " " +
               format_double(spec.spawn.h) + "\n";
    } else {
        out += "agent " + format_double(spec.spawn.x) + " " +
               format_double(spec.spawn.y) + " " +
               format_double(spec.spawn.heading_deg) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Episode physics
// ---------------------------------------------------------------------------

EpisodeState spawn_episode(const ArenaSpec& spec, Rng& rng, const Kinematics& kin) {
    EpisodeState st;
    st.goal_alive.assign(spec.goals.size(), 1);
    const double r = kin.agent_radius;
    const SpawnRule& sp = spec.spawn;
    if (!sp.random) {
        st.x = sp.x;
        st.y = sp.y;
        st.heading = wrap_angle(deg_to_rad(sp.heading_deg));
        return st;
    }
    for (int attempt = 0; attempt < 1000; ++attempt) {
        double x = rng.uniform(sp.x, sp.x + sp.w);
        double y = rng.uniform(sp.y, sp.y + sp.h);
        double heading = rng.uniform(0.0, kTwoPi);
        if (x < r || y < r || x > spec.width - r || y > spec.height - r) continue;
        bool bad = false;
        for (const WallSpec& w : spec.walls)
            if (disc_intersects_rect(x, y, r, w.x, w.y, w.w, w.h)) { bad = true; break; }
        if (!bad)
            for (const GoalSpec& g : spec.goals) {
                double dx = x - g.x, dy = y - g.y;
                double rr = r + g.radius;
                if (dx * dx + dy * dy < rr * rr) { bad = true; break; }
            }
        if (bad) continue;
        st.x = x;
        st.y = y;
        st.heading = wrap_angle(heading);
        return st;
    }
    throw SpawnExhausted("no valid spawn position after 1000 attempts");
}

namespace {

bool intersects_any_wall(double x, double y, double r, const ArenaSpec& spec) {
    for (const WallSpec& w : spec.walls)
        if (disc_intersects_rect(x, y, r, w.x, w.y, w.w, w.h)) return true;
    return false;
}

// One axis of the move, sliding along wall faces. The returned coordinate
// never penetrates a wall and never retreats past the starting point.
double resolve_axis_x(const ArenaSpec& spec, double x, double y, double dx, double r) {
    double nx = std::clamp(x + dx, r, spec.width - r);
    for (const WallSpec& w : spec.walls) {
        if (!disc_intersects_rect(nx, y, r, w.x, w.y, w.w, w.h)) continue;
        if (dx > 0)
            nx = std::max(x, std::min(nx, w.x - r));
        else if (dx < 0)
            nx = std::min(x, std::max(nx, w.x + w.w + r));
        else
            nx = x;
    }
    if (intersects_any_wall(nx, y, r, spec)) nx = x;
    return nx;
}

double resolve_axis_y(const ArenaSpec& spec, double x, double y, double dy, double r) {
    double ny = std::clamp(y + dy, r, spec.height - r);
    for (const WallSpec& w : spec.walls) {
        if (!disc_intersects_rect(x, ny, r, w.x, w.y, w.w, w.h)) continue;
        if (dy > 0)
            ny = std::max(y, std::min(ny, w.y - r));
        else if (dy < 0)
            ny = std::min(y, std::max(ny, w.y + w.h + r));
        else
            ny = y;
    }
    if (intersects_any_wall(x, ny, r, spec)) ny = y;
    return ny;
}

} // namespace

StepResult step(const ArenaSpec& spec, EpisodeState& state, Action action,
                const Kinematics& kin) {
    if (state.terminal) throw SteppedTerminal("step on terminal episode");

    state.heading = wrap_angle(state.heading +
                               double(action.turn) * deg_to_rad(kin.turn_rate_deg));
    state.speed = std::clamp(kin.speed_decay * state.speed +
                             double(action.move) * kin.accel,
                             0.0, kin.max_speed);

    double dx = state.speed * std::cos(state.heading);
    double dy = state.speed * std::sin(state.heading);
    state.x = resolve_axis_x(spec, state.x, state.y, dx, kin.agent_radius);
    state.y = resolve_axis_y(spec, state.x, state.y, dy, kin.agent_radius);

    StepResult res;
    bool goal_hit = false;
    for (size_t i = 0; i < spec.goals.size(); ++i) {
        if (!state.goal_alive[i]) continue;
        const GoalSpec& g = spec.goals[i];
        double gx = state.x - g.x, gy = state.y - g.y;
        double rr = kin.agent_radius + g.radius;
        if (gx * gx + gy * gy <= rr * rr) {
            res.reward += g.value;
            state.goal_alive[i] = 0;
            goal_hit = true;
        }
    }

    state.steps_elapsed += 1;
    res.done = goal_hit || state.steps_elapsed >= spec.time_limit;
    state.terminal = res.done;
    return res;
}

// ---------------------------------------------------------------------------
// Raycast renderer
// ---------------------------------------------------------------------------

Color goal_display_color(GoalColor c) {
    switch (c) {
        case GoalColor::Green: return {0.10, 0.80, 0.15};
        case GoalColor::Gold: return {0.95, 0.78, 0.10};
        case GoalColor::Red: return {0.85, 0.10, 0.10};
    }
    return {};
}

namespace {

// Entry distance of a ray into an axis-aligned rect; origin outside. Returns
// +inf on miss.
double ray_rect_entry(double ox, double oy, double dx, double dy,
                      const WallSpec& w) {
    double t0 = 0.0, t1 = kInf;
    if (dx == 0.0) {
        if (ox < w.x || ox > w.x + w.w) return kInf;
    } else {
        double ta = (w.x - ox) / dx, tb = (w.x + w.w - ox) / dx;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (dy == 0.0) {
        if (oy < w.y || oy > w.y + w.h) return kInf;
    } else {
        double ta = (w.y - oy) / dy, tb = (w.y + w.h - oy) / dy;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t1 < t0 || t1 < 0.0) return kInf;
    return t0 >= 0.0 ? t0 : kInf;
}

double ray_circle_entry(double ox, double oy, double dx, double dy,
                        const GoalSpec& g) {
    double cx = ox - g.x, cy = oy - g.y;
    double b = cx * dx + cy * dy;
    double c = cx * cx + cy * cy - g.radius * g.radius;
    double disc = b * b - c;
    if (disc < 0.0) return kInf;
    double s = std::sqrt(disc);
    double t = -b - s;
    if (t < 0.0) t = -b + s;
    return t >= 0.0 ? t : kInf;
}

// Exit distance of a ray cast from inside the arena bounds.
double ray_bounds_exit(double ox, double oy, double dx, double dy,
                       const ArenaSpec& spec) {
    double tx = dx > 0 ? (spec.width - ox) / dx : dx < 0 ? -ox / dx : kInf;
    double ty = dy > 0 ? (spec.height - oy) / dy : dy < 0 ? -oy / dy : kInf;
    return std::min(tx, ty);
}

} // namespace

std::vector<ColumnHit> raycast_columns(const ArenaSpec& spec,
                                       const EpisodeState& state, int columns,
                                       const RenderConfig& cfg) {
    std::vector<ColumnHit> out{size_t(columns)};
    const double fov = deg_to_rad(cfg.fov_deg);
    for (int i = 0; i < columns; ++i) {
        double offset = fov / 2.0 - (double(i) + 0.5) * fov / double(columns);
        double angle = state.heading + offset;
        double dx = std::cos(angle), dy = std::sin(angle);

        ColumnHit& hit = out[size_t(i)];
        double t_opaque = ray_bounds_exit(state.x, state.y, dx, dy, spec);
        hit.surface = SurfaceKind::Boundary;
        hit.index = -1;
        for (size_t w = 0; w < spec.walls.size(); ++w) {
            if (spec.walls[w].kind != WallKind::Opaque) continue;
            double t = ray_rect_entry(state.x, state.y, dx, dy, spec.walls[w]);
            if (t < t_opaque) {
                t_opaque = t;
                hit.surface = SurfaceKind::Wall;
                hit.index = int(w);
            }
        }

        // Goals are occluded by opaque geometry only.
        double t_goal = kInf;
        int goal_index = -1;
        for (size_t g = 0; g < spec.goals.size(); ++g) {
            if (!state.goal_alive[g]) continue;
            double t = ray_circle_entry(state.x, state.y, dx, dy, spec.goals[g]);
            if (t < t_goal && t < t_opaque) {
                t_goal = t;
                goal_index = int(g);
            }
        }
        if (goal_index >= 0) {
            hit.surface = SurfaceKind::Goal;
            hit.index = goal_index;
            hit.distance = t_goal;
        } else {
            hit.distance = t_opaque;
        }
        hit.perp_distance = std::max(hit.distance * std::cos(offset), 1e-6);

        for (const WallSpec& w : spec.walls) {
            if (w.kind != WallKind::Transparent) continue;
            double t = ray_rect_entry(state.x, state.y, dx, dy, w);
            if (t < hit.distance) hit.transparent_ts.push_back(t);
        }
        // Far to near so repeated blending composes correctly.
        std::sort(hit.transparent_ts.rbegin(), hit.transparent_ts.rend());
    }
    return out;
}

Observation render(const ArenaSpec& spec, const EpisodeState& state, int height,
                   int width, const RenderConfig& cfg) {
    Observation obs;
    obs.height = height;
    obs.width = width;
    obs.pixels.assign(size_t(height) * size_t(width) * 3, 0.0f);

    std::vector<ColumnHit> hits = raycast_columns(spec, state, width, cfg);
    const double half_screen = double(height) / 2.0;
    const double fov = deg_to_rad(cfg.fov_deg);

    for (int col = 0; col < width; ++col) {
        const ColumnHit& hit = hits[size_t(col)];
        Color surface = hit.surface == SurfaceKind::Boundary ? cfg.boundary_color
                      : hit.surface == SurfaceKind::Wall
                            ? spec.walls[size_t(hit.index)].color
                            : goal_display_color(spec.goals[size_t(hit.index)].color);
        double bright = 1.0 / (1.0 + cfg.attenuation * hit.distance);
        surface = {surface.r * bright, surface.g * bright, surface.b * bright};

        double band = std::min(half_screen,
                               half_screen * cfg.wall_height / hit.perp_distance);
        int top = int(std::floor(half_screen - band));
        int bot = int(std::ceil(half_screen + band));
        top = std::clamp(top, 0, height);
        bot = std::clamp(bot, 0, height);

        for (int row = 0; row < height; ++row) {
            Color c = row < top ? cfg.ceiling_color
                    : row >= bot ? cfg.floor_color : surface;
            float* px = &obs.pixels[size_t(row * width + col) * 3];
            px[0] = float(c.r);
            px[1] = float(c.g);
            px[2] = float(c.b);
        }

        double offset = fov / 2.0 - (double(col) + 0.5) * fov / double(width);
        for (double t : hit.transparent_ts) {
            double perp = std::max(t * std::cos(offset), 1e-6);
            double tband = std::min(half_screen,
                                    half_screen * cfg.transparent_height / perp);
            int ttop = std::clamp(int(std::floor(half_screen - tband)), 0, height);
            int tbot = std::clamp(int(std::ceil(half_screen + tband)), 0, height);
            const double a = cfg.transparent_alpha;
            for (int row = ttop; row < tbot; ++row) {
                float* px = &obs.pixels[size_t(row * width + col) * 3];
                px[0] = float((1.0 - a) * px[0] + a * cfg.transparent_tint.r);
                px[1] = float((1.0 - a) * px[1] + a * cfg.transparent_tint.g);
                px[2] = float((1.0 - a) * px[2] + a * cfg.transparent_tint.b);
            }
        }
    }
    return obs;
}

} // namespace curio
