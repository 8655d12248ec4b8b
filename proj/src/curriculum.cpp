#include "curio/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace curio::cur {

double max_achievable_return(const ArenaSpec& spec) {
    double total = 0.0;
    for (const GoalSpec& g : spec.goals)
        if (g.value > 0.0) total += g.value;
    return total;
}

namespace {

Lesson make_lesson(std::string name, std::function<ArenaSpec(Rng&)> make,
                   double max_return) {
    Lesson l;
    l.name = std::move(name);
    l.make = std::move(make);
    l.max_return = max_return;
    l.threshold = 0.9 * max_return;
    l.eval_window = 10;
    if (l.threshold > l.max_return)
        throw Error("lesson threshold exceeds achievable return");
    return l;
}

} // namespace

Curriculum make_idc_curriculum(const IdcOptions& opt) {
    Curriculum cur;
    cur.mode = CycleMode::FixedCycles;
    cur.cycles_target = 2;
    for (int i = 0; i < opt.lesson_count; ++i) {
        ArenaSpec spec = gen_idc_lesson(i, opt);
        double max_ret = max_achievable_return(spec);
        cur.lessons.push_back(make_lesson(
            "idc" + std::to_string(i), [spec](Rng&) { return spec; }, max_ret));
    }
    return cur;
}

Curriculum make_xmc_curriculum(const XmcOptions& opt) {
    Curriculum cur;
    cur.mode = CycleMode::UntilBudget;
    cur.cycles_target = 0;
    for (int i = 0; i < opt.lesson_count; ++i) {
        Rng probe(0x9e3779b9u + uint64_t(i));
        double max_ret = max_achievable_return(gen_xmc_lesson(i, probe, opt));
        cur.lessons.push_back(make_lesson(
            "xmc" + std::to_string(i),
            [i, opt](Rng& rng) { return gen_xmc_lesson(i, rng, opt); }, max_ret));
    }
    return cur;
}

Curriculum make_file_curriculum(const std::string& list_path) {
    std::ifstream in(list_path);
    if (!in) throw Error("cannot open lesson list: " + list_path);
    std::filesystem::path base = std::filesystem::path(list_path).parent_path();

    Curriculum cur;
    cur.mode = CycleMode::FixedCycles;
    cur.cycles_target = 2;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string path;
        double threshold;
        if (!(ls >> path) || path[0] == '#') continue;
        if (!(ls >> threshold))
            throw Error("lesson list line " + std::to_string(line_no) +
                        ": expected \"<path> <threshold>\"");
        std::ifstream df(base / path);
        if (!df)
            throw Error("lesson list line " + std::to_string(line_no) +
                        ": cannot open " + path);
        std::stringstream buf;
        buf << df.rdbuf();
        ArenaSpec spec = parse_arena(buf.str());
        double max_ret = max_achievable_return(spec);
        if (threshold > max_ret)
            throw Error("lesson list line " + std::to_string(line_no) +
                        ": threshold " + std::to_string(threshold) +
                        " exceeds achievable return " + std::to_string(max_ret));
        Lesson l;
        l.name = std::filesystem::path(path).stem().string();
        l.make = [spec](Rng&) { return spec; };
        l.max_return = max_ret;
        l.threshold = threshold;
        l.eval_window = 10;
        cur.lessons.push_back(std::move(l));
    }
    if (cur.lessons.empty()) throw Error("lesson list is empty: " + list_path);
    return cur;
}

void record_episode(CurriculumState& state, const Curriculum& cur,
                    double ext_return) {
    const Lesson& lesson = cur.lessons.at(size_t(state.lesson_index));
    state.window.push_back(ext_return);
    while (int(state.window.size()) > lesson.eval_window) state.window.pop_front();
}

void record_steps(CurriculumState& state, long long steps) {
    if (steps < 0) throw Error("record_steps: negative step count");
    state.total_steps += steps;
    state.cell_steps[{state.cycle_index, state.lesson_index}] += steps;
}

bool window_full(const CurriculumState& state, const Curriculum& cur) {
    const Lesson& lesson = cur.lessons.at(size_t(state.lesson_index));
    return int(state.window.size()) >= lesson.eval_window;
}

bool should_advance(const CurriculumState& state, const Curriculum& cur) {
    const Lesson& lesson = cur.lessons.at(size_t(state.lesson_index));
    if (int(state.window.size()) < lesson.eval_window)
        throw WindowNotFull("curriculum window has " +
                            std::to_string(state.window.size()) + " of " +
                            std::to_string(lesson.eval_window) + " episodes");
    double mean = 0.0;
    for (double r : state.window) mean += r;
    mean /= double(state.window.size());
    return mean > lesson.threshold;
}

CurriculumState advance(const CurriculumState& state, const Curriculum& cur) {
    CurriculumState next = state;
    next.window.clear();
    next.lesson_index += 1;
    if (next.lesson_index >= int(cur.lessons.size())) {
        if (cur.mode == CycleMode::FixedCycles &&
            next.cycle_index + 1 >= cur.cycles_target)
            throw CurriculumComplete("all " + std::to_string(cur.cycles_target) +
                                     " cycles finished");
        next.lesson_index = 0;
        next.cycle_index += 1;
    }
    return next;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

PolicyController::PolicyController(const ppo::PolicyNet& policy)
    : policy_(policy), rec_(ppo::zero_state(policy.spec.lstm_hidden)) {}

void PolicyController::reset() {
    rec_ = ppo::zero_state(policy_.spec.lstm_hidden);
}

int PolicyController::act(const ArenaSpec&, const EpisodeState&,
                          const Observation& obs) {
    ppo::PolicyOut out = ppo::policy_step(policy_, obs, rec_);
    int best = 0;
    for (int k = 1; k < kActionCount; ++k)
        if (out.logits[size_t(k)] > out.logits[size_t(best)]) best = k;
    return best;
}

namespace {

struct Waypoint {
    double x = 0, y = 0;
};

bool segment_blocked(const ArenaSpec& spec, double x0, double y0, double x1,
                     double y1, int* wall_index) {
    for (size_t i = 0; i < spec.walls.size(); ++i) {
        const WallSpec& w = spec.walls[i];
        if (segment_intersects_rect(x0, y0, x1, y1, w.x, w.y, w.w, w.h)) {
            if (wall_index) *wall_index = int(i);
            return true;
        }
    }
    return false;
}

bool point_clear(const ArenaSpec& spec, double x, double y, double margin) {
    if (x < margin || y < margin || x > spec.width - margin ||
        y > spec.height - margin)
        return false;
    for (const WallSpec& w : spec.walls)
        if (disc_intersects_rect(x, y, margin, w.x, w.y, w.w, w.h)) return false;
    return true;
}

Waypoint pick_target(const ArenaSpec& spec, const EpisodeState& state) {
    // Highest-value live goal, nearest on ties.
    int best = -1;
    double best_key = -1e300;
    for (size_t i = 0; i < spec.goals.size(); ++i) {
        if (!state.goal_alive[i] || spec.goals[i].value <= 0.0) continue;
        double dx = spec.goals[i].x - state.x, dy = spec.goals[i].y - state.y;
        double key = spec.goals[i].value * 1e6 - std::hypot(dx, dy);
        if (key > best_key) {
            best_key = key;
            best = int(i);
        }
    }
    if (best < 0) return Waypoint{spec.width / 2.0, spec.height / 2.0};
    Waypoint goal{spec.goals[size_t(best)].x, spec.goals[size_t(best)].y};

    int blocker = -1;
    if (!segment_blocked(spec, state.x, state.y, goal.x, goal.y, &blocker))
        return goal;

    // One-level detour: route via an inflated corner of the blocking wall
    // that clears both legs, shortest total path first.
    const WallSpec& w = spec.walls[size_t(blocker)];
    const double m = 1.1; // agent radius plus slack
    Waypoint corners[4] = {{w.x - m, w.y - m},
                           {w.x + w.w + m, w.y - m},
                           {w.x - m, w.y + w.h + m},
                           {w.x + w.w + m, w.y + w.h + m}};
    int best_c = -1;
    double best_len = 1e300;
    for (int c = 0; c < 4; ++c) {
        if (!point_clear(spec, corners[c].x, corners[c].y, 0.6)) continue;
        bool leg1 = segment_blocked(spec, state.x, state.y, corners[c].x,
                                    corners[c].y, nullptr);
        bool leg2 = segment_blocked(spec, corners[c].x, corners[c].y, goal.x,
                                    goal.y, nullptr);
        double len = std::hypot(corners[c].x - state.x, corners[c].y - state.y) +
                     std::hypot(goal.x - corners[c].x, goal.y - corners[c].y);
        if (leg2) len += 50.0; // second leg may need its own detour later
        if (leg1) continue;    // unreachable directly; try another corner
        if (len < best_len) {
            best_len = len;
            best_c = c;
        }
    }
    if (best_c < 0) return goal; // boxed in; push toward the goal anyway
    return corners[best_c];
}

} // namespace

int OracleController::act(const ArenaSpec& spec, const EpisodeState& state,
                          const Observation&) {
    Waypoint target = pick_target(spec, state);
    double desired = std::atan2(target.y - state.y, target.x - state.x);
    double err = angle_diff(desired, state.heading);

    int turn = 0;
    if (err > deg_to_rad(3.0)) turn = 1;
    else if (err < -deg_to_rad(3.0)) turn = -1;
    int move = std::abs(err) < deg_to_rad(50.0) ? 1 : 0;
    return action_index(Action{move, turn});
}

SuiteScore score_suite(Controller& controller,
                       const std::vector<ArenaSpec>& specs,
                       int episodes_per_spec, double pass_threshold, Rng& rng,
                       int height, int width) {
    if (specs.empty()) throw Error("score_suite: no specs");
    if (episodes_per_spec < 1) throw Error("score_suite: episodes_per_spec < 1");

    SuiteScore out;
    int solved = 0;
    for (const ArenaSpec& spec : specs) {
        double total = 0.0;
        for (int e = 0; e < episodes_per_spec; ++e) {
            EpisodeState st = spawn_episode(spec, rng);
            controller.reset();
            double ep = 0.0;
            while (!st.terminal) {
                Observation obs = render(spec, st, height, width);
                int a = controller.act(spec, st, obs);
                StepResult res = step(spec, st, action_from_index(a));
                ep += res.reward;
                if (res.done) break;
            }
            total += ep;
        }
        SpecScore score;
        score.mean_return = total / double(episodes_per_spec);
        score.solved = score.mean_return >= pass_threshold;
        if (score.solved) ++solved;
        out.per_spec.push_back(score);
    }
    out.fraction_solved = double(solved) / double(specs.size());
    return out;
}

} // namespace curio::cur
