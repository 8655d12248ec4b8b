#include "doctest.h"

#include "curio/arena.hpp"
#include "curio/generators.hpp"

#include <set>

using namespace curio;

TEST_CASE("detour curriculum: first lesson is an open arena with a nearby goal") {
    ArenaSpec s = gen_idc_lesson(0, {});
    CHECK(s.walls.empty());
    REQUIRE(s.goals.size() == 1);
    CHECK(!s.spawn.random);
    // Goal dead ahead and close.
    double dx = s.goals[0].x - s.spawn.x;
    double dy = s.goals[0].y - s.spawn.y;
    CHECK(dx > 0.0);
    CHECK(std::abs(dy) < 1e-9);
    CHECK(std::sqrt(dx * dx + dy * dy) < 8.0);
    validate_arena(s);
}

TEST_CASE("detour curriculum: later lessons add an obstruction") {
    IdcOptions opt;
    ArenaSpec last = gen_idc_lesson(opt.lesson_count - 1, opt);
    CHECK(!last.walls.empty());
    // The wall really blocks the straight spawn-to-goal line.
    bool blocked = false;
    for (const WallSpec& w : last.walls)
        if (w.kind == WallKind::Opaque &&
            segment_intersects_rect(last.spawn.x, last.spawn.y, last.goals[0].x,
                                    last.goals[0].y, w.x, w.y, w.w, w.h))
            blocked = true;
    CHECK(blocked);
    validate_arena(last);
}

TEST_CASE("detour curriculum: deterministic and size-monotone") {
    IdcOptions opt;
    for (int i = 0; i < opt.lesson_count; ++i) {
        ArenaSpec a = gen_idc_lesson(i, opt);
        ArenaSpec b = gen_idc_lesson(i, opt);
        CHECK(a == b);
        validate_arena(a);
        if (i > 0) {
            ArenaSpec prev = gen_idc_lesson(i - 1, opt);
            CHECK(a.width >= prev.width);
            CHECK(a.height >= prev.height);
        }
    }
}

TEST_CASE("detour curriculum: index bounds") {
    IdcOptions opt;
    CHECK_THROWS_AS(gen_idc_lesson(-1, opt), IndexOutOfRange);
    CHECK_THROWS_AS(gen_idc_lesson(opt.lesson_count, opt), IndexOutOfRange);
}

TEST_CASE("cross maze: per-lesson arm bands are disjoint and increasing") {
    XmcOptions opt;
    for (int i = 0; i + 1 < opt.lesson_count; ++i) {
        ArmBand a = xmc_arm_band(i, opt);
        ArmBand b = xmc_arm_band(i + 1, opt);
        CHECK(a.lo < a.hi);
        CHECK(b.lo > a.hi); // strictly dominates
    }
}

TEST_CASE("cross maze: sampled arm lengths stay inside the lesson band") {
    XmcOptions opt;
    Rng rng(314);
    for (int i = 0; i < opt.lesson_count; ++i) {
        ArmBand band = xmc_arm_band(i, opt);
        for (int k = 0; k < 20; ++k) {
            ArenaSpec s = gen_xmc_lesson(i, rng, opt);
            validate_arena(s);
            // Recover the arm length from the first wall (arms share thickness).
            REQUIRE(s.walls.size() == 4);
            double arm = std::max(s.walls[0].w, s.walls[0].h);
            CHECK(arm >= band.lo);
            CHECK(arm <= band.hi);
        }
    }
}

TEST_CASE("cross maze: every straight spawn-to-goal line crosses a wall") {
    XmcOptions opt;
    Rng rng(2718);
    for (int i = 0; i < opt.lesson_count; ++i) {
        for (int k = 0; k < 10; ++k) {
            ArenaSpec s = gen_xmc_lesson(i, rng, opt);
            REQUIRE(s.spawn.random);
            REQUIRE(s.goals.size() == 1);
            // Sample points across the spawn region, including its corners.
            for (int p = 0; p < 25; ++p) {
                double fx = (p % 5) / 4.0;
                double fy = (p / 5) / 4.0;
                double sx = s.spawn.x + fx * s.spawn.w;
                double sy = s.spawn.y + fy * s.spawn.h;
                bool crossed = false;
                for (const WallSpec& w : s.walls)
                    if (segment_intersects_rect(sx, sy, s.goals[0].x, s.goals[0].y,
                                                w.x, w.y, w.w, w.h))
                        crossed = true;
                CHECK(crossed);
            }
        }
    }
}

TEST_CASE("cross maze: walls are transparent and the goal is reachable on foot") {
    XmcOptions opt;
    Rng rng(11);
    ArenaSpec s = gen_xmc_lesson(3, rng, opt);
    for (const WallSpec& w : s.walls) CHECK(w.kind == WallKind::Transparent);
    // Arms emanate from the center, so the outer ring is open: walking around
    // the arm tips never touches a wall. Verify a coarse perimeter path.
    double margin = 1.0;
    double cx = s.width / 2, cy = s.height / 2;
    double px[4] = {margin, s.width - margin, s.width - margin, margin};
    double py[4] = {margin, margin, s.height - margin, s.height - margin};
    for (int i = 0; i < 4; ++i) {
        int j = (i + 1) % 4;
        for (const WallSpec& w : s.walls)
            CHECK(!segment_intersects_rect(px[i], py[i], px[j], py[j], w.x, w.y,
                                           w.w, w.h));
    }
    (void)cx;
    (void)cy;
}

TEST_CASE("cross maze: same seed reproduces the lesson") {
    Rng a(500), b(500);
    ArenaSpec sa = gen_xmc_lesson(2, a, {});
    ArenaSpec sb = gen_xmc_lesson(2, b, {});
    CHECK(sa == sb);
}

TEST_CASE("test suite: 24 valid layouts, disjoint from the curricula") {
    std::vector<ArenaSpec> suite = gen_test_suite();
    CHECK(suite.size() == 24);

    std::set<std::string> texts;
    for (const ArenaSpec& s : suite) {
        validate_arena(s);
        texts.insert(serialize_arena(s));
    }
    CHECK(texts.size() == 24); // all distinct

    IdcOptions iopt;
    for (int i = 0; i < iopt.lesson_count; ++i)
        CHECK(texts.count(serialize_arena(gen_idc_lesson(i, iopt))) == 0);
    Rng rng(77);
    XmcOptions xopt;
    for (int i = 0; i < xopt.lesson_count; ++i)
        for (int k = 0; k < 10; ++k)
            CHECK(texts.count(serialize_arena(gen_xmc_lesson(i, rng, xopt))) == 0);
}

TEST_CASE("test suite: includes opaque-wall detours absent from training") {
    std::vector<ArenaSpec> suite = gen_test_suite();
    int opaque_detours = 0;
    for (const ArenaSpec& s : suite) {
        // A layout counts when, from every point of the spawn region, the
        // straight line to the goal crosses some opaque wall.
        bool all_blocked = true;
        for (int p = 0; p < 25 && all_blocked; ++p) {
            double sx = s.spawn.x + (s.spawn.random ? (p % 5) / 4.0 * s.spawn.w : 0.0);
            double sy = s.spawn.y + (s.spawn.random ? (p / 5) / 4.0 * s.spawn.h : 0.0);
            bool point_blocked = false;
            for (const WallSpec& w : s.walls)
                if (w.kind == WallKind::Opaque &&
                    segment_intersects_rect(sx, sy, s.goals[0].x, s.goals[0].y,
                                            w.x, w.y, w.w, w.h))
                    point_blocked = true;
            all_blocked = point_blocked;
        }
        if (all_blocked) ++opaque_detours;
    }
    CHECK(opaque_detours >= 2);
}
