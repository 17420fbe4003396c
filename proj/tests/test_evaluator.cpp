#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "test_support.hpp"
#include "utls/evaluator.hpp"

using namespace utls;
using namespace utls::eval;

namespace {

Region region(int id, std::uint32_t first, std::uint32_t count) {
    Region r{id, std::vector<std::uint32_t>(count)};
    std::iota(r.pixels.begin(), r.pixels.end(), first);
    return r;
}

RegionSet set_of(std::vector<Region> regions, RegionKind kind = RegionKind::prediction) {
    return {100, 100, kind, std::move(regions)};
}

// N separate 100-point lines.
RegionSet lines(int n, int first_id = 1) {
    std::vector<Region> out;
    for (int i = 0; i < n; ++i) out.push_back(region(first_id + i, static_cast<std::uint32_t>(200 * i), 100));
    return set_of(out);
}

}  // namespace

TEST_CASE("match score") {
    const auto a = region(1, 0, 100);
    CHECK(match_score(a, a) == 1.0);
    CHECK(match_score(a, region(2, 100, 100)) == 0.0);
    // |G n R| = 90, |G u R| = 110
    CHECK(match_score(region(1, 0, 100), region(2, 10, 100)) == doctest::Approx(90.0 / 110.0).epsilon(1e-12));
    CHECK(std::abs(match_score(region(1, 0, 100), region(2, 10, 100)) - 0.818181818181818) < 1e-9);
    CHECK(match_score(Region{1, {}}, Region{2, {}}) == 0.0);
    CHECK(match_score(region(1, 5, 30), region(2, 20, 40)) == match_score(region(2, 20, 40), region(1, 5, 30)));
}

TEST_CASE("ICDAR 2013 counts") {
    // 10 gt lines, 11 predictions, 9 of them exact.
    auto gt = lines(10);
    auto pred = lines(9);
    pred.regions.push_back(region(10, 1801, 20));
    pred.regions.push_back(region(11, 1850, 30));
    const auto r = evaluate_icdar2013(gt, pred, 0.90);
    CHECK(r.M == 9);
    CHECK(r.N1 == 10);
    CHECK(r.N2 == 11);
    CHECK(r.DR == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(std::abs(r.RA - 9.0 / 11.0) < 1e-12);
    CHECK(std::abs(r.FM - 2 * 0.9 * (9.0 / 11) / (0.9 + 9.0 / 11)) < 1e-12);
    CHECK(std::abs(r.FM - 0.857142857142857) < 1e-9);
    CHECK(r.match_matrix.size() == 10);
    CHECK(r.match_matrix[0].size() == 11);
    CHECK(r.M <= std::min(r.N1, r.N2));
}

TEST_CASE("ICDAR 2013: a split line") {
    auto gt = lines(3);
    std::vector<Region> pred{region(1, 0, 100), region(2, 200, 100), region(3, 400, 50), region(4, 450, 50)};
    const auto r = evaluate_icdar2013(gt, set_of(pred), 0.90);
    CHECK(r.M == 2);
    CHECK(r.DR == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r.RA == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("perfect predictions and degenerate inputs") {
    const auto gt = lines(5);
    const auto r13 = evaluate_icdar2013(gt, gt);
    CHECK(r13.DR == 1.0);
    CHECK(r13.RA == 1.0);
    CHECK(r13.FM == 1.0);
    const auto r17 = evaluate_icdar2017(gt, gt);
    CHECK(r17.pixel_iu == 1.0);
    CHECK(r17.line_iu == 1.0);

    const auto empty = set_of({});
    const auto e13 = evaluate_icdar2013(empty, gt);
    CHECK(e13.degenerate);
    CHECK(e13.DR == 0.0);
    CHECK(e13.FM == 0.0);
    const auto e17 = evaluate_icdar2017(empty, empty);
    CHECK(e17.degenerate);
    CHECK(e17.pixel_iu == 0.0);
    CHECK(e17.line_iu == 0.0);
}

TEST_CASE("threshold 1.0 counts only pixel-perfect lines") {
    auto gt = lines(3);
    auto pred = lines(3);
    pred.regions[1].pixels.pop_back();
    CHECK(evaluate_icdar2013(gt, pred, 1.0).M == 2);
}

TEST_CASE("ICDAR 2017 pixel and line IU") {
    // One line: TP 90, FP 10, FN 20.
    const auto gt = set_of({region(1, 0, 110)});
    auto pred_px = region(1, 20, 90);
    for (std::uint32_t i = 0; i < 10; ++i) pred_px.pixels.push_back(1000 + i);
    const auto r = evaluate_icdar2017(gt, set_of({pred_px}), 0.75);
    CHECK(r.TP == 90);
    CHECK(r.FP == 10);
    CHECK(r.FN == 20);
    CHECK(std::abs(r.pixel_iu - 0.75) < 1e-12);
    REQUIRE(r.pair_ius.size() == 1);
    CHECK(r.pair_ius[0].precision == doctest::Approx(0.9));
    CHECK(r.pair_ius[0].recall == doctest::Approx(90.0 / 110.0));
    CHECK(r.CL == 1);

    // CL = 8, ML = 1, EL = 1: eight exact lines, one line predicted at half
    // its length (missed), one line predicted with double the points (extra).
    auto g = lines(10);
    auto p = lines(8);
    p.regions.push_back(region(9, 1600, 50));
    Region wide = region(10, 1800, 100);
    for (std::uint32_t i = 0; i < 100; ++i) wide.pixels.push_back(1900 + i);
    p.regions.push_back(wide);
    const auto q = evaluate_icdar2017(g, p, 0.75);
    CHECK(q.CL == 8);
    CHECK(q.ML == 1);
    CHECK(q.EL == 1);
    CHECK(std::abs(q.line_iu - 0.8) < 1e-12);
}

TEST_CASE("unmatched lines are missed or extra") {
    const auto gt = lines(3);
    auto pred = lines(2);
    pred.regions.push_back(region(7, 5000, 40));
    const auto r = evaluate_icdar2017(gt, pred, 0.75);
    CHECK(r.CL == 2);
    CHECK(r.ML == 1);
    CHECK(r.EL == 1);
    CHECK(r.FN == 100);
    CHECK(r.FP == 40);
}

TEST_CASE("evaluators are permutation invariant") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Region> g, p;
        for (int i = 0; i < 6; ++i) g.push_back(region(i + 1, static_cast<std::uint32_t>(rng() % 900), 30 + rng() % 80));
        for (int i = 0; i < 7; ++i) p.push_back(region(i + 1, static_cast<std::uint32_t>(rng() % 900), 30 + rng() % 80));
        const auto a13 = evaluate_icdar2013(set_of(g), set_of(p), 0.3);
        const auto a17 = evaluate_icdar2017(set_of(g), set_of(p), 0.5);
        std::shuffle(g.begin(), g.end(), rng);
        std::shuffle(p.begin(), p.end(), rng);
        const auto b13 = evaluate_icdar2013(set_of(g), set_of(p), 0.3);
        const auto b17 = evaluate_icdar2017(set_of(g), set_of(p), 0.5);
        CHECK(a13.M == b13.M);
        CHECK(a13.FM == b13.FM);
        CHECK(a17.TP == b17.TP);
        CHECK(a17.FP == b17.FP);
        CHECK(a17.FN == b17.FN);
        CHECK(a17.CL == b17.CL);
        CHECK(a17.ML == b17.ML);
        CHECK(a17.EL == b17.EL);
    }
}

TEST_CASE("adding a correct match never lowers the scores") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Region> g, p;
        for (int i = 0; i < 5; ++i) g.push_back(region(i + 1, static_cast<std::uint32_t>(rng() % 900), 30 + rng() % 80));
        for (int i = 0; i < 5; ++i) p.push_back(region(i + 1, static_cast<std::uint32_t>(rng() % 900), 30 + rng() % 80));
        const auto a13 = evaluate_icdar2013(set_of(g), set_of(p), 0.5);
        const auto a17 = evaluate_icdar2017(set_of(g), set_of(p), 0.75);
        g.push_back(region(50, 5000, 60));
        p.push_back(region(50, 5000, 60));
        const auto b13 = evaluate_icdar2013(set_of(g), set_of(p), 0.5);
        const auto b17 = evaluate_icdar2017(set_of(g), set_of(p), 0.75);
        CHECK(b13.DR >= a13.DR);
        CHECK(b13.RA >= a13.RA);
        CHECK(b13.FM >= a13.FM);
        CHECK(b17.line_iu >= a17.line_iu);
    }
}

TEST_CASE("aggregation micro-averages") {
    auto page = [](const RegionSet& g, const RegionSet& p, const std::string& id) {
        return PageReport{id, evaluate_icdar2013(g, p, 0.9), evaluate_icdar2017(g, p, 0.75)};
    };
    const auto one = page(lines(4), lines(3), "a");
    const auto single = aggregate_reports({one});
    CHECK(single.FM == one.icdar2013.FM);
    CHECK(single.pixel_iu == one.icdar2017.pixel_iu);
    CHECK(single.line_iu == one.icdar2017.line_iu);

    const auto twice = aggregate_reports({one, one});
    CHECK(twice.FM == doctest::Approx(one.icdar2013.FM).epsilon(1e-15));
    CHECK(twice.pixel_iu == doctest::Approx(one.icdar2017.pixel_iu).epsilon(1e-15));
    CHECK(twice.pages.size() == 2);

    auto split = lines(2);
    split.regions.push_back(region(9, 400, 50));
    const auto other = page(lines(3), split, "b");
    const auto mixed = aggregate_reports({one, other});
    const double m = one.icdar2013.M + other.icdar2013.M;
    const double dr = m / (one.icdar2013.N1 + other.icdar2013.N1);
    const double ra = m / (one.icdar2013.N2 + other.icdar2013.N2);
    CHECK(mixed.DR == dr);
    CHECK(mixed.RA == ra);
    CHECK(mixed.FM == doctest::Approx(2 * dr * ra / (dr + ra)).epsilon(1e-15));
    const double tp = one.icdar2017.TP + other.icdar2017.TP;
    CHECK(mixed.pixel_iu ==
          tp / (tp + one.icdar2017.FP + other.icdar2017.FP + one.icdar2017.FN + other.icdar2017.FN));
}

TEST_CASE("label maps become foreground-restricted regions") {
    LabelImage labels(4, 5, 0);
    labels(0, 0) = 3;
    labels(0, 1) = 3;
    labels(2, 2) = 1;
    labels(3, 4) = 2;
    Mask fg(4, 5, 0);
    fg(0, 0) = fg(2, 2) = fg(3, 3) = 1;
    const auto set = regions_from_labels(labels, &fg, RegionKind::ground_truth);
    REQUIRE(set.regions.size() == 2);
    CHECK(set.regions[0].id == 1);
    CHECK(set.regions[0].pixels == std::vector<std::uint32_t>{12});
    CHECK(set.regions[1].id == 3);
    CHECK(set.regions[1].pixels == std::vector<std::uint32_t>{0});
    CHECK(regions_from_labels(labels, nullptr, RegionKind::prediction).regions.size() == 3);

    const auto page = evaluate_page("p", labels, labels, fg, 0.9, 0.75);
    const auto rep = aggregate_reports({page});
    CHECK(testing::contains(report_json(rep), "foreground pixels"));
    CHECK(testing::contains(report_tsv(rep), "corpus\t"));
    const auto img = overlay(labels, labels);
    CHECK(img.rgb.size() == 4u * 5u * 3u);
}
