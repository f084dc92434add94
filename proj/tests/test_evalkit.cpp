// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "uncol/evalkit.hpp"
#include "uncol/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace uncol;
using namespace uncol::testing;

TEST_CASE("overlap metrics examples") {
    LabelMask p(1, 8), g(1, 8);
    for (int x : {0, 1, 2, 3}) p.at(0, x) = 1;
    for (int x : {2, 3, 4, 5}) g.at(0, x) = 1;
    const OverlapScores s = overlap_metrics(p, g, 3);
    CHECK(s.dsc[0] == 50.0);
    CHECK(s.jaccard[0] == doctest::Approx(33.333).epsilon(1e-5));
    CHECK(s.dsc[1] == 100.0);  // class 2 absent from both
    CHECK(s.jaccard[1] == 100.0);

    const OverlapScores same = overlap_metrics(p, p, 3);
    CHECK(same.dsc[0] == 100.0);
    LabelMask q(1, 8);
    for (int x : {6, 7}) q.at(0, x) = 1;
    CHECK(overlap_metrics(p, q, 3).dsc[0] == 0.0);
    CHECK(overlap_metrics(p, q, 3).jaccard[0] == 0.0);
}

TEST_CASE("overlap metrics equal set counting on random masks") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(4, 32)), w = static_cast<int>(rng.uniform_int(4, 32));
        const LabelMask p = random_mask(rng, h, w, 4), g = random_mask(rng, h, w, 4);
        const OverlapScores s = overlap_metrics(p, g, 4);
        const OverlapScores t = overlap_metrics(g, p, 4);
        for (int k = 1; k < 4; ++k) {
            double inter = 0, np = 0, ng = 0, uni = 0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const bool a = p.labels[i] == k, b = g.labels[i] == k;
                inter += a && b;
                np += a;
                ng += b;
                uni += a || b;
            }
            const double dsc = np + ng == 0 ? 100.0 : 100.0 * 2.0 * inter / (np + ng);
            const double jac = uni == 0 ? 100.0 : 100.0 * inter / uni;
            REQUIRE(s.dsc[k - 1] == dsc);
            REQUIRE(s.jaccard[k - 1] == jac);
            REQUIRE(t.dsc[k - 1] == s.dsc[k - 1]);
            REQUIRE(s.jaccard[k - 1] <= s.dsc[k - 1]);
        }
    }
}

TEST_CASE("surface metrics examples") {
    LabelMask a(8, 8), b(8, 8);
    a.at(2, 1) = 1;
    b.at(2, 4) = 1;
    const auto s = surface_metrics(a, b, 1);
    REQUIRE(s);
    CHECK(s->hd95 == 3.0);
    CHECK(s->asd == 3.0);
    const auto same = surface_metrics(a, a, 1);
    CHECK(same->hd95 == 0.0);
    CHECK(same->asd == 0.0);
    CHECK_FALSE(surface_metrics(a, LabelMask(8, 8), 1));
    CHECK_FALSE(surface_metrics(a, b, 2));
}

TEST_CASE("boundary and distance transform match brute force") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const LabelMask m = random_mask(rng, 20, 17, 3);
        for (int k = 1; k < 3; ++k) CHECK(boundary_pixels(m, k) == oracle_boundary(m, k));
        std::vector<std::uint8_t> seeds(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) seeds[i] = m.labels[i] == 1;
        const auto dt = squared_distance_transform(20, 17, seeds);
        if (std::find(seeds.begin(), seeds.end(), 1) == seeds.end()) continue;
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 17; ++x) {
                double best = 1e300;
                for (int v = 0; v < 20; ++v)
                    for (int u = 0; u < 17; ++u)
                        if (seeds[static_cast<std::size_t>(v * 17 + u)])
                            best = std::min(best, static_cast<double>((y - v) * (y - v) + (x - u) * (x - u)));
                REQUIRE(dt[static_cast<std::size_t>(y * 17 + x)] == best);
            }
    }
}

TEST_CASE("95HD and ASD equal the all-pairs oracle on 100 random pairs") {
    Rng rng(3);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(2, 32)), w = static_cast<int>(rng.uniform_int(2, 32));
        const LabelMask p = random_mask(rng, h, w, 3), g = random_mask(rng, h, w, 3);
        for (int k = 1; k < 3; ++k) {
            const auto bp = oracle_boundary(p, k), bg = oracle_boundary(g, k);
            const auto s = surface_metrics(p, g, k);
            if (bp.empty() || bg.empty()) {
                REQUIRE_FALSE(s);
                continue;
            }
            REQUIRE(s);
            const auto dpg = all_pairs(bp, bg), dgp = all_pairs(bg, bp);
            double total = 0.0;
            for (double d : dpg) total += d;
            for (double d : dgp) total += d;
            const double asd = total / static_cast<double>(dpg.size() + dgp.size());
            const double hd95 = std::max(oracle_percentile(dpg, 0.95), oracle_percentile(dgp, 0.95));
            REQUIRE(s->asd == asd);
            REQUIRE(s->hd95 == hd95);
            const double hd = std::max(*std::max_element(dpg.begin(), dpg.end()), *std::max_element(dgp.begin(), dgp.end()));
            REQUIRE(s->hd95 <= hd);
            const auto rev = surface_metrics(g, p, k);
            REQUIRE(rev->hd95 == s->hd95);
            ++checked;
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("translation leaves metrics unchanged") {
    Rng rng(4);
    const LabelMask p = random_mask(rng, 16, 16, 3), g = random_mask(rng, 16, 16, 3);
    LabelMask pp(32, 32), gg(32, 32);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            pp.at(y + 9, x + 5) = p.at(y, x);
            gg.at(y + 9, x + 5) = g.at(y, x);
        }
    const OverlapScores a = overlap_metrics(p, g, 3), b = overlap_metrics(pp, gg, 3);
    CHECK(a.dsc == b.dsc);
    CHECK(a.jaccard == b.jaccard);
    // Surface metrics are only translation-invariant when no boundary is
    // created by the image border, so compare interior-only masks.
    LabelMask ip(16, 16), ig(16, 16), tp(32, 32), tg(32, 32);
    for (int y = 3; y < 9; ++y)
        for (int x = 4; x < 12; ++x) ip.at(y, x) = 1;
    for (int y = 5; y < 12; ++y)
        for (int x = 2; x < 7; ++x) ig.at(y, x) = 1;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            tp.at(y + 9, x + 5) = ip.at(y, x);
            tg.at(y + 9, x + 5) = ig.at(y, x);
        }
    const auto s1 = surface_metrics(ip, ig, 1), s2 = surface_metrics(tp, tg, 1);
    CHECK(s1->hd95 == s2->hd95);
    CHECK(s1->asd == s2->asd);
}

TEST_CASE("percentile interpolation") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    CHECK(percentile_sorted(v, 0.0) == 1.0);
    CHECK(percentile_sorted(v, 1.0) == 5.0);
    CHECK(percentile_sorted(v, 0.5) == 3.0);
    CHECK(percentile_sorted(v, 0.95) == doctest::Approx(4.8).epsilon(1e-14));
    CHECK_THROWS_AS(percentile_sorted(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST_CASE("aggregate report counts undefined surface cases") {
    LabelMask a(8, 8), b(8, 8);
    a.at(1, 1) = 1;
    b.at(1, 2) = 1;
    a.at(5, 5) = 2;  // class 2 missing from b
    const std::vector<LabelMask> preds{a, a}, gts{b, a};
    const MetricReport r = evaluate_segmentation(preds, gts, 3);
    CHECK(r.undefined_surface == 1);
    CHECK(r.dsc.size() == 2);
    CHECK(r.dsc[0][0] == 0.0);
    CHECK(r.dsc[1][0] == 100.0);
    CHECK(r.dsc_summary[0].mean == 50.0);
    CHECK(r.dsc_summary[0].stddev == 50.0);
    CHECK(r.hd95_summary[1].count == 1);
    CHECK(r.mean_dsc == doctest::Approx((0.0 + 0.0) / 2 / 2 + (100.0 + 100.0) / 2 / 2));
    std::ostringstream os;
    write_metric_csv(os, r);
    const std::string csv = os.str();
    CHECK(csv.rfind("sample,class,dsc,jaccard,hd95,asd\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("AUROC examples and the pairwise oracle") {
    CHECK(*auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 1.0);
    CHECK(*auroc(std::vector<double>(6, 0.4), std::vector<std::uint8_t>{0, 1, 0, 1, 1, 0}) == 0.5);
    CHECK_FALSE(auroc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}));
    CHECK_FALSE(auroc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{0, 0}));

    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> u(50);
        std::vector<std::uint8_t> e(50);
        for (int i = 0; i < 50; ++i) {
            // Coarse values so that ties occur.
            u[i] = std::round(rng.uniform() * 8) / 8;
            e[i] = rng.uniform() < 0.3 + 0.4 * u[i];
        }
        e[0] = 1;
        e[1] = 0;
        const double expect = brute_auroc(u, e);
        REQUIRE(std::abs(*auroc(u, e) - expect) <= 1e-12);
        std::vector<double> t(50);
        for (int i = 0; i < 50; ++i) t[i] = std::exp(3 * u[i]) - 7;
        REQUIRE(std::abs(*auroc(t, e) - expect) <= 1e-12);
    }
}

TEST_CASE("risk-coverage examples") {
    const std::vector<double> u{0.3, 0.1, 0.7, 0.2};
    const RiskCoverage none = risk_coverage(u, std::vector<std::uint8_t>{0, 0, 0, 0});
    CHECK(none.aurc == 0.0);
    for (double r : none.risk) CHECK(r == 0.0);
    const RiskCoverage all = risk_coverage(u, std::vector<std::uint8_t>{1, 1, 1, 1});
    CHECK(all.aurc == doctest::Approx(1.0 - 1.0 / 8.0).epsilon(1e-15));
    CHECK(all.coverage.size() == 5);
    CHECK(all.coverage.front() == 0.0);
    CHECK(all.coverage.back() == 1.0);
    for (std::size_t k = 1; k < all.risk.size(); ++k) CHECK(all.risk[k] == 1.0);

    // Most confident first: 0.1 (ok), 0.2 (err), 0.3 (ok), 0.7 (err).
    const RiskCoverage mix = risk_coverage(u, std::vector<std::uint8_t>{0, 0, 1, 1});
    const std::vector<double> risk{0.0, 0.0, 0.5, 1.0 / 3.0, 0.5};
    for (std::size_t k = 0; k < 5; ++k) CHECK(mix.risk[k] == doctest::Approx(risk[k]).epsilon(1e-15));
    double area = 0.0;
    for (std::size_t k = 1; k < 5; ++k) area += 0.25 * (risk[k] + risk[k - 1]) / 2;
    CHECK(mix.aurc == doctest::Approx(area).epsilon(1e-14));
}

TEST_CASE("oracle ranking minimises AURC over all 10-point permutations") {
    const std::vector<std::uint8_t> err{0, 1, 0, 0, 1, 0, 0, 1, 0, 0};
    // Oracle uncertainty: errors rank last.
    std::vector<double> oracle(10);
    for (int i = 0; i < 10; ++i) oracle[i] = err[i] ? 1.0 + i : 0.1 * i;
    const double best = risk_coverage(oracle, err).aurc;
    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> u(10);
    long count = 0;
    bool minimal = true;
    do {
        for (int i = 0; i < 10; ++i) u[i] = perm[i];
        if (risk_coverage(u, err).aurc < best - 1e-15) minimal = false;
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(count == 3628800);
    CHECK(minimal);
}

TEST_CASE("calibration: perfect predictions") {
    ProbMap p(3, 2, 2);
    LabelMask g(2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        g.labels[i] = static_cast<std::uint8_t>(i % 3);
        p.at(static_cast<int>(i % 3), i) = 1.0;
    }
    const CalibReport r = calibration(std::vector<ProbMap>{p}, std::vector<LabelMask>{g});
    CHECK(r.ece == 0.0);
    CHECK(r.nll == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.brier == 0.0);
    CHECK(r.bins.size() == 10);
    CHECK_FALSE(r.auroc);
}

TEST_CASE("calibration: ten pixels at 0.7 with seven correct") {
    ProbMap p(2, 1, 10);
    LabelMask g(1, 10);
    for (std::size_t i = 0; i < 10; ++i) {
        p.at(0, i) = 0.7;
        p.at(1, i) = 0.3;
        g.labels[i] = i < 7 ? 0 : 1;
    }
    const CalibReport r = calibration(std::vector<ProbMap>{p}, std::vector<LabelMask>{g});
    CHECK(r.ece == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("calibration: hand-computed ten-pixel case") {
    // (confidence, correct): two in [0.9,1), one in [0.8,0.9), three in
    // [0.6,0.7), four in [0.5,0.6).
    const double conf[10] = {0.95, 0.95, 0.85, 0.65, 0.65, 0.62, 0.55, 0.55, 0.52, 0.58};
    const int ok[10] = {1, 1, 0, 1, 0, 1, 1, 1, 0, 0};
    ProbMap p(2, 1, 10);
    LabelMask g(1, 10);
    double nll = 0.0, brier = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        p.at(0, i) = conf[i];
        p.at(1, i) = 1.0 - conf[i];
        g.labels[i] = ok[i] ? 0 : 1;
        const double pt = ok[i] ? conf[i] : 1.0 - conf[i];
        nll -= std::log(pt);
        brier += (1.0 - pt) * (1.0 - pt);  // two classes, same error on each
    }
    // Bin terms: 0.2*|1-0.95| + 0.1*|0-0.85| + 0.3*|2/3-0.64| + 0.4*|0.5-0.55|
    const double ece = 0.2 * 0.05 + 0.1 * 0.85 + 0.3 * (2.0 / 3.0 - 0.64) + 0.4 * 0.05;
    CHECK(ece == doctest::Approx(0.123).epsilon(1e-12));
    const CalibReport r = calibration(std::vector<ProbMap>{p}, std::vector<LabelMask>{g});
    CHECK(std::abs(r.ece - 0.123) <= 1e-12);
    CHECK(r.bins[9].count == 2);
    CHECK(r.bins[8].count == 1);
    CHECK(r.bins[6].count == 3);
    CHECK(r.bins[5].count == 4);
    CHECK(r.bins[6].accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.nll == doctest::Approx(nll / 10).epsilon(1e-13));
    CHECK(r.brier == doctest::Approx(brier / 10).epsilon(1e-13));
    REQUIRE(r.auroc);
    CHECK(*r.auroc >= 0.0);
    CHECK(*r.auroc <= 1.0);

    std::ostringstream os;
    write_reliability_csv(os, r);
    const std::string csv = os.str();
    CHECK(csv.rfind("bin,lower,upper,count,confidence,accuracy\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    CHECK(to_json(r).at("bins").size() == 10);
}
