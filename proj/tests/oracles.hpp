// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations and random inputs shared by the unit
// tests and the acceptance binary.

#pragma once

#include "uncol/evalkit.hpp"
#include "uncol/rng.hpp"
#include "uncol/uapl.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace uncol::testing {

// Random blobby mask: a few filled discs of random classes on background.
inline LabelMask random_mask(Rng& rng, int h, int w, int classes) {
    LabelMask m(h, w);
    const int discs = static_cast<int>(rng.uniform_int(1, 4));
    for (int d = 0; d < discs; ++d) {
        const double cy = rng.uniform(0, h), cx = rng.uniform(0, w), r = rng.uniform(1.0, h / 3.0);
        const auto k = static_cast<std::uint8_t>(rng.uniform_int(1, classes - 1));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(y, x) = k;
    }
    // Sprinkle isolated pixels so boundaries are irregular.
    for (int i = 0; i < h * w / 40; ++i)
        m.at(static_cast<int>(rng.uniform_int(0, h - 1)), static_cast<int>(rng.uniform_int(0, w - 1))) =
            static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1));
    return m;
}

inline std::vector<std::pair<int, int>> oracle_boundary(const LabelMask& m, int k) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (m.at(y, x) != k) continue;
            bool edge = false;
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int d = 0; d < 4; ++d) {
                const int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || nx < 0 || ny >= m.height || nx >= m.width || m.at(ny, nx) != k) edge = true;
            }
            if (edge) out.emplace_back(y, x);
        }
    return out;
}

inline std::vector<double> all_pairs(const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
    std::vector<double> d;
    for (auto [y, x] : from) {
        long best = -1;
        for (auto [v, u] : to) {
            const long s = static_cast<long>(y - v) * (y - v) + static_cast<long>(x - u) * (x - u);
            if (best < 0 || s < best) best = s;
        }
        d.push_back(std::sqrt(static_cast<double>(best)));
    }
    return d;
}

inline double oracle_percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double brute_auroc(const std::vector<double>& u, const std::vector<std::uint8_t>& e) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < u.size(); ++j) {
            if (!e[i] || e[j]) continue;
            pairs += 1.0;
            wins += u[i] > u[j] ? 1.0 : (u[i] == u[j] ? 0.5 : 0.0);
        }
    return wins / pairs;
}


// Random simplex rows, sharpened by a random temperature so that entropies
// cover the whole [0, 1] range.
inline ProbMap random_probs(Rng& rng, int C, int h, int w) {
    ProbMap p(C, h, w);
    for (std::size_t i = 0; i < p.pixels(); ++i) {
        const double temp = std::exp(rng.uniform(-3.0, 2.0));
        double total = 0.0;
        for (int c = 0; c < C; ++c) {
            const double v = std::exp(rng.normal() * temp);
            p.at(c, i) = v;
            total += v;
        }
        for (int c = 0; c < C; ++c) p.at(c, i) /= total;
    }
    return p;
}

inline UncMap random_unc(Rng& rng, int h, int w) {
    UncMap u{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
    for (double& v : u.values) v = rng.uniform();
    return u;
}


}  // namespace uncol::testing
