// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#include "uncol/evalkit.hpp"

#include "uncol/uapl.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace uncol {

OverlapScores overlap_metrics(const LabelMask& pred, const LabelMask& gt, int classes) {
    if (pred.size() != gt.size()) throw std::invalid_argument("overlap_metrics: mask shapes differ");
    const std::size_t K = static_cast<std::size_t>(classes - 1);
    std::vector<long> inter(K, 0), np(K, 0), ng_(K, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred.labels[i], g = gt.labels[i];
        if (p > 0 && p < classes) ++np[static_cast<std::size_t>(p - 1)];
        if (g > 0 && g < classes) ++ng_[static_cast<std::size_t>(g - 1)];
        if (p == g && p > 0 && p < classes) ++inter[static_cast<std::size_t>(p - 1)];
    }
    OverlapScores s;
    for (std::size_t c = 0; c < K; ++c) {
        const long uni = np[c] + ng_[c] - inter[c];
        if (np[c] + ng_[c] == 0) {
            s.dsc.push_back(100.0);
            s.jaccard.push_back(100.0);
            continue;
        }
        s.dsc.push_back(100.0 * 2.0 * static_cast<double>(inter[c]) / static_cast<double>(np[c] + ng_[c]));
        s.jaccard.push_back(100.0 * static_cast<double>(inter[c]) / static_cast<double>(uni));
    }
    return s;
}

std::vector<std::pair<int, int>> boundary_pixels(const LabelMask& mask, int class_id) {
    std::vector<std::pair<int, int>> out;
    auto is = [&](int y, int x) {
        return y >= 0 && y < mask.height && x >= 0 && x < mask.width && mask.at(y, x) == class_id;
    };
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (is(y, x) && (!is(y - 1, x) || !is(y + 1, x) || !is(y, x - 1) || !is(y, x + 1))) out.emplace_back(y, x);
    return out;
}

namespace {

constexpr double kFar = 1e20;

// Lower envelope of parabolas; f and d have length n.
void distance_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[static_cast<std::size_t>(k)];
            s = ((f[static_cast<std::size_t>(q)] + static_cast<double>(q) * q) -
                 (f[static_cast<std::size_t>(p)] + static_cast<double>(p) * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k + 1)] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k + 1)] < q) ++k;
        const int p = v[static_cast<std::size_t>(k)];
        d[static_cast<std::size_t>(q)] = static_cast<double>(q - p) * (q - p) + f[static_cast<std::size_t>(p)];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(int height, int width, std::span<const std::uint8_t> seeds) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    if (seeds.size() != n) throw std::invalid_argument("squared_distance_transform: size mismatch");
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = seeds[i] ? 0.0 : kFar;
    const int m = std::max(height, width);
    std::vector<double> f(static_cast<std::size_t>(m)), d(static_cast<std::size_t>(m)), z(static_cast<std::size_t>(m + 1));
    std::vector<int> v(static_cast<std::size_t>(m));
    // Columns, then rows.
    f.resize(static_cast<std::size_t>(height));
    d.resize(static_cast<std::size_t>(height));
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y * width + x)];
        distance_1d(f, d, v, z);
        for (int y = 0; y < height; ++y) grid[static_cast<std::size_t>(y * width + x)] = d[static_cast<std::size_t>(y)];
    }
    f.resize(static_cast<std::size_t>(width));
    d.resize(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) f[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y * width + x)];
        distance_1d(f, d, v, z);
        for (int x = 0; x < width; ++x) grid[static_cast<std::size_t>(y * width + x)] = d[static_cast<std::size_t>(x)];
    }
    return grid;
}

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("percentile_sorted: empty input");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::optional<SurfaceScores> surface_metrics(const LabelMask& pred, const LabelMask& gt, int class_id) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw std::invalid_argument("surface_metrics: mask shapes differ");
    }
    const auto bp = boundary_pixels(pred, class_id);
    const auto bg = boundary_pixels(gt, class_id);
    if (bp.empty() || bg.empty()) return std::nullopt;
    const int H = gt.height, W = gt.width;
    auto seeds = [&](const std::vector<std::pair<int, int>>& pts) {
        std::vector<std::uint8_t> s(static_cast<std::size_t>(H) * W, 0);
        for (auto [y, x] : pts) s[static_cast<std::size_t>(y * W + x)] = 1;
        return s;
    };
    const auto dt_gt = squared_distance_transform(H, W, seeds(bg));
    const auto dt_pred = squared_distance_transform(H, W, seeds(bp));

    std::vector<double> d_pg, d_gp;
    for (auto [y, x] : bp) d_pg.push_back(std::sqrt(dt_gt[static_cast<std::size_t>(y * W + x)]));
    for (auto [y, x] : bg) d_gp.push_back(std::sqrt(dt_pred[static_cast<std::size_t>(y * W + x)]));

    double total = 0.0;
    for (double d : d_pg) total += d;
    for (double d : d_gp) total += d;
    SurfaceScores s;
    s.asd = total / static_cast<double>(d_pg.size() + d_gp.size());
    std::sort(d_pg.begin(), d_pg.end());
    std::sort(d_gp.begin(), d_gp.end());
    s.hd95 = std::max(percentile_sorted(d_pg, 0.95), percentile_sorted(d_gp, 0.95));
    return s;
}

namespace {

ClassSummary summarize(const std::vector<double>& v) {
    ClassSummary s;
    s.count = static_cast<int>(v.size());
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size()));
    return s;
}

double mean_of(const std::vector<ClassSummary>& s) {
    double total = 0.0;
    int n = 0;
    for (const auto& c : s)
        if (c.count > 0) {
            total += c.mean;
            ++n;
        }
    return n ? total / n : 0.0;
}

}  // namespace

MetricReport evaluate_segmentation(std::span<const LabelMask> preds, std::span<const LabelMask> gts, int classes) {
    if (preds.size() != gts.size()) throw std::invalid_argument("evaluate_segmentation: count mismatch");
    MetricReport r;
    r.classes = classes;
    const std::size_t K = static_cast<std::size_t>(classes - 1);
    std::vector<std::vector<double>> dsc_c(K), jac_c(K), hd_c(K), asd_c(K);
    for (std::size_t s = 0; s < preds.size(); ++s) {
        const OverlapScores o = overlap_metrics(preds[s], gts[s], classes);
        r.dsc.push_back(o.dsc);
        r.jaccard.push_back(o.jaccard);
        std::vector<std::optional<double>> hd(K), as(K);
        for (std::size_t c = 0; c < K; ++c) {
            dsc_c[c].push_back(o.dsc[c]);
            jac_c[c].push_back(o.jaccard[c]);
            const auto surf = surface_metrics(preds[s], gts[s], static_cast<int>(c + 1));
            if (surf) {
                hd[c] = surf->hd95;
                as[c] = surf->asd;
                hd_c[c].push_back(surf->hd95);
                asd_c[c].push_back(surf->asd);
            } else {
                ++r.undefined_surface;
            }
        }
        r.hd95.push_back(hd);
        r.asd.push_back(as);
    }
    for (std::size_t c = 0; c < K; ++c) {
        r.dsc_summary.push_back(summarize(dsc_c[c]));
        r.jaccard_summary.push_back(summarize(jac_c[c]));
        r.hd95_summary.push_back(summarize(hd_c[c]));
        r.asd_summary.push_back(summarize(asd_c[c]));
    }
    // Mean DSC / Jaccard: per-sample class mean, averaged over samples.
    double dsum = 0.0, jsum = 0.0;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        dsum += std::accumulate(r.dsc[s].begin(), r.dsc[s].end(), 0.0) / static_cast<double>(K);
        jsum += std::accumulate(r.jaccard[s].begin(), r.jaccard[s].end(), 0.0) / static_cast<double>(K);
    }
    if (!preds.empty()) {
        r.mean_dsc = dsum / static_cast<double>(preds.size());
        r.mean_jaccard = jsum / static_cast<double>(preds.size());
    }
    r.mean_hd95 = mean_of(r.hd95_summary);
    r.mean_asd = mean_of(r.asd_summary);
    return r;
}

// ---------------------------------------------------------------- calibration

std::optional<double> auroc(std::span<const double> uncertainty, std::span<const std::uint8_t> error) {
    if (uncertainty.size() != error.size()) throw std::invalid_argument("auroc: size mismatch");
    const std::size_t n = uncertainty.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return uncertainty[a] < uncertainty[b]; });
    double pos_rank_sum = 0.0;
    double n_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && uncertainty[order[j + 1]] == uncertainty[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (error[order[k]]) {
                pos_rank_sum += avg_rank;
                n_pos += 1.0;
            }
        i = j + 1;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
    const double u = pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    return u / (n_pos * n_neg);
}

RiskCoverage risk_coverage(std::span<const double> uncertainty, std::span<const std::uint8_t> error) {
    if (uncertainty.size() != error.size()) throw std::invalid_argument("risk_coverage: size mismatch");
    const std::size_t n = uncertainty.size();
    if (n == 0) throw std::invalid_argument("risk_coverage: empty input");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return uncertainty[a] < uncertainty[b]; });
    RiskCoverage rc;
    rc.coverage.push_back(0.0);
    rc.risk.push_back(0.0);
    double errors = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        errors += error[order[k - 1]] ? 1.0 : 0.0;
        rc.coverage.push_back(static_cast<double>(k) / static_cast<double>(n));
        rc.risk.push_back(errors / static_cast<double>(k));
    }
    for (std::size_t k = 1; k < rc.coverage.size(); ++k)
        rc.aurc += (rc.coverage[k] - rc.coverage[k - 1]) * 0.5 * (rc.risk[k] + rc.risk[k - 1]);
    return rc;
}

CalibReport calibration(std::span<const ProbMap> probs, std::span<const LabelMask> gts) {
    if (probs.size() != gts.size()) throw std::invalid_argument("calibration: count mismatch");
    CalibReport r;
    r.bins.assign(kReliabilityBins, ReliabilityBin{});
    std::vector<double> conf_sum(kReliabilityBins, 0.0), correct(kReliabilityBins, 0.0);
    std::vector<double> unc;
    std::vector<std::uint8_t> err;
    double nll = 0.0, brier = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < probs.size(); ++s) {
        const ProbMap& p = probs[s];
        const LabelMask& gt = gts[s];
        if (p.pixels() != gt.size()) throw std::invalid_argument("calibration: shape mismatch");
        for (std::size_t i = 0; i < p.pixels(); ++i) {
            const auto row = p.row(i);
            std::size_t best = 0;
            for (std::size_t c = 1; c < row.size(); ++c)
                if (row[c] > row[best]) best = c;
            const double conf = row[best];
            const bool ok = best == gt.labels[i];
            const int b = std::clamp(static_cast<int>(std::floor(conf * kReliabilityBins)), 0, kReliabilityBins - 1);
            r.bins[static_cast<std::size_t>(b)].count += 1;
            conf_sum[static_cast<std::size_t>(b)] += conf;
            correct[static_cast<std::size_t>(b)] += ok ? 1.0 : 0.0;
            nll -= std::log(std::max(row[gt.labels[i]], 1e-12));
            double sq = 0.0;
            for (std::size_t c = 0; c < row.size(); ++c) {
                const double t = c == gt.labels[i] ? 1.0 : 0.0;
                sq += (row[c] - t) * (row[c] - t);
            }
            brier += sq / static_cast<double>(row.size());
            unc.push_back(normalized_entropy(row));
            err.push_back(ok ? 0 : 1);
            ++n;
        }
    }
    if (n == 0) return r;
    for (int b = 0; b < kReliabilityBins; ++b) {
        auto& bin = r.bins[static_cast<std::size_t>(b)];
        if (bin.count == 0) continue;
        bin.confidence = conf_sum[static_cast<std::size_t>(b)] / bin.count;
        bin.accuracy = correct[static_cast<std::size_t>(b)] / bin.count;
        r.ece += static_cast<double>(bin.count) / static_cast<double>(n) * std::abs(bin.accuracy - bin.confidence);
    }
    r.nll = nll / static_cast<double>(n);
    r.brier = brier / static_cast<double>(n);
    r.auroc = auroc(unc, err);
    const RiskCoverage rc = risk_coverage(unc, err);
    r.coverage = rc.coverage;
    r.risk = rc.risk;
    r.aurc = rc.aurc;
    return r;
}

// ---------------------------------------------------------------- output

namespace {

nlohmann::json summary_json(const std::vector<ClassSummary>& s) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : s) arr.push_back({{"mean", c.mean}, {"std", c.stddev}, {"count", c.count}});
    return arr;
}

}  // namespace

nlohmann::json to_json(const MetricReport& r) {
    return {{"classes", r.classes},
            {"mean_dsc", r.mean_dsc},
            {"mean_jaccard", r.mean_jaccard},
            {"mean_hd95", r.mean_hd95},
            {"mean_asd", r.mean_asd},
            {"undefined_surface", r.undefined_surface},
            {"dsc", summary_json(r.dsc_summary)},
            {"jaccard", summary_json(r.jaccard_summary)},
            {"hd95", summary_json(r.hd95_summary)},
            {"asd", summary_json(r.asd_summary)}};
}

nlohmann::json to_json(const CalibReport& r) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : r.bins) bins.push_back({{"count", b.count}, {"confidence", b.confidence}, {"accuracy", b.accuracy}});
    nlohmann::json j = {{"ece", r.ece}, {"nll", r.nll}, {"brier", r.brier}, {"aurc", r.aurc}, {"bins", bins}};
    j["auroc"] = r.auroc ? nlohmann::json(*r.auroc) : nlohmann::json(nullptr);
    return j;
}

void write_metric_csv(std::ostream& os, const MetricReport& r) {
    os << "sample,class,dsc,jaccard,hd95,asd\n" << std::setprecision(17);
    for (std::size_t s = 0; s < r.dsc.size(); ++s) {
        for (std::size_t c = 0; c < r.dsc[s].size(); ++c) {
            os << s << ',' << c + 1 << ',' << r.dsc[s][c] << ',' << r.jaccard[s][c] << ',';
            if (r.hd95[s][c]) os << *r.hd95[s][c];
            os << ',';
            if (r.asd[s][c]) os << *r.asd[s][c];
            os << '\n';
        }
    }
}

void write_reliability_csv(std::ostream& os, const CalibReport& r) {
    os << "bin,lower,upper,count,confidence,accuracy\n" << std::setprecision(17);
    for (std::size_t b = 0; b < r.bins.size(); ++b) {
        os << b << ',' << static_cast<double>(b) / kReliabilityBins << ',' << static_cast<double>(b + 1) / kReliabilityBins
           << ',' << r.bins[b].count << ',' << r.bins[b].confidence << ',' << r.bins[b].accuracy << '\n';
    }
}

void write_risk_coverage_csv(std::ostream& os, const CalibReport& r) {
    os << "coverage,risk\n" << std::setprecision(17);
    for (std::size_t k = 0; k < r.coverage.size(); ++k) os << r.coverage[k] << ',' << r.risk[k] << '\n';
}

}  // namespace uncol
