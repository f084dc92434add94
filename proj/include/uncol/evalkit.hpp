// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0
//
// Segmentation metrics (DSC, Jaccard, 95HD, ASD) and uncertainty evaluation
// (reliability bins, ECE, NLL, Brier, AUROC, risk-coverage / AURC).

#pragma once

#include "uncol/nets.hpp"
#include "uncol/synthdata.hpp"

#include <json.hpp>

#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace uncol {

struct OverlapScores {
    // Indexed by foreground class - 1. Percent scale.
    std::vector<double> dsc;
    std::vector<double> jaccard;
};

// Both-empty classes score 100 on both metrics.
OverlapScores overlap_metrics(const LabelMask& pred, const LabelMask& gt, int classes);

struct SurfaceScores {
    double hd95 = 0.0;
    double asd = 0.0;
};

// Boundary pixels: class pixels with a 4-neighbour outside the class or the
// image. Raster order.
std::vector<std::pair<int, int>> boundary_pixels(const LabelMask& mask, int class_id);

// Exact squared Euclidean distance to the nearest seed pixel (seeds marked
// non-zero); large value where no seed exists.
std::vector<double> squared_distance_transform(int height, int width, std::span<const std::uint8_t> seeds);

// Linear-interpolated percentile of sorted values, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

// nullopt when either mask lacks the class.
std::optional<SurfaceScores> surface_metrics(const LabelMask& pred, const LabelMask& gt, int class_id);

struct ClassSummary {
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};

struct MetricReport {
    int classes = 0;
    // [sample][class - 1]
    std::vector<std::vector<double>> dsc, jaccard;
    std::vector<std::vector<std::optional<double>>> hd95, asd;
    std::vector<ClassSummary> dsc_summary, jaccard_summary, hd95_summary, asd_summary;
    double mean_dsc = 0.0;
    double mean_jaccard = 0.0;
    double mean_hd95 = 0.0;
    double mean_asd = 0.0;
    int undefined_surface = 0;
};

MetricReport evaluate_segmentation(std::span<const LabelMask> preds, std::span<const LabelMask> gts, int classes);

struct ReliabilityBin {
    int count = 0;
    double confidence = 0.0;  // mean confidence in bin
    double accuracy = 0.0;
};

struct CalibReport {
    std::vector<ReliabilityBin> bins;  // 10 equal-width bins
    double ece = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    std::optional<double> auroc;
    std::vector<double> coverage, risk;
    double aurc = 0.0;
};

inline constexpr int kReliabilityBins = 10;

CalibReport calibration(std::span<const ProbMap> probs, std::span<const LabelMask> gts);

// Mann-Whitney probability that an erroneous item is more uncertain than a
// correct one (ties count 1/2). nullopt unless both groups are present.
std::optional<double> auroc(std::span<const double> uncertainty, std::span<const std::uint8_t> error);

struct RiskCoverage {
    std::vector<double> coverage;  // k / n for k = 0..n
    std::vector<double> risk;      // risk at zero coverage is 0
    double aurc = 0.0;
};

RiskCoverage risk_coverage(std::span<const double> uncertainty, std::span<const std::uint8_t> error);

nlohmann::json to_json(const MetricReport& r);
nlohmann::json to_json(const CalibReport& r);
// sample,class,dsc,jaccard,hd95,asd
void write_metric_csv(std::ostream& os, const MetricReport& r);
// bin,lower,upper,count,confidence,accuracy
void write_reliability_csv(std::ostream& os, const CalibReport& r);
void write_risk_coverage_csv(std::ostream& os, const CalibReport& r);

}  // namespace uncol
