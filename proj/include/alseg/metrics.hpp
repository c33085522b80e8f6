#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alseg/core.hpp"

namespace alseg::metrics {

/// Intersection over union of two binary masks; 1.0 when both are empty.
double jaccard(const Mask& y, const Mask& y_hat);

/// Per-pixel argmax; an exact 0.5 tie goes to class 0.
Mask binarize(const ProbabilityMap& map);

struct CurvePoint {
    std::size_t labels_used = 0;
    // Single precision so the 9-significant-digit CSV form is lossless.
    float jaccard = 0.0f;
    bool operator==(const CurvePoint&) const = default;
};

struct LearningCurve {
    Strategy strategy = Strategy::Random;
    std::uint64_t seed = 0;
    std::vector<CurvePoint> points;
    bool operator==(const LearningCurve&) const = default;
};

struct SummaryPoint {
    std::size_t labels_used = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1); 0 for a single curve
    std::size_t count = 0;
};

struct CurveBundle {
    std::vector<LearningCurve> curves;
    std::map<Strategy, std::vector<SummaryPoint>> summary;
};

/// Groups curves by strategy and computes mean / sample std per labels_used.
/// Throws InvalidArgument if the labels_used grids differ.
CurveBundle aggregate_curves(std::span<const LearningCurve> curves);

/// Raw rows `strategy,seed,labels_used,jaccard`.
void export_curves_csv(std::span<const LearningCurve> curves, const std::filesystem::path& path);
/// Summary rows `strategy,labels_used,mean_jaccard,std_jaccard`.
void export_summary_csv(const CurveBundle& bundle, const std::filesystem::path& path);
/// Writes raw rows to `raw_path` and the summary to `summary_path`.
void export_csv(const CurveBundle& bundle, const std::filesystem::path& raw_path,
                const std::filesystem::path& summary_path);

std::vector<LearningCurve> parse_curves_csv(const std::filesystem::path& path);

/// "%.9g" form used by every CSV writer.
std::string format_real(double v);

} // namespace alseg::metrics
