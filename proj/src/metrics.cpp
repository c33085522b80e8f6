#include "alseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace alseg::metrics {

double jaccard(const Mask& y, const Mask& y_hat) {
    if (y.h != y_hat.h || y.w != y_hat.w) throw InvalidArgument("jaccard: mask shapes differ");
    std::size_t inter = 0, sum_y = 0, sum_hat = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        inter += static_cast<std::size_t>(y.data[i] & y_hat.data[i]);
        sum_y += y.data[i];
        sum_hat += y_hat.data[i];
    }
    const std::size_t uni = sum_y + sum_hat - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Mask binarize(const ProbabilityMap& map) {
    Mask out(map.height(), map.width());
    for (std::size_t j = 0; j < map.pixels(); ++j) out.data[j] = map.prob(j, 1) > map.prob(j, 0) ? 1 : 0;
    return out;
}

CurveBundle aggregate_curves(std::span<const LearningCurve> curves) {
    CurveBundle bundle;
    bundle.curves.assign(curves.begin(), curves.end());
    std::map<Strategy, std::vector<const LearningCurve*>> groups;
    for (const auto& c : curves) groups[c.strategy].push_back(&c);

    const LearningCurve* reference = curves.empty() ? nullptr : &curves.front();
    for (const auto& c : curves) {
        bool same = c.points.size() == reference->points.size();
        for (std::size_t i = 0; same && i < c.points.size(); ++i)
            same = c.points[i].labels_used == reference->points[i].labels_used;
        if (!same) throw InvalidArgument("learning curves do not share a labels_used grid");
    }

    for (const auto& [strategy, members] : groups) {
        std::vector<SummaryPoint> rows;
        for (std::size_t i = 0; i < reference->points.size(); ++i) {
            SummaryPoint sp;
            sp.labels_used = reference->points[i].labels_used;
            sp.count = members.size();
            double sum = 0.0;
            for (const auto* c : members) sum += static_cast<double>(c->points[i].jaccard);
            sp.mean = sum / static_cast<double>(members.size());
            if (members.size() > 1) {
                double ss = 0.0;
                for (const auto* c : members) {
                    const double d = static_cast<double>(c->points[i].jaccard) - sp.mean;
                    ss += d * d;
                }
                sp.stddev = std::sqrt(ss / static_cast<double>(members.size() - 1));
            }
            rows.push_back(sp);
        }
        bundle.summary[strategy] = std::move(rows);
    }
    return bundle;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace {
std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    return os;
}
} // namespace

void export_curves_csv(std::span<const LearningCurve> curves, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "strategy,seed,labels_used,jaccard\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            os << strategy_name(c.strategy) << ',' << c.seed << ',' << p.labels_used << ','
               << format_real(p.jaccard) << '\n';
    if (!os) throw Error("failed writing " + path.string());
}

void export_summary_csv(const CurveBundle& bundle, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "strategy,labels_used,mean_jaccard,std_jaccard\n";
    for (const auto& [strategy, rows] : bundle.summary)
        for (const auto& r : rows)
            os << strategy_name(strategy) << ',' << r.labels_used << ',' << format_real(r.mean) << ','
               << format_real(r.stddev) << '\n';
    if (!os) throw Error("failed writing " + path.string());
}

void export_csv(const CurveBundle& bundle, const std::filesystem::path& raw_path,
                const std::filesystem::path& summary_path) {
    export_curves_csv(bundle.curves, raw_path);
    export_summary_csv(bundle, summary_path);
}

std::vector<LearningCurve> parse_curves_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "strategy,seed,labels_used,jaccard")
        throw FormatError(path.string() + ": unexpected CSV header");
    std::vector<LearningCurve> curves;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string name, seed, used, jac;
        if (!std::getline(ss, name, ',') || !std::getline(ss, seed, ',') || !std::getline(ss, used, ',') ||
            !std::getline(ss, jac))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected four fields");
        const auto strategy = parse_strategy(name);
        if (!strategy) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unknown strategy " + name);
        try {
            const std::uint64_t s = std::stoull(seed);
            if (curves.empty() || curves.back().strategy != *strategy || curves.back().seed != s)
                curves.push_back({*strategy, s, {}});
            curves.back().points.push_back({std::stoul(used), std::stof(jac)});
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return curves;
}

} // namespace alseg::metrics
