#include "alseg/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace alseg::strategies {

double score_max_entropy(const ProbabilityMap& map) {
    double total = 0.0;
    for (double p : map.raw())
        if (p > 0.0) total -= p * std::log(p);
    return total;
}

double score_least_confidence(const ProbabilityMap& map) {
    double total = 0.0;
    for (std::size_t j = 0; j < map.pixels(); ++j) {
        double best = map.prob(j, 0);
        for (std::size_t c = 1; c < kNumClasses; ++c) best = std::max(best, map.prob(j, c));
        total += best;
    }
    return total;
}

ProbabilityMap aggregate_mc(std::span<const ProbabilityMap> maps) {
    if (maps.empty()) throw InvalidArgument("aggregate_mc needs at least one map");
    const auto h = maps.front().height();
    const auto w = maps.front().width();
    ProbabilityMap mean = maps.front();
    for (std::size_t t = 1; t < maps.size(); ++t) {
        const auto& m = maps[t];
        if (m.height() != h || m.width() != w) throw InvalidArgument("aggregate_mc shape mismatch");
        const double inv = 1.0 / static_cast<double>(t + 1);
        for (std::size_t j = 0; j < mean.pixels(); ++j)
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                double& acc = mean.prob(j, c);
                acc += (m.prob(j, c) - acc) * inv;
            }
    }
    return mean;
}

SelectionResult select_top_k(std::span<const ScoredSample> scores, std::size_t k, Direction direction) {
    if (k > scores.size()) throw InvalidArgument("k exceeds number of scored samples");
    std::vector<ScoredSample> order(scores.begin(), scores.end());
    auto better = [direction](const ScoredSample& a, const ScoredSample& b) {
        if (a.score != b.score)
            return direction == Direction::Maximize ? a.score > b.score : a.score < b.score;
        return a.pool_index < b.pool_index;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
    SelectionResult result;
    result.chosen.reserve(k);
    for (std::size_t i = 0; i < k; ++i) result.chosen.push_back(order[i].pool_index);
    result.per_sample_scores.emplace(scores.begin(), scores.end());
    return result;
}

double squared_distance(const Embedding& a, const Embedding& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

namespace {

void check_uniform_length(std::span<const Embedding> points) {
    for (const auto& p : points)
        if (p.size() != points.front().size()) throw InvalidArgument("embeddings differ in length");
}

std::size_t nearest_centroid(const Embedding& p, const std::vector<Embedding>& centroids, double& dist) {
    std::size_t best = 0;
    dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids[c]);
        if (d < dist) {
            dist = d;
            best = c;
        }
    }
    return best;
}

} // namespace

KMeansResult kmeans_fit(std::span<const Embedding> points, std::size_t k, std::size_t max_iters,
                        std::uint64_t seed) {
    if (k == 0) throw InvalidArgument("kmeans needs k >= 1");
    if (k > points.size()) throw InvalidArgument("kmeans k exceeds number of points");
    check_uniform_length(points);
    const std::size_t n = points.size();
    Rng rng(derive_seed(seed, 0x6b6d6561ULL));

    // k-means++ seeding
    KMeansResult result;
    std::vector<bool> taken(n, false);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    result.centroids.push_back(points[first]);
    taken[first] = true;
    while (result.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            min_d2[i] = std::min(min_d2[i], squared_distance(points[i], result.centroids.back()));
            if (!taken[i]) total += min_d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i] || min_d2[i] <= 0.0) continue;
                pick = i;
                r -= min_d2[i];
                if (r < 0.0) break;
            }
        }
        if (pick == n) {
            // Every remaining point coincides with a centroid.
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i]) free.push_back(i);
            pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
        }
        taken[pick] = true;
        result.centroids.push_back(points[pick]);
    }

    auto assign = [&](std::vector<std::size_t>& out) {
        double wcss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            out[i] = nearest_centroid(points[i], result.centroids, d);
            wcss += d;
        }
        return wcss;
    };

    result.assignment.assign(n, 0);
    result.wcss_history.push_back(assign(result.assignment));
    const std::size_t dim = points.front().size();
    std::vector<std::size_t> next(n, 0);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        std::vector<Embedding> sums(k, Embedding(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto c = result.assignment[i];
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centroid
            for (std::size_t d = 0; d < dim; ++d)
                result.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
        result.wcss_history.push_back(assign(next));
        if (next == result.assignment) break;
        result.assignment.swap(next);
    }
    return result;
}

SelectionResult select_kmeans(std::span<const IndexedEmbedding> embeddings, std::size_t k,
                              std::uint64_t seed, std::size_t max_iters) {
    if (k > embeddings.size()) throw InvalidArgument("fewer unlabeled samples than k");
    SelectionResult result;
    if (k == 0) return result;
    std::vector<Embedding> points;
    points.reserve(embeddings.size());
    for (const auto& e : embeddings) points.push_back(e.second);
    const auto fit = kmeans_fit(points, k, max_iters, seed);

    std::vector<bool> taken(points.size(), false);
    for (const auto& centroid : fit.centroids) {
        std::size_t best = points.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (taken[i]) continue;
            const double d = squared_distance(points[i], centroid);
            if (d < best_d || (d == best_d && embeddings[i].first < embeddings[best].first)) {
                best_d = d;
                best = i;
            }
        }
        taken[best] = true;
        result.chosen.push_back(embeddings[best].first);
    }
    return result;
}

SelectionResult select_coreset(std::span<const IndexedEmbedding> all_embeddings,
                               std::span<const Index> labeled, std::size_t k) {
    if (labeled.empty()) throw InvalidArgument("core-set selection needs a nonempty labeled set");
    std::unordered_map<Index, std::size_t> position;
    for (std::size_t i = 0; i < all_embeddings.size(); ++i) position[all_embeddings[i].first] = i;

    std::vector<bool> is_center(all_embeddings.size(), false);
    for (Index l : labeled) {
        auto it = position.find(l);
        if (it == position.end()) throw InvalidArgument("labeled index missing from embeddings");
        is_center[it->second] = true;
    }
    std::size_t unlabeled = 0;
    for (bool c : is_center) unlabeled += c ? 0 : 1;
    if (k > unlabeled) throw InvalidArgument("k exceeds number of unlabeled samples");

    std::vector<double> min_d2(all_embeddings.size(), std::numeric_limits<double>::infinity());
    auto absorb = [&](std::size_t center) {
        for (std::size_t i = 0; i < all_embeddings.size(); ++i)
            if (!is_center[i])
                min_d2[i] = std::min(min_d2[i], squared_distance(all_embeddings[i].second,
                                                                 all_embeddings[center].second));
    };
    for (std::size_t i = 0; i < all_embeddings.size(); ++i)
        if (is_center[i]) absorb(i);

    SelectionResult result;
    std::vector<ScoredSample> radii;
    for (std::size_t i = 0; i < all_embeddings.size(); ++i)
        if (!is_center[i]) radii.push_back({all_embeddings[i].first, std::sqrt(min_d2[i])});
    for (std::size_t step = 0; step < k; ++step) {
        std::size_t best = all_embeddings.size();
        for (std::size_t i = 0; i < all_embeddings.size(); ++i) {
            if (is_center[i]) continue;
            if (best == all_embeddings.size() || min_d2[i] > min_d2[best] ||
                (min_d2[i] == min_d2[best] && all_embeddings[i].first < all_embeddings[best].first))
                best = i;
        }
        is_center[best] = true;
        result.chosen.push_back(all_embeddings[best].first);
        absorb(best);
    }
    result.per_sample_scores = std::move(radii);
    return result;
}

SelectionResult select_random(std::span<const Index> unlabeled, std::size_t k, std::uint64_t seed) {
    if (k > unlabeled.size()) throw InvalidArgument("k exceeds number of unlabeled samples");
    std::vector<Index> pool(unlabeled.begin(), unlabeled.end());
    Rng rng(derive_seed(seed, 0x72616e64ULL));
    SelectionResult result;
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        result.chosen.push_back(pool[i]);
    }
    return result;
}

} // namespace alseg::strategies
