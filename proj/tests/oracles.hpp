#pragma once

// Independent reference implementations: plain loops over the definitions,
// sharing no code with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "lsa/core_types.hpp"
#include "lsa/eval.hpp"
#include "lsa/lsa_loss.hpp"

namespace oracle {

inline double diffusion_loss(const lsa::Tensor& z0_hat, const lsa::Tensor& z0, double sigma) {
    double sum = 0;
    for (std::size_t i = 0; i < z0.numel(); ++i) sum += (z0_hat[i] - z0[i]) * (z0_hat[i] - z0[i]);
    return (1.0 + sigma * sigma) / (sigma * sigma) * sum / static_cast<double>(z0.numel());
}

inline double feature_loss(const lsa::Tensor& f_gt, const lsa::Tensor& f_gen, const lsa::Tensor& mask, bool pre_square) {
    const std::size_t N = f_gt.dim(0), gh = f_gt.dim(1), gw = f_gt.dim(2), d = f_gt.dim(3);
    double sum = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t u = 0; u < gh; ++u)
            for (std::size_t v = 0; v < gw; ++v)
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = f_gt.at({n, u, v, k}) - f_gen.at({n, u, v, k});
                    const double m = mask.at({n, u, v});
                    sum += pre_square ? (diff * m) * (diff * m) : m * diff * diff;
                }
    return sum / static_cast<double>(N * gh * gw * d);
}

/// Dynamic patches per frame by enumerating every pixel cell of every patch.
inline std::vector<std::set<std::pair<std::size_t, std::size_t>>> dynamic_patches(const lsa::BoxTrack& boxes, std::size_t H, std::size_t W,
                                                                                  std::size_t p) {
    std::vector<std::set<std::pair<std::size_t, std::size_t>>> out(boxes.size());
    for (std::size_t n = 0; n < boxes.size(); ++n)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (const auto& b : boxes[n]) {
                    const double px = static_cast<double>(x), py = static_cast<double>(y);
                    const bool overlaps = px < b.x_max && px + 1 > b.x_min && py < b.y_max && py + 1 > b.y_min;
                    if (overlaps) out[n].insert({y / p, x / p});
                }
    return out;
}

/// IoU of integer-coordinate boxes by counting unit pixel cells.
inline double iou(const lsa::Box& a, const lsa::Box& b) {
    auto covers = [](const lsa::Box& r, long x, long y) { return x >= r.x_min && x + 1 <= r.x_max && y >= r.y_min && y + 1 <= r.y_max; };
    const long lo_x = static_cast<long>(std::floor(std::min(a.x_min, b.x_min))), hi_x = static_cast<long>(std::ceil(std::max(a.x_max, b.x_max)));
    const long lo_y = static_cast<long>(std::floor(std::min(a.y_min, b.y_min))), hi_y = static_cast<long>(std::ceil(std::max(a.y_max, b.y_max)));
    long inter = 0, uni = 0;
    for (long x = lo_x; x < hi_x; ++x)
        for (long y = lo_y; y < hi_y; ++y) {
            const bool ia = covers(a, x, y), ib = covers(b, x, y);
            inter += ia && ib;
            uni += ia || ib;
        }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Sample mean and (n - 1)-normalised covariance by explicit sums.
inline std::pair<std::vector<double>, std::vector<std::vector<double>>> gaussian_stats(const std::vector<std::vector<double>>& x) {
    const std::size_t n = x.size(), d = x[0].size();
    std::vector<double> mu(d, 0.0);
    for (const auto& r : x)
        for (std::size_t k = 0; k < d; ++k) mu[k] += r[k] / static_cast<double>(n);
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& r : x)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov[a][b] += (r[a] - mu[a]) * (r[b] - mu[b]) / static_cast<double>(n - 1);
    return {mu, cov};
}

/// Average precision of one class by exhaustive threshold sweep: for every recall level r in {0, 0.01, ..., 1},
/// the best precision achieved by any score-ranked prefix with recall >= r.
inline double class_ap(const std::vector<std::pair<double, bool>>& ranked_hits, std::size_t num_gt) {
    std::vector<std::pair<double, double>> pr;  // (recall, precision) of each prefix
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked_hits.size(); ++k) {
        tp += ranked_hits[k].second;
        pr.emplace_back(static_cast<double>(tp) / num_gt, static_cast<double>(tp) / (k + 1));
    }
    double sum = 0;
    for (int i = 0; i <= 100; ++i) {
        const double r = i / 100.0;
        double best = 0;
        for (const auto& [rec, prec] : pr)
            if (rec >= r - 1e-12) best = std::max(best, prec);
        sum += best;
    }
    return sum / 101.0;
}

struct ScoredDetection {
    std::size_t frame;
    lsa::Box box;
    double score;
};

/// Greedy matching in descending score order (ties by input order); each detection takes the unmatched
/// same-class ground truth of highest IoU >= threshold in its frame.
inline std::map<std::string, double> per_class_ap(const std::vector<std::vector<lsa::Box>>& gt, const std::vector<ScoredDetection>& dets,
                                                  double thr, std::vector<double>* matched_ious = nullptr) {
    std::map<std::string, std::size_t> num_gt;
    for (const auto& f : gt)
        for (const auto& b : f) ++num_gt[b.class_label];
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    std::vector<std::vector<bool>> used(gt.size());
    for (std::size_t f = 0; f < gt.size(); ++f) used[f].assign(gt[f].size(), false);
    std::map<std::string, std::vector<std::pair<double, bool>>> hits;
    for (std::size_t i : order) {
        const auto& d = dets[i];
        double best = -1;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < gt[d.frame].size(); ++j) {
            if (used[d.frame][j] || gt[d.frame][j].class_label != d.box.class_label) continue;
            const double v = iou(gt[d.frame][j], d.box);
            if (v > best) best = v, best_j = j;
        }
        const bool hit = best >= thr;
        if (hit) {
            used[d.frame][best_j] = true;
            if (matched_ious) matched_ious->push_back(best);
        }
        hits[d.box.class_label].emplace_back(d.score, hit);
    }
    std::map<std::string, double> ap;
    for (const auto& [cls, n] : num_gt) ap[cls] = class_ap(hits[cls], n);
    return ap;
}

}  // namespace oracle
