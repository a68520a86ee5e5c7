#include <doctest.h>

#include "helpers.hpp"
#include "lsa/clip_io.hpp"
#include "lsa/error.hpp"
#include "lsa/eval.hpp"
#include "lsa/scenes.hpp"
#include "oracles.hpp"

using namespace lsa;
using namespace lsa::eval;

namespace {

MatchConfig loose() {
    MatchConfig m;
    m.filter.min_size = 0;
    return m;
}

std::vector<std::vector<Detection>> as_detections(const std::vector<std::vector<Box>>& boxes) {
    std::vector<std::vector<Detection>> out(boxes.size());
    for (std::size_t f = 0; f < boxes.size(); ++f)
        for (const auto& b : boxes[f]) out[f].push_back({b, 1.0});
    return out;
}

}  // namespace

TEST_CASE("iou examples") {
    CHECK(iou(Box{0, 0, 2, 2, "car", 0}, Box{1, 0, 3, 2, "car", 0}) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(iou(Box{0, 0, 2, 2, "car", 0}, Box{1, 1, 3, 3, "car", 0}) == doctest::Approx(1.0 / 7.0).epsilon(1e-14));
    CHECK(iou(Box{0, 0, 2, 2, "car", 0}, Box{2, 0, 4, 2, "car", 0}) == 0.0);
    CHECK(iou(Box{0, 0, 5, 3, "car", 0}, Box{0, 0, 5, 3, "car", 0}) == 1.0);
}

TEST_CASE("iou matches pixel counting on random integer boxes") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> c(0, 12);
    for (int i = 0; i < 300; ++i) {
        auto make = [&] {
            const int x0 = c(rng), y0 = c(rng);
            return Box{double(x0), double(y0), double(x0 + 1 + c(rng)), double(y0 + 1 + c(rng)), "car", 0};
        };
        const Box a = make(), b = make();
        CHECK(std::abs(iou(a, b) - oracle::iou(a, b)) < 1e-8);
    }
}

TEST_CASE("gaussian stats match explicit sums") {
    const std::vector<std::vector<double>> x{{1, 2, 0}, {3, 1, 1}, {2, 5, -1}, {0, 0, 4}};
    const auto s = gaussian_stats(x);
    const auto [mu, cov] = oracle::gaussian_stats(x);
    for (int a = 0; a < 3; ++a) {
        CHECK(std::abs(s.mean[a] - mu[a]) < 1e-12);
        for (int b = 0; b < 3; ++b) CHECK(std::abs(s.covariance(a, b) - cov[a][b]) < 1e-12);
    }
    CHECK(s.sample_count == 4);
    // mean [1.5, 2], variances (n - 1)-normalised
    const auto t = gaussian_stats({{1, 1}, {2, 3}});
    CHECK(t.mean[0] == 1.5);
    CHECK(t.covariance(0, 0) == doctest::Approx(0.5));
    CHECK(t.covariance(1, 1) == doctest::Approx(2.0));
    CHECK(t.covariance(0, 1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(gaussian_stats({{1, 2}}), DomainError);
}

TEST_CASE("frechet distance closed forms") {
    GaussianStats a{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 10};
    CHECK(frechet_distance(a, a) == 0.0);
    GaussianStats b = a;
    b.mean << 3, 4;
    CHECK(frechet_distance(a, b) == doctest::Approx(25.0).epsilon(1e-12));
    // diagonal covariances: sum (sqrt(s1) - sqrt(s2))^2
    GaussianStats c{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(3, 3), 10};
    GaussianStats d = c;
    c.covariance.diagonal() << 1, 4, 9;
    d.covariance.diagonal() << 4, 4, 1;
    CHECK(frechet_distance(c, d) == doctest::Approx(1.0 + 0.0 + 4.0).epsilon(1e-10));
    // commuting full-rank matrices sharing eigenvectors
    Eigen::MatrixXd Q(2, 2);
    Q << std::sqrt(0.5), -std::sqrt(0.5), std::sqrt(0.5), std::sqrt(0.5);
    GaussianStats e{Eigen::VectorXd::Zero(2), Q * Eigen::Vector2d(2, 9).asDiagonal() * Q.transpose(), 10};
    GaussianStats f{Eigen::VectorXd::Zero(2), Q * Eigen::Vector2d(8, 1).asDiagonal() * Q.transpose(), 10};
    const double want = std::pow(std::sqrt(2.0) - std::sqrt(8.0), 2) + std::pow(3.0 - 1.0, 2);
    CHECK(std::abs(frechet_distance(e, f) - want) < 1e-8);
    CHECK(std::abs(frechet_distance(e, f) - frechet_distance(f, e)) < 1e-8);
}

TEST_CASE("matching and AP agree with the exhaustive reference") {
    std::mt19937_64 rng(32);
    std::uniform_int_distribution<int> coord(0, 10), side(2, 8), count(0, 3), cls(0, 1);
    std::uniform_real_distribution<double> score(0, 1);
    const std::vector<std::string> names{"car", "truck"};
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t frames = 2;
        std::vector<std::vector<Box>> gt(frames);
        std::vector<std::vector<Detection>> pred(frames);
        std::vector<oracle::ScoredDetection> flat;
        int total_gt = 0, total_pred = 0;
        for (std::size_t f = 0; f < frames; ++f) {
            for (int k = count(rng); k > 0 && total_gt < 5; --k, ++total_gt) {
                const int x = coord(rng), y = coord(rng);
                gt[f].push_back(Box{double(x), double(y), double(x + side(rng)), double(y + side(rng)), names[cls(rng)], 0});
            }
            for (int k = count(rng); k > 0 && total_pred < 5; --k, ++total_pred) {
                Box b;
                if (!gt[f].empty() && score(rng) < 0.6) {
                    b = gt[f][static_cast<std::size_t>(coord(rng)) % gt[f].size()];
                    b.x_min += coord(rng) % 3, b.x_max += coord(rng) % 3;
                } else {
                    const int x = coord(rng), y = coord(rng);
                    b = Box{double(x), double(y), double(x + side(rng)), double(y + side(rng)), names[cls(rng)], 0};
                }
                const double s = std::round(score(rng) * 4) / 4;  // ties exercise the stable order
                pred[f].push_back({b, s});
                flat.push_back({f, b, s});
            }
        }
        std::vector<std::vector<Detection>> gtd = as_detections(gt);
        const auto got = match_and_score(gtd, pred, loose());
        if (total_gt == 0) {
            CHECK_FALSE(got.defined);
            CHECK(got.mAP == -1.0);
            continue;
        }
        // per class, detections in the order the library sees them: by class then input order
        std::vector<oracle::ScoredDetection> ordered;
        for (const auto& n : names)
            for (const auto& d : flat)
                if (d.box.class_label == n) ordered.push_back(d);
        std::vector<double> ious;
        const auto want = oracle::per_class_ap(gt, ordered, 0.5, &ious);
        double sum = 0;
        for (const auto& [c, ap] : want) {
            REQUIRE(got.per_class_ap.count(c) == 1);
            CHECK(std::abs(got.per_class_ap.at(c) - ap) < 1e-8);
            sum += ap;
        }
        CHECK(std::abs(got.mAP - sum / want.size()) < 1e-8);
        CHECK(got.matched == ious.size());
        if (!ious.empty()) {
            double m = 0;
            for (double v : ious) m += v;
            CHECK(std::abs(got.mIoU - m / ious.size()) < 1e-8);
        }
    }
}

TEST_CASE("size filter and whitelist") {
    std::vector<std::vector<Box>> gt{{Box{0, 0, 20, 20, "car", 0}, Box{30, 30, 34, 34, "car", 1}}};
    MatchConfig m;
    m.filter.min_size = 16;
    const auto s = match_and_score(as_detections(gt), as_detections({{gt[0][0]}}), m);
    CHECK(s.gt_count == 1);
    CHECK(s.mAP == 1.0);
    m.filter.class_whitelist = {"truck"};
    CHECK_FALSE(match_and_score(as_detections(gt), as_detections(gt), m).defined);
    CHECK_THROWS_AS(match_and_score(as_detections(gt), {}, m), ShapeError);
}

TEST_CASE("oracle detector recovers rendered boxes") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        scenes::SceneSpec s = scenes::sample_spec(scenes::SceneDistribution{}, seed);
        const auto [clip, boxes] = scenes::generate_clip(s, 4, 64, 64);
        for (std::size_t n = 0; n < 4; ++n) {
            const auto dets = oracle_detect(clip.frame(n));
            // occlusion can split one object into two components; otherwise boxes coincide
            std::size_t found = 0;
            for (const auto& b : boxes[n])
                for (const auto& d : dets)
                    if (d.box.class_label == b.class_label && iou(d.box, b) == 1.0) ++found;
            CHECK(found + 1 >= boxes[n].size());
        }
    }
}

TEST_CASE("ground truth against itself scores perfectly") {
    std::vector<std::pair<VideoClip, BoxTrack>> gt;
    std::vector<VideoClip> same;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto c = scenes::generate_clip(scenes::sample_spec(scenes::SceneDistribution{}, seed), 4, 64, 64, "c" + std::to_string(seed));
        same.push_back(c.first);
        gt.push_back(std::move(c));
    }
    const nets::FeatureExtractor ext(nets::FeatureExtractorSpec{});
    EvalConfig cfg;
    const auto r = evaluate_clips(gt, same, ext, cfg);
    CHECK(r.frechet_frame == 0.0);
    CHECK(r.frechet_clip == 0.0);
    CHECK(r.mAP == 1.0);
    CHECK(r.mIoU == 1.0);
    CHECK(r.detection_defined);

    // uniform noise is far worse on every metric
    std::mt19937_64 rng(33);
    std::vector<VideoClip> noise;
    for (const auto& g : gt) noise.emplace_back(quantize_8bit(testing::random_tensor(g.first.frames().shape(), rng, 0, 1)), 7, g.first.clip_id());
    const auto n = evaluate_clips(gt, noise, ext, cfg);
    CHECK(n.frechet_frame > 0.1);
    CHECK(n.mAP < 0.2);

    // misaligned ids are an error
    noise.pop_back();
    CHECK_THROWS_AS(evaluate_clips(gt, noise, ext, cfg), InvariantError);
}

TEST_CASE("report serialisation") {
    EvalReport r;
    r.frechet_frame = 0.5;
    r.mAP = 0.25;
    r.per_clip.push_back({"a", 1, 2, 1, 0.75, 0.01});
    const auto j = to_json(r);
    CHECK(j["frechet_frame"] == 0.5);
    CHECK(j["mAP"] == 0.25);
    CHECK(j["per_clip"][0]["clip_id"] == "a");
    const std::string csv = to_csv(r);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(sample_seed(1, "a") == sample_seed(1, "a"));
    CHECK(sample_seed(1, "a") != sample_seed(1, "b"));
}
