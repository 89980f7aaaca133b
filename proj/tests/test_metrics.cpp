#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "csplat/losses.hpp"
#include "csplat/metrics.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace csplat;

namespace {

Image random_image(int w, int h, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Image img(w, h);
    for (double& v : img.data) v = dist(rng);
    return img;
}

}  // namespace

TEST_CASE("psnr of identical images reports identical") {
    Image a = random_image(16, 16, 1);
    CHECK_FALSE(psnr(a, a).has_value());
}

TEST_CASE("uniform 16/255 offset gives the analytic psnr") {
    Image a = random_image(16, 16, 2);
    for (double& v : a.data) v = std::min(v, 200.0 / 255.0);
    Image b = a;
    for (double& v : b.data) v += 16.0 / 255.0;
    auto p = psnr(b, a);
    REQUIRE(p.has_value());
    CHECK(*p == doctest::Approx(20.0 * std::log10(255.0 / 16.0)).epsilon(1e-9));
}

TEST_CASE("psnr matches the direct mse formula on random pairs") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Image a = random_image(12, 9, 10 + seed);
        Image b = random_image(12, 9, 40 + seed);
        double mse = 0;
        for (size_t i = 0; i < a.data.size(); ++i) {
            double d = a.data[i] - b.data[i];
            mse += d * d;
        }
        mse /= double(a.data.size());
        auto p = psnr(a, b);
        REQUIRE(p.has_value());
        CHECK(*p == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));
    }
}

TEST_CASE("ssim of identical images is one") {
    Image a = random_image(20, 20, 3);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inverted checkerboard drops ssim below one") {
    Image a(16, 16), b(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) {
                a.at(x, y, c) = double((x + y) % 2);
                b.at(x, y, c) = 1.0 - a.at(x, y, c);
            }
    CHECK(ssim(b, a) < 1.0);
}

TEST_CASE("ssim is exactly one minus twice the dssim loss") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Image a = random_image(18, 14, 100 + seed);
        Image b = random_image(18, 14, 200 + seed);
        CHECK(ssim(a, b) == doctest::Approx(1.0 - 2.0 * dssim_loss(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("evaluate_grid aggregates per view and frame") {
    std::vector<std::vector<Image>> gt(2), pred(2);
    for (int v = 0; v < 2; ++v)
        for (int t = 0; t < 3; ++t) {
            Image g = random_image(16, 16, uint64_t(v * 10 + t));
            gt[v].push_back(g);
            if (v == 0 && t == 0) {
                pred[v].push_back(g);  // identical pair
            } else {
                Image p = g;
                for (double& x : p.data) x = std::clamp(x + 0.05, 0.0, 1.0);
                pred[v].push_back(p);
            }
        }
    MetricReport report = evaluate_grid(pred, gt);
    REQUIRE(report.entries.size() == 6);
    CHECK_FALSE(report.entries[0].psnr.has_value());
    CHECK(report.entries[0].ssim == doctest::Approx(1.0));
    CHECK(report.entries[1].psnr.has_value());
    REQUIRE(report.per_view_ssim.size() == 2);
    REQUIRE(report.per_frame_ssim.size() == 3);
    CHECK(report.mean_psnr.has_value());
    CHECK(report.mean_ssim > 0.5);

    // report serializes to parseable JSON and a non-empty table
    nlohmann::json j = nlohmann::json::parse(report.to_json());
    CHECK(j.contains("entries"));
    CHECK(report.to_table().find("view") != std::string::npos);
}

TEST_CASE("evaluate_grid rejects mismatched shapes") {
    std::vector<std::vector<Image>> a(1), b(1);
    a[0].push_back(random_image(16, 16, 1));
    b[0].push_back(random_image(16, 16, 2));
    b[0].push_back(random_image(16, 16, 3));
    CHECK_THROWS(evaluate_grid(a, b));
}
