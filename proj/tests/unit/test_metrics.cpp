#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "rgbx/metrics.hpp"
#include "test_util.hpp"

using namespace rgbx;
using namespace rgbx::metrics;

TEST(Psnr, KnownValues) {
    const Image a = Image::filled(8, 8, 0.3);
    EXPECT_EQ(psnr(a, a), kPsnrInfinite);
    EXPECT_NEAR(psnr(a, Image::filled(8, 8, 0.4)), 20.0, 1e-9);
    EXPECT_NEAR(psnr(Image::filled(8, 8, 0.0), Image::filled(8, 8, 1.0)), 0.0, 1e-12);
    const Image b = test::random_image(8, 8, 1, 1), c = test::random_image(8, 8, 1, 2);
    EXPECT_EQ(psnr(b, c), psnr(c, b));
    EXPECT_THROW(psnr(a, Image::filled(4, 8, 0.3)), std::invalid_argument);
}

TEST(Psnr, MaskedIgnoresOutside) {
    Image a = Image::filled(4, 4, 0.5), b = a;
    b.at(0, 0) = 0.0;
    Mask m(4, 4, true);
    m.bits[0] = 0;
    EXPECT_EQ(psnr_masked(a, b, m), kPsnrInfinite);
    EXPECT_THROW(psnr_masked(a, b, Mask(4, 4, false)), std::invalid_argument);
}

TEST(Ssim, Extremes) {
    const Image a = test::smooth_texture(48, 48, 3);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    Image inv = a;
    for (double& v : inv.data()) v = 1.0 - v;
    EXPECT_LT(ssim(a, inv), 0.0);
    const Image n1 = test::random_image(64, 64, 1, 5), n2 = test::random_image(64, 64, 1, 6);
    EXPECT_LE(std::abs(ssim(n1, n2)), 0.1);
    EXPECT_THROW(ssim(Image::filled(4, 4, 0.1), Image::filled(4, 4, 0.1)), std::invalid_argument);
}

TEST(MaeRmse, OffsetAndAlternating) {
    const auto e = mae_rmse(Image::filled(6, 6, 0.0), Image::filled(6, 6, 0.5));
    EXPECT_DOUBLE_EQ(e.mae, 0.5);
    EXPECT_DOUBLE_EQ(e.rmse, 0.5);
    Image alt(4, 1, 1, {1.0, -1.0, 1.0, -1.0});
    const auto f = mae_rmse(alt, Image::filled(4, 1, 0.0));
    EXPECT_DOUBLE_EQ(f.mae, 1.0);
    EXPECT_DOUBLE_EQ(f.rmse, 1.0);
}

TEST(MaeRmse, PhysicalUnits) {
    const UnitsDescriptor c{Units::celsius, 100.0, -20.0};
    const auto e = mae_rmse(Image::filled(2, 2, 0.5), c, Image::filled(2, 2, 0.4), c);
    EXPECT_NEAR(e.mae, 10.0, 1e-9);
    EXPECT_THROW(mae_rmse(Image::filled(2, 2, 0.5), c, Image::filled(2, 2, 0.5), UnitsDescriptor{}),
                 std::invalid_argument);
}

TEST(DiagPercentiles, LinearInterpolation) {
    fuse::SimilarityMatrix a;
    a.size = 100;
    a.a.assign(100 * 100, 0.0);
    for (int i = 0; i < 100; ++i) a.a[static_cast<std::size_t>(i) * 100 + i] = 100 - i;
    const double ps[] = {0.0, 50.0, 100.0, 30.0};
    const auto v = diag_percentiles(a, ps);
    EXPECT_DOUBLE_EQ(v[0], 1.0);
    EXPECT_DOUBLE_EQ(v[1], 50.5);
    EXPECT_DOUBLE_EQ(v[2], 100.0);
    EXPECT_DOUBLE_EQ(v[3], 30.7);
}

TEST(Report, CsvHeaderAndMeanRow) {
    MetricReport r;
    r.frames.push_back({0, 30.0, 0.9, 0.01, 0.02, {1, 2, 3, 4}, -1.5});
    r.frames.push_back({1, kPsnrInfinite, 1.0, 0.0, 0.0, {1, 2, 3, 4}, std::nullopt});
    r.consistency = 0.05;
    EXPECT_DOUBLE_EQ(r.aggregate().psnr_db, 30.0);
    std::ostringstream os;
    r.write_csv(os);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "frame,psnr_db,ssim,mae,rmse,p30,p50,p70,p90,self_match_score,consistency");
    int rows = 0;
    std::string last;
    while (std::getline(in, line)) {
        ++rows;
        last = line;
    }
    EXPECT_EQ(rows, 3);
    EXPECT_EQ(last.rfind("mean,", 0), 0u);
    EXPECT_NE(r.to_json().find("omitted_metrics"), std::string::npos);
}

TEST(EvaluateFrame, PerfectOutput) {
    const Image gt = test::smooth_texture(64, 64, 9);
    const Image rgb = test::smooth_texture(64, 64, 9, 3);
    const auto m = evaluate_frame(2, gt, gt, rgb);
    EXPECT_EQ(m.frame, 2);
    EXPECT_EQ(m.psnr_db, kPsnrInfinite);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_EQ(m.diag_pct.size(), 4u);
    EXPECT_TRUE(m.self_match_score);
}
