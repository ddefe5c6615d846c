#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "spadchar/cli.hpp"

namespace fs = std::filesystem;
using namespace spadchar;

namespace {

struct Run {
    int status;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "spadchar");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int status = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {status, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("spadchar_cli_" + std::to_string(std::random_device{}()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    void write(const std::string& name, const std::string& body) const { text::write_file_atomic(dir_ / name, body); }

    fs::path dir_;
};

} // namespace

TEST_F(CliTest, FitOnReferencePair) {
    for (auto [name, a0] : {std::pair{"app_4ns.csv", 0.507}, std::pair{"app_2ns.csv", 0.399}}) {
        AppSeries s;
        for (int i = 0; i < 12; ++i) {
            const double t = std::pow(100.0, i / 11.0);
            s.points.push_back({t, a0 * std::pow(t, -0.916), 0.0});
        }
        write(name, write_app_series_csv(s));
    }
    const auto r = run({"fit", "--in", path("app_4ns.csv"), "--in", path("app_2ns.csv"), "--out", path("fit.txt")});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto kv = read_fit_report(text::read_file(path("fit.txt")));
    ASSERT_EQ(kv[0].first, "lambda");
    EXPECT_NEAR(kv[0].second, 0.916, 1e-6);
    EXPECT_EQ(kv[1].first, "A0_app_4ns");
    EXPECT_NEAR(kv[1].second, 0.507, 1e-6);
}

TEST_F(CliTest, SimulateIsDeterministic) {
    const auto a = run({"simulate", "--seed", "7", "--gates", "200000", "--out", path("a.csv")});
    const auto b = run({"simulate", "--seed", "7", "--gates", "200000", "--out", path("b.csv")});
    ASSERT_EQ(a.status, 0) << a.err;
    ASSERT_EQ(b.status, 0) << b.err;
    const auto body = text::read_file(path("a.csv"));
    EXPECT_EQ(body, text::read_file(path("b.csv")));
    EXPECT_GT(read_clicks_csv(body).size(), 0u);
    EXPECT_FALSE(fs::exists(path("a.csv.tmp")));
}

TEST_F(CliTest, SweepDelayPlateau) {
    write("quiet.cfg", "dark_rate_per_ns = 0\ntrap_coefficient = 0\ngate_delay_jitter_ps = 0\n");
    const auto r = run({"sweep-delay", "--config", path("quiet.cfg"), "--gates", "20000", "--step", "1", "--out",
                        path("curve.csv")});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto curve = read_delay_curve_csv(text::read_file(path("curve.csv")));
    ASSERT_EQ(curve.points.size(), 42u);
    for (const auto& p : curve.points) {
        if (p.delay_ns >= 6.0 && p.delay_ns <= 10.0)
            EXPECT_GT(p.counts_hz, 0.0) << p.delay_ns;
        else
            EXPECT_EQ(p.counts_hz, 0.0) << p.delay_ns;
    }
}

TEST_F(CliTest, AppHoldoffWritesOneFilePerWidth) {
    const auto r = run({"app-holdoff", "--holdoffs", "1,10", "--widths", "4,2", "--gates", "20000", "--out",
                        path("app.csv")});
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(read_app_series_csv(text::read_file(path("app_4ns.csv"))).points.size(), 2u);
    EXPECT_EQ(read_app_series_csv(text::read_file(path("app_2ns.csv"))).points.size(), 2u);
}

TEST_F(CliTest, DcrScanAndJitter) {
    write("dark.cfg", "mean_photon_number = 0\n");
    auto r = run({"dcr-scan", "--config", path("dark.cfg"), "--periods", "25,50", "--holdoffs", "1", "--gates",
                  "10000", "--out", path("dcr.csv")});
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(read_dcr_table_csv(text::read_file(path("dcr.csv"))).cells.size(), 2u);

    r = run({"jitter", "--delays", "7,8", "--gates", "100000", "--out", path("jit.csv")});
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("FWHM"), std::string::npos);
    EXPECT_EQ(read_jitter_surface_csv(text::read_file(path("jit.csv")), 55.0).slices.size(), 2u);
}

TEST_F(CliTest, JitterFromTimestampLog) {
    write("log.txt", "8000\n8060\n50000\n");
    const auto r = run({"jitter", "--log", path("log.txt"), "--log-delays", "8", "--out", path("jit.csv")});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto s = read_jitter_surface_csv(text::read_file(path("jit.csv")), 55.0);
    ASSERT_EQ(s.slices.size(), 1u);
    EXPECT_EQ(s.slices[0].total(), 3u);
}

TEST_F(CliTest, UsageErrorsAreNonZero) {
    EXPECT_NE(run({"frobnicate"}).status, 0);
    EXPECT_NE(run({"simulate", "--no-such-flag", "--out", path("x.csv")}).status, 0);
    EXPECT_NE(run({}).status, 0);
    EXPECT_FALSE(fs::exists(path("x.csv")));
}

TEST_F(CliTest, FailedRunLeavesNoOutput) {
    write("bad.cfg", "gate_width_ns = 0\n");
    const auto r = run({"simulate", "--config", path("bad.cfg"), "--out", path("clicks.csv")});
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.err.find("gate_width_ns"), std::string::npos);
    EXPECT_FALSE(fs::exists(path("clicks.csv")));
    EXPECT_FALSE(fs::exists(path("clicks.csv.tmp")));

    write("bad_log.txt", "100\n50\n");
    const auto r2 = run({"jitter", "--log", path("bad_log.txt"), "--log-delays", "8", "--out", path("j.csv")});
    EXPECT_NE(r2.status, 0);
    EXPECT_NE(r2.err.find("line 2"), std::string::npos);
    EXPECT_FALSE(fs::exists(path("j.csv")));
}
