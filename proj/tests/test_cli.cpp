#include "specreg/cli.hpp"
#include "specreg/synth.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace specreg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "specreg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testutil::read_text(p)); }

// Reference document and a mildly shifted copy, written as PNGs.
struct Inputs {
    testutil::TempDir dir{"cli"};
    fs::path ref = dir / "ref.png", mov = dir / "mov.png";

    Inputs() {
        const Image2D big = make_document(104, 104, 3);
        Image2D a(96, 96), b(96, 96);
        for (int y = 0; y < 96; ++y)
            for (int x = 0; x < 96; ++x) {
                a.at(x, y) = big.at(x + 4, y + 4);
                b.at(x, y) = big.at(x + 2, y + 5);
            }
        save_image(a, ref);
        save_image(b, mov);
    }
};

} // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run({"--help"}).code, 0);
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    Inputs in;
    const auto r = run({"register", "--moving", in.mov.string(), "--out-dir", (in.dir / "o").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--ref"), std::string::npos);
    EXPECT_FALSE(fs::exists(in.dir / "o"));
}

TEST(Cli, RegisterWritesOutputs) {
    Inputs in;
    const fs::path out = in.dir / "reg";
    const auto r = run({"register", "--ref", in.ref.string(), "--moving", in.mov.string(), "--out-dir", out.string(),
                        "--seed", "7", "--levels", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"registered.png", "field.dfld", "report.json", "trace.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
    const auto j = read_json(out / "report.json");
    EXPECT_EQ(j["measure"], "ssd");
    EXPECT_EQ(j["seed"], 7);
    EXPECT_EQ(j["config"]["pyramid_levels"], 2);
    EXPECT_LE(j["result"]["score_after"].get<double>(), j["result"]["score_before"].get<double>());
    EXPECT_EQ(load_field(out / "field.dfld").width, 96);
    EXPECT_EQ(testutil::read_text(out / "trace.csv").rfind("iteration,level,objective,step,grad_norm\n", 0), 0u);
}

TEST(Cli, RegisterRecordsMeasure) {
    Inputs in;
    for (const char* m : {"rc", "lmi"}) {
        const fs::path out = in.dir / m;
        const auto r = run({"register", "--ref", in.ref.string(), "--moving", in.mov.string(), "--out-dir",
                            out.string(), "--measure", m});
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_EQ(read_json(out / "report.json")["measure"], m);
    }
    EXPECT_EQ(run({"register", "--ref", in.ref.string(), "--moving", in.mov.string(), "--out-dir",
                   (in.dir / "x").string(), "--measure", "demons"})
                  .code,
              1);
}

TEST(Cli, RegisterStackManifest) {
    Inputs in;
    testutil::write_text(in.dir / "stack.txt", "# two channels\nmov.png\nmov.png\n");
    const fs::path out = in.dir / "stack";
    const auto r = run({"register", "--ref", in.ref.string(), "--moving", (in.dir / "stack.txt").string(),
                        "--out-dir", out.string(), "--channel", "1", "--levels", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(out / "registered_0.png"));
    EXPECT_TRUE(fs::exists(out / "registered_1.png"));
    EXPECT_EQ(testutil::read_text(out / "registered_1.png"), testutil::read_text(out / "registered.png"));
    EXPECT_EQ(run({"register", "--ref", in.ref.string(), "--moving", (in.dir / "stack.txt").string(), "--out-dir",
                   out.string(), "--channel", "5"})
                  .code,
              1);
}

TEST(Cli, RegisterInputErrors) {
    Inputs in;
    EXPECT_EQ(run({"register", "--ref", (in.dir / "nope.png").string(), "--moving", in.mov.string(), "--out-dir",
                   (in.dir / "o").string()})
                  .code,
              1);
    testutil::write_text(in.dir / "bad.cfg", "bins = lots\n");
    EXPECT_EQ(run({"register", "--ref", in.ref.string(), "--moving", in.mov.string(), "--out-dir",
                   (in.dir / "o").string(), "--config", (in.dir / "bad.cfg").string()})
                  .code,
              1);
    // Constant moving image is a processing failure.
    save_image(Image2D(96, 96, 0.5), in.dir / "flat.png");
    const auto r = run({"register", "--ref", in.ref.string(), "--moving", (in.dir / "flat.png").string(),
                        "--out-dir", (in.dir / "o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("constant"), std::string::npos);
}

TEST(Cli, EvaluateReportAndOverlays) {
    Inputs in;
    testutil::write_text(in.dir / "regions.txt",
                         "# name x y w h\nFull area 0 0 96 96\nHigh details 0 0 48 48\n\nLow details 48 48 48 48\n");
    const fs::path out = in.dir / "eval";
    const auto r = run({"evaluate", "--ref", in.ref.string(), "--before", in.mov.string(), "--after",
                        in.ref.string(), "--regions", (in.dir / "regions.txt").string(), "--out-dir", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = read_json(out / "report.json");
    ASSERT_EQ(j["regions"].size(), 3u);
    EXPECT_EQ(j["regions"][1]["region"], "High details");
    for (const auto& row : j["regions"]) EXPECT_EQ(row["dsc_after"], 1.0);
    int overlays = 0;
    for (const auto& e : fs::directory_iterator(out)) overlays += e.path().filename().string().rfind("overlay_", 0) == 0;
    EXPECT_EQ(overlays, 3);
    const RgbImage o = load_rgb_png(out / "overlay_1_high_details.png");
    EXPECT_EQ(o.width, 48);
    for (const auto& p : o.pixels) EXPECT_TRUE(p == kOverlayBoth || p == kOverlayNeither);
}

TEST(Cli, EvaluateRegionErrors) {
    Inputs in;
    testutil::write_text(in.dir / "bad.txt", "Full 0 0 96 96\n# fine\nBroken abc 0 10 10\n");
    auto r = run({"evaluate", "--ref", in.ref.string(), "--before", in.mov.string(), "--after", in.ref.string(),
                  "--regions", (in.dir / "bad.txt").string(), "--out-dir", (in.dir / "e").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("line 3"), std::string::npos);
    testutil::write_text(in.dir / "out.txt", "Big 0 0 200 10\n");
    r = run({"evaluate", "--ref", in.ref.string(), "--before", in.mov.string(), "--after", in.ref.string(),
             "--regions", (in.dir / "out.txt").string(), "--out-dir", (in.dir / "e").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("line 1"), std::string::npos);

    save_image(Image2D(96, 96, 0.5), in.dir / "flat.png");
    testutil::write_text(in.dir / "ok.txt", "Full 0 0 96 96\n");
    r = run({"evaluate", "--ref", (in.dir / "flat.png").string(), "--before", in.mov.string(), "--after",
             in.ref.string(), "--regions", (in.dir / "ok.txt").string(), "--out-dir", (in.dir / "e").string()});
    EXPECT_EQ(r.code, 2);
}

TEST(ParseRegions, NamesWithSpacesAndErrors) {
    const auto rs = cli::parse_regions("Full area 0 0 10 10\n  x 1 2 3 4  # tail\n", 10, 10);
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_EQ(rs[0].name, "Full area");
    EXPECT_EQ(rs[1].name, "x");
    EXPECT_EQ(rs[1].h, 4);
    EXPECT_THROW(cli::parse_regions("# nothing\n", 10, 10), UsageError);
    EXPECT_THROW(cli::parse_regions("a 1 2 3\n", 10, 10), UsageError);
    EXPECT_THROW(cli::parse_regions("a 1 2 3 4.5\n", 10, 10), UsageError);
}

TEST(Cli, SynthDeterministicAndGuarded) {
    testutil::TempDir dir("synth");
    const std::vector<std::string> common{"synth", "--seed", "42", "--size", "96", "--max-disp", "3", "--spacing",
                                          "32", "--levels", "2"};
    auto a = common, b = common;
    a.insert(a.end(), {"--out-dir", (dir / "a").string()});
    b.insert(b.end(), {"--out-dir", (dir / "b").string()});
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    for (const char* f : {"truth.dfld", "recovered.dfld", "warped.png", "registered.png", "reference.png",
                          "report.json", "trace.csv"}) {
        ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
        EXPECT_EQ(testutil::read_text(dir / "a" / f), testutil::read_text(dir / "b" / f)) << f;
    }
    const auto j = read_json(dir / "a" / "report.json");
    EXPECT_EQ(j["seed"], 42);
    EXPECT_TRUE(j.contains("field_mean_err_px"));

    const auto guard = run({"synth", "--size", "96", "--max-disp", "12.8", "--spacing", "32", "--out-dir",
                            (dir / "g").string()});
    EXPECT_EQ(guard.code, 1);
    EXPECT_FALSE(fs::exists(dir / "g"));
}

TEST(Cli, SynthZeroDisplacement) {
    Inputs in;
    const fs::path out = in.dir / "zero";
    const auto r = run({"synth", "--image", in.ref.string(), "--max-disp", "0", "--spacing", "32", "--out-dir",
                        out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_LE(read_json(out / "report.json")["field_mean_err_px"].get<double>(), 0.1);
    EXPECT_FALSE(fs::exists(out / "reference.png"));
}

TEST(Cli, Overlay) {
    Inputs in;
    const fs::path out = in.dir / "ov" / "edges.png";
    ASSERT_EQ(run({"overlay", "--ref", in.ref.string(), "--moving", in.mov.string(), "--out", out.string()}).code, 0);
    const RgbImage o = load_rgb_png(out);
    EXPECT_EQ(o.width, 96);
    for (const auto& p : o.pixels)
        EXPECT_TRUE(p == kOverlayBoth || p == kOverlayNeither || p == kOverlayRefOnly || p == kOverlayRegOnly);
    save_image(Image2D(50, 50, 0.5), in.dir / "small.png");
    EXPECT_EQ(run({"overlay", "--ref", in.ref.string(), "--moving", (in.dir / "small.png").string(), "--out",
                   out.string()})
                  .code,
              1);
}

TEST(Cli, NoTemporaryFilesLeftBehind) {
    Inputs in;
    const fs::path out = in.dir / "clean";
    ASSERT_EQ(run({"register", "--ref", in.ref.string(), "--moving", in.mov.string(), "--out-dir", out.string(),
                   "--levels", "2"})
                  .code,
              0);
    for (const auto& e : fs::directory_iterator(out)) {
        const std::string n = e.path().filename().string();
        EXPECT_TRUE(n == "registered.png" || n == "field.dfld" || n == "report.json" || n == "trace.csv") << n;
    }
}
