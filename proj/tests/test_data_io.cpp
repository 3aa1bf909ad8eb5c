#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gtasr/checkpoint.hpp"
#include "gtasr/config.hpp"
#include "gtasr/data.hpp"
#include "gtasr/image_io.hpp"

using namespace gtasr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gtasr_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void expect_unit_range(const Tensor& t) {
    for (real v : t.to_vector()) {
        ASSERT_GE(v, 0);
        ASSERT_LE(v, 1);
    }
}

// Exact checkerboard of the given period, used where the generator's random period would get in the way.
Tensor checker(int size, int period) {
    std::vector<real> v(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) v[y * size + x] = ((x / period + y / period) % 2) ? 1.0f : 0.0f;
    return Tensor::from_vector({1, 1, size, size}, v);
}

}  // namespace

TEST(GenHr, RangeShapeAndDeterminism) {
    for (auto kind : {ImageKind::Grf, ImageKind::Checker, ImageKind::Shapes}) {
        for (int size : {16, 32, 64}) {
            const Tensor a = gen_hr(7, size, kind);
            EXPECT_EQ(a.shape(), (Shape{1, 1, size, size}));
            expect_unit_range(a);
            EXPECT_EQ(a.to_vector(), gen_hr(7, size, kind).to_vector());
            EXPECT_NE(a.to_vector(), gen_hr(8, size, kind).to_vector());
        }
    }
}

TEST(GenHr, KindsDifferForOneSeed) {
    EXPECT_NE(gen_hr(3, 32, ImageKind::Grf).to_vector(), gen_hr(3, 32, ImageKind::Checker).to_vector());
    EXPECT_NE(gen_hr(3, 32, ImageKind::Checker).to_vector(), gen_hr(3, 32, ImageKind::Shapes).to_vector());
}

TEST(GenHr, Errors) {
    EXPECT_THROW(gen_hr(1, 24, ImageKind::Grf), std::invalid_argument);
    EXPECT_THROW(parse_image_kind("stripes"), std::invalid_argument);
    EXPECT_EQ(parse_image_kind("shapes"), ImageKind::Shapes);
    EXPECT_EQ(to_string(ImageKind::Checker), "checker");
}

TEST(GenHr, CheckerEdgesCarrySobelEnergy) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tensor img = gen_hr(seed, 32, ImageKind::Checker);
        EXPECT_GT(sobel_energy(img), sobel_energy(gaussian_blur(img, 1.0))) << seed;
    }
}

TEST(Degrade, IdentityPipeline) {
    const Tensor hr = gen_hr(2, 32, ImageKind::Shapes);
    EXPECT_EQ(degrade(hr, DegradeParams{0.0, 1, 0.0}, 99).to_vector(), hr.to_vector());
}

TEST(Degrade, NoiselessIsSeedIndependent) {
    const Tensor hr = gen_hr(2, 32, ImageKind::Grf);
    const DegradeParams p{1.0, 4, 0.0};
    EXPECT_EQ(degrade(hr, p, 1).to_vector(), degrade(hr, p, 2).to_vector());
}

TEST(Degrade, NoisyIsSeededAndClipped) {
    const Tensor hr = gen_hr(2, 32, ImageKind::Checker);
    const DegradeParams p{1.0, 4, 0.2};
    const Tensor a = degrade(hr, p, 1);
    EXPECT_EQ(a.to_vector(), degrade(hr, p, 1).to_vector());
    EXPECT_NE(a.to_vector(), degrade(hr, p, 2).to_vector());
    EXPECT_EQ(a.shape(), hr.shape());
    expect_unit_range(a);
}

TEST(Degrade, ScaleMustDivideExtent) {
    EXPECT_THROW(degrade(gen_hr(1, 32, ImageKind::Grf), DegradeParams{1.0, 3, 0.0}, 0), std::invalid_argument);
}

TEST(Degrade, SubNyquistCheckerIsDestroyed) {
    const Tensor hr = checker(32, 2);
    const Tensor y0 = degrade(hr, DegradeParams{0.0, 4, 0.0}, 0);
    EXPECT_LT(sobel_energy(y0), 0.1 * sobel_energy(hr));
}

// Largest rise of y0 structure between consecutive sigmas on a 0..3 grid, relative to the HR energy.
double worst_rise(const Tensor& hr) {
    double prev = INFINITY, worst = 0;
    for (double sigma = 0.0; sigma <= 3.0; sigma += 0.25) {
        const double e = sobel_energy(degrade(hr, DegradeParams{sigma, 4, 0.0}, 0));
        worst = std::max(worst, (e - prev) / sobel_energy(hr));
        prev = e;
    }
    return worst;
}

TEST(Degrade, BlurNeverAddsStructure) {
    // 1e-6 relative absorbs float rounding only.
    for (auto kind : {ImageKind::Grf, ImageKind::Shapes})
        for (std::uint64_t seed = 0; seed < 20; ++seed)
            EXPECT_LE(worst_rise(gen_hr(seed, 32, kind)), 1e-6) << to_string(kind) << " seed=" << seed;
}

TEST(Degrade, CheckerAliasingBreaksExactMonotonicity) {
    // A 2-pixel checker in phase with the pooling grid pools to a constant; blur plus the
    // mirrored border breaks that cancellation near the edges. The rise stays tiny.
    EXPECT_GT(worst_rise(gen_hr(4, 32, ImageKind::Checker)), 1e-6);
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        EXPECT_LT(worst_rise(gen_hr(seed, 32, ImageKind::Checker)), 1e-3) << seed;
}

TEST(Resample, PoolAndBicubicOnConstant) {
    const Tensor c = Tensor::full({1, 1, 8, 8}, 0.3f);
    const Tensor pooled = average_pool(c, 4);
    EXPECT_EQ(pooled.shape(), (Shape{1, 1, 2, 2}));
    for (real v : bicubic_upsample(pooled, 4).to_vector()) EXPECT_NEAR(v, 0.3, 1e-6);
    EXPECT_THROW(average_pool(c, 3), std::invalid_argument);
}

TEST(Stream, ValIsRepeatableAndShaped) {
    const DataConfig cfg;
    BatchStream a(cfg, 42, Split::Val, 4);
    const Batch b1 = a.next(), b2 = a.next();
    a.reset();
    EXPECT_EQ(a.next().x0.to_vector(), b1.x0.to_vector());
    EXPECT_EQ(a.next().y0.to_vector(), b2.y0.to_vector());
    EXPECT_EQ(b1.x0.shape(), (Shape{4, 1, 32, 32}));
    EXPECT_EQ(b1.y0.shape(), (Shape{4, 1, 32, 32}));
    expect_unit_range(b1.x0);
    expect_unit_range(b1.y0);
}

TEST(Stream, SplitsDisjoint) {
    const DataConfig cfg;
    BatchStream train(cfg, 42, Split::Train, 8), val(cfg, 42, Split::Val, 8);
    std::set<std::uint64_t> seeds;
    for (int k = 0; k < 8; ++k)
        for (auto s : train.batch_at(k).seeds) seeds.insert(s);
    for (int k = 0; k < 8; ++k)
        for (auto s : val.batch_at(k).seeds) EXPECT_EQ(seeds.count(s), 0u);
    EXPECT_NE(sample_seed(42, Split::Train, 5), sample_seed(42, Split::Val, 5));
    EXPECT_NE(sample_seed(42, Split::Train, 5), sample_seed(43, Split::Train, 5));
}

TEST(Stream, BatchMatchesIndividualSamples) {
    const DataConfig cfg;
    BatchStream s(cfg, 9, Split::Train, 3);
    const Batch b = s.batch_at(2);
    for (int i = 0; i < 3; ++i) {
        const Sample one = make_sample(cfg, 9, Split::Train, 6 + i);
        EXPECT_EQ(batch_item(b.x0, i).to_vector(), one.hr.to_vector());
        EXPECT_EQ(batch_item(b.y0, i).to_vector(), one.lr.to_vector());
        EXPECT_GE(one.degrade.blur_sigma, cfg.blur_min);
        EXPECT_LE(one.degrade.noise_sigma, cfg.noise_max);
    }
}

TEST(Pgm, RoundTripOnEightBitGrid) {
    const fs::path dir = temp_dir("pgm");
    std::vector<real> v(6 * 5);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<real>((i * 37) % 256) / 255.0f;
    const Tensor img = Tensor::from_vector({1, 1, 6, 5}, v);
    write_pgm(dir / "a.pgm", img);
    const Tensor back = read_pgm(dir / "a.pgm");
    EXPECT_EQ(back.shape(), img.shape());
    for (std::int64_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(back.at(i), img.at(i), 1e-6);
}

TEST(Pgm, HeaderCommentsAndErrors) {
    const fs::path dir = temp_dir("pgm2");
    {
        std::ofstream f(dir / "c.pgm", std::ios::binary);
        f << "P5\n# note\n2 1\n255\n";
        f.put(static_cast<char>(0));
        f.put(static_cast<char>(255));
    }
    EXPECT_EQ(read_pgm(dir / "c.pgm").to_vector(), (std::vector<real>{0, 1}));
    {
        std::ofstream f(dir / "bad.pgm", std::ios::binary);
        f << "P2\n2 1\n255\n0 255\n";
    }
    EXPECT_THROW(read_pgm(dir / "bad.pgm"), std::runtime_error);
    EXPECT_THROW(read_pgm(dir / "missing.pgm"), std::runtime_error);
}

TEST(ConfigFile, ParseTypesAndOverrides) {
    const Config c = Config::parse("# comment\nseed = 7\n\nlr=0.001\nname = a b \nflag = true\nseed = 9\n");
    EXPECT_EQ(c.get_int("seed", 0), 9);
    EXPECT_DOUBLE_EQ(c.get_double("lr", 0), 0.001);
    EXPECT_EQ(c.get_string("name", ""), "a b");
    EXPECT_TRUE(c.get_bool("flag", false));
    EXPECT_EQ(c.get_int("absent", 5), 5);
    Config d;
    d.set("seed", "1");
    Config merged = c;
    merged.merge(d);
    EXPECT_EQ(merged.get_int("seed", 0), 1);
    EXPECT_EQ(Config::parse(c.dump()).entries(), c.entries());
}

TEST(ConfigFile, Errors) {
    EXPECT_THROW(Config::parse("no equals sign\n"), ConfigError);
    EXPECT_THROW(Config::parse("seed = 4x").get_int("seed", 0), ConfigError);
    EXPECT_THROW(Config::parse("lr = fast").get_double("lr", 0), ConfigError);
    EXPECT_THROW(Config::parse("flag = maybe").get_bool("flag", false), ConfigError);
    EXPECT_THROW(Config::load("/nonexistent/cfg.txt"), ConfigError);
}

TEST(CheckpointCodec, RoundTripAndCorruption) {
    Checkpoint ck;
    ck.arrays.push_back({"a/w", {2, 3}, {1, 2, 3, 4, 5, 6}});
    ck.arrays.push_back({"b", {1}, {-0.5f}});
    ck.iteration = 17;
    ck.stage = 2;
    const auto bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back, ck);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    ASSERT_NE(back.find("b"), nullptr);
    EXPECT_EQ(back.find("zzz"), nullptr);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(decode_checkpoint(truncated), CheckpointError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad_magic), CheckpointError);

    const fs::path dir = temp_dir("ckpt");
    save_checkpoint(ck, dir / "c.bin");
    EXPECT_EQ(load_checkpoint(dir / "c.bin"), ck);
    EXPECT_THROW(load_checkpoint(dir / "none.bin"), CheckpointError);
}
