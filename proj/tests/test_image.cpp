#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "inpaint/dataset.hpp"
#include "inpaint/image.hpp"
#include "inpaint/mask.hpp"
#include "inpaint/smooth.hpp"

using namespace inpaint;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("inpaint_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image random_image(int64_t h, int64_t w, uint64_t seed) {
    Rng rng(seed);
    Image img{h, w, std::vector<double>(static_cast<size_t>(h * w * 3))};
    // quantized to 8-bit values so ppm round-trips are exact
    for (auto& v : img.data) v = static_cast<double>(uniform_int(rng, 0, 255)) / 255.0;
    return img;
}

}  // namespace

// --- ppm --------------------------------------------------------------------

TEST(Ppm, RoundTripIsByteExact) {
    auto dir = temp_dir("ppm_roundtrip");
    auto img = random_image(17, 23, 99);
    const auto p1 = dir / "a.ppm";
    const auto p2 = dir / "b.ppm";
    save_ppm(img, p1.string());
    save_ppm(load_ppm(p1.string()), p2.string());
    EXPECT_EQ(read_bytes(p1), read_bytes(p2));
}

TEST(Ppm, ParsesMinimalHeader) {
    auto dir = temp_dir("ppm_minimal");
    const auto p = dir / "tiny.ppm";
    {
        std::ofstream out(p, std::ios::binary);
        out << "P6\n2 2\n255\n";
        const unsigned char payload[12] = {0, 0, 0, 255, 255, 255, 10, 20, 30, 40, 50, 60};
        out.write(reinterpret_cast<const char*>(payload), 12);
    }
    Image img = load_ppm(p.string());
    EXPECT_EQ(img.height, 2);
    EXPECT_EQ(img.width, 2);
    EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(img.at(0, 1, 0), 1.0);
    EXPECT_DOUBLE_EQ(img.at(1, 0, 2), 30.0 / 255.0);
}

TEST(Ppm, LinearValueMap) {
    auto dir = temp_dir("ppm_values");
    Image img = Image::filled(2, 2, 0.0);
    img.at(0, 0, 0) = 1.0;
    const auto p = dir / "v.ppm";
    save_ppm(img, p.string());
    Image back = load_ppm(p.string());
    EXPECT_DOUBLE_EQ(back.at(0, 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(back.at(0, 0, 1), 0.0);
}

TEST(Ppm, MalformedHeaderReportsByteOffset) {
    auto dir = temp_dir("ppm_malformed");
    const auto p = dir / "bad.ppm";
    {
        std::ofstream out(p, std::ios::binary);
        out << "P6\n2 x\n255\n";
    }
    try {
        load_ppm(p.string());
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
    }
}

TEST(Ppm, TruncatedPayloadRejected) {
    auto dir = temp_dir("ppm_truncated");
    const auto p = dir / "short.ppm";
    {
        std::ofstream out(p, std::ios::binary);
        out << "P6\n4 4\n255\n";
        out << "too short";
    }
    EXPECT_THROW(load_ppm(p.string()), DataError);
}

TEST(Ppm, CommentsInHeaderAreSkipped) {
    auto dir = temp_dir("ppm_comments");
    const auto p = dir / "c.ppm";
    {
        std::ofstream out(p, std::ios::binary);
        out << "P6\n# a comment\n1 1\n255\n";
        const unsigned char payload[3] = {1, 2, 3};
        out.write(reinterpret_cast<const char*>(payload), 3);
    }
    Image img = load_ppm(p.string());
    EXPECT_EQ(img.height, 1);
}

// --- masks --------------------------------------------------------------------

TEST(CenterMask, Definition256) {
    Mask m = generate_center_mask(256, 256);
    EXPECT_EQ(m.at(63, 128), 1);
    EXPECT_EQ(m.at(64, 64), 0);
    EXPECT_EQ(m.at(191, 191), 0);
    EXPECT_EQ(m.at(192, 128), 1);
    EXPECT_EQ(m.at(128, 63), 1);
    EXPECT_EQ(m.at(128, 192), 1);
}

TEST(CenterMask, QuarterRatioExactly) {
    for (int64_t side : {64, 256, 32}) {
        Mask m = generate_center_mask(side, side);
        EXPECT_DOUBLE_EQ(m.hole_ratio(), 0.25);
    }
}

TEST(CenterMask, OddDimensionsRejected) {
    EXPECT_THROW(generate_center_mask(65, 64), ConfigError);
}

TEST(IrregularMask, RatioInsideBucket) {
    for (MaskBucket b : all_buckets()) {
        const auto [lo, hi] = bucket_range(b);
        for (uint64_t seed = 0; seed < 25; ++seed) {
            Mask m = generate_irregular_mask(64, 64, b, seed);
            const double r = m.hole_ratio();
            EXPECT_GT(r, lo) << bucket_name(b) << " seed " << seed;
            EXPECT_LT(r, hi) << bucket_name(b) << " seed " << seed;
        }
    }
}

TEST(IrregularMask, DeterministicPerSeed) {
    Mask a = generate_irregular_mask(48, 48, MaskBucket::B30_40, 7);
    Mask b = generate_irregular_mask(48, 48, MaskBucket::B30_40, 7);
    EXPECT_EQ(a.data, b.data);
    Mask c = generate_irregular_mask(48, 48, MaskBucket::B30_40, 8);
    EXPECT_NE(a.data, c.data);
}

TEST(IrregularMask, ValuesAreBinary) {
    Mask m = generate_irregular_mask(64, 64, MaskBucket::B40_50, 3);
    for (uint8_t v : m.data) EXPECT_TRUE(v == 0 || v == 1);
}

TEST(MaskIo, RoundTrip) {
    auto dir = temp_dir("mask_io");
    Mask m = generate_irregular_mask(32, 32, MaskBucket::B20_30, 5);
    const auto p = dir / "m.ppm";
    save_mask(m, p.string());
    Mask back = load_mask(p.string());
    EXPECT_EQ(m.data, back.data);
}

TEST(MaskIo, RejectsNonBinaryPixels) {
    auto dir = temp_dir("mask_bad");
    const auto p = dir / "gray.ppm";
    save_ppm(Image::filled(8, 8, 0.5), p.string());
    EXPECT_THROW(load_mask(p.string()), DataError);
}

// --- structure smoothing --------------------------------------------------------

TEST(StructureSmooth, ConstantImageIsFixedPoint) {
    Image img = Image::filled(16, 16, 0.42);
    Image out = structure_smooth(img, 5.0, 4);
    for (size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], 0.42, 1e-12);
}

TEST(StructureSmooth, StepEdgeLocationPreserved) {
    Image img = Image::filled(16, 16, 0.0);
    for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 8; x < 16; ++x)
            for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = 1.0;
    Image out = structure_smooth(img, 5.0, 4);
    // argmax column gradient must stay between columns 7 and 8
    double best = -1.0;
    int64_t best_col = -1;
    for (int64_t x = 0; x + 1 < 16; ++x) {
        double g = 0.0;
        for (int64_t y = 0; y < 16; ++y) g += std::abs(out.at(y, x + 1, 0) - out.at(y, x, 0));
        if (g > best) {
            best = g;
            best_col = x;
        }
    }
    EXPECT_EQ(best_col, 7);
}

TEST(StructureSmooth, NoiseVarianceMoreThanHalved) {
    Rng rng(2024);
    Image img = Image::filled(24, 24, 0.0);
    for (int64_t y = 0; y < 24; ++y)
        for (int64_t x = 0; x < 24; ++x) {
            const double base = x < 12 ? 0.25 : 0.75;
            const double noise = normal<double>(rng, 0.0, 0.1);
            for (int64_t c = 0; c < 3; ++c)
                img.at(y, x, c) = std::clamp(base + noise, 0.0, 1.0);
        }
    Image out = structure_smooth(img, 5.0, 4);

    auto half_variance = [](const Image& im, int64_t x0, int64_t x1) {
        double mean = 0.0;
        int64_t n = 0;
        for (int64_t y = 0; y < im.height; ++y)
            for (int64_t x = x0; x < x1; ++x) {
                mean += im.at(y, x, 0);
                ++n;
            }
        mean /= n;
        double var = 0.0;
        for (int64_t y = 0; y < im.height; ++y)
            for (int64_t x = x0; x < x1; ++x) var += (im.at(y, x, 0) - mean) * (im.at(y, x, 0) - mean);
        return var / n;
    };
    EXPECT_LT(half_variance(out, 0, 12), 0.5 * half_variance(img, 0, 12));
    EXPECT_LT(half_variance(out, 12, 24), 0.5 * half_variance(img, 12, 24));
}

TEST(StructureSmooth, ContractsTowardFixedPoint) {
    Rng rng(77);
    Image img = Image::filled(16, 16, 0.0);
    for (auto& v : img.data) v = uniform<double>(rng, 0.0, 1.0);

    auto delta = [](const Image& a, const Image& b) {
        double acc = 0.0;
        for (size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
        return acc;
    };
    Image once = structure_smooth(img, 5.0, 2);
    Image twice = structure_smooth(once, 5.0, 2);
    EXPECT_LT(delta(twice, once), delta(once, img));
}

TEST(StructureSmooth, OutputStaysInUnitRange) {
    Rng rng(78);
    Image img = Image::filled(12, 12, 0.0);
    for (auto& v : img.data) v = uniform<double>(rng, 0.0, 1.0);
    Image out = structure_smooth(img, 8.0, 6);
    for (double v : out.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

// --- dataset ---------------------------------------------------------------------

namespace {

fs::path make_dataset_dir(const std::string& tag, int files, int64_t side = 32) {
    auto dir = temp_dir(tag);
    fs::create_directories(dir / "images");
    for (int i = 0; i < files; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%02d.ppm", i);
        save_ppm(random_image(side, side, 1000 + i), (dir / "images" / name).string());
    }
    return dir;
}

}  // namespace

TEST(Dataset, BatchCountFollowsSize) {
    auto dir = make_dataset_dir("ds_batches", 8);
    Dataset ds(dir.string(), 32, MaskPolicy{MaskKind::Center, {}});
    EXPECT_EQ(ds.size(), 8);
    EXPECT_EQ(ds.batches_per_epoch(4), 2);
    EXPECT_EQ(ds.batches_per_epoch(3), 3);
}

TEST(Dataset, SameSeedSameOrder) {
    auto dir = make_dataset_dir("ds_order", 6);
    Dataset ds(dir.string(), 32, MaskPolicy{MaskKind::Irregular, {}});
    EXPECT_EQ(ds.epoch_order(5, 0), ds.epoch_order(5, 0));
    EXPECT_NE(ds.epoch_order(5, 0), ds.epoch_order(6, 0));
}

TEST(Dataset, SamplesResizedToTarget) {
    auto dir = make_dataset_dir("ds_resize", 3, 48);
    Dataset ds(dir.string(), 64, MaskPolicy{MaskKind::Center, {}});
    auto batch = ds.batch(1, 0, 0, 3);
    ASSERT_EQ(batch.size(), 3u);
    for (const auto& s : batch) {
        EXPECT_EQ(s.image.height, 64);
        EXPECT_EQ(s.image.width, 64);
        EXPECT_EQ(s.structure.height, 64);
        EXPECT_EQ(s.mask.height, 64);
    }
}

TEST(Dataset, DeterministicMasksPerEpochIndex) {
    auto dir = make_dataset_dir("ds_masks", 4);
    Dataset ds(dir.string(), 32, MaskPolicy{MaskKind::Irregular, MaskBucket::B20_30});
    auto a = ds.batch(9, 2, 0, 4);
    auto b = ds.batch(9, 2, 0, 4);
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].mask.data, b[i].mask.data);
}

TEST(Dataset, EmptyDirectoryRejected) {
    auto dir = temp_dir("ds_empty");
    fs::create_directories(dir / "images");
    EXPECT_THROW(Dataset(dir.string(), 32, MaskPolicy{}), DataError);
}

TEST(Dataset, UnreadableFilesSkippedWithWarning) {
    auto dir = make_dataset_dir("ds_skip", 2);
    {
        std::ofstream bad(dir / "images" / "broken.ppm");
        bad << "not a ppm";
    }
    Dataset ds(dir.string(), 32, MaskPolicy{MaskKind::Center, {}});
    EXPECT_EQ(ds.size(), 2);
}

TEST(Prepare, WritesLayoutAndManifest) {
    auto raw = make_dataset_dir("prep_raw", 3, 40);
    auto out = temp_dir("prep_out");
    auto result = prepare_dataset((raw / "images").string(), out.string(), 32, 11);
    EXPECT_EQ(result.written, 3);
    EXPECT_TRUE(fs::exists(out / "images" / "000000.ppm"));
    EXPECT_TRUE(fs::exists(out / "structures" / "000002.ppm"));
    EXPECT_TRUE(fs::exists(out / "masks" / "30-40" / "000001.ppm"));
    EXPECT_TRUE(fs::exists(out / "manifest.json"));

    std::ifstream mf(out / "manifest.json");
    auto manifest = nlohmann::json::parse(mf);
    EXPECT_EQ(manifest["entries"].size(), 3u);
    EXPECT_EQ(manifest["size"], 32);
    // recorded mask pairing must point at a bucket-valid mask
    const std::string rel = manifest["entries"][0]["masks"]["10-20"];
    Mask m = load_mask((out / rel).string());
    EXPECT_GT(m.hole_ratio(), 0.10);
    EXPECT_LT(m.hole_ratio(), 0.20);
}
