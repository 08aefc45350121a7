#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "inpaint/trainer.hpp"

using namespace inpaint;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("inpaint_trainer_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// tiny everything: 16x16 images, 4 base channels
TrainConfig micro_config() {
    TrainConfig cfg;
    cfg.image_size = 16;
    cfg.base_channels = 4;
    cfg.ca_patch = 2;
    cfg.batch = 2;
    cfg.steps = 3;
    cfg.checkpoint_every = 2;
    cfg.mask_kind = "center";
    cfg.seed = 5;
    return cfg;
}

fs::path make_micro_dataset(const std::string& tag, int files = 4, int64_t side = 16) {
    auto dir = temp_dir(tag);
    fs::create_directories(dir / "images");
    Rng rng(42);
    for (int i = 0; i < files; ++i) {
        Image img{side, side, std::vector<double>(static_cast<size_t>(side * side * 3))};
        for (auto& v : img.data) v = uniform<double>(rng, 0.0, 1.0);
        char name[32];
        std::snprintf(name, sizeof name, "img_%02d.ppm", i);
        save_ppm(img, (dir / "images" / name).string());
    }
    return dir;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

// --- config -----------------------------------------------------------------

TEST(Config, KeyValueRoundTrip) {
    auto cfg = parse_config_text("lr = 1e-3\nbatch=2\nenable_sdff = false\nmask_bucket = 30-40\n"
                                 "# comment line\n\nprecision = float\n",
                                 "test");
    EXPECT_DOUBLE_EQ(cfg.lr, 1e-3);
    EXPECT_EQ(cfg.batch, 2);
    EXPECT_FALSE(cfg.enable_sdff);
    EXPECT_EQ(cfg.mask_bucket, "30-40");
    EXPECT_EQ(cfg.precision, "float");
}

TEST(Config, JsonRoundTrip) {
    auto cfg = parse_config_text(R"({"lr": 0.002, "steps": 7, "enable_bpfa": false})", "test");
    EXPECT_DOUBLE_EQ(cfg.lr, 0.002);
    EXPECT_EQ(cfg.steps, 7);
    EXPECT_FALSE(cfg.enable_bpfa);
}

TEST(Config, UnknownKeyIsError) {
    EXPECT_THROW(parse_config_text("learning_rate = 0.1\n", "test"), ConfigError);
    EXPECT_THROW(parse_config_text(R"({"lrr": 0.1})", "test"), ConfigError);
}

TEST(Config, ValidationCatchesBadValues) {
    TrainConfig cfg = micro_config();
    cfg.lr = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = micro_config();
    cfg.image_size = 20;  // not a multiple of 8
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = micro_config();
    cfg.precision = "half";
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, EchoIsCanonical) {
    TrainConfig cfg = micro_config();
    auto a = cfg.echo();
    auto b = TrainConfig::from_json(nlohmann::json::parse(a)).echo();
    EXPECT_EQ(a, b);
}

// --- checkpoint container -----------------------------------------------------

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    auto dir = temp_dir("ckpt_bytes");
    TrainConfig cfg = micro_config();
    Model<double> model(cfg);
    Optimizers<double> opt(model);
    const auto p1 = dir / "a.bin";
    const auto p2 = dir / "b.bin";
    save_checkpoint(snapshot(model, opt, 17), p1.string());
    save_checkpoint(load_checkpoint(p1.string()), p2.string());

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);
}

TEST(Checkpoint, RestoreReproducesParameters) {
    auto dir = temp_dir("ckpt_restore");
    TrainConfig cfg = micro_config();
    Model<double> model(cfg);
    Optimizers<double> opt(model);
    const auto path = dir / "m.bin";
    save_checkpoint(snapshot(model, opt, 3), path.string());

    Model<double> other(cfg);
    // same config but a different random state: overwrite with garbage first
    for (auto& p : other.generator.store().parameters())
        for (auto& v : p.value.values_mut()) v = -7.0;
    Optimizers<double> opt2(other);
    const uint64_t step = restore(load_checkpoint(path.string()), other, opt2);
    EXPECT_EQ(step, 3u);
    const auto& a = model.generator.store().parameters();
    const auto& b = other.generator.store().parameters();
    for (size_t i = 0; i < a.size(); ++i)
        for (int64_t j = 0; j < a[i].value.numel(); ++j)
            EXPECT_EQ(a[i].value.values()[j], b[i].value.values()[j]);
}

TEST(Checkpoint, ConfigMismatchListsFields) {
    auto dir = temp_dir("ckpt_mismatch");
    TrainConfig cfg = micro_config();
    Model<double> model(cfg);
    Optimizers<double> opt(model);
    const auto path = dir / "m.bin";
    save_checkpoint(snapshot(model, opt, 0), path.string());

    TrainConfig changed = cfg;
    changed.base_channels = 8;
    changed.enable_bpfa = false;
    changed.lr = 1e-3;  // run-length/optimizer knobs are not structural
    Model<double> other(changed);
    Optimizers<double> opt2(other);
    try {
        restore(load_checkpoint(path.string()), other, opt2);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("base_channels"), std::string::npos);
        EXPECT_NE(what.find("enable_bpfa"), std::string::npos);
        EXPECT_EQ(what.find("lr:"), std::string::npos);
    }
}

TEST(Checkpoint, CorruptFileRejected) {
    auto dir = temp_dir("ckpt_bad");
    const auto path = dir / "bad.bin";
    std::ofstream(path) << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(path.string()), DataError);
}

// --- training ----------------------------------------------------------------

TEST(TrainStep, LossStrictlyDecreasesWithFrozenCritics) {
    // single repeated sample, no adversarial pressure
    TrainConfig cfg = micro_config();
    cfg.lambda_adv = 0.0;
    cfg.lambda_style = 1.0;  // keep the objective tame at this tiny scale
    cfg.batch = 1;
    Model<double> model(cfg);
    Optimizers<double> opt(model);

    Rng rng(9);
    Image img{16, 16, std::vector<double>(16 * 16 * 3)};
    for (auto& v : img.data) v = uniform<double>(rng, 0.1, 0.9);
    Sample s{img, structure_smooth(img, 5.0, 4), generate_center_mask(16, 16)};
    auto tensors = batch_to_tensors<double>({s});

    double first_avg = 0.0, last_avg = 0.0;
    std::vector<double> totals;
    for (int i = 0; i < 50; ++i) totals.push_back(train_step(model, opt, tensors).total);
    for (int i = 0; i < 10; ++i) first_avg += totals[i] / 10.0;
    for (int i = 40; i < 50; ++i) last_avg += totals[i] / 10.0;
    EXPECT_LT(last_avg, first_avg);
    EXPECT_LT(totals.back(), totals.front());
}

TEST(TrainStep, DeterministicAcrossRuns) {
    auto run = [](int steps) {
        TrainConfig cfg = micro_config();
        cfg.batch = 2;
        Model<double> model(cfg);
        Optimizers<double> opt(model);
        Rng rng(11);
        Image a{16, 16, std::vector<double>(16 * 16 * 3)};
        Image b = a;
        for (auto& v : a.data) v = uniform<double>(rng, 0.0, 1.0);
        for (auto& v : b.data) v = uniform<double>(rng, 0.0, 1.0);
        Sample s1{a, structure_smooth(a, 5.0, 4), generate_center_mask(16, 16)};
        Sample s2{b, structure_smooth(b, 5.0, 4), generate_center_mask(16, 16)};
        auto tensors = batch_to_tensors<double>({s1, s2});
        double last = 0;
        for (int i = 0; i < steps; ++i) last = train_step(model, opt, tensors).total;
        return last;
    };
    const double a = run(10);
    const double b = run(10);
    EXPECT_EQ(a, b);  // bit-identical in double mode
}

TEST(Train, StepsZeroEmitsInitCheckpointOnly) {
    auto data = make_micro_dataset("train_zero");
    auto out = temp_dir("train_zero_out");
    TrainConfig cfg = micro_config();
    cfg.steps = 0;
    auto result = train<double>(cfg, data.string(), out.string());
    EXPECT_TRUE(fs::exists(out / "ckpt_000000.bin"));
    EXPECT_EQ(result.steps_run, 0u);
    int ckpts = 0;
    for (auto& e : fs::directory_iterator(out))
        if (e.path().extension() == ".bin") ++ckpts;
    EXPECT_EQ(ckpts, 1);
}

TEST(Train, CheckpointScheduleMatchesSpec) {
    auto data = make_micro_dataset("train_sched");
    auto out = temp_dir("train_sched_out");
    TrainConfig cfg = micro_config();
    cfg.steps = 5;
    cfg.checkpoint_every = 2;
    train<double>(cfg, data.string(), out.string());
    EXPECT_TRUE(fs::exists(out / "ckpt_000002.bin"));
    EXPECT_TRUE(fs::exists(out / "ckpt_000004.bin"));
    EXPECT_TRUE(fs::exists(out / "ckpt_000005.bin"));
    EXPECT_FALSE(fs::exists(out / "ckpt_000000.bin"));
    EXPECT_FALSE(fs::exists(out / "ckpt_000003.bin"));
}

TEST(Train, CsvHasHeaderAndOneRowPerStep) {
    auto data = make_micro_dataset("train_csv");
    auto out = temp_dir("train_csv_out");
    TrainConfig cfg = micro_config();
    cfg.steps = 4;
    auto result = train<double>(cfg, data.string(), out.string());
    auto lines = read_lines(result.csv_path);
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], kLossCsvHeader);
    EXPECT_EQ(lines[1].substr(0, 2), "1,");
}

TEST(Train, RerunsProduceIdenticalCsv) {
    auto data = make_micro_dataset("train_det");
    auto out1 = temp_dir("train_det_out1");
    auto out2 = temp_dir("train_det_out2");
    TrainConfig cfg = micro_config();
    cfg.steps = 4;
    auto r1 = train<double>(cfg, data.string(), out1.string());
    auto r2 = train<double>(cfg, data.string(), out2.string());
    EXPECT_EQ(read_lines(r1.csv_path), read_lines(r2.csv_path));
}

TEST(Train, ResumeReproducesUninterruptedTrajectory) {
    auto data = make_micro_dataset("train_resume");
    auto out_full = temp_dir("train_resume_full");
    auto out_split = temp_dir("train_resume_split");

    TrainConfig cfg = micro_config();
    cfg.steps = 6;
    cfg.checkpoint_every = 3;
    auto full = train<double>(cfg, data.string(), out_full.string());

    TrainConfig first_half = cfg;
    first_half.steps = 3;
    train<double>(first_half, data.string(), out_split.string());
    auto resumed = train<double>(cfg, data.string(), out_split.string(),
                                 (out_split / "ckpt_000003.bin").string());

    // the final checkpoints must be byte-identical
    std::ifstream f1(full.final_checkpoint, std::ios::binary);
    std::ifstream f2(resumed.final_checkpoint, std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);

    // and the resumed CSV rows must match the uninterrupted ones
    auto full_rows = read_lines(full.csv_path);
    auto split_rows = read_lines(resumed.csv_path);
    ASSERT_EQ(full_rows.size(), split_rows.size());
    for (size_t i = 0; i < full_rows.size(); ++i) EXPECT_EQ(full_rows[i], split_rows[i]);
}

TEST(Train, NonFiniteLossAbortsWithLastGoodCheckpoint) {
    auto data = make_micro_dataset("train_blowup");
    auto out = temp_dir("train_blowup_out");
    TrainConfig cfg = micro_config();
    cfg.steps = 1;
    cfg.checkpoint_every = 1;
    train<double>(cfg, data.string(), out.string());

    // resume with an explosive learning rate: the next step overflows and the
    // abort names the last good checkpoint
    TrainConfig boom = cfg;
    boom.steps = 3;
    boom.lr = 1e280;
    try {
        train<double>(boom, data.string(), out.string(), (out / "ckpt_000001.bin").string());
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("non-finite"), std::string::npos);
        EXPECT_NE(what.find("last good checkpoint"), std::string::npos);
        EXPECT_NE(what.find("ckpt_000001.bin"), std::string::npos);
    }
}

TEST(Config, AblationFlagsAppearInEcho) {
    TrainConfig cfg = micro_config();
    cfg.enable_ca = false;
    auto echo = nlohmann::json::parse(cfg.echo());
    EXPECT_EQ(echo["enable_ca"], false);
    EXPECT_EQ(echo["enable_sdff"], true);
    EXPECT_EQ(echo["enable_sknet"], true);
    EXPECT_EQ(echo["enable_bpfa"], true);
    EXPECT_EQ(echo["enable_pc"], true);
}

TEST(Train, AblationTogglesTrainWithFiniteLosses) {
    auto data = make_micro_dataset("train_ablate");
    for (int variant = 0; variant < 6; ++variant) {
        TrainConfig cfg = micro_config();
        cfg.steps = 2;
        if (variant == 1) cfg.enable_sdff = false;
        if (variant == 2) cfg.enable_ca = false;
        if (variant == 3) cfg.enable_sknet = false;
        if (variant == 4) cfg.enable_bpfa = false;
        if (variant == 5) cfg.enable_pc = false;
        auto out = temp_dir(cat("train_ablate_out", variant));
        auto result = train<double>(cfg, data.string(), out.string());
        EXPECT_TRUE(std::isfinite(result.last_total)) << "variant " << variant;
    }
}

// --- inference & evaluation ------------------------------------------------------

TEST(Infer, NoHoleCompositedIsBitExact) {
    auto data = make_micro_dataset("infer_nohole");
    auto out = temp_dir("infer_nohole_out");
    TrainConfig cfg = micro_config();
    cfg.steps = 1;
    auto trained = train<double>(cfg, data.string(), out.string());

    // all-valid mask: composited must be the input, byte for byte
    Image img = load_ppm((data / "images" / "img_00.ppm").string());
    Mask none{16, 16, std::vector<uint8_t>(16 * 16, 1)};
    save_mask(none, (out / "mask.ppm").string());

    auto result = infer<double>(load_checkpoint(trained.final_checkpoint),
                                (data / "images" / "img_00.ppm").string(),
                                (out / "mask.ppm").string(), (out / "infer").string());
    std::ifstream f1((data / "images" / "img_00.ppm"), std::ios::binary);
    std::ifstream f2(result.composited_path, std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);
    EXPECT_TRUE(fs::exists(result.raw_path));
}

TEST(Eval, GroundTruthAsPredictionIsPerfect) {
    // metric sanity outside the model: feed identical images through the
    // aggregation used by eval
    Image a = Image::filled(16, 16, 0.5);
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(mae(a, a), 0.0);
}

TEST(Eval, RunsOnPreparedDataset) {
    auto raw = make_micro_dataset("eval_raw", 3, 24);
    auto prepared = temp_dir("eval_prepared");
    prepare_dataset((raw / "images").string(), prepared.string(), 16, 3);

    auto out = temp_dir("eval_out");
    TrainConfig cfg = micro_config();
    cfg.steps = 1;
    auto trained = train<double>(cfg, prepared.string(), out.string());
    auto result = evaluate<double>(load_checkpoint(trained.final_checkpoint), prepared.string(),
                                   MaskBucket::B30_40);
    EXPECT_EQ(result.rows.size(), 3u);
    EXPECT_EQ(result.report.n_images, 3);
    EXPECT_GT(result.report.psnr, 0.0);
    EXPECT_GE(result.feat_dist, 0.0);
    for (const auto& row : result.rows) {
        EXPECT_GT(row.psnr_comp, row.psnr_raw - 1e-9);  // composited can only help psnr-wise
        EXPECT_TRUE(std::isfinite(row.ssim_comp));
    }
    std::ostringstream csv;
    write_eval_csv(result, csv);
    auto text = csv.str();
    EXPECT_NE(text.find("mean,"), std::string::npos);
    EXPECT_EQ(text.substr(0, std::string(kEvalCsvHeader).size()), kEvalCsvHeader);
}

TEST(FloatMode, TrainStepRunsInSinglePrecision) {
    TrainConfig cfg = micro_config();
    cfg.precision = "float";
    cfg.batch = 1;
    Model<float> model(cfg);
    Optimizers<float> opt(model);
    Rng rng(21);
    Image img{16, 16, std::vector<double>(16 * 16 * 3)};
    for (auto& v : img.data) v = uniform<double>(rng, 0.0, 1.0);
    Sample s{img, structure_smooth(img, 5.0, 4), generate_center_mask(16, 16)};
    auto tensors = batch_to_tensors<float>({s});
    auto report = train_step(model, opt, tensors);
    EXPECT_TRUE(std::isfinite(report.total));
}
