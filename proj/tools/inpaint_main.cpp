// Command-line front end: dataset preparation, training, inference,
// evaluation and the gradient verification suite.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
// failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "inpaint/trainer.hpp"
#include "inpaint/verification.hpp"

using namespace inpaint;

namespace {

struct PrepareArgs {
    std::string in_dir, out_dir;
    int64_t size = 64;
    uint64_t seed = 1;
    double smooth_lambda = 5.0;
    double smooth_sigma_e = 0.05;
    int smooth_iters = 4;
};

struct TrainArgs {
    std::string config_path, data_dir, out_dir, resume;
    bool no_sdff = false, no_ca = false, no_sknet = false, no_bpfa = false, no_pc = false;
};

struct InferArgs {
    std::string ckpt, image, mask, out_dir;
};

struct EvalArgs {
    std::string ckpt, data_dir, bucket = "30-40", out_csv;
};

int run_prepare(const PrepareArgs& args) {
    SmoothParams smooth{args.smooth_lambda, args.smooth_sigma_e, args.smooth_iters};
    auto result = prepare_dataset(args.in_dir, args.out_dir, args.size, args.seed, smooth);
    std::cout << "prepared " << result.written << " images into " << args.out_dir;
    if (result.skipped) std::cout << " (" << result.skipped << " skipped)";
    std::cout << "\n";
    return 0;
}

int run_train(const TrainArgs& args) {
    TrainConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    if (args.no_sdff) cfg.enable_sdff = false;
    if (args.no_ca) cfg.enable_ca = false;
    if (args.no_sknet) cfg.enable_sknet = false;
    if (args.no_bpfa) cfg.enable_bpfa = false;
    if (args.no_pc) cfg.enable_pc = false;
    cfg.validate();

    TrainResult result;
    if (cfg.precision == "float")
        result = train<float>(cfg, args.data_dir, args.out_dir, args.resume);
    else
        result = train<double>(cfg, args.data_dir, args.out_dir, args.resume);
    std::cout << "ran " << result.steps_run << " steps; final checkpoint "
              << result.final_checkpoint << "; losses at " << result.csv_path << "\n";
    return 0;
}

int run_infer(const InferArgs& args) {
    CheckpointFile ckpt = load_checkpoint(args.ckpt);
    const auto cfg = TrainConfig::from_json(nlohmann::json::parse(ckpt.config_json));
    InferResult result;
    if (cfg.precision == "float")
        result = infer<float>(ckpt, args.image, args.mask, args.out_dir);
    else
        result = infer<double>(ckpt, args.image, args.mask, args.out_dir);
    std::cout << "wrote " << result.composited_path << " and " << result.raw_path << "\n";
    return 0;
}

int run_eval(const EvalArgs& args) {
    CheckpointFile ckpt = load_checkpoint(args.ckpt);
    const auto cfg = TrainConfig::from_json(nlohmann::json::parse(ckpt.config_json));
    const MaskBucket bucket = parse_bucket(args.bucket);
    EvalResult result;
    if (cfg.precision == "float")
        result = evaluate<float>(ckpt, args.data_dir, bucket);
    else
        result = evaluate<double>(ckpt, args.data_dir, bucket);

    if (args.out_csv.empty()) {
        write_eval_csv(result, std::cout);
    } else {
        std::ofstream out(args.out_csv);
        require<DataError>(out.good(), args.out_csv, ": cannot open for writing");
        write_eval_csv(result, out);
        std::cout << "wrote " << args.out_csv << "\n";
    }
    std::cout << "composited: psnr " << result.report.psnr << " dB, ssim " << result.report.ssim
              << ", mae " << result.report.mae << " over " << result.report.n_images
              << " images\n";
    std::cout << "raw: psnr " << result.raw_report.psnr << " dB, ssim "
              << result.raw_report.ssim << ", mae " << result.raw_report.mae << "\n";
    if (result.feat_dist >= 0) {
        std::cout << "feat_dist " << result.feat_dist
                  << " (random-feature proxy, not comparable to FID numbers computed with a "
                     "pretrained Inception network";
        if (result.feat_dist_regularized) std::cout << "; covariance regularized";
        std::cout << ")\n";
    }
    return 0;
}

int run_gradcheck() {
    auto results = run_gradient_suite();
    bool all = true;
    for (const auto& r : results) {
        std::printf("%-28s max rel err %10.3e over %4lld components  %s\n", r.name.c_str(),
                    r.max_rel_err, static_cast<long long>(r.components),
                    r.pass ? "pass" : "FAIL");
        all = all && r.pass;
    }
    if (!all) throw NumericError("gradient verification failed");
    std::cout << "all " << results.size() << " gradient checks passed (tol 1e-4)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mutual encoder-decoder image inpainting"};
    app.require_subcommand(1);

    PrepareArgs prepare_args;
    auto* prepare = app.add_subcommand("prepare", "resize images, build structure targets and masks");
    prepare->add_option("--in", prepare_args.in_dir, "directory of source images")->required();
    prepare->add_option("--out", prepare_args.out_dir, "output dataset root")->required();
    prepare->add_option("--size", prepare_args.size, "square target size (multiple of 8)");
    prepare->add_option("--seed", prepare_args.seed, "mask pairing seed");
    prepare->add_option("--smooth-lambda", prepare_args.smooth_lambda, "structure smoothing strength");
    prepare->add_option("--smooth-sigma-e", prepare_args.smooth_sigma_e, "edge sensitivity");
    prepare->add_option("--smooth-iters", prepare_args.smooth_iters, "smoothing iterations");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", train_args.config_path, "key=value or JSON config file");
    train_cmd->add_option("--data", train_args.data_dir, "prepared dataset root")->required();
    train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
    train_cmd->add_option("--resume", train_args.resume, "checkpoint to resume from");
    train_cmd->add_flag("--no-sdff", train_args.no_sdff, "disable the gated fusion module");
    train_cmd->add_flag("--no-ca", train_args.no_ca, "disable contextual attention");
    train_cmd->add_flag("--no-sknet", train_args.no_sknet, "disable selective-kernel mixing");
    train_cmd->add_flag("--no-bpfa", train_args.no_bpfa, "disable the propagation block");
    train_cmd->add_flag("--no-pc", train_args.no_pc, "use plain convs in the filling branches");

    InferArgs infer_args;
    auto* infer_cmd = app.add_subcommand("infer", "inpaint one image");
    infer_cmd->add_option("--ckpt", infer_args.ckpt, "checkpoint file")->required();
    infer_cmd->add_option("--image", infer_args.image, "input image (ppm)")->required();
    infer_cmd->add_option("--mask", infer_args.mask, "mask image, black = hole")->required();
    infer_cmd->add_option("--out", infer_args.out_dir, "output directory")->required();

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a prepared dataset");
    eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_args.data_dir, "prepared dataset root")->required();
    eval_cmd->add_option("--bucket", eval_args.bucket, "mask ratio bucket (e.g. 30-40)");
    eval_cmd->add_option("--out", eval_args.out_csv, "write the per-image CSV here");

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "run the gradient verification suite");

    try {
        app.parse(argc, argv);
        if (prepare->parsed()) return run_prepare(prepare_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (infer_cmd->parsed()) return run_infer(infer_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (gradcheck_cmd->parsed()) return run_gradcheck();
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
