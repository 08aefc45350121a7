#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "inpaint/checkpoint.hpp"
#include "inpaint/config.hpp"
#include "inpaint/dataset.hpp"
#include "inpaint/discriminator.hpp"
#include "inpaint/generator.hpp"
#include "inpaint/losses.hpp"
#include "inpaint/metrics.hpp"

namespace inpaint {

// Adam with bias correction. Parameters that received no gradient in a step
// (disabled modules) are left untouched, moments included.
template <typename T>
class Adam {
  public:
    explicit Adam(const std::vector<Parameter<T>>& params) {
        for (const auto& p : params)
            slots_.push_back({p.name, std::vector<T>(p.value.numel(), T(0)),
                              std::vector<T>(p.value.numel(), T(0))});
    }

    void step(std::vector<Parameter<T>>& params, const TrainConfig& cfg) {
        ++t_;
        const T lr = static_cast<T>(cfg.lr);
        const T b1 = static_cast<T>(cfg.adam_beta1);
        const T b2 = static_cast<T>(cfg.adam_beta2);
        const T eps = static_cast<T>(cfg.adam_eps);
        const T corr1 = T(1) - static_cast<T>(std::pow(cfg.adam_beta1, double(t_)));
        const T corr2 = T(1) - static_cast<T>(std::pow(cfg.adam_beta2, double(t_)));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            require(slots_[i].name == p.name, "optimizer slot order diverged at '", p.name, "'");
            if (!p.value.has_grad()) continue;
            auto grad = p.value.grad();
            auto vals = p.value.values_mut();
            auto& m = slots_[i].m;
            auto& v = slots_[i].v;
            for (size_t j = 0; j < vals.size(); ++j) {
                m[j] = b1 * m[j] + (T(1) - b1) * grad[j];
                v[j] = b2 * v[j] + (T(1) - b2) * grad[j] * grad[j];
                const T mhat = m[j] / corr1;
                const T vhat = v[j] / corr2;
                vals[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    int64_t steps_taken() const { return t_; }

    struct Slot {
        std::string name;
        std::vector<T> m, v;
    };
    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }
    void set_steps_taken(int64_t t) { t_ = t; }

  private:
    std::vector<Slot> slots_;
    int64_t t_ = 0;
};

// The trainable trio: generator plus global and local critics, with the
// frozen feature pyramid used by the perceptual/style losses.
template <typename T>
struct Model {
    explicit Model(const TrainConfig& cfg)
        : config(cfg),
          generator(cfg.generator_config(), cfg.seed),
          critic_global(CriticConfig{cfg.image_size, cfg.base_channels}, "global",
                        mix64(cfg.seed, 0xd15cu)),
          critic_local(CriticConfig{cfg.image_size / 2, cfg.base_channels}, "local",
                       mix64(cfg.seed, 0x10ca1u)),
          features(cfg.fx_seed) {
        cfg.validate();
        if (!cfg.fx_weights.empty()) load_feature_weights(cfg.fx_weights);
    }

    void load_feature_weights(const std::string& path) {
        CheckpointFile ckpt = load_checkpoint(path);
        for (int i = 0; i < 5; ++i) {
            auto& w = features.weight(i);
            auto& b = features.bias(i);
            record_into<T>(ckpt, cat("fx.stage", i + 1, ".weight"), w.shape(), w.values_mut());
            record_into<T>(ckpt, cat("fx.stage", i + 1, ".bias"), b.shape(), b.values_mut());
        }
    }

    TrainConfig config;
    Generator<T> generator;
    Critic<T> critic_global;
    Critic<T> critic_local;
    FeatureExtractor<T> features;
};

template <typename T>
struct BatchTensors {
    Tensor<T> images;      // [N,3,H,W]
    Tensor<T> structures;  // [N,3,H,W]
    Tensor<T> masks;       // [N,1,H,W]
};

template <typename T>
BatchTensors<T> batch_to_tensors(const std::vector<Sample>& batch) {
    require<DataError>(!batch.empty(), "empty batch");
    std::vector<Tensor<T>> images, structures, masks;
    for (const auto& s : batch) {
        images.push_back(image_to_tensor<T>(s.image));
        structures.push_back(image_to_tensor<T>(s.structure));
        masks.push_back(mask_to_tensor<T>(s.mask));
    }
    if (batch.size() == 1) return {images[0], structures[0], masks[0]};
    return {concat(images, 0), concat(structures, 0), concat(masks, 0)};
}

struct StepReport {
    double rec = 0, perc = 0, style = 0, adv = 0, rte = 0, rst = 0, total = 0, d_loss = 0;
};

namespace detail {

template <typename T>
std::pair<Tensor<T>, Tensor<T>> critic_scores_joint(Critic<T>& critic, const Tensor<T>& real,
                                                    const Tensor<T>& fake, bool training) {
    const int64_t n = real.dim(0);
    Tensor<T> scores = critic.forward(concat<T>({real, fake}, 0), training);
    return {slice1d(scores, 0, n), slice1d(scores, n, 2 * n)};
}

}  // namespace detail

// Optimizer bundle: one Adam per parameter store.
template <typename T>
struct Optimizers {
    explicit Optimizers(Model<T>& m)
        : gen(m.generator.store().parameters()),
          critic_global(m.critic_global.store().parameters()),
          critic_local(m.critic_local.store().parameters()) {}

    Adam<T> gen, critic_global, critic_local;
};

// One alternating update: critics first on the detached generator output
// (single joint real/fake forward, so spectral norm power-iterates exactly
// once per step), then the generator against the refreshed critics with the
// full weighted objective.
template <typename T>
StepReport train_step(Model<T>& model, Optimizers<T>& opt, const BatchTensors<T>& batch) {
    const TrainConfig& cfg = model.config;
    StepReport report;

    GeneratorOutput<T> out = model.generator.forward(batch.images, batch.masks);

    // discriminator update
    {
        Tensor<T> fake = out.raw.detach();
        auto [real_g, fake_g] =
            detail::critic_scores_joint(model.critic_global, batch.images, fake, true);
        Tensor<T> real_local_in = local_crop(batch.images, batch.masks, cfg.image_size / 2);
        Tensor<T> fake_local_in = local_crop(fake, batch.masks, cfg.image_size / 2);
        auto [real_l, fake_l] =
            detail::critic_scores_joint(model.critic_local, real_local_in, fake_local_in, true);
        Tensor<T> d_loss = add(loss_adv_d(real_g, fake_g), loss_adv_d(real_l, fake_l));
        report.d_loss = static_cast<double>(d_loss.item());

        model.critic_global.store().zero_grads();
        model.critic_local.store().zero_grads();
        d_loss.backward();
        opt.critic_global.step(model.critic_global.store().parameters(), cfg);
        opt.critic_local.step(model.critic_local.store().parameters(), cfg);
    }

    // generator update against the updated critics (frozen spectral state)
    {
        auto [real_g, fake_g] =
            detail::critic_scores_joint(model.critic_global, batch.images, out.raw, false);
        Tensor<T> real_local_in = local_crop(batch.images, batch.masks, cfg.image_size / 2);
        Tensor<T> fake_local_in = local_crop(out.raw, batch.masks, cfg.image_size / 2);
        auto [real_l, fake_l] =
            detail::critic_scores_joint(model.critic_local, real_local_in, fake_local_in, false);

        LossComponents<T> parts{
            loss_rec(out.raw, batch.images),
            loss_perc(out.raw, batch.images, model.features),
            loss_style(out.raw, batch.images, model.features),
            add(loss_adv_g(real_g, fake_g), loss_adv_g(real_l, fake_l)),
            loss_rte(out.branch_texture, batch.images),
            loss_rst(out.branch_structure, batch.structures)};
        Tensor<T> total = loss_total(parts, cfg.loss_weights());

        report.rec = static_cast<double>(parts.rec.item());
        report.perc = static_cast<double>(parts.perc.item());
        report.style = static_cast<double>(parts.style.item());
        report.adv = static_cast<double>(parts.adv.item());
        report.rte = static_cast<double>(parts.rte.item());
        report.rst = static_cast<double>(parts.rst.item());
        report.total = static_cast<double>(total.item());

        model.generator.store().zero_grads();
        model.critic_global.store().zero_grads();
        model.critic_local.store().zero_grads();
        total.backward();
        opt.gen.step(model.generator.store().parameters(), cfg);
    }

    require<NumericError>(std::isfinite(report.total) && std::isfinite(report.d_loss),
                          "non-finite loss at training step (total=", report.total,
                          ", d_loss=", report.d_loss, ")");
    return report;
}

// ---------------------------------------------------------------------------
// checkpoint assembly: parameters and buffers under per-network prefixes
// ("gen.", "d_global.", "d_local."), optimizer moments under "opt_*.", plus
// the step counter and a verbatim config echo.

namespace detail {

template <typename T>
void add_store_records(CheckpointFile& ckpt, const std::string& prefix,
                       const ParamStore<T>& store) {
    for (const auto& p : store.parameters())
        ckpt.records[prefix + p.name] = make_record<T>(p.value.shape(), p.value.values());
    for (const auto& b : store.buffers())
        ckpt.records[prefix + b.name] = make_record<T>(b.value.shape(), b.value.values());
}

template <typename T>
void read_store_records(const CheckpointFile& ckpt, const std::string& prefix,
                        ParamStore<T>& store) {
    for (auto& p : store.parameters())
        record_into<T>(ckpt, prefix + p.name, p.value.shape(), p.value.values_mut());
    for (auto& b : store.buffers())
        record_into<T>(ckpt, prefix + b.name, b.value.shape(), b.value.values_mut());
}

template <typename T>
void add_adam_records(CheckpointFile& ckpt, const std::string& prefix, const Adam<T>& opt) {
    for (const auto& slot : opt.slots()) {
        ckpt.records[prefix + ".m." + slot.name] =
            make_record<T>({static_cast<int64_t>(slot.m.size())}, std::span<const T>(slot.m));
        ckpt.records[prefix + ".v." + slot.name] =
            make_record<T>({static_cast<int64_t>(slot.v.size())}, std::span<const T>(slot.v));
    }
    const T t = static_cast<T>(opt.steps_taken());
    ckpt.records[prefix + ".t"] = make_record<T>({1}, std::span<const T>(&t, 1));
}

template <typename T>
void read_adam_records(const CheckpointFile& ckpt, const std::string& prefix, Adam<T>& opt) {
    for (auto& slot : opt.slots()) {
        record_into<T>(ckpt, prefix + ".m." + slot.name,
                       {static_cast<int64_t>(slot.m.size())}, std::span<T>(slot.m));
        record_into<T>(ckpt, prefix + ".v." + slot.name,
                       {static_cast<int64_t>(slot.v.size())}, std::span<T>(slot.v));
    }
    T t{};
    record_into<T>(ckpt, prefix + ".t", {1}, std::span<T>(&t, 1));
    opt.set_steps_taken(static_cast<int64_t>(t));
}

}  // namespace detail

template <typename T>
CheckpointFile snapshot(const Model<T>& model, const Optimizers<T>& opt, uint64_t step) {
    CheckpointFile ckpt;
    ckpt.step = step;
    ckpt.config_json = model.config.echo();
    detail::add_store_records(ckpt, "gen.", model.generator.store());
    detail::add_store_records(ckpt, "d_global.", model.critic_global.store());
    detail::add_store_records(ckpt, "d_local.", model.critic_local.store());
    detail::add_adam_records(ckpt, "opt_g", opt.gen);
    detail::add_adam_records(ckpt, "opt_dg", opt.critic_global);
    detail::add_adam_records(ckpt, "opt_dl", opt.critic_local);
    return ckpt;
}

template <typename T>
uint64_t restore(const CheckpointFile& ckpt, Model<T>& model, Optimizers<T>& opt) {
    auto diffs =
        config_diff_structural(nlohmann::json::parse(ckpt.config_json), model.config.to_json());
    if (!diffs.empty()) {
        std::string msg = "checkpoint config is incompatible with the current config:";
        for (const auto& d : diffs) msg += "\n  " + d;
        throw DataError(msg);
    }
    detail::read_store_records(ckpt, "gen.", model.generator.store());
    detail::read_store_records(ckpt, "d_global.", model.critic_global.store());
    detail::read_store_records(ckpt, "d_local.", model.critic_local.store());
    detail::read_adam_records(ckpt, "opt_g", opt.gen);
    detail::read_adam_records(ckpt, "opt_dg", opt.critic_global);
    detail::read_adam_records(ckpt, "opt_dl", opt.critic_local);
    return ckpt.step;
}

// ---------------------------------------------------------------------------
// training loop

struct TrainResult {
    uint64_t steps_run = 0;
    std::string final_checkpoint;
    std::string csv_path;
    double last_total = 0.0;
};

namespace detail {

inline std::string checkpoint_name(const std::string& out_dir, uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%06llu.bin", static_cast<unsigned long long>(step));
    return (std::filesystem::path(out_dir) / buf).string();
}

inline std::string csv_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline constexpr const char* kLossCsvHeader =
    "step,L_rec,L_perc,L_style,L_adv,L_rte,L_rst,L_total,D_loss";

template <typename T>
TrainResult train(const TrainConfig& cfg, const std::string& data_root,
                  const std::string& out_dir, const std::string& resume = "",
                  std::ostream& log = std::cerr) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    Dataset dataset(data_root, cfg.image_size, cfg.mask_policy());
    Model<T> model(cfg);
    Optimizers<T> opt(model);

    uint64_t step = 0;
    if (!resume.empty()) {
        step = restore(load_checkpoint(resume), model, opt);
        log << "resumed from " << resume << " at step " << step << "\n";
    }

    const std::string csv_path = (std::filesystem::path(out_dir) / "losses.csv").string();
    const bool fresh_csv = !std::filesystem::exists(csv_path) || resume.empty();
    std::ofstream csv(csv_path, fresh_csv ? std::ios::trunc : std::ios::app);
    require<DataError>(csv.good(), csv_path, ": cannot open loss log");
    if (fresh_csv) csv << kLossCsvHeader << "\n";

    TrainResult result;
    result.csv_path = csv_path;
    const int64_t bpe = dataset.batches_per_epoch(cfg.batch);
    std::string last_ckpt = resume;

    if (cfg.steps == 0 && resume.empty()) {
        const auto path = detail::checkpoint_name(out_dir, 0);
        save_checkpoint(snapshot(model, opt, 0), path);
        result.final_checkpoint = path;
        return result;
    }

    while (step < static_cast<uint64_t>(cfg.steps)) {
        const int64_t epoch = static_cast<int64_t>(step) / bpe;
        const int64_t batch_index = static_cast<int64_t>(step) % bpe;
        auto batch = dataset.batch(cfg.seed, epoch, batch_index, cfg.batch);
        auto tensors = batch_to_tensors<T>(batch);

        StepReport report;
        try {
            report = train_step(model, opt, tensors);
        } catch (const NumericError& e) {
            throw NumericError(cat(e.what(), "; last good checkpoint: ",
                                   last_ckpt.empty() ? "<none>" : last_ckpt));
        }
        ++step;
        ++result.steps_run;
        result.last_total = report.total;

        if (step % static_cast<uint64_t>(cfg.log_every) == 0 ||
            step == static_cast<uint64_t>(cfg.steps)) {
            csv << step << "," << detail::csv_double(report.rec) << ","
                << detail::csv_double(report.perc) << "," << detail::csv_double(report.style)
                << "," << detail::csv_double(report.adv) << "," << detail::csv_double(report.rte)
                << "," << detail::csv_double(report.rst) << ","
                << detail::csv_double(report.total) << "," << detail::csv_double(report.d_loss)
                << "\n";
            csv.flush();
        }
        if (step % static_cast<uint64_t>(cfg.checkpoint_every) == 0 ||
            step == static_cast<uint64_t>(cfg.steps)) {
            last_ckpt = detail::checkpoint_name(out_dir, step);
            save_checkpoint(snapshot(model, opt, step), last_ckpt);
        }
    }
    result.final_checkpoint = last_ckpt;
    return result;
}

// ---------------------------------------------------------------------------
// inference & evaluation

template <typename T>
struct LoadedModel {
    explicit LoadedModel(const CheckpointFile& ckpt)
        : model(TrainConfig::from_json(nlohmann::json::parse(ckpt.config_json))) {
        Optimizers<T> opt(model);  // scratch; restore needs matching slots
        restore(ckpt, model, opt);
    }
    Model<T> model;
};

struct InferResult {
    std::string composited_path;
    std::string raw_path;
};

template <typename T>
InferResult infer(const CheckpointFile& ckpt, const std::string& image_path,
                  const std::string& mask_path, const std::string& out_dir) {
    LoadedModel<T> loaded(ckpt);
    Model<T>& m = loaded.model;
    const int64_t side = m.config.image_size;

    Image image = load_image(image_path);
    Mask mask = load_mask(mask_path);
    require<DataError>(image.height == mask.height && image.width == mask.width, image_path,
                       " and ", mask_path, " have different dimensions");
    if (image.height != side || image.width != side) {
        std::cerr << "infer: resizing " << image.height << "x" << image.width << " input to "
                  << side << "x" << side << "\n";
        image = resize_image(image, side, side);
        mask = resize_mask(mask, side, side);
    }

    auto out = m.generator.forward(image_to_tensor<T>(image), mask_to_tensor<T>(mask));
    std::filesystem::create_directories(out_dir);
    const std::string stem = std::filesystem::path(image_path).stem().string();
    InferResult result;
    result.composited_path =
        (std::filesystem::path(out_dir) / (stem + "_composited.ppm")).string();
    result.raw_path = (std::filesystem::path(out_dir) / (stem + "_raw.ppm")).string();
    save_ppm(tensor_to_image(out.composited), result.composited_path);
    save_ppm(tensor_to_image(out.raw), result.raw_path);
    return result;
}

struct EvalRow {
    std::string path;
    double psnr_comp, ssim_comp, mae_comp;
    double psnr_raw, ssim_raw, mae_raw;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    MetricReport report;          // composited metrics (headline)
    MetricReport raw_report;      // raw-output metrics
    double feat_dist = -1.0;      // proxy only; never comparable to paper FID
    bool feat_dist_regularized = false;
};

// Evaluates the checkpoint on a prepared dataset against the manifest's mask
// pairing for one ratio bucket. Metrics are reported for the composited
// output first and the raw output second.
template <typename T>
EvalResult evaluate(const CheckpointFile& ckpt, const std::string& data_root,
                    MaskBucket bucket) {
    LoadedModel<T> loaded(ckpt);
    Model<T>& m = loaded.model;
    const int64_t side = m.config.image_size;

    const auto manifest_path = std::filesystem::path(data_root) / "manifest.json";
    std::ifstream mf(manifest_path);
    require<DataError>(mf.good(), manifest_path.string(),
                       ": missing manifest (run prepare first)");
    auto manifest = nlohmann::json::parse(mf);

    EvalResult result;
    std::vector<Image> composited_set, truth_set;
    for (const auto& entry : manifest["entries"]) {
        const std::string rel_image = entry["image"];
        const std::string rel_mask = entry["masks"][bucket_name(bucket)];
        Image image = load_image((std::filesystem::path(data_root) / rel_image).string());
        Mask mask = load_mask((std::filesystem::path(data_root) / rel_mask).string());
        if (image.height != side || image.width != side) {
            image = resize_image(image, side, side);
            mask = resize_mask(mask, side, side);
        }
        auto out = m.generator.forward(image_to_tensor<T>(image), mask_to_tensor<T>(mask));
        Image comp = tensor_to_image(out.composited);
        Image raw = tensor_to_image(out.raw);

        result.rows.push_back(EvalRow{rel_image, psnr(comp, image), ssim(comp, image),
                                      mae(comp, image), psnr(raw, image), ssim(raw, image),
                                      mae(raw, image)});
        composited_set.push_back(comp);
        truth_set.push_back(image);
    }
    require<DataError>(!result.rows.empty(), data_root, ": manifest has no entries");

    auto aggregate = [](const std::vector<EvalRow>& rows, bool composited) {
        MetricReport rep;
        rep.n_images = static_cast<int64_t>(rows.size());
        for (const auto& r : rows) {
            rep.psnr += composited ? r.psnr_comp : r.psnr_raw;
            rep.ssim += composited ? r.ssim_comp : r.ssim_raw;
            rep.mae += composited ? r.mae_comp : r.mae_raw;
        }
        rep.psnr /= rep.n_images;
        rep.ssim /= rep.n_images;
        rep.mae /= rep.n_images;
        return rep;
    };
    result.report = aggregate(result.rows, true);
    result.raw_report = aggregate(result.rows, false);

    if (truth_set.size() >= 2) {
        FeatureExtractor<double> fx(m.config.fx_seed);
        result.feat_dist =
            feat_dist(composited_set, truth_set, fx, &result.feat_dist_regularized);
        result.report.feat_dist = result.feat_dist;
    }
    return result;
}

inline constexpr const char* kEvalCsvHeader =
    "path,psnr,ssim,mae,psnr_raw,ssim_raw,mae_raw";

inline void write_eval_csv(const EvalResult& result, std::ostream& out) {
    auto fmt = [](double v) {
        return std::isinf(v) ? std::string("inf") : detail::csv_double(v);
    };
    out << kEvalCsvHeader << "\n";
    for (const auto& r : result.rows)
        out << r.path << "," << fmt(r.psnr_comp) << "," << fmt(r.ssim_comp) << ","
            << fmt(r.mae_comp) << "," << fmt(r.psnr_raw) << "," << fmt(r.ssim_raw) << ","
            << fmt(r.mae_raw) << "\n";
    out << "mean," << fmt(result.report.psnr) << "," << fmt(result.report.ssim) << ","
        << fmt(result.report.mae) << "," << fmt(result.raw_report.psnr) << ","
        << fmt(result.raw_report.ssim) << "," << fmt(result.raw_report.mae) << "\n";
}

}  // namespace inpaint
