#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inpaint/image.hpp"
#include "inpaint/mask.hpp"
#include "inpaint/smooth.hpp"

namespace inpaint {

namespace fs = std::filesystem;

// One training unit: ground truth, its smoothed structure target, and a hole
// mask. All three share H x W.
struct Sample {
    Image image;
    Image structure;
    Mask mask;
};

inline void check_sample(const Sample& s) {
    require<DataError>(s.image.height == s.structure.height && s.image.width == s.structure.width &&
                           s.image.height == s.mask.height && s.image.width == s.mask.width,
                       "sample dimensions disagree: image ", s.image.height, "x", s.image.width,
                       ", structure ", s.structure.height, "x", s.structure.width, ", mask ",
                       s.mask.height, "x", s.mask.width);
    require<DataError>(s.image.height >= 8 && s.image.width >= 8, "sample smaller than 8x8: ",
                       s.image.height, "x", s.image.width);
}

// ---------------------------------------------------------------------------
// prepare: raw images -> <out>/images, <out>/structures, <out>/masks/<bucket>,
// plus manifest.json recording the seeded image/mask pairing and smoothing
// parameters.

struct PrepareResult {
    int64_t written = 0;
    int64_t skipped = 0;
};

inline PrepareResult prepare_dataset(const std::string& in_dir, const std::string& out_dir,
                                     int64_t size, uint64_t seed,
                                     const SmoothParams& smooth = SmoothParams{}) {
    require<DataError>(fs::is_directory(in_dir), in_dir, ": not a directory");
    require<ConfigError>(size >= 8 && size % 8 == 0, "prepare: size must be a multiple of 8, got ",
                         size);

    std::vector<fs::path> sources;
    for (const auto& entry : fs::directory_iterator(in_dir))
        if (entry.is_regular_file() && has_image_extension(entry.path()))
            sources.push_back(entry.path());
    std::sort(sources.begin(), sources.end());
    require<DataError>(!sources.empty(), in_dir, ": no decodable images found");

    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "structures");
    for (MaskBucket b : all_buckets())
        fs::create_directories(fs::path(out_dir) / "masks" / bucket_name(b));

    nlohmann::json manifest;
    manifest["size"] = size;
    manifest["seed"] = seed;
    manifest["smooth"] = {{"lambda", smooth.lambda}, {"sigma_e", smooth.sigma_e},
                          {"iters", smooth.iters}};
    manifest["entries"] = nlohmann::json::array();

    PrepareResult result;
    for (const auto& src : sources) {
        Image img;
        try {
            img = load_image(src.string());
        } catch (const DataError& e) {
            std::cerr << "prepare: skipping " << src << ": " << e.what() << "\n";
            ++result.skipped;
            continue;
        }
        char id[24];
        std::snprintf(id, sizeof id, "%06lld", static_cast<long long>(result.written));
        const std::string name = std::string(id) + ".ppm";

        img = resize_image(img, size, size);
        save_ppm(img, (fs::path(out_dir) / "images" / name).string());
        save_ppm(structure_smooth(img, smooth), (fs::path(out_dir) / "structures" / name).string());

        nlohmann::json entry;
        entry["id"] = id;
        entry["source"] = src.filename().string();
        entry["image"] = "images/" + name;
        entry["structure"] = "structures/" + name;
        for (MaskBucket b : all_buckets()) {
            const uint64_t mask_seed =
                mix64(seed, static_cast<uint64_t>(result.written), static_cast<uint64_t>(b));
            Mask m = generate_irregular_mask(size, size, b, mask_seed);
            const std::string rel = "masks/" + bucket_name(b) + "/" + name;
            save_mask(m, (fs::path(out_dir) / rel).string());
            entry["masks"][bucket_name(b)] = rel;
            entry["mask_seeds"][bucket_name(b)] = mask_seed;
        }
        manifest["entries"].push_back(entry);
        ++result.written;
    }
    require<DataError>(result.written > 0, in_dir, ": every candidate image failed to decode");

    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    return result;
}

// ---------------------------------------------------------------------------
// dataset: deterministic shuffled epochs of Samples

enum class MaskKind { Center, Irregular };

struct MaskPolicy {
    MaskKind kind = MaskKind::Irregular;
    std::optional<MaskBucket> bucket;  // irregular only; empty = rotate all four
};

class Dataset {
  public:
    // Root must hold images/*.ppm; structures/<name> are used when present and
    // computed on the fly (with `smooth`) otherwise.
    Dataset(std::string root, int64_t image_size, MaskPolicy policy,
            SmoothParams smooth = SmoothParams{})
        : root_(std::move(root)), image_size_(image_size), policy_(policy), smooth_(smooth) {
        const fs::path images = fs::path(root_) / "images";
        require<DataError>(fs::is_directory(images), images.string(),
                           ": not a directory (run prepare first or create images/)");
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(images))
            if (entry.is_regular_file() && has_image_extension(entry.path()))
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                Entry e;
                e.image = load_image(f.string());
                const fs::path st = fs::path(root_) / "structures" / f.filename();
                if (fs::exists(st)) {
                    e.structure = load_image(st.string());
                } else {
                    if (!warned_missing_structures_) {
                        std::cerr << "dataset: " << root_
                                  << " has no structures/, computing structure targets on the fly\n";
                        warned_missing_structures_ = true;
                    }
                    e.structure = structure_smooth(e.image, smooth_);
                }
                e.image = resize_image(e.image, image_size_, image_size_);
                e.structure = resize_image(e.structure, image_size_, image_size_);
                entries_.push_back(std::move(e));
            } catch (const DataError& err) {
                std::cerr << "dataset: skipping " << f << ": " << err.what() << "\n";
            }
        }
        require<DataError>(!entries_.empty(), images.string(), ": no decodable images");
    }

    int64_t size() const { return static_cast<int64_t>(entries_.size()); }
    int64_t image_size() const { return image_size_; }

    int64_t batches_per_epoch(int64_t batch) const {
        return (size() + batch - 1) / batch;
    }

    // Deterministic batch composition: epoch order is a seeded shuffle, the
    // mask of sample `idx` in epoch `e` is a pure function of (seed, e, idx).
    std::vector<Sample> batch(uint64_t shuffle_seed, int64_t epoch, int64_t batch_index,
                              int64_t batch_size) const {
        const auto order = epoch_order(shuffle_seed, epoch);
        const int64_t begin = batch_index * batch_size;
        require<DataError>(begin >= 0 && begin < size(), "batch index ", batch_index,
                           " out of range");
        const int64_t end = std::min<int64_t>(size(), begin + batch_size);
        std::vector<Sample> out;
        out.reserve(static_cast<size_t>(end - begin));
        for (int64_t i = begin; i < end; ++i) {
            const int64_t idx = order[static_cast<size_t>(i)];
            const Entry& e = entries_[static_cast<size_t>(idx)];
            Sample s{e.image, e.structure, make_mask(shuffle_seed, epoch, idx)};
            check_sample(s);
            out.push_back(std::move(s));
        }
        return out;
    }

    std::vector<int64_t> epoch_order(uint64_t shuffle_seed, int64_t epoch) const {
        std::vector<int64_t> order(static_cast<size_t>(size()));
        for (int64_t i = 0; i < size(); ++i) order[static_cast<size_t>(i)] = i;
        Rng rng(mix64(shuffle_seed, static_cast<uint64_t>(epoch), 0x0e70c4u));
        std::shuffle(order.begin(), order.end(), rng);
        return order;
    }

    const Image& image(int64_t idx) const { return entries_[static_cast<size_t>(idx)].image; }

  private:
    struct Entry {
        Image image;
        Image structure;
    };

    Mask make_mask(uint64_t seed, int64_t epoch, int64_t idx) const {
        if (policy_.kind == MaskKind::Center)
            return generate_center_mask(image_size_, image_size_);
        const MaskBucket bucket =
            policy_.bucket ? *policy_.bucket
                           : all_buckets()[static_cast<size_t>((epoch + idx) % 4)];
        return generate_irregular_mask(image_size_, image_size_, bucket,
                                       mix64(seed, static_cast<uint64_t>(epoch),
                                             static_cast<uint64_t>(idx), 0xa45cu));
    }

    std::string root_;
    int64_t image_size_;
    MaskPolicy policy_;
    SmoothParams smooth_;
    std::vector<Entry> entries_;
    bool warned_missing_structures_ = false;
};

}  // namespace inpaint
