#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "anml/data.hpp"
#include "anml/image.hpp"

namespace anml {

// On-disk layout: <root>/<alphabet>/<character>/<name>.png
struct OmniglotOptions {
    int64_t image_size = 28;
    int64_t expected_classes = 1623;
    int64_t n_meta_train = 963;
    int64_t n_meta_test = 660;
    int64_t instances_per_class = 20;
    int64_t test_train_per_class = 15;  // remaining instances are held out
};

struct OmniglotSplit {
    ClassInstanceStore meta_train;
    ClassInstanceStore meta_test;
    std::vector<std::string> meta_train_classes;
    std::vector<std::string> meta_test_classes;
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_subdirs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<std::filesystem::path> sorted_pngs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// Lists classes as alphabet/character pairs in deterministic (sorted) order.
inline std::vector<std::pair<std::string, std::vector<std::filesystem::path>>>
enumerate_omniglot_classes(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root))
        throw DataError("omniglot root not found: " + root.string());
    std::vector<std::pair<std::string, std::vector<std::filesystem::path>>> classes;
    for (const auto& alphabet : detail::sorted_subdirs(root)) {
        if (alphabet.filename().string().rfind("_", 0) == 0) continue;  // _archives etc.
        for (const auto& character : detail::sorted_subdirs(alphabet)) {
            auto files = detail::sorted_pngs(character);
            if (files.empty()) continue;
            classes.emplace_back(alphabet.filename().string() + "/" + character.filename().string(),
                                 std::move(files));
        }
    }
    return classes;
}

inline OmniglotSplit load_omniglot(const std::filesystem::path& root, uint64_t seed,
                                   const OmniglotOptions& opts = {}) {
    auto classes = enumerate_omniglot_classes(root);
    if (static_cast<int64_t>(classes.size()) != opts.expected_classes)
        throw DataError("omniglot at " + root.string() + " has " +
                        std::to_string(classes.size()) + " classes, expected " +
                        std::to_string(opts.expected_classes));
    if (opts.n_meta_train + opts.n_meta_test != opts.expected_classes)
        throw ConfigError("split " + std::to_string(opts.n_meta_train) + "+" +
                          std::to_string(opts.n_meta_test) + " does not cover " +
                          std::to_string(opts.expected_classes) + " classes");

    std::vector<std::string> missing;
    for (const auto& [name, files] : classes)
        if (static_cast<int64_t>(files.size()) < opts.instances_per_class)
            missing.push_back(name + " (" + std::to_string(files.size()) + " instances)");
    if (!missing.empty()) {
        std::string msg = "classes with too few instances:";
        for (size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
        if (missing.size() > 10) msg += " (+" + std::to_string(missing.size() - 10) + " more)";
        throw DataError(msg);
    }

    // Seeded permutation decides which classes are held out for meta-testing.
    std::vector<size_t> order(classes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(seed, seed_stream::kDataSplit));
    std::shuffle(order.begin(), order.end(), rng);

    auto load_class = [&](size_t idx) {
        const auto& [name, files] = classes[idx];
        std::vector<Image> images;
        images.reserve(static_cast<size_t>(opts.instances_per_class));
        for (int64_t i = 0; i < opts.instances_per_class; ++i) {
            Image img = read_png_gray(files[static_cast<size_t>(i)]);
            images.push_back(invert(resize_bilinear(img, opts.image_size)));
        }
        return images;
    };

    OmniglotSplit split;
    split.meta_train = ClassInstanceStore(Phase::meta_train, opts.image_size,
                                          opts.instances_per_class);
    split.meta_test =
        ClassInstanceStore(Phase::meta_test, opts.image_size, opts.test_train_per_class);
    for (int64_t i = 0; i < opts.n_meta_train; ++i) {
        const size_t idx = order[static_cast<size_t>(i)];
        split.meta_train_classes.push_back(classes[idx].first);
        split.meta_train.add_class(classes[idx].first, load_class(idx));
    }
    for (int64_t i = 0; i < opts.n_meta_test; ++i) {
        const size_t idx = order[static_cast<size_t>(opts.n_meta_train + i)];
        split.meta_test_classes.push_back(classes[idx].first);
        split.meta_test.add_class(classes[idx].first, load_class(idx));
    }
    return split;
}

}  // namespace anml
