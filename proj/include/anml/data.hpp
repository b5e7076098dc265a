#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "anml/image.hpp"
#include "anml/tensor.hpp"

namespace anml {

enum class Phase { meta_train, meta_test };

inline const char* phase_name(Phase p) {
    return p == Phase::meta_train ? "meta_train" : "meta_test";
}

// Immutable collection of classes with per-class instance splits. Meta-train
// classes expose all instances for training; meta-test classes are split into
// train_per_class training instances and held-out test instances.
class ClassInstanceStore {
public:
    struct ClassData {
        std::string name;
        std::vector<std::shared_ptr<const Image>> instances;
    };

    ClassInstanceStore() = default;
    ClassInstanceStore(Phase phase, int64_t image_size, int64_t train_per_class)
        : phase_(phase), image_size_(image_size), train_per_class_(train_per_class) {}

    void add_class(std::string name, std::vector<Image> instances) {
        ClassData cd;
        cd.name = std::move(name);
        for (auto& img : instances) {
            if (img.height != image_size_ || img.width != image_size_)
                throw DataError("class '" + cd.name + "': instance is " +
                                std::to_string(img.height) + "x" + std::to_string(img.width) +
                                ", store expects " + std::to_string(image_size_));
            for (float v : img.pixels)
                if (v < 0.0f || v > 1.0f)
                    throw DataError("class '" + cd.name + "': pixel value " + std::to_string(v) +
                                    " outside [0,1]");
            cd.instances.push_back(std::make_shared<Image>(std::move(img)));
        }
        if (phase_ == Phase::meta_test &&
            static_cast<int64_t>(cd.instances.size()) <= train_per_class_)
            throw DataError("class '" + cd.name + "' has " +
                            std::to_string(cd.instances.size()) +
                            " instances, need more than train split " +
                            std::to_string(train_per_class_));
        classes_.push_back(std::move(cd));
    }

    Phase phase() const { return phase_; }
    int64_t image_size() const { return image_size_; }
    int64_t train_per_class() const { return train_per_class_; }
    int64_t n_classes() const { return static_cast<int64_t>(classes_.size()); }
    const ClassData& class_data(int64_t c) const { return classes_.at(static_cast<size_t>(c)); }

    int64_t n_train_instances(int64_t c) const {
        const auto& cd = class_data(c);
        return std::min<int64_t>(train_per_class_, static_cast<int64_t>(cd.instances.size()));
    }
    int64_t n_test_instances(int64_t c) const {
        return static_cast<int64_t>(class_data(c).instances.size()) - n_train_instances(c);
    }
    std::shared_ptr<const Image> train_instance(int64_t c, int64_t i) const {
        if (i < 0 || i >= n_train_instances(c))
            throw DataError("train instance index " + std::to_string(i) + " out of range");
        return class_data(c).instances[static_cast<size_t>(i)];
    }
    std::shared_ptr<const Image> test_instance(int64_t c, int64_t i) const {
        if (i < 0 || i >= n_test_instances(c))
            throw DataError("test instance index " + std::to_string(i) + " out of range");
        return class_data(c).instances[static_cast<size_t>(n_train_instances(c) + i)];
    }
    int64_t total_train_instances() const {
        int64_t n = 0;
        for (int64_t c = 0; c < n_classes(); ++c) n += n_train_instances(c);
        return n;
    }

private:
    Phase phase_ = Phase::meta_train;
    int64_t image_size_ = 0;
    int64_t train_per_class_ = 0;
    std::vector<ClassData> classes_;
};

// One labeled instance; images are shared with the owning store.
struct Example {
    std::shared_ptr<const Image> image;
    int64_t class_id = 0;
    int64_t instance_id = 0;
};

struct TaskTrajectory {
    Phase phase = Phase::meta_train;
    std::vector<int64_t> class_order;
    std::vector<Example> items;
};

// Packs examples into a [N,1,H,W] batch tensor.
template <typename T>
Tensor<T> batch_tensor(const std::vector<Example>& items, size_t begin, size_t count) {
    if (items.empty() || begin + count > items.size())
        throw DataError("batch_tensor: range out of bounds");
    const Image& first = *items[begin].image;
    const int64_t hw = first.height;
    std::vector<T> values(count * hw * hw);
    for (size_t i = 0; i < count; ++i) {
        const Image& img = *items[begin + i].image;
        for (size_t p = 0; p < img.pixels.size(); ++p)
            values[i * hw * hw + p] = static_cast<T>(img.pixels[p]);
    }
    return Tensor<T>::from_values({static_cast<int64_t>(count), 1, hw, hw}, std::move(values));
}

template <typename T>
Tensor<T> batch_tensor(const std::vector<Example>& items) {
    return batch_tensor<T>(items, 0, items.size());
}

inline std::vector<int64_t> batch_labels(const std::vector<Example>& items, size_t begin,
                                         size_t count) {
    std::vector<int64_t> labels(count);
    for (size_t i = 0; i < count; ++i) labels[i] = items[begin + i].class_id;
    return labels;
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

// Single-class trajectory for one inner loop: k training instances of the
// given class in seeded order.
inline TaskTrajectory make_metatrain_trajectory(const ClassInstanceStore& store, int64_t class_id,
                                                int64_t k, uint64_t seed) {
    if (store.phase() != Phase::meta_train)
        throw DataError("meta-train trajectory requested from a meta-test store");
    if (class_id < 0 || class_id >= store.n_classes())
        throw DataError("class " + std::to_string(class_id) + " out of range");
    const int64_t avail = store.n_train_instances(class_id);
    if (k > avail)
        throw DataError("trajectory of " + std::to_string(k) + " instances requested, class has " +
                        std::to_string(avail));
    std::vector<int64_t> order(static_cast<size_t>(avail));
    for (int64_t i = 0; i < avail; ++i) order[static_cast<size_t>(i)] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    TaskTrajectory traj;
    traj.phase = Phase::meta_train;
    traj.class_order = {class_id};
    for (int64_t i = 0; i < k; ++i)
        traj.items.push_back({store.train_instance(class_id, order[static_cast<size_t>(i)]),
                              class_id, order[static_cast<size_t>(i)]});
    return traj;
}

// Uniform sample without replacement across all meta-train training instances.
inline std::vector<Example> sample_remember_set(const ClassInstanceStore& store, int64_t size,
                                                uint64_t seed) {
    if (store.phase() != Phase::meta_train)
        throw DataError("remember set must be sampled from the meta-train store");
    std::vector<std::pair<int64_t, int64_t>> all;
    for (int64_t c = 0; c < store.n_classes(); ++c)
        for (int64_t i = 0; i < store.n_train_instances(c); ++i) all.emplace_back(c, i);
    if (size < 0 || size > static_cast<int64_t>(all.size()))
        throw DataError("remember set of " + std::to_string(size) + " from " +
                        std::to_string(all.size()) + " instances");
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `size` slots become the sample.
    for (int64_t i = 0; i < size; ++i) {
        std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), all.size() - 1);
        std::swap(all[static_cast<size_t>(i)], all[pick(rng)]);
    }
    std::vector<Example> out;
    out.reserve(static_cast<size_t>(size));
    for (int64_t i = 0; i < size; ++i) {
        auto [c, inst] = all[static_cast<size_t>(i)];
        out.push_back({store.train_instance(c, inst), c, inst});
    }
    return out;
}

// Meta-test trajectory: n classes chosen and ordered by seed, each
// contributing its training instances contiguously (sequential, not shuffled).
inline TaskTrajectory make_metatest_trajectory(const ClassInstanceStore& store, int64_t n_classes,
                                               uint64_t seed) {
    if (store.phase() != Phase::meta_test)
        throw DataError("meta-test trajectory requested from a meta-train store");
    if (n_classes < 1 || n_classes > store.n_classes())
        throw DataError("trajectory over " + std::to_string(n_classes) + " classes, store has " +
                        std::to_string(store.n_classes()));
    std::vector<int64_t> ids(static_cast<size_t>(store.n_classes()));
    for (int64_t i = 0; i < store.n_classes(); ++i) ids[static_cast<size_t>(i)] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(static_cast<size_t>(n_classes));

    TaskTrajectory traj;
    traj.phase = Phase::meta_test;
    traj.class_order = ids;
    for (int64_t c : ids)
        for (int64_t i = 0; i < store.n_train_instances(c); ++i)
            traj.items.push_back({store.train_instance(c, i), c, i});
    return traj;
}

// I.i.d. oracle stream: per epoch, a fresh seeded shuffle of the full
// trajectory multiset. One epoch shows each training image exactly once.
inline std::vector<Example> make_iid_stream(const TaskTrajectory& trajectory, int64_t epochs,
                                            uint64_t seed) {
    if (epochs < 1) throw DataError("iid stream needs epochs >= 1");
    std::vector<Example> out;
    out.reserve(trajectory.items.size() * static_cast<size_t>(epochs));
    for (int64_t e = 0; e < epochs; ++e) {
        std::vector<Example> epoch = trajectory.items;
        std::mt19937_64 rng(mix_seed(seed, seed_stream::kIidStream, static_cast<uint64_t>(e)));
        std::shuffle(epoch.begin(), epoch.end(), rng);
        out.insert(out.end(), epoch.begin(), epoch.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic task generator: seeded stroke-and-blob prototypes with
// per-instance jitter, linearly separable by design.
// ---------------------------------------------------------------------------

namespace detail {

inline void draw_segment(Image& img, double x0, double y0, double x1, double y1, float value) {
    const int64_t steps = 2 * std::max<int64_t>(img.width, img.height);
    for (int64_t s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(steps);
        const int64_t x = static_cast<int64_t>(std::lround(x0 + (x1 - x0) * t));
        const int64_t y = static_cast<int64_t>(std::lround(y0 + (y1 - y0) * t));
        if (x >= 0 && x < img.width && y >= 0 && y < img.height)
            img.pixels[static_cast<size_t>(y * img.width + x)] =
                std::min(1.0f, img.pixels[static_cast<size_t>(y * img.width + x)] + value);
    }
}

// 3x3 binomial blur; widens strokes so a one-pixel jitter keeps instances of
// a class strongly correlated in pixel space.
inline Image blur3(const Image& src) {
    static const float k[3] = {0.25f, 0.5f, 0.25f};
    Image out = src;
    for (int64_t y = 0; y < src.height; ++y)
        for (int64_t x = 0; x < src.width; ++x) {
            float acc = 0.0f;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int64_t sy = std::clamp<int64_t>(y + dy, 0, src.height - 1);
                    const int64_t sx = std::clamp<int64_t>(x + dx, 0, src.width - 1);
                    acc += src.at(sy, sx) * k[dy + 1] * k[dx + 1];
                }
            out.pixels[static_cast<size_t>(y * src.width + x)] = acc;
        }
    return out;
}

inline void add_blob(Image& img, double cx, double cy, double sigma, float amp) {
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            auto& px = img.pixels[static_cast<size_t>(y * img.width + x)];
            px = std::min(1.0f, px + amp * static_cast<float>(std::exp(-d2 / (2 * sigma * sigma))));
        }
}

// Prototype = two anchor blobs on a class-specific cell pair plus two random
// strokes. The blob pair differs between any two classes, which keeps the
// store linearly separable; the strokes add texture.
inline Image synthetic_prototype(int64_t image_size, int64_t grid, int64_t cell_a, int64_t cell_b,
                                 uint64_t class_seed) {
    std::mt19937_64 rng(class_seed);
    std::uniform_real_distribution<double> coord(1.0, static_cast<double>(image_size - 2));
    Image img;
    img.height = image_size;
    img.width = image_size;
    img.pixels.assign(static_cast<size_t>(image_size * image_size), 0.0f);
    for (int s = 0; s < 2; ++s)
        draw_segment(img, coord(rng), coord(rng), coord(rng), coord(rng), 0.5f);
    img = blur3(img);

    const double cell = static_cast<double>(image_size) / static_cast<double>(grid);
    const double sigma = cell / 2.2;
    auto center = [&](int64_t c, double& cx, double& cy) {
        cx = (static_cast<double>(c % grid) + 0.5) * cell;
        cy = (static_cast<double>(c / grid) + 0.5) * cell;
    };
    double ax, ay, bx, by;
    center(cell_a, ax, ay);
    center(cell_b, bx, by);
    add_blob(img, ax, ay, sigma, 0.95f);
    add_blob(img, bx, by, sigma, 0.95f);
    return img;
}

inline Image jitter_instance(const Image& proto, uint64_t instance_seed) {
    std::mt19937_64 rng(instance_seed);
    std::uniform_int_distribution<int> shift(-1, 1);
    std::uniform_real_distribution<float> gain(0.85f, 1.0f);
    std::uniform_real_distribution<float> noise(-0.05f, 0.05f);
    const int dx = shift(rng), dy = shift(rng);
    const float g = gain(rng);
    Image out;
    out.height = proto.height;
    out.width = proto.width;
    out.pixels.resize(proto.pixels.size());
    for (int64_t y = 0; y < out.height; ++y)
        for (int64_t x = 0; x < out.width; ++x) {
            const int64_t sy = y - dy, sx = x - dx;
            float v = 0.0f;
            if (sy >= 0 && sy < proto.height && sx >= 0 && sx < proto.width)
                v = proto.at(sy, sx) * g;
            v += noise(rng);
            out.pixels[static_cast<size_t>(y * out.width + x)] =
                std::clamp(v, 0.0f, 1.0f);
        }
    return out;
}

}  // namespace detail

inline ClassInstanceStore make_synthetic_store(int64_t n_classes, int64_t instances,
                                               int64_t image_size, uint64_t seed,
                                               Phase phase = Phase::meta_train,
                                               int64_t train_per_class = -1) {
    if (n_classes <= 0 || instances <= 0 || image_size <= 0)
        throw DataError("synthetic store requires positive class/instance/image sizes");
    if (train_per_class < 0)
        train_per_class = phase == Phase::meta_train ? instances : std::max<int64_t>(1, instances - 5);

    // Smallest anchor grid whose cell pairs cover the class count.
    int64_t grid = 3;
    while (grid * grid * (grid * grid - 1) / 2 < n_classes && grid < 16) ++grid;
    if (grid * grid * (grid * grid - 1) / 2 < n_classes)
        throw DataError("synthetic generator supports at most " +
                        std::to_string(grid * grid * (grid * grid - 1) / 2) + " classes");
    std::vector<std::pair<int64_t, int64_t>> pairs;
    for (int64_t a = 0; a < grid * grid; ++a)
        for (int64_t b = a + 1; b < grid * grid; ++b) pairs.emplace_back(a, b);
    std::mt19937_64 pair_rng(mix_seed(seed, seed_stream::kSynthetic, 0xabcdef));
    std::shuffle(pairs.begin(), pairs.end(), pair_rng);

    ClassInstanceStore store(phase, image_size, train_per_class);
    for (int64_t c = 0; c < n_classes; ++c) {
        const auto [cell_a, cell_b] = pairs[static_cast<size_t>(c)];
        Image proto = detail::synthetic_prototype(
            image_size, grid, cell_a, cell_b,
            mix_seed(seed, seed_stream::kSynthetic, static_cast<uint64_t>(c)));
        std::vector<Image> inst;
        inst.reserve(static_cast<size_t>(instances));
        for (int64_t i = 0; i < instances; ++i)
            inst.push_back(detail::jitter_instance(
                proto, mix_seed(seed, seed_stream::kSynthetic,
                                0x100000ull + static_cast<uint64_t>(c) * 4096 + static_cast<uint64_t>(i))));
        store.add_class("synthetic/" + std::to_string(c), std::move(inst));
    }
    return store;
}

// ---------------------------------------------------------------------------
// Raw fixture format: a manifest plus 8-bit grayscale files. Used by tests
// and as a dataset exchange format.
// ---------------------------------------------------------------------------

inline void save_fixture_store(const std::filesystem::path& dir, const ClassInstanceStore& store) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
    manifest << "anml-fixture v1 " << store.image_size() << " " << store.train_per_class() << " "
             << phase_name(store.phase()) << "\n";
    for (int64_t c = 0; c < store.n_classes(); ++c) {
        const auto& cd = store.class_data(c);
        for (size_t i = 0; i < cd.instances.size(); ++i) {
            const std::string rel = "c" + std::to_string(c) + "_i" + std::to_string(i) + ".raw";
            manifest << cd.name << " " << rel << "\n";
            std::ofstream f(dir / rel, std::ios::binary | std::ios::trunc);
            if (!f) throw IoError("cannot write " + (dir / rel).string());
            for (float v : cd.instances[i]->pixels) {
                const unsigned char byte =
                    static_cast<unsigned char>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
                f.put(static_cast<char>(byte));
            }
        }
    }
}

inline ClassInstanceStore load_fixture_store(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw DataError("fixture manifest missing: " + (dir / "manifest.txt").string());
    std::string magic, version, phase_tok;
    int64_t image_size = 0, train_per_class = 0;
    manifest >> magic >> version >> image_size >> train_per_class >> phase_tok;
    if (magic != "anml-fixture" || version != "v1")
        throw DataError("unrecognized fixture manifest header in " + dir.string());
    const Phase phase = phase_tok == "meta_test" ? Phase::meta_test : Phase::meta_train;

    ClassInstanceStore store(phase, image_size, train_per_class);
    std::string cls, rel;
    std::string current;
    std::vector<Image> pending;
    auto flush = [&]() {
        if (!current.empty()) store.add_class(current, std::move(pending));
        pending.clear();
    };
    while (manifest >> cls >> rel) {
        if (cls != current) {
            flush();
            current = cls;
        }
        std::ifstream f(dir / rel, std::ios::binary);
        if (!f) throw DataError("fixture file missing: " + (dir / rel).string());
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                         std::istreambuf_iterator<char>());
        if (static_cast<int64_t>(bytes.size()) != image_size * image_size)
            throw DataError("fixture file " + rel + " has " + std::to_string(bytes.size()) +
                            " bytes, expected " + std::to_string(image_size * image_size));
        Image img;
        img.height = image_size;
        img.width = image_size;
        img.pixels.resize(bytes.size());
        for (size_t i = 0; i < bytes.size(); ++i)
            img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
        pending.push_back(std::move(img));
    }
    flush();
    return store;
}

}  // namespace anml
