#include "sonarzoo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "sonarzoo/errors.hpp"

namespace sonarzoo {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

bool numeric_stem(const std::string& s, std::int64_t& value) {
    if (s.empty()) return false;
    value = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        value = value * 10 + (c - '0');
    }
    return true;
}

void check_indices(const ImageDataset& ds, const std::vector<std::int64_t>& indices) {
    for (std::int64_t i : indices)
        if (i < 0 || i >= ds.size())
            throw ConfigError("index " + std::to_string(i) + " out of range [0, " +
                              std::to_string(ds.size()) + ")");
}

} // namespace

ImageDataset load_dataset(const std::string& root, std::int64_t size) {
    if (size < 8) throw ConfigError("image size must be at least 8");
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);

    ImageDataset ds;
    ds.image_size = size;
    ds.class_names = sorted_subdirs(root);
    if (ds.class_names.empty()) throw IoError("no class directories under " + root);

    for (std::int64_t label = 0; label < ds.num_classes(); ++label) {
        const fs::path class_dir = fs::path(root) / ds.class_names[label];
        const auto objects = sorted_subdirs(class_dir);
        if (objects.empty())
            throw IoError("no object directories under " + class_dir.string());
        for (const std::string& obj : objects) {
            const std::int64_t object_id = static_cast<std::int64_t>(ds.object_names.size());
            ds.object_names.push_back(ds.class_names[label] + "/" + obj);

            std::vector<std::pair<std::int64_t, fs::path>> frames;
            for (const auto& e : fs::directory_iterator(class_dir / obj)) {
                if (!e.is_regular_file() || e.path().extension() != ".png") continue;
                std::int64_t seq;
                if (!numeric_stem(e.path().stem().string(), seq))
                    throw IoError("frame name is not numeric: " + e.path().string());
                frames.emplace_back(seq, e.path());
            }
            if (frames.empty())
                throw IoError("no frames under " + (class_dir / obj).string());
            std::sort(frames.begin(), frames.end());

            for (const auto& [seq, path] : frames) {
                ds.images.push_back(resize_bilinear(read_png_gray8(path.string()), size, size));
                ds.labels.push_back(label);
                ds.object_ids.push_back(object_id);
                ds.seq_index.push_back(seq);
            }
        }
    }
    return ds;
}

void save_dataset(const ImageDataset& ds, const std::string& root) {
    for (std::int64_t i = 0; i < ds.size(); ++i) {
        const std::int64_t obj = ds.object_ids[i];
        if (obj < 0 || obj >= static_cast<std::int64_t>(ds.object_names.size()))
            throw IoError("dataset has a dangling object id");
        const fs::path dir = fs::path(root) / ds.object_names[obj];
        fs::create_directories(dir);
        write_png_gray8((dir / (std::to_string(ds.seq_index[i]) + ".png")).string(),
                        ds.images[i]);
    }
}

ImageDataset subset(const ImageDataset& ds, const std::vector<std::int64_t>& indices) {
    check_indices(ds, indices);
    ImageDataset out;
    out.image_size = ds.image_size;
    out.class_names = ds.class_names;
    out.object_names = ds.object_names;
    out.images.reserve(indices.size());
    for (std::int64_t i : indices) {
        out.images.push_back(ds.images[i]);
        out.labels.push_back(ds.labels[i]);
        out.object_ids.push_back(ds.object_ids[i]);
        out.seq_index.push_back(ds.seq_index[i]);
    }
    return out;
}

double compute_pixel_mean(const ImageDataset& train) {
    if (train.size() == 0) throw ConfigError("cannot take the pixel mean of an empty dataset");
    double sum = 0.0;
    std::int64_t count = 0;
    for (const GrayImage& img : train.images) {
        for (std::uint8_t p : img.pixels) sum += p;
        count += static_cast<std::int64_t>(img.pixels.size());
    }
    return sum / static_cast<double>(count);
}

Tensor batch_tensor(const ImageDataset& ds, const std::vector<std::int64_t>& indices) {
    check_indices(ds, indices);
    if (indices.empty()) throw ConfigError("empty batch");
    const std::int64_t s = ds.image_size;
    Tensor x = Tensor::zeros({static_cast<std::int64_t>(indices.size()), s, s, 1});
    float* dst = x.data();
    for (std::int64_t i : indices) {
        const GrayImage& img = ds.images[i];
        if (img.height != s || img.width != s)
            throw ShapeError("image " + std::to_string(i) + " is not " + std::to_string(s) + "x" +
                             std::to_string(s));
        for (std::uint8_t p : img.pixels) *dst++ = static_cast<float>(p);
    }
    return x;
}

void normalize_inplace(Tensor& x, double pixel_mean) {
    const float m = static_cast<float>(pixel_mean);
    float* p = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) p[i] -= m;
}

Tensor normalize(const Tensor& x, double pixel_mean) {
    Tensor y = x;
    normalize_inplace(y, pixel_mean);
    return y;
}

Tensor augment(const Tensor& x, const AugmentConfig& cfg, SeededRng& rng) {
    if (x.rank() != 4) throw ShapeError("augment expects a (B, H, W, C) tensor");
    const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor y = Tensor::zeros(x.dims());
    for (std::int64_t b = 0; b < B; ++b) {
        const double mag_y = rng.uniform() * cfg.shift_fraction * static_cast<double>(H);
        const double sign_y = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double mag_x = rng.uniform() * cfg.shift_fraction * static_cast<double>(W);
        const double sign_x = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const bool ud = rng.bernoulli(cfg.flip_ud);
        const bool lr = rng.bernoulli(cfg.flip_lr);
        const std::int64_t dy = std::llround(sign_y * mag_y);
        const std::int64_t dx = std::llround(sign_x * mag_x);
        for (std::int64_t oy = 0; oy < H; ++oy) {
            const std::int64_t sy = oy - dy;
            if (sy < 0 || sy >= H) continue; // vacated rows stay zero
            for (std::int64_t ox = 0; ox < W; ++ox) {
                const std::int64_t sx = ox - dx;
                if (sx < 0 || sx >= W) continue;
                const std::int64_t ty = ud ? H - 1 - oy : oy;
                const std::int64_t tx = lr ? W - 1 - ox : ox;
                for (std::int64_t c = 0; c < C; ++c)
                    y.at(b, ty, tx, c) = x.at(b, sy, sx, c);
            }
        }
    }
    return y;
}

std::pair<ImageDataset, ImageDataset> sequential_split(const ImageDataset& ds, double fraction) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw ConfigError("split fraction must be in (0, 1)");
    // Group frame indices per object, preserving capture order.
    std::vector<std::vector<std::int64_t>> per_object(ds.object_names.size());
    for (std::int64_t i = 0; i < ds.size(); ++i)
        per_object[static_cast<std::size_t>(ds.object_ids[i])].push_back(i);

    std::vector<std::int64_t> train_idx, test_idx;
    for (const auto& frames : per_object) {
        const std::int64_t n = static_cast<std::int64_t>(frames.size());
        const std::int64_t head = static_cast<std::int64_t>(
            std::ceil(fraction * static_cast<double>(n)));
        for (std::int64_t j = 0; j < n; ++j)
            (j < head ? train_idx : test_idx).push_back(frames[static_cast<std::size_t>(j)]);
    }
    return {subset(ds, train_idx), subset(ds, test_idx)};
}

std::vector<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>>
kfold_indices(std::int64_t n, std::int64_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    if (n < k) throw ConfigError("k-fold needs at least k samples");
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    SeededRng rng(seed);
    rng.shuffle(order);

    // First n % k folds get one extra sample.
    std::vector<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>> folds;
    folds.reserve(static_cast<std::size_t>(k));
    std::int64_t start = 0;
    for (std::int64_t f = 0; f < k; ++f) {
        const std::int64_t len = n / k + (f < n % k ? 1 : 0);
        std::vector<std::int64_t> val(order.begin() + start, order.begin() + start + len);
        std::vector<std::int64_t> train;
        train.reserve(static_cast<std::size_t>(n - len));
        train.insert(train.end(), order.begin(), order.begin() + start);
        train.insert(train.end(), order.begin() + start + len, order.end());
        folds.emplace_back(std::move(train), std::move(val));
        start += len;
    }
    return folds;
}

std::vector<std::int64_t> lowshot_indices(const std::vector<std::int64_t>& labels,
                                          std::int64_t num_classes, std::int64_t spc,
                                          SeededRng& rng, std::int64_t* shortfall) {
    if (num_classes < 1) throw ConfigError("lowshot needs at least one class");
    if (spc < 1) throw ConfigError("samples per class must be at least 1");
    if (shortfall) *shortfall = 0;

    std::vector<std::vector<std::int64_t>> pools(static_cast<std::size_t>(num_classes));
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(labels.size()); ++i) {
        const std::int64_t c = labels[static_cast<std::size_t>(i)];
        if (c < 0 || c >= num_classes)
            throw ConfigError("label " + std::to_string(c) + " outside the class range");
        pools[static_cast<std::size_t>(c)].push_back(i);
    }

    std::vector<std::int64_t> picked;
    for (auto& pool : pools) {
        if (static_cast<std::int64_t>(pool.size()) <= spc) {
            if (shortfall) *shortfall += spc - static_cast<std::int64_t>(pool.size());
            picked.insert(picked.end(), pool.begin(), pool.end());
            continue;
        }
        rng.shuffle(pool);
        std::sort(pool.begin(), pool.begin() + spc);
        picked.insert(picked.end(), pool.begin(), pool.begin() + spc);
    }
    return picked;
}

ImageDataset synth_generate(std::int64_t classes, std::int64_t per_class, std::int64_t size,
                            std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic set needs at least 2 classes");
    if (per_class < 2) throw ConfigError("synthetic set needs at least 2 frames per class");
    if (size < 8) throw ConfigError("image size must be at least 8");

    static const char* kShapes[] = {"disc", "ring", "hbar", "vbar"};
    ImageDataset ds;
    ds.image_size = size;
    for (std::int64_t c = 0; c < classes; ++c) {
        std::string name = kShapes[c % 4];
        if (c / 4 > 0) name += "_" + std::to_string(c / 4 + 1);
        ds.class_names.push_back(name);
    }

    SeededRng rng(seed);
    const double side = static_cast<double>(size);
    for (std::int64_t c = 0; c < classes; ++c) {
        // Two objects per class so sequential splits have something to cut.
        const std::int64_t n1 = (per_class + 1) / 2;
        for (int obj = 0; obj < 2; ++obj) {
            const std::int64_t object_id = static_cast<std::int64_t>(ds.object_names.size());
            ds.object_names.push_back(ds.class_names[c] + "/o" + std::to_string(obj + 1));
            const std::int64_t frames = obj == 0 ? n1 : per_class - n1;
            for (std::int64_t f = 0; f < frames; ++f) {
                GrayImage img;
                img.height = size;
                img.width = size;
                img.pixels.assign(static_cast<std::size_t>(size * size), 0);

                // Dark speckled seafloor.
                for (auto& p : img.pixels)
                    p = static_cast<std::uint8_t>(25 + rng.uniform_int(26));

                // Acoustic-shadow stripe: a near-black horizontal band.
                const std::int64_t band = std::max<std::int64_t>(1, size / 8);
                const std::int64_t band_y = rng.uniform_int(size - band);
                for (std::int64_t y = band_y; y < band_y + band; ++y)
                    for (std::int64_t x = 0; x < size; ++x)
                        img.pixels[static_cast<std::size_t>(y * size + x)] =
                            static_cast<std::uint8_t>(rng.uniform_int(8));

                // Bright acoustic highlight with a smooth ~1.5px falloff,
                // jittered center, scale grows with the cycle.
                const double level = 195.0 + static_cast<double>(rng.uniform_int(36));
                const double scale = 0.20 * (1.0 + 0.45 * static_cast<double>(c / 4));
                const double radius = std::max(2.5, scale * side * rng.uniform(0.85, 1.15));
                const double cy = side * rng.uniform(0.35, 0.65);
                const double cx = side * rng.uniform(0.35, 0.65);
                for (std::int64_t y = 0; y < size; ++y) {
                    for (std::int64_t x = 0; x < size; ++x) {
                        const double ddy = static_cast<double>(y) - cy;
                        const double ddx = static_cast<double>(x) - cx;
                        double d = 0.0; // signed distance into the shape, pixels
                        switch (c % 4) {
                        case 0: d = radius - std::hypot(ddy, ddx); break;
                        case 1: {
                            const double r = std::hypot(ddy, ddx);
                            d = std::min(radius - r, r - 0.55 * radius);
                            break;
                        }
                        case 2:
                            d = std::min(0.35 * radius - std::abs(ddy),
                                         radius - std::abs(ddx));
                            break;
                        case 3:
                            d = std::min(0.35 * radius - std::abs(ddx),
                                         radius - std::abs(ddy));
                            break;
                        }
                        const double m = std::clamp(0.5 + d / 1.5, 0.0, 1.0);
                        if (m > 0.0) {
                            auto& p = img.pixels[static_cast<std::size_t>(y * size + x)];
                            p = static_cast<std::uint8_t>(
                                std::lround(p + m * (level - p)));
                        }
                    }
                }

                ds.images.push_back(std::move(img));
                ds.labels.push_back(c);
                ds.object_ids.push_back(object_id);
                ds.seq_index.push_back(f);
            }
        }
    }
    return ds;
}

} // namespace sonarzoo
