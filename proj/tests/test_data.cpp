#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sonarzoo/dataset.hpp"
#include "sonarzoo/image_io.hpp"
#include "temp_dir.hpp"

using namespace sonarzoo;
using testpaths::TempDir;

namespace {

GrayImage gradient_image(std::int64_t h, std::int64_t w) {
    GrayImage img;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<std::size_t>(h * w));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            img.pixels[static_cast<std::size_t>(y * w + x)] =
                static_cast<std::uint8_t>((y * 7 + x * 13) % 256);
    return img;
}

// two classes, two objects each, five frames per object, constant-value images
ImageDataset tiny_dataset() {
    ImageDataset ds;
    ds.image_size = 4;
    ds.class_names = {"ca", "cb"};
    ds.object_names = {"ca/o1", "ca/o2", "cb/o1", "cb/o2"};
    std::uint8_t val = 10;
    for (std::int64_t obj = 0; obj < 4; ++obj) {
        for (std::int64_t f = 0; f < 5; ++f) {
            GrayImage img;
            img.height = img.width = 4;
            img.pixels.assign(16, val);
            val += 3;
            ds.images.push_back(std::move(img));
            ds.labels.push_back(obj / 2);
            ds.object_ids.push_back(obj);
            ds.seq_index.push_back(f);
        }
    }
    return ds;
}

} // namespace

TEST_CASE("png files round trip exactly") {
    TempDir tmp;
    const GrayImage img = gradient_image(9, 13);
    const std::string path = tmp.file("img.png");
    write_png_gray8(path, img);
    const GrayImage back = read_png_gray8(path);
    CHECK(back.height == 9);
    CHECK(back.width == 13);
    CHECK(back.pixels == img.pixels);

    CHECK_THROWS_AS(read_png_gray8(tmp.file("absent.png")), IoError);
}

TEST_CASE("bilinear resize keeps size, range, and flat images flat") {
    const GrayImage img = gradient_image(8, 8);
    const GrayImage same = resize_bilinear(img, 8, 8);
    CHECK(same.pixels == img.pixels); // identity at the same size

    GrayImage flat;
    flat.height = flat.width = 6;
    flat.pixels.assign(36, 77);
    const GrayImage up = resize_bilinear(flat, 17, 11);
    CHECK(up.height == 17);
    CHECK(up.width == 11);
    for (auto p : up.pixels) CHECK(p == 77);
}

TEST_CASE("synthetic dataset generation is deterministic and balanced") {
    const ImageDataset a = synth_generate(4, 10, 32, 1234);
    const ImageDataset b = synth_generate(4, 10, 32, 1234);
    const ImageDataset c = synth_generate(4, 10, 32, 1235);

    CHECK(a.size() == 40);
    CHECK(a.num_classes() == 4);
    CHECK(a.image_size == 32);
    REQUIRE(a.images.size() == 40);
    bool same = true, diff = false;
    for (std::int64_t i = 0; i < 40; ++i) {
        same &= a.images[static_cast<std::size_t>(i)].pixels ==
                b.images[static_cast<std::size_t>(i)].pixels;
        diff |= a.images[static_cast<std::size_t>(i)].pixels !=
                c.images[static_cast<std::size_t>(i)].pixels;
    }
    CHECK(same);
    CHECK(diff);

    std::map<std::int64_t, int> counts;
    for (auto l : a.labels) ++counts[l];
    for (const auto& [label, n] : counts) {
        CHECK(label >= 0);
        CHECK(label < 4);
        CHECK(n == 10);
    }
    for (std::int64_t i = 0; i < a.size(); ++i) {
        CHECK(a.images[static_cast<std::size_t>(i)].height == 32);
        CHECK(a.images[static_cast<std::size_t>(i)].width == 32);
        CHECK(a.seq_index[static_cast<std::size_t>(i)] >= 0);
    }
}

TEST_CASE("datasets round trip through the directory layout") {
    TempDir tmp;
    const ImageDataset ds = synth_generate(3, 4, 16, 7);
    const std::string root = tmp.file("data");
    save_dataset(ds, root);
    const ImageDataset back = load_dataset(root, 16);

    REQUIRE(back.size() == ds.size());
    CHECK(back.num_classes() == ds.num_classes());
    CHECK(back.labels == ds.labels);
    CHECK(back.image_size == 16);
    for (std::int64_t i = 0; i < ds.size(); ++i)
        CHECK(back.images[static_cast<std::size_t>(i)].pixels ==
              ds.images[static_cast<std::size_t>(i)].pixels);

    // reloading at another size resizes every frame
    const ImageDataset small = load_dataset(root, 8);
    CHECK(small.image_size == 8);
    CHECK(small.images.front().pixels.size() == 64);

    CHECK_THROWS_AS(load_dataset(tmp.file("nowhere"), 16), IoError);
}

TEST_CASE("pixel statistics and normalization") {
    ImageDataset ds;
    ds.image_size = 2;
    ds.class_names = {"a"};
    GrayImage i1;
    i1.height = i1.width = 2;
    i1.pixels = {0, 10, 20, 30};
    GrayImage i2 = i1;
    i2.pixels = {40, 50, 60, 70};
    ds.images = {i1, i2};
    ds.labels = {0, 0};
    ds.object_ids = {0, 0};
    ds.seq_index = {0, 1};

    CHECK(compute_pixel_mean(ds) == doctest::Approx(35.0).epsilon(1e-12));

    const Tensor batch = batch_tensor(ds, {0, 1});
    REQUIRE(batch.dims() == std::vector<std::int64_t>{2, 2, 2, 1});
    CHECK(batch[0] == 0.0f);
    CHECK(batch[5] == 50.0f);

    const Tensor norm = normalize(batch, 35.0);
    CHECK(norm[0] == -35.0f);
    CHECK(norm[5] == 15.0f);
    Tensor inplace = batch;
    normalize_inplace(inplace, 35.0);
    for (std::int64_t i = 0; i < inplace.size(); ++i) CHECK(inplace[i] == norm[i]);
}

TEST_CASE("sequential split takes the first ceil(fraction*n) frames per object") {
    const ImageDataset ds = tiny_dataset();
    const auto [train, test] = sequential_split(ds, 0.7);

    // ceil(0.7*5) = 4 per object -> 16 train, 4 test
    CHECK(train.size() == 16);
    CHECK(test.size() == 4);
    CHECK(train.num_classes() == 2);

    for (std::int64_t i = 0; i < train.size(); ++i)
        CHECK(train.seq_index[static_cast<std::size_t>(i)] <= 3);
    for (std::int64_t i = 0; i < test.size(); ++i)
        CHECK(test.seq_index[static_cast<std::size_t>(i)] == 4);

    // degenerate fractions are rejected
    CHECK_THROWS_AS(sequential_split(ds, 0.0), ConfigError);
    CHECK_THROWS_AS(sequential_split(ds, 1.0), ConfigError);
}

TEST_CASE("subset keeps rows aligned") {
    const ImageDataset ds = tiny_dataset();
    const ImageDataset sub = subset(ds, {0, 7, 19});
    CHECK(sub.size() == 3);
    CHECK(sub.labels == std::vector<std::int64_t>{0, 0, 1});
    CHECK(sub.object_ids == std::vector<std::int64_t>{0, 1, 3});
    CHECK(sub.images[1].pixels == ds.images[7].pixels);
}

TEST_CASE("kfold indices partition the range evenly") {
    const auto folds = kfold_indices(23, 5, 42);
    REQUIRE(folds.size() == 5);
    std::set<std::int64_t> seen;
    for (const auto& [tr, va] : folds) {
        CHECK(tr.size() + va.size() == 23);
        CHECK(va.size() >= 4);
        CHECK(va.size() <= 5);
        std::set<std::int64_t> fold_all(tr.begin(), tr.end());
        for (auto v : va) {
            CHECK(fold_all.insert(v).second); // train and validation are disjoint
            CHECK_FALSE(seen.count(v));       // validation folds never overlap
            seen.insert(v);
        }
        CHECK(fold_all.size() == 23);
    }
    CHECK(seen.size() == 23); // every index validates exactly once

    CHECK(kfold_indices(23, 5, 42) == folds); // seeded determinism
    CHECK(kfold_indices(23, 5, 43) != folds);

    // shuffling actually happened: the first validation fold is not 0..4
    std::vector<std::int64_t> head = folds[0].second;
    std::sort(head.begin(), head.end());
    bool identity = head.size() == 5;
    for (std::size_t i = 0; identity && i < head.size(); ++i)
        identity = head[i] == static_cast<std::int64_t>(i);
    CHECK_FALSE(identity);
}

TEST_CASE("lowshot sampling draws per class without replacement") {
    const std::vector<std::int64_t> labels = {0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2};
    SeededRng rng(9);
    std::int64_t shortfall = -1;
    const auto picked = lowshot_indices(labels, 3, 2, rng, &shortfall);
    CHECK(shortfall == 0);
    CHECK(picked.size() == 6);
    std::map<std::int64_t, int> per_class;
    std::set<std::int64_t> unique;
    for (auto i : picked) {
        CHECK(unique.insert(i).second);
        ++per_class[labels[static_cast<std::size_t>(i)]];
    }
    for (std::int64_t c = 0; c < 3; ++c) CHECK(per_class[c] == 2);

    // a class smaller than spc is taken whole and counted
    SeededRng rng2(9);
    std::int64_t short2 = 0;
    const auto picked2 = lowshot_indices(labels, 3, 4, rng2, &short2);
    CHECK(short2 == 1); // class 1 has only 3 samples
    CHECK(picked2.size() == 4 + 3 + 4);

    // determinism per seed
    SeededRng r1(33), r2(33);
    CHECK(lowshot_indices(labels, 3, 2, r1) == lowshot_indices(labels, 3, 2, r2));
}

TEST_CASE("augmentation obeys its probability knobs") {
    const ImageDataset ds = synth_generate(2, 3, 8, 5);
    const Tensor x = batch_tensor(ds, {0, 1, 2, 3, 4, 5});

    AugmentConfig off;
    off.shift_fraction = 0.0;
    off.flip_ud = 0.0;
    off.flip_lr = 0.0;
    SeededRng rng(1);
    const Tensor same = augment(x, off, rng);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);

    // certain flips applied twice restore the input
    AugmentConfig flips;
    flips.shift_fraction = 0.0;
    flips.flip_ud = 1.0;
    flips.flip_lr = 1.0;
    SeededRng r1(2), r2(3);
    const Tensor once = augment(x, flips, r1);
    const Tensor twice = augment(once, flips, r2);
    bool changed = false;
    for (std::int64_t i = 0; i < x.size(); ++i) changed |= once[i] != x[i];
    CHECK(changed);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(twice[i] == x[i]);

    // shifts only move values around or zero-fill; nothing new appears
    AugmentConfig shifts;
    shifts.shift_fraction = 0.5;
    shifts.flip_ud = 0.0;
    shifts.flip_lr = 0.0;
    SeededRng r3(4);
    const Tensor shifted = augment(x, shifts, r3);
    std::set<float> allowed(x.storage().begin(), x.storage().end());
    allowed.insert(0.0f);
    for (std::int64_t i = 0; i < shifted.size(); ++i)
        CHECK(allowed.count(shifted[i]) == 1);

    // the same seed reproduces the same augmentation
    SeededRng r4(6), r5(6);
    AugmentConfig def;
    const Tensor a1 = augment(x, def, r4);
    const Tensor a2 = augment(x, def, r5);
    for (std::int64_t i = 0; i < a1.size(); ++i) CHECK(a1[i] == a2[i]);
}
