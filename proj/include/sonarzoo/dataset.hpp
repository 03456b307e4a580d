#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sonarzoo/image_io.hpp"
#include "sonarzoo/rng.hpp"
#include "sonarzoo/tensor.hpp"

// Dataset ingestion and preparation. Images stay 8-bit until they are packed
// into float tensors; normalization is a plain mean subtraction with no
// rescaling.
namespace sonarzoo {

struct ImageDataset {
    std::int64_t image_size = 0; // square side after resize
    std::vector<std::string> class_names;
    std::vector<std::string> object_names; // per object id: "<class>/<object dir>"
    std::vector<GrayImage> images;
    std::vector<std::int64_t> labels;     // per image
    std::vector<std::int64_t> object_ids; // per image
    std::vector<std::int64_t> seq_index;  // capture order within the object

    std::int64_t size() const { return static_cast<std::int64_t>(images.size()); }
    std::int64_t num_classes() const { return static_cast<std::int64_t>(class_names.size()); }
};

struct AugmentConfig {
    double shift_fraction = 0.1; // max |shift| as a fraction of the image side
    double flip_ud = 0.5;
    double flip_lr = 0.5;
};

// Directory layout: root/<class>/<object_id>/<seq_index>.png, grayscale
// 8-bit, bilinear-resized to size x size. Ordering is (class, object, seq),
// classes and objects sorted by name, frames by numeric stem.
ImageDataset load_dataset(const std::string& root, std::int64_t size);
void save_dataset(const ImageDataset& ds, const std::string& root);

ImageDataset subset(const ImageDataset& ds, const std::vector<std::int64_t>& indices);

double compute_pixel_mean(const ImageDataset& train);

// Raw pixel values into a (B, s, s, 1) float tensor.
Tensor batch_tensor(const ImageDataset& ds, const std::vector<std::int64_t>& indices);

void normalize_inplace(Tensor& x, double pixel_mean);
Tensor normalize(const Tensor& x, double pixel_mean);

// Per sample, in batch order, the draws are: shift magnitude and sign per
// axis (height first), then the up-down and left-right flip coins. Shift is
// rounded to whole pixels, vacated cells are zero-filled.
Tensor augment(const Tensor& x, const AugmentConfig& cfg, SeededRng& rng);

// Per object: first ceil(fraction*n) frames in capture order go to train.
std::pair<ImageDataset, ImageDataset> sequential_split(const ImageDataset& ds, double fraction);

// Shuffled k-fold partition; fold sizes differ by at most one.
std::vector<std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>>>
kfold_indices(std::int64_t n, std::int64_t k, std::uint64_t seed);

// Uniform draw of spc indices per class, without replacement; classes smaller
// than spc are taken whole and counted in *shortfall when given.
std::vector<std::int64_t> lowshot_indices(const std::vector<std::int64_t>& labels,
                                          std::int64_t num_classes, std::int64_t spc,
                                          SeededRng& rng, std::int64_t* shortfall = nullptr);

// Class-conditional shapes (disc, ring, horizontal bar, vertical bar, cycled
// with scale changes) over a dark speckled background with an acoustic-shadow
// stripe. Deterministic per seed.
ImageDataset synth_generate(std::int64_t classes, std::int64_t per_class, std::int64_t size,
                            std::uint64_t seed);

} // namespace sonarzoo
