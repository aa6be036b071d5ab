#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kt/data/example.hpp"
#include "kt/nn/tensor.hpp"

namespace kt::data {

/// Images of one shape with class indices into class_names. Immutable once built.
struct Dataset {
    std::vector<std::string> class_names;
    std::vector<nn::Tensor> images;
    std::vector<std::size_t> labels;

    std::size_t size() const { return images.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    nn::Shape image_shape() const;
    std::vector<std::size_t> class_counts() const;
    std::vector<std::vector<std::size_t>> indices_by_class() const;
    LabeledExample example(std::size_t i) const { return {images.at(i), labels.at(i)}; }
    LabeledSet subset(const std::vector<std::size_t>& indices) const;
    void add(nn::Tensor image, std::size_t label);
};

std::vector<std::string> fashion_mnist_class_names();
std::vector<std::string> numbered_class_names(std::size_t n);

/// Big-endian IDX pair (magic 0x00000803 images, 0x00000801 labels). Pixels are
/// divided by 255. Without names the class count is max(label) + 1.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::vector<std::string> class_names = {});

/// One subdirectory per class, classes and files in lexicographic order.
/// Accepts 8-bit grayscale PNG and PGM (P2/P5); other files are ignored.
Dataset load_image_directory(const std::filesystem::path& root);

/// Reads one PNG or PGM as an HxWx1 tensor in [0, 1].
nn::Tensor load_gray_image(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const nn::Tensor& image);

/// Concatenates pools with identical class lists and image shapes.
Dataset merge(const std::vector<Dataset>& parts);
/// Keeps classes 0..k-1.
Dataset select_classes(const Dataset& ds, std::size_t k);
Dataset merge_and_select(const std::vector<Dataset>& parts, std::size_t k);

/// Bilinear resampling with half-pixel centres and edge clamping.
nn::Tensor resize_bilinear(const nn::Tensor& image, std::size_t out_h, std::size_t out_w);
nn::Tensor expand_channels(const nn::Tensor& image, std::size_t channels);
/// HxWx1 grayscale -> size x size x channels.
nn::Tensor resize_and_expand(const nn::Tensor& image, std::size_t size = 40, std::size_t channels = 3);
Dataset resize_and_expand(const Dataset& ds, std::size_t size = 40, std::size_t channels = 3);

}  // namespace kt::data
