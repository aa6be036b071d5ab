#include "kt/data/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <tuple>

#include "kt/error.hpp"

namespace kt::data {

namespace fs = std::filesystem;

nn::Shape Dataset::image_shape() const {
    require(!images.empty(), "dataset is empty");
    return images.front().shape();
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (auto l : labels) ++counts.at(l);
    return counts;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
    std::vector<std::vector<std::size_t>> out(num_classes());
    for (std::size_t i = 0; i < labels.size(); ++i) out.at(labels[i]).push_back(i);
    return out;
}

LabeledSet Dataset::subset(const std::vector<std::size_t>& indices) const {
    LabeledSet out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(example(i));
    return out;
}

void Dataset::add(nn::Tensor image, std::size_t label) {
    require(label < num_classes(), "label " + std::to_string(label) + " out of range");
    if (!images.empty() && image.shape() != images.front().shape())
        fail(Errc::dimension_mismatch, "image shape " + nn::shape_str(image.shape()) + " differs from " +
                                           nn::shape_str(images.front().shape()));
    images.push_back(std::move(image));
    labels.push_back(label);
}

std::vector<std::string> fashion_mnist_class_names() {
    return {"T-shirt/top", "Trouser", "Pullover", "Dress", "Coat", "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot"};
}

std::vector<std::string> numbered_class_names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::to_string(i));
    return out;
}

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::unreadable_file, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

struct IdxFile {
    std::vector<std::size_t> dims;
    std::vector<unsigned char> bytes;
    std::size_t offset = 0;
};

IdxFile read_idx(const fs::path& path, std::uint32_t expected_magic) {
    IdxFile f;
    f.bytes = read_file(path);
    if (f.bytes.size() < 4) fail(Errc::truncated, path.string() + ": shorter than the IDX magic");
    const auto magic = be32(f.bytes, 0);
    if (magic != expected_magic) {
        std::ostringstream msg;
        msg << path.string() << ": magic 0x" << std::hex << magic << ", expected 0x" << expected_magic;
        fail(Errc::bad_magic, msg.str());
    }
    const std::size_t rank = expected_magic & 0xff;
    if (f.bytes.size() < 4 + 4 * rank) fail(Errc::truncated, path.string() + ": header truncated");
    std::size_t total = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        f.dims.push_back(be32(f.bytes, 4 + 4 * i));
        total *= f.dims.back();
    }
    f.offset = 4 + 4 * rank;
    if (f.bytes.size() - f.offset < total)
        fail(Errc::truncated, path.string() + ": expected " + std::to_string(total) + " data bytes, found " +
                                  std::to_string(f.bytes.size() - f.offset));
    return f;
}

}  // namespace

Dataset load_idx(const fs::path& images_path, const fs::path& labels_path, std::vector<std::string> class_names) {
    const auto images = read_idx(images_path, 0x00000803);
    const auto labels = read_idx(labels_path, 0x00000801);
    const std::size_t n = images.dims[0];
    if (labels.dims[0] != n)
        fail(Errc::dimension_mismatch, labels_path.string() + " holds " + std::to_string(labels.dims[0]) +
                                           " labels but " + images_path.string() + " holds " + std::to_string(n) +
                                           " images");
    const std::size_t h = images.dims[1], w = images.dims[2];
    if (h == 0 || w == 0) fail(Errc::dimension_mismatch, images_path.string() + ": zero image extent");

    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) max_label = std::max<std::size_t>(max_label, labels.bytes[labels.offset + i]);
    if (class_names.empty()) class_names = numbered_class_names(n ? max_label + 1 : 0);
    if (n && max_label >= class_names.size())
        fail(Errc::dimension_mismatch, labels_path.string() + ": label " + std::to_string(max_label) +
                                           " exceeds the " + std::to_string(class_names.size()) + " class names");

    Dataset ds;
    ds.class_names = std::move(class_names);
    ds.images.reserve(n);
    ds.labels.reserve(n);
    const unsigned char* px = images.bytes.data() + images.offset;
    for (std::size_t i = 0; i < n; ++i) {
        nn::Tensor img({h, w, 1});
        for (std::size_t j = 0; j < h * w; ++j) img[j] = static_cast<float>(px[i * h * w + j]) / 255.0f;
        ds.images.push_back(std::move(img));
        ds.labels.push_back(labels.bytes[labels.offset + i]);
    }
    return ds;
}

namespace {

std::string lower_ext(const fs::path& p) {
    auto e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

nn::Tensor load_pgm(const fs::path& path) {
    const auto bytes = read_file(path);
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_ws();
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            any = true;
            if (v > 1'000'000) fail(Errc::unreadable_file, path.string() + ": header value too large");
        }
        if (!any) fail(Errc::unreadable_file, path.string() + ": malformed PGM header");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2'))
        fail(Errc::unreadable_file, path.string() + ": not a P2/P5 PGM");
    const bool binary = bytes[1] == '5';
    pos = 2;
    const long w = read_int(), h = read_int(), maxval = read_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        fail(Errc::unreadable_file, path.string() + ": unsupported PGM dimensions or maxval");
    nn::Tensor img({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1});
    const auto n = static_cast<std::size_t>(w * h);
    if (binary) {
        ++pos;
        if (bytes.size() < pos + n) fail(Errc::unreadable_file, path.string() + ": truncated pixel data");
        for (std::size_t i = 0; i < n; ++i)
            img[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const long v = read_int();
            if (v > maxval) fail(Errc::unreadable_file, path.string() + ": pixel above maxval");
            img[i] = static_cast<float>(v) / static_cast<float>(maxval);
        }
    }
    return img;
}

nn::Tensor load_png(const fs::path& path) {
    const auto bytes = read_file(path);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        fail(Errc::unreadable_file, path.string() + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        fail(Errc::unreadable_file, path.string() + ": " + msg);
    }
    nn::Tensor img({image.height, image.width, 1});
    for (std::size_t i = 0; i < buf.size(); ++i) img[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
        return a.filename().string() < b.filename().string();
    });
    return out;
}

}  // namespace

nn::Tensor load_gray_image(const fs::path& path) {
    const auto ext = lower_ext(path);
    if (ext == ".png") return load_png(path);
    if (ext == ".pgm") return load_pgm(path);
    fail(Errc::unreadable_file, path.string() + ": unsupported image type");
}

void write_pgm(const fs::path& path, const nn::Tensor& image) {
    require(image.rank() == 3 && image.dim(2) == 1, "write_pgm expects an HxWx1 image");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io, "cannot write " + path.string());
    out << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
    for (auto v : image.values())
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
}

Dataset load_image_directory(const fs::path& root) {
    if (!fs::is_directory(root)) fail(Errc::unreadable_file, root.string() + " is not a directory");
    const auto class_dirs = sorted_entries(root, true);
    if (class_dirs.empty()) fail(Errc::invalid_argument, root.string() + " has no class subdirectories");
    Dataset ds;
    for (const auto& d : class_dirs) ds.class_names.push_back(d.filename().string());
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        std::size_t found = 0;
        for (const auto& f : sorted_entries(class_dirs[c], false)) {
            const auto ext = lower_ext(f);
            if (ext != ".png" && ext != ".pgm") continue;
            ds.add(load_gray_image(f), c);
            ++found;
        }
        if (found == 0) fail(Errc::invalid_argument, "class directory " + class_dirs[c].string() + " has no images");
    }
    return ds;
}

Dataset merge(const std::vector<Dataset>& parts) {
    require(!parts.empty(), "merge: no datasets");
    Dataset out;
    out.class_names = parts.front().class_names;
    for (const auto& p : parts) {
        if (p.class_names != out.class_names) fail(Errc::dimension_mismatch, "merge: class lists differ");
        for (std::size_t i = 0; i < p.size(); ++i) out.add(p.images[i], p.labels[i]);
    }
    return out;
}

Dataset select_classes(const Dataset& ds, std::size_t k) {
    require(k >= 2 && k <= ds.num_classes(), "class count k=" + std::to_string(k) + " must lie in [2, " +
                                                 std::to_string(ds.num_classes()) + "]");
    Dataset out;
    out.class_names.assign(ds.class_names.begin(), ds.class_names.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.labels[i] < k) out.add(ds.images[i], ds.labels[i]);
    return out;
}

Dataset merge_and_select(const std::vector<Dataset>& parts, std::size_t k) {
    return select_classes(parts.size() == 1 ? parts.front() : merge(parts), k);
}

nn::Tensor resize_bilinear(const nn::Tensor& image, std::size_t out_h, std::size_t out_w) {
    require(image.rank() == 3, "resize_bilinear expects an HxWxC image");
    require(out_h > 0 && out_w > 0, "resize target must be positive");
    const std::size_t in_h = image.dim(0), in_w = image.dim(1), ch = image.dim(2);
    auto axis = [](std::size_t out_i, std::size_t in_n, std::size_t out_n) {
        double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(src));
        const auto i1 = std::min(i0 + 1, in_n - 1);
        return std::tuple{i0, i1, src - static_cast<double>(i0)};
    };
    nn::Tensor out({out_h, out_w, ch});
    for (std::size_t y = 0; y < out_h; ++y) {
        const auto [y0, y1, wy] = axis(y, in_h, out_h);
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto [x0, x1, wx] = axis(x, in_w, out_w);
            for (std::size_t c = 0; c < ch; ++c) {
                const double top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
                const double bottom = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
                out.at(y, x, c) = static_cast<float>(top * (1 - wy) + bottom * wy);
            }
        }
    }
    return out;
}

nn::Tensor expand_channels(const nn::Tensor& image, std::size_t channels) {
    require(image.rank() == 3 && image.dim(2) == 1, "expand_channels expects a single-channel image");
    require(channels >= 1, "channel count must be positive");
    nn::Tensor out({image.dim(0), image.dim(1), channels});
    for (std::size_t i = 0; i < image.size(); ++i)
        for (std::size_t c = 0; c < channels; ++c) out[i * channels + c] = image[i];
    return out;
}

nn::Tensor resize_and_expand(const nn::Tensor& image, std::size_t size, std::size_t channels) {
    require(image.rank() == 3 && image.dim(2) == 1, "resize_and_expand expects a grayscale image");
    return expand_channels(resize_bilinear(image, size, size), channels);
}

Dataset resize_and_expand(const Dataset& ds, std::size_t size, std::size_t channels) {
    Dataset out;
    out.class_names = ds.class_names;
    out.images.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out.add(resize_and_expand(ds.images[i], size, channels), ds.labels[i]);
    return out;
}

}  // namespace kt::data
