#include "metagrad/data/omniglot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "metagrad/errors.hpp"

#ifdef METAGRAD_HAVE_LIBPNG
#include <png.h>
#endif

namespace fs = std::filesystem;

namespace metagrad::data {

namespace {

bool has_extension(const fs::path& p, const char* ext) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ext;
}

ImageBuffer decode_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw DataError("unsupported PGM magic in '" + path + "'");
    auto next_int = [&]() {
        // skip whitespace and '#' comments
        while (true) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = 0;
        in >> v;
        return v;
    };
    const long w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw DataError("malformed PGM header in '" + path + "'");
    ImageBuffer img;
    img.h = static_cast<int>(h);
    img.w = static_cast<int>(w);
    img.pixels.resize(static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    if (magic == "P5") {
        in.get(); // single whitespace after header
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(img.pixels.size() * static_cast<std::size_t>(bytes));
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!in) throw DataError("truncated PGM data in '" + path + "'");
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            unsigned v = bytes == 1 ? raw[i]
                                    : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
            img.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
        }
    } else {
        for (auto& p : img.pixels) {
            long v = 0;
            in >> v;
            if (!in) throw DataError("truncated PGM data in '" + path + "'");
            p = static_cast<float>(v) / static_cast<float>(maxval);
        }
    }
    return img;
}

#ifdef METAGRAD_HAVE_LIBPNG
ImageBuffer decode_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DataError("cannot open image '" + path + "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw DataError("libpng init failed for '" + path + "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("malformed PNG '" + path + "'");
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    // Normalize everything to 8-bit grayscale.
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    std::vector<unsigned char> row(png_get_rowbytes(png, info));

    ImageBuffer img;
    img.h = static_cast<int>(h);
    img.w = static_cast<int>(w);
    img.pixels.resize(static_cast<std::size_t>(h) * w);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            img.pixels[static_cast<std::size_t>(y) * w + x] = static_cast<float>(row[x]) / 255.0f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}
#endif

} // namespace

ImageBuffer decode_image_file(const std::string& path) {
    fs::path p(path);
    if (has_extension(p, ".pgm")) return decode_pgm(path);
#ifdef METAGRAD_HAVE_LIBPNG
    if (has_extension(p, ".png")) return decode_png(path);
#endif
    throw DataError("unsupported image format '" + path + "'");
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w) {
    if (img.h == out_h && img.w == out_w) return img;
    ImageBuffer out;
    out.h = out_h;
    out.w = out_w;
    out.pixels.resize(static_cast<std::size_t>(out_h) * out_w);
    const double sy = static_cast<double>(img.h) / out_h;
    const double sx = static_cast<double>(img.w) / out_w;
    for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
            const double y = std::max(0.0, (i + 0.5) * sy - 0.5);
            const double x = std::max(0.0, (j + 0.5) * sx - 0.5);
            const int y0 = std::min(static_cast<int>(y), img.h - 1);
            const int x0 = std::min(static_cast<int>(x), img.w - 1);
            const int y1 = std::min(y0 + 1, img.h - 1);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double fy = y - y0, fx = x - x0;
            auto pix = [&](int yy, int xx) {
                return static_cast<double>(img.pixels[static_cast<std::size_t>(yy) * img.w + xx]);
            };
            out.pixels[static_cast<std::size_t>(i) * out_w + j] = static_cast<float>(
                (1 - fy) * ((1 - fx) * pix(y0, x0) + fx * pix(y0, x1)) +
                fy * ((1 - fx) * pix(y1, x0) + fx * pix(y1, x1)));
        }
    return out;
}

namespace {

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        if (has_extension(e.path(), ".png") || has_extension(e.path(), ".pgm"))
            out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

ClassPool load_omniglot(const std::string& root, int image_size, int instances_required) {
    fs::path rootp(root);
    if (!fs::is_directory(rootp)) throw DataError("omniglot root '" + root + "' is not a directory");

    // Two-archive arrangement merges into one pool; the split re-partitions
    // all classes itself.
    std::vector<fs::path> alphabet_roots;
    const fs::path bg = rootp / "images_background";
    const fs::path ev = rootp / "images_evaluation";
    if (fs::is_directory(bg) || fs::is_directory(ev)) {
        if (fs::is_directory(bg))
            for (auto& a : sorted_subdirs(bg)) alphabet_roots.push_back(a);
        if (fs::is_directory(ev))
            for (auto& a : sorted_subdirs(ev)) alphabet_roots.push_back(a);
    } else {
        alphabet_roots = sorted_subdirs(rootp);
    }
    if (alphabet_roots.empty()) throw DataError("omniglot root '" + root + "' has no alphabets");

    ClassPool pool;
    pool.origin = PoolOrigin::omniglot;
    pool.image_h = pool.image_w = image_size;
    for (const auto& alphabet : alphabet_roots) {
        for (const auto& character : sorted_subdirs(alphabet)) {
            const std::string class_id =
                alphabet.filename().string() + "/" + character.filename().string();
            auto files = sorted_images(character);
            if (static_cast<int>(files.size()) != instances_required)
                throw DataError("omniglot class '" + class_id + "' has " +
                                std::to_string(files.size()) + " instances, expected " +
                                std::to_string(instances_required));
            auto instances = std::make_shared<std::vector<ImageBuffer>>();
            instances->reserve(files.size());
            for (const auto& f : files) {
                ImageBuffer img = resize_bilinear(decode_image_file(f.string()), image_size,
                                                  image_size);
                for (auto& p : img.pixels) p = 1.0f - p; // ink becomes bright
                instances->push_back(std::move(img));
            }
            ClassEntry entry;
            entry.id = class_id;
            entry.base_id = class_id;
            entry.instances = std::move(instances);
            pool.classes.push_back(std::move(entry));
        }
    }
    return pool;
}

} // namespace metagrad::data
