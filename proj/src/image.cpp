#include "dcnn/image.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include <png.h>

namespace dcnn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors through longjmp; this callback routes them into
// the setjmp in the caller after stashing the message.
void png_error_to_jmp(png_structp png, png_const_charp msg) {
    *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
    png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

} // namespace

Image read_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw DataError("cannot open image: " + path);

    unsigned char signature[8];
    if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0)
        throw DataError("not a PNG file: " + path);

    std::string error_msg;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_msg,
                                             png_error_to_jmp, png_warning_ignore);
    if (!png) throw DataError("libpng init failed reading " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng init failed reading " + path);
    }

    std::vector<png_bytep> rows;
    Image img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt PNG " + path + ": " + error_msg);
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // Normalize every input form to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.channels = 3;
    if (png_get_rowbytes(png, info) != img.width * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("unexpected PNG row layout in " + path);
    }
    img.pixels.resize(img.width * img.height * 3);
    rows.resize(img.height);
    for (std::size_t y = 0; y < img.height; ++y)
        rows[y] = img.pixels.data() + y * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw ConfigError("write_png supports 1 or 3 channels, got " +
                          std::to_string(img.channels));
    if (img.width == 0 || img.height == 0 ||
        img.pixels.size() != img.width * img.height * img.channels)
        throw ConfigError("image buffer does not match its dimensions");

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw DataError("cannot write image: " + path);

    std::string error_msg;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error_msg,
                                              png_error_to_jmp, png_warning_ignore);
    if (!png) throw DataError("libpng init failed writing " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng init failed writing " + path);
    }

    std::vector<png_bytep> rows(img.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed for " + path + ": " + error_msg);
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

Image crop(const Image& src, const BBox& box) {
    if (box.xmin < 0 || box.ymin < 0 || box.xmax <= box.xmin || box.ymax <= box.ymin ||
        std::size_t(box.xmax) > src.width || std::size_t(box.ymax) > src.height)
        throw DataError("bbox [" + std::to_string(box.xmin) + "," + std::to_string(box.ymin) +
                        ")x[" + std::to_string(box.xmax) + "," + std::to_string(box.ymax) +
                        ") is outside a " + std::to_string(src.width) + "x" +
                        std::to_string(src.height) + " image");
    Image out(std::size_t(box.xmax - box.xmin), std::size_t(box.ymax - box.ymin), src.channels);
    for (std::size_t y = 0; y < out.height; ++y) {
        const std::uint8_t* from =
            &src.pixels[((std::size_t(box.ymin) + y) * src.width + std::size_t(box.xmin)) *
                        src.channels];
        std::uint8_t* to = &out.pixels[y * out.width * out.channels];
        std::copy(from, from + out.width * out.channels, to);
    }
    return out;
}

Image resize_bilinear(const Image& src, std::size_t out_width, std::size_t out_height) {
    if (out_width == 0 || out_height == 0)
        throw ConfigError("resize target must be non-zero");
    if (src.width == 0 || src.height == 0)
        throw ConfigError("cannot resize an empty image");
    if (out_width == src.width && out_height == src.height) return src;

    Image out(out_width, out_height, src.channels);
    const double sx = double(src.width) / double(out_width);
    const double sy = double(src.height) / double(out_height);
    for (std::size_t y = 0; y < out_height; ++y) {
        double fy = (double(y) + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        if (fy > double(src.height - 1)) fy = double(src.height - 1);
        const std::size_t y0 = std::size_t(fy);
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - double(y0);
        for (std::size_t x = 0; x < out_width; ++x) {
            double fx = (double(x) + 0.5) * sx - 0.5;
            if (fx < 0) fx = 0;
            if (fx > double(src.width - 1)) fx = double(src.width - 1);
            const std::size_t x0 = std::size_t(fx);
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - double(x0);
            for (std::size_t c = 0; c < src.channels; ++c) {
                const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
                const double bottom = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
                const long v = std::lround((1.0 - wy) * top + wy * bottom);
                out.at(x, y, c) = std::uint8_t(std::min(255L, std::max(0L, v)));
            }
        }
    }
    return out;
}

TensorF image_to_tensor(const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ConfigError("image_to_tensor supports 1 or 3 channels");
    TensorF t(Shape4{1, 3, img.height, img.width});
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src_c = img.channels == 1 ? 0 : c;
        float* plane = t.plane(0, c);
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                plane[y * img.width + x] = float(img.at(x, y, src_c)) / 255.0f;
    }
    return t;
}

} // namespace dcnn
