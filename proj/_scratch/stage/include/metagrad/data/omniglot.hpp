#pragma once

#include <string>

#include "metagrad/data/class_pool.hpp"

namespace metagrad::data {

/// Load the Omniglot directory layout <root>/<alphabet>/<character>/<images>.
/// Accepts the two-archive arrangement (images_background + images_evaluation
/// under one root) and merges it into a single pool before splitting. Images
/// are decoded (PNG or PGM), bilinear-resized to image_size, scaled to [0,1]
/// and ink-inverted (strokes bright). Deterministic: directories are walked
/// in sorted order.
ClassPool load_omniglot(const std::string& root, int image_size,
                        int instances_required = 20);

/// Decode one grayscale image file (PNG via libpng when built with it; PGM
/// always). Exposed for tests.
ImageBuffer decode_image_file(const std::string& path);

/// Bilinear resize to [out_h, out_w].
ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w);

} // namespace metagrad::data
