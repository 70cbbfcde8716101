#include "metagrad/data/class_pool.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "metagrad/errors.hpp"

namespace metagrad::data {

ImageBuffer rotate_image(const ImageBuffer& img, Rotation rot) {
    if (rot == Rotation::r0) return img;
    if (img.h != img.w)
        throw DataError("rotate_image: rotation requires square images, got " +
                        std::to_string(img.h) + "x" + std::to_string(img.w));
    const int n = img.h;
    ImageBuffer out;
    out.h = out.w = n;
    out.pixels.resize(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int si = i, sj = j;
            switch (rot) {
                case Rotation::r90: si = j, sj = n - 1 - i; break;   // 90 deg ccw
                case Rotation::r180: si = n - 1 - i, sj = n - 1 - j; break;
                case Rotation::r270: si = n - 1 - j, sj = i; break;
                case Rotation::r0: break;
            }
            out.pixels[static_cast<std::size_t>(i) * n + j] =
                img.pixels[static_cast<std::size_t>(si) * n + sj];
        }
    return out;
}

void ClassPool::build_index() const {
    if (index_.size() == classes.size()) return;
    index_.clear();
    for (std::size_t i = 0; i < classes.size(); ++i) index_.emplace(classes[i].id, i);
}

const ClassEntry& ClassPool::at(const std::string& id) const {
    build_index();
    auto it = index_.find(id);
    if (it == index_.end()) throw DataError("ClassPool: unknown class '" + id + "'");
    return classes[it->second];
}

bool ClassPool::has(const std::string& id) const {
    build_index();
    return index_.count(id) != 0;
}

const char* section_name(Section s) {
    switch (s) {
        case Section::meta_train: return "meta-train";
        case Section::meta_val: return "meta-val";
        case Section::meta_test: return "meta-test";
    }
    return "?";
}

const std::vector<std::string>& SplitAssignment::members(Section s) const {
    switch (s) {
        case Section::meta_train: return train_ids;
        case Section::meta_val: return val_ids;
        case Section::meta_test: return test_ids;
    }
    throw DataError("SplitAssignment: bad section");
}

std::vector<std::string>& SplitAssignment::members(Section s) {
    switch (s) {
        case Section::meta_train: return train_ids;
        case Section::meta_val: return val_ids;
        case Section::meta_test: return test_ids;
    }
    throw DataError("SplitAssignment: bad section");
}

SplitAssignment split_counts(const ClassPool& pool, std::uint64_t seed, std::size_t n_train,
                             std::size_t n_val, std::size_t n_test) {
    if (n_train + n_val + n_test != pool.classes.size())
        throw ShapeError("split_counts: " + std::to_string(n_train) + "+" + std::to_string(n_val) +
                         "+" + std::to_string(n_test) + " != " +
                         std::to_string(pool.classes.size()) + " classes");
    std::vector<std::size_t> order(pool.classes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());

    SplitAssignment split;
    split.seed = seed;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const std::string& id = pool.classes[order[rank]].id;
        Section s = rank < n_train                ? Section::meta_train
                    : rank < n_train + n_val      ? Section::meta_val
                                                  : Section::meta_test;
        split.by_class.emplace(id, s);
    }
    // Member lists in pool order (stable regardless of the shuffle ranks).
    for (const auto& c : pool.classes) split.members(split.by_class.at(c.id)).push_back(c.id);
    return split;
}

SplitAssignment split_classes(const ClassPool& pool, std::uint64_t seed) {
    if (pool.classes.size() != 1623)
        throw ShapeError("split_classes: expected the 1623-class base pool, got " +
                         std::to_string(pool.classes.size()));
    return split_counts(pool, seed, 1150, 50, 423);
}

namespace {

const char* rotation_suffix(Rotation r) {
    switch (r) {
        case Rotation::r0: return "";
        case Rotation::r90: return "@rot090";
        case Rotation::r180: return "@rot180";
        case Rotation::r270: return "@rot270";
    }
    return "";
}

} // namespace

ClassPool augment_rotations(const ClassPool& pool, SplitAssignment& split) {
    ClassPool out;
    out.origin = pool.origin;
    out.image_h = pool.image_h;
    out.image_w = pool.image_w;
    out.classes.reserve(pool.classes.size() * 4);
    for (const auto& c : pool.classes) {
        if (c.rotation != Rotation::r0)
            throw DataError("augment_rotations: pool already augmented ('" + c.id + "')");
        const Section section = split.by_class.at(c.id);
        out.classes.push_back(c);
        for (Rotation r : {Rotation::r90, Rotation::r180, Rotation::r270}) {
            ClassEntry variant;
            variant.id = c.id + rotation_suffix(r);
            variant.base_id = c.id;
            variant.rotation = r;
            variant.instances = c.instances; // shared; rotation applied lazily
            out.classes.push_back(std::move(variant));
            split.by_class.emplace(out.classes.back().id, section);
        }
    }
    // Rebuild ordered member lists over the augmented pool.
    split.train_ids.clear();
    split.val_ids.clear();
    split.test_ids.clear();
    for (const auto& c : out.classes) split.members(split.by_class.at(c.id)).push_back(c.id);
    return out;
}

bool split_disjoint_and_exhaustive(const ClassPool& pool, const SplitAssignment& split) {
    if (split.by_class.size() != pool.classes.size()) return false;
    std::size_t listed = split.train_ids.size() + split.val_ids.size() + split.test_ids.size();
    if (listed != pool.classes.size()) return false;
    std::unordered_map<std::string, int> seen;
    for (Section s : {Section::meta_train, Section::meta_val, Section::meta_test})
        for (const auto& id : split.members(s))
            if (++seen[id] > 1) return false;
    for (const auto& c : pool.classes)
        if (!seen.count(c.id)) return false;
    return true;
}

int count_rotation_leaks(const ClassPool& pool, const SplitAssignment& split) {
    int leaks = 0;
    for (const auto& c : pool.classes) {
        if (c.rotation == Rotation::r0) continue;
        if (split.by_class.at(c.id) != split.by_class.at(c.base_id)) ++leaks;
    }
    return leaks;
}

// ---- synthetic glyphs ----

namespace {

void rasterize_stroke(ImageBuffer& img, double x0, double y0, double x1, double y1,
                      double thickness) {
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int i = 0; i < img.h; ++i)
        for (int j = 0; j < img.w; ++j) {
            const double px = j - x0, py = i - y0;
            double t = len2 > 0 ? (px * dx + py * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double cx = px - t * dx, cy = py - t * dy;
            const double dist = std::sqrt(cx * cx + cy * cy);
            const double v = 1.0 - dist / thickness;
            if (v > 0) {
                auto& p = img.pixels[static_cast<std::size_t>(i) * img.w + j];
                p = std::min(1.0f, p + static_cast<float>(v));
            }
        }
}

/// Bilinear sample with zero padding outside the canvas.
float sample_bilinear(const ImageBuffer& img, double y, double x) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto pix = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) return 0.0;
        return img.pixels[static_cast<std::size_t>(yy) * img.w + xx];
    };
    return static_cast<float>((1 - fy) * ((1 - fx) * pix(y0, x0) + fx * pix(y0, x0 + 1)) +
                              fy * ((1 - fx) * pix(y0 + 1, x0) + fx * pix(y0 + 1, x0 + 1)));
}

} // namespace

ClassPool synth_glyph_pool(int n_classes, int instances_per_class, int image_size,
                           double noise_level, double jitter_px, Rng& rng) {
    if (n_classes < 1 || instances_per_class < 1 || image_size < 4)
        throw DataError("synth_glyph_pool: degenerate pool parameters");
    ClassPool pool;
    pool.origin = PoolOrigin::synthetic;
    pool.image_h = pool.image_w = image_size;
    const double lo = 0.15 * image_size, hi = 0.85 * image_size;

    for (int c = 0; c < n_classes; ++c) {
        ImageBuffer proto;
        proto.h = proto.w = image_size;
        proto.pixels.assign(static_cast<std::size_t>(image_size) * image_size, 0.0f);
        const int strokes = 2 + static_cast<int>(rng.uniform_int(3));
        for (int s = 0; s < strokes; ++s) {
            const double x0 = rng.uniform(lo, hi), y0 = rng.uniform(lo, hi);
            const double x1 = rng.uniform(lo, hi), y1 = rng.uniform(lo, hi);
            const double thickness = rng.uniform(0.9, 1.7) * image_size / 28.0;
            rasterize_stroke(proto, x0, y0, x1, y1, thickness);
        }

        auto instances = std::make_shared<std::vector<ImageBuffer>>();
        instances->reserve(static_cast<std::size_t>(instances_per_class));
        for (int k = 0; k < instances_per_class; ++k) {
            const double dx = rng.uniform(-jitter_px, jitter_px);
            const double dy = rng.uniform(-jitter_px, jitter_px);
            ImageBuffer inst;
            inst.h = inst.w = image_size;
            inst.pixels.resize(proto.pixels.size());
            for (int i = 0; i < image_size; ++i)
                for (int j = 0; j < image_size; ++j) {
                    float v = (dx == 0.0 && dy == 0.0)
                                  ? proto.pixels[static_cast<std::size_t>(i) * image_size + j]
                                  : sample_bilinear(proto, i - dy, j - dx);
                    if (noise_level > 0) v += static_cast<float>(noise_level * rng.normal());
                    inst.pixels[static_cast<std::size_t>(i) * image_size + j] =
                        std::clamp(v, 0.0f, 1.0f);
                }
            instances->push_back(std::move(inst));
        }

        ClassEntry entry;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth/%05d", c);
        entry.id = buf;
        entry.base_id = entry.id;
        entry.instances = std::move(instances);
        pool.classes.push_back(std::move(entry));
    }
    return pool;
}

// ---- episode sampling ----

namespace {

Tensor assemble_images(const ClassPool& pool, const std::vector<const ClassEntry*>& classes,
                       const std::vector<std::vector<std::size_t>>& picks, DType dt) {
    const std::int64_t per_class = static_cast<std::int64_t>(picks[0].size());
    const std::int64_t total = static_cast<std::int64_t>(classes.size()) * per_class;
    Tensor out = Tensor::uninitialized({total, 1, pool.image_h, pool.image_w}, dt);
    const std::size_t hw = static_cast<std::size_t>(pool.image_h) * pool.image_w;
    std::int64_t row = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        for (std::size_t inst : picks[c]) {
            ImageBuffer img = rotate_image((*classes[c]->instances)[inst], classes[c]->rotation);
            dispatch_dtype(dt, [&](auto tag) {
                using T = decltype(tag);
                auto dst = out.mutable_data<T>().subspan(static_cast<std::size_t>(row) * hw, hw);
                for (std::size_t p = 0; p < hw; ++p) dst[p] = static_cast<T>(img.pixels[p]);
            });
            ++row;
        }
    }
    return out;
}

} // namespace

Episode sample_episode(const ClassPool& pool, const SplitAssignment& split, Section section,
                       int n_way, int k_shot, int q_targets, Rng& rng, DType dt,
                       const std::string& task_id) {
    const auto& ids = split.members(section);
    if (static_cast<int>(ids.size()) < n_way)
        throw DataError("sample_episode: section " + std::string(section_name(section)) + " has " +
                        std::to_string(ids.size()) + " classes, need " + std::to_string(n_way));

    // n_way distinct classes via partial Fisher-Yates over the section list.
    std::vector<std::size_t> idx(ids.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<const ClassEntry*> chosen;
    for (int c = 0; c < n_way; ++c) {
        const std::size_t j = c + rng.uniform_int(idx.size() - c);
        std::swap(idx[static_cast<std::size_t>(c)], idx[j]);
        chosen.push_back(&pool.at(ids[idx[static_cast<std::size_t>(c)]]));
    }

    const int need = k_shot + q_targets;
    std::vector<std::vector<std::size_t>> support_picks, target_picks;
    for (const ClassEntry* ce : chosen) {
        const std::size_t avail = ce->instances->size();
        if (static_cast<int>(avail) < need)
            throw DataError("sample_episode: class '" + ce->id + "' has " +
                            std::to_string(avail) + " instances, need " + std::to_string(need));
        std::vector<std::size_t> inst(avail);
        for (std::size_t i = 0; i < avail; ++i) inst[i] = i;
        for (int i = 0; i < need; ++i) {
            const std::size_t j = i + rng.uniform_int(avail - i);
            std::swap(inst[static_cast<std::size_t>(i)], inst[j]);
        }
        support_picks.emplace_back(inst.begin(), inst.begin() + k_shot);
        target_picks.emplace_back(inst.begin() + k_shot, inst.begin() + need);
    }

    // Fresh label permutation: no positional leakage.
    std::vector<std::int64_t> label_of(static_cast<std::size_t>(n_way));
    for (int i = 0; i < n_way; ++i) label_of[static_cast<std::size_t>(i)] = i;
    rng.shuffle(label_of.begin(), label_of.end());

    Episode ep;
    ep.task_id = task_id;
    ep.support_x = assemble_images(pool, chosen, support_picks, dt);
    ep.target_x = assemble_images(pool, chosen, target_picks, dt);
    for (int c = 0; c < n_way; ++c)
        for (int k = 0; k < k_shot; ++k) ep.support_y.push_back(label_of[static_cast<std::size_t>(c)]);
    for (int c = 0; c < n_way; ++c)
        for (int q = 0; q < q_targets; ++q) ep.target_y.push_back(label_of[static_cast<std::size_t>(c)]);
    return ep;
}

std::vector<Episode> fixed_eval_set(const ClassPool& pool, const SplitAssignment& split,
                                    Section section, int n_way, int k_shot, int q_targets,
                                    std::uint64_t eval_seed, DType dt, int count) {
    Rng rng(eval_seed);
    std::vector<Episode> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "eval%llu-%04d",
                      static_cast<unsigned long long>(eval_seed), i);
        out.push_back(sample_episode(pool, split, section, n_way, k_shot, q_targets, rng, dt, buf));
    }
    return out;
}

} // namespace metagrad::data
