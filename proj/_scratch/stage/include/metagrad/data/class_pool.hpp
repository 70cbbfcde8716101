#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "metagrad/data/episode.hpp"
#include "metagrad/rng.hpp"

namespace metagrad::data {

enum class Rotation : std::uint8_t { r0 = 0, r90 = 1, r180 = 2, r270 = 3 };

/// Raw grayscale image, values in [0,1].
struct ImageBuffer {
    int h = 0;
    int w = 0;
    std::vector<float> pixels; // row-major
};

/// Rotate by 90-degree increments (square images; exact pixel permutation, so
/// applying r180 twice reproduces the original bit-exactly).
ImageBuffer rotate_image(const ImageBuffer& img, Rotation rot);

enum class PoolOrigin { omniglot, synthetic };

/// One class: rotated variants share the underlying instance storage and
/// materialize their rotation lazily at episode-assembly time.
struct ClassEntry {
    std::string id;      // base id plus "@rot090" style suffix for variants
    std::string base_id; // id of the unrotated class
    Rotation rotation = Rotation::r0;
    std::shared_ptr<const std::vector<ImageBuffer>> instances;
};

struct ClassPool {
    PoolOrigin origin = PoolOrigin::synthetic;
    int image_h = 0;
    int image_w = 0;
    std::vector<ClassEntry> classes;

    const ClassEntry& at(const std::string& id) const;
    bool has(const std::string& id) const;

private:
    mutable std::unordered_map<std::string, std::size_t> index_;
    void build_index() const;
};

enum class Section { meta_train, meta_val, meta_test };
const char* section_name(Section s);

struct SplitAssignment {
    std::uint64_t seed = 0;
    std::unordered_map<std::string, Section> by_class;
    // Ordered member lists (pool order); the deterministic sampling domain.
    std::vector<std::string> train_ids, val_ids, test_ids;

    const std::vector<std::string>& members(Section s) const;
    std::vector<std::string>& members(Section s);
};

/// The paper protocol split: shuffle all 1623 base classes by seed and assign
/// 1150 / 50 / 423. Requires an unaugmented Omniglot-sized pool.
SplitAssignment split_classes(const ClassPool& pool, std::uint64_t seed);

/// Generic counted split for synthetic pools.
SplitAssignment split_counts(const ClassPool& pool, std::uint64_t seed, std::size_t n_train,
                             std::size_t n_val, std::size_t n_test);

/// Spawn the 90/180/270-degree sibling classes; every variant inherits the
/// base class's section so no rotated class leaks across the split.
ClassPool augment_rotations(const ClassPool& pool, SplitAssignment& split);

/// Audits.
bool split_disjoint_and_exhaustive(const ClassPool& pool, const SplitAssignment& split);
int count_rotation_leaks(const ClassPool& pool, const SplitAssignment& split);

/// Procedurally generated glyph classes (random stroke prototypes, per-
/// instance translation jitter and pixel noise). Deterministic per seed.
ClassPool synth_glyph_pool(int n_classes, int instances_per_class, int image_size,
                           double noise_level, double jitter_px, Rng& rng);

/// Sample one N-way K-shot episode from a split section: n_way distinct
/// classes, per class k_shot support + q_targets target instances without
/// replacement, labels assigned by a fresh random permutation.
Episode sample_episode(const ClassPool& pool, const SplitAssignment& split, Section section,
                       int n_way, int k_shot, int q_targets, Rng& rng, DType dt,
                       const std::string& task_id);

/// The fixed evaluation protocol: `count` episodes from a dedicated rng
/// seeded by eval_seed; regenerating yields bit-identical episodes.
std::vector<Episode> fixed_eval_set(const ClassPool& pool, const SplitAssignment& split,
                                    Section section, int n_way, int k_shot, int q_targets,
                                    std::uint64_t eval_seed, DType dt, int count = 600);

} // namespace metagrad::data
