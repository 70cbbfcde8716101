#include "metagrad/harness/checkpoint.hpp"

#include "metagrad/harness/config.hpp"

#include <cstring>
#include <fstream>

namespace metagrad::harness {

namespace {

constexpr std::uint32_t kMagic = 0x4d47434bu;   // "MGCK"
constexpr std::uint32_t kTrailer = 0x4b454e44u; // "KEND"
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    }
    void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void i64(std::int64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void u8(std::uint8_t v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.shape().size()));
        for (auto d : t.shape()) i64(d);
        u8(static_cast<std::uint8_t>(t.dtype()));
        const auto& bytes = *t.impl()->data;
        u64(bytes.size());
        raw(bytes.data(), bytes.size());
    }
    void params(const ParamSet& p) {
        u64(p.size());
        for (const auto& [name, t] : p) {
            str(name);
            tensor(t);
        }
    }
    void check() {
        if (!out_) throw IoError("checkpoint: write failure");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("checkpoint: cannot open '" + path + "'");
    }
    void raw(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            throw IoError("checkpoint: '" + path_ + "' truncated at offset " +
                          std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
        offset_ += n;
    }
    std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
    std::int64_t i64() { std::int64_t v; raw(&v, sizeof v); return v; }
    double f64() { double v; raw(&v, sizeof v); return v; }
    std::uint8_t u8() { std::uint8_t v; raw(&v, sizeof v); return v; }
    std::string str() {
        std::uint64_t n = u64();
        if (n > (1ull << 31)) throw IoError("checkpoint: absurd string length at offset " +
                                            std::to_string(offset_));
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 16) throw IoError("checkpoint: absurd tensor rank at offset " +
                                     std::to_string(offset_));
        Shape shape(rank);
        for (auto& d : shape) d = i64();
        const auto dt = static_cast<DType>(u8());
        if (dt != DType::f32 && dt != DType::f64)
            throw IoError("checkpoint: bad dtype at offset " + std::to_string(offset_));
        const std::uint64_t nbytes = u64();
        Tensor t = Tensor::uninitialized(shape, dt);
        if (nbytes != t.impl()->data->size())
            throw IoError("checkpoint: payload size mismatch at offset " +
                          std::to_string(offset_));
        raw(t.impl()->data->data(), nbytes);
        return t;
    }
    ParamSet params() {
        ParamSet p;
        const std::uint64_t n = u64();
        if (n > 1000000) throw IoError("checkpoint: absurd entry count at offset " +
                                       std::to_string(offset_));
        for (std::uint64_t i = 0; i < n; ++i) {
            std::string name = str();
            p.add(std::move(name), tensor());
        }
        return p;
    }
    std::size_t offset() const { return offset_; }

private:
    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Writer w(path);
    w.u32(kMagic);
    w.u32(kVersion);
    w.str(ckpt.config_text);
    w.u64(ckpt.config_digest);
    w.u64(ckpt.seed);
    w.u32(static_cast<std::uint32_t>(ckpt.epoch));
    w.i64(ckpt.iteration);
    w.u8(static_cast<std::uint8_t>(ckpt.dtype));
    w.str(ckpt.train_rng_state);

    w.params(ckpt.state.theta0);
    w.params(ckpt.state.inner_lrs);

    const auto& bn = ckpt.state.bn;
    w.u8(static_cast<std::uint8_t>(bn.stats_mode));
    w.f64(bn.eps);
    w.f64(bn.momentum);
    w.u32(static_cast<std::uint32_t>(bn.layers.size()));
    w.u32(bn.layers.empty() ? 0 : static_cast<std::uint32_t>(bn.layers[0].size()));
    for (const auto& layer : bn.layers)
        for (const auto& slot : layer) {
            w.tensor(slot.mean);
            w.tensor(slot.var);
            w.i64(slot.count);
        }

    w.i64(ckpt.state.adam.t);
    w.params(ckpt.state.adam.m);
    w.params(ckpt.state.adam.v);

    w.u64(ckpt.state.loss_weights.size());
    for (double v : ckpt.state.loss_weights) w.f64(v);

    w.u32(kTrailer);
    w.check();
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::optional<std::uint64_t> expected_digest) {
    Reader r(path);
    if (r.u32() != kMagic) throw IoError("checkpoint: '" + path + "' has wrong magic");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));

    LoadedCheckpoint out;
    Checkpoint& c = out.ckpt;
    c.config_text = r.str();
    c.config_digest = r.u64();
    c.seed = r.u64();
    c.epoch = static_cast<int>(r.u32());
    c.iteration = r.i64();
    c.dtype = static_cast<DType>(r.u8());
    c.train_rng_state = r.str();

    c.state.theta0 = r.params();
    c.state.inner_lrs = r.params();

    c.state.bn.stats_mode = static_cast<nn::BnStatsMode>(r.u8());
    c.state.bn.eps = r.f64();
    c.state.bn.momentum = r.f64();
    const std::uint32_t n_layers = r.u32();
    const std::uint32_t n_slots = r.u32();
    c.state.bn.layers.resize(n_layers);
    for (auto& layer : c.state.bn.layers)
        for (std::uint32_t s = 0; s < n_slots; ++s) {
            nn::BnSlotStats slot;
            slot.mean = r.tensor();
            slot.var = r.tensor();
            slot.count = r.i64();
            layer.push_back(std::move(slot));
        }

    c.state.adam.t = r.i64();
    c.state.adam.m = r.params();
    c.state.adam.v = r.params();

    const std::uint64_t nv = r.u64();
    if (nv > 10000) throw IoError("checkpoint: absurd weight count");
    c.state.loss_weights.resize(nv);
    for (auto& v : c.state.loss_weights) v = r.f64();

    if (r.u32() != kTrailer)
        throw IoError("checkpoint: '" + path + "' missing trailer (corrupt tail) at offset " +
                      std::to_string(r.offset()));

    if (fnv1a64(c.config_text) != c.config_digest)
        throw IoError("checkpoint: embedded config does not match its stored digest");
    if (expected_digest && *expected_digest != c.config_digest) out.digest_mismatch = true;
    return out;
}

} // namespace metagrad::harness
