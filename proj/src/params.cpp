#include "presspose/params.hpp"

#include <bit>
#include <fstream>
#include <set>
#include <sstream>

#include "presspose/common.hpp"

namespace presspose {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

size_t ParamStore::add(const std::string& name, size_t size, Init init) {
    if (size == 0) fail(ErrorKind::BadArgument, "empty parameter entry: " + name);
    if (index_.count(name)) fail(ErrorKind::BadArgument, "duplicate parameter name: " + name);
    size_t offset = values_.size();
    values_.resize(offset + size, 0.0);
    index_[name] = entries_.size();
    entries_.push_back({name, offset, size, init});
    return offset;
}

void ParamStore::initialize(uint64_t seed) {
    for (const auto& e : entries_) {
        double* p = values_.data() + e.offset;
        switch (e.init) {
            case Init::Zero:
                std::fill(p, p + e.size, 0.0);
                break;
            case Init::One:
                std::fill(p, p + e.size, 1.0);
                break;
            case Init::TruncNormal: {
                Rng rng(mix_seed(seed, fnv1a(e.name)));
                for (size_t i = 0; i < e.size; ++i) p[i] = rng.trunc_normal(0.02);
                break;
            }
        }
    }
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorKind::BadArgument, "unknown parameter: " + name);
    return entries_[it->second];
}

const std::string& ParamStore::name_of(size_t flat_index) const {
    for (const auto& e : entries_)
        if (flat_index >= e.offset && flat_index < e.offset + e.size) return e.name;
    fail(ErrorKind::BadArgument, "flat index outside every parameter entry");
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', '1'};

void put_u32le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

struct Reader {
    const unsigned char* p;
    size_t n, pos = 0;
    std::string path;

    void need(size_t k) {
        if (pos + k > n) fail(ErrorKind::Truncated, "checkpoint truncated: " + path);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& stage, const std::string& provenance) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32le(buf, uint32_t(stage.size()));
    buf += stage;
    put_u32le(buf, uint32_t(provenance.size()));
    buf += provenance;
    put_u32le(buf, uint32_t(store.entries().size()));
    for (const auto& e : store.entries()) {
        put_u32le(buf, uint32_t(e.name.size()));
        buf += e.name;
        put_u64le(buf, e.size);
        const double* p = store.at(e.offset);
        for (size_t i = 0; i < e.size; ++i)
            put_u32le(buf, std::bit_cast<uint32_t>(float(p[i])));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) fail(ErrorKind::Io, "short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingCheckpoint, "cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    Reader r{reinterpret_cast<const unsigned char*>(buf.data()), buf.size(), 0, path};

    if (buf.size() < 4 || buf.compare(0, 4, kMagic, 4) != 0)
        fail(ErrorKind::BadMagic, "not a PCK1 checkpoint: " + path);
    r.pos = 4;

    Checkpoint ck;
    ck.stage = r.str(r.u32());
    ck.provenance = r.str(r.u32());
    uint32_t count = r.u32();
    std::set<std::string> seen;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u32());
        if (!seen.insert(name).second)
            fail(ErrorKind::BadArgument, "duplicate tensor in checkpoint: " + name);
        uint64_t sz = r.u64();
        if (sz > (1ull << 32)) fail(ErrorKind::Truncated, "implausible tensor size: " + path);
        std::vector<float> vals(sz);
        for (uint64_t k = 0; k < sz; ++k) vals[k] = std::bit_cast<float>(r.u32());
        ck.tensors.emplace_back(std::move(name), std::move(vals));
    }
    if (r.pos != r.n) fail(ErrorKind::Truncated, "trailing bytes in checkpoint: " + path);
    return ck;
}

void restore_all(ParamStore& store, const Checkpoint& ckpt) {
    if (ckpt.tensors.size() != store.entries().size())
        fail(ErrorKind::DimMismatch,
             "checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                 std::to_string(store.entries().size()));
    size_t filled = restore_matching(store, ckpt);
    if (filled != store.entries().size())
        fail(ErrorKind::DimMismatch, "checkpoint tensor names do not cover the model");
}

size_t restore_matching(ParamStore& store, const Checkpoint& ckpt) {
    size_t filled = 0;
    for (const auto& [name, vals] : ckpt.tensors) {
        if (!store.has(name)) continue;
        const ParamEntry& e = store.entry(name);
        if (vals.size() != e.size)
            fail(ErrorKind::DimMismatch, "checkpoint tensor " + name + " has " +
                                             std::to_string(vals.size()) + " values, model expects " +
                                             std::to_string(e.size));
        double* p = store.at(e.offset);
        for (size_t i = 0; i < e.size; ++i) p[i] = double(vals[i]);
        ++filled;
    }
    return filled;
}

}  // namespace presspose
