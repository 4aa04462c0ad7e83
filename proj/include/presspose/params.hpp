#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace presspose {

enum class Init {
    TruncNormal,  // stddev 0.02, clipped at +-2 sigma
    Zero,
    One,
};

struct ParamEntry {
    std::string name;
    size_t offset = 0;
    size_t size = 0;
    Init init = Init::Zero;
};

// All trainable scalars of a model in one flat double buffer. Layers hold
// offsets, never pointers, so the store can be copied freely. Entry names are
// hierarchical ("encoder.block3.attn.wq") and drive stage freeze predicates
// and checkpoint records.
class ParamStore {
public:
    // Registration: returns the entry's offset. Names must be unique.
    size_t add(const std::string& name, size_t size, Init init);

    // Fills every entry from its own seed stream (derived from the entry
    // name, so adding a layer never reshuffles another layer's init).
    void initialize(uint64_t seed);

    size_t size() const { return values_.size(); }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    double* at(size_t offset) { return values_.data() + offset; }
    const double* at(size_t offset) const { return values_.data() + offset; }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const ParamEntry& entry(const std::string& name) const;
    const std::vector<ParamEntry>& entries() const { return entries_; }

    // Name of the entry covering a flat index (for optimizer diagnostics).
    const std::string& name_of(size_t flat_index) const;

private:
    std::vector<double> values_;
    std::vector<ParamEntry> entries_;
    std::map<std::string, size_t> index_;  // name -> entries_ position
};

// Gradient buffer mirroring a ParamStore's flat layout.
struct GradBuffer {
    std::vector<double> g;

    explicit GradBuffer(size_t n = 0) : g(n, 0.0) {}
    void zero() { std::fill(g.begin(), g.end(), 0.0); }
    double* at(size_t offset) { return g.data() + offset; }
    size_t size() const { return g.size(); }
};

// Checkpoint file: "PCK1", then length-prefixed stage tag and provenance
// JSON, then per-entry records (name, count, float32 values, little-endian).
struct Checkpoint {
    std::string stage;
    std::string provenance;  // config JSON as written by the trainer
    std::vector<std::pair<std::string, std::vector<float>>> tensors;
};

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& stage, const std::string& provenance);
Checkpoint load_checkpoint(const std::string& path);

// Strict: every store entry must appear with the right size (extra tensors in
// the file are an error too).
void restore_all(ParamStore& store, const Checkpoint& ckpt);
// Partial: copies the name intersection (exact sizes required); returns how
// many store entries were filled. Used to seed a supervised model from an
// MAE checkpoint whose decoder/head sets differ.
size_t restore_matching(ParamStore& store, const Checkpoint& ckpt);

}  // namespace presspose
