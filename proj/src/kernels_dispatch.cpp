#include "presspose/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "presspose/common.hpp"

namespace presspose::kern {
namespace {

std::atomic<const KernelSet*> g_active{nullptr};

const KernelSet* pick(const char* name) {
    if (std::strcmp(name, "scalar") == 0) return &scalar_set();
    if (std::strcmp(name, "avx2") == 0) return avx2_set();
    if (std::strcmp(name, "auto") == 0) {
        const KernelSet* simd = avx2_set();
        return simd ? simd : &scalar_set();
    }
    return nullptr;
}

}  // namespace

const KernelSet& active() {
    const KernelSet* set = g_active.load(std::memory_order_acquire);
    if (set) return *set;
    const char* env = std::getenv("PRESSPOSE_KERNELS");
    set = pick(env ? env : "auto");
    if (!set) set = pick("auto");  // unknown env value falls back
    g_active.store(set, std::memory_order_release);
    return *set;
}

void force(const char* name) {
    const KernelSet* set = pick(name);
    if (!set)
        fail(ErrorKind::BadArgument,
             std::string("kernel set unavailable on this CPU: ") + name);
    g_active.store(set, std::memory_order_release);
}

}  // namespace presspose::kern
