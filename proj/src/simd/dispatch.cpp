#include "utls/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace utls::simd {
namespace {

bool cpu_has_avx2() {
#if defined(UTLS_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(__i386__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa initial_isa() {
    if (const char* env = std::getenv("UTLS_SIMD")) {
        const std::string want(env);
        if (want == "scalar") return Isa::scalar;
        if (want == "avx2" && cpu_has_avx2()) return Isa::avx2;
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& active() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

}  // namespace

bool isa_supported(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& kernels_for(Isa isa) {
    if (!isa_supported(isa))
        throw std::runtime_error("SIMD variant not supported on this CPU: " + std::string(isa_name(isa)));
    return isa == Isa::avx2 ? detail::avx2_table() : detail::scalar_table();
}

const KernelTable& kernels() {
    return active().load(std::memory_order_relaxed) == Isa::avx2 ? detail::avx2_table()
                                                                 : detail::scalar_table();
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
    if (!isa_supported(isa))
        throw std::runtime_error("SIMD variant not supported on this CPU: " + std::string(isa_name(isa)));
    active().store(isa, std::memory_order_relaxed);
}

}  // namespace utls::simd
