#include "cran/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace cran::fft {
namespace {

// fftw_plan_dft is not reentrant; executions on distinct buffers are.
// Each thread keeps its own plans and aligned buffers so executions
// never contend, and only plan creation takes the global lock.
std::mutex g_planner_mutex;

struct PlanEntry {
    fftw_plan plan = nullptr;
    fftw_complex* buf = nullptr;
    std::size_t n = 0;

    PlanEntry() = default;
    PlanEntry(const PlanEntry&) = delete;
    PlanEntry& operator=(const PlanEntry&) = delete;
    PlanEntry(PlanEntry&& o) noexcept : plan(o.plan), buf(o.buf), n(o.n) {
        o.plan = nullptr;
        o.buf = nullptr;
    }
    ~PlanEntry() {
        if (plan) {
            std::lock_guard<std::mutex> lk(g_planner_mutex);
            fftw_destroy_plan(plan);
        }
        if (buf) fftw_free(buf);
    }
};

PlanEntry make_plan(std::size_t n, bool inverse) {
    PlanEntry e;
    e.n = n;
    e.buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (!e.buf) throw std::bad_alloc();
    {
        std::lock_guard<std::mutex> lk(g_planner_mutex);
        e.plan = fftw_plan_dft_1d(static_cast<int>(n), e.buf, e.buf,
                                  inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                  FFTW_ESTIMATE);
    }
    if (!e.plan) throw std::runtime_error("fftw plan creation failed");
    return e;
}

PlanEntry& cached_plan(std::size_t n, bool inverse) {
    thread_local std::map<std::pair<std::size_t, bool>, PlanEntry> cache;
    auto key = std::make_pair(n, inverse);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, make_plan(n, inverse)).first;
    return it->second;
}

}  // namespace

void transform(std::vector<cplx>& data, bool inverse) {
    const std::size_t n = data.size();
    if (n == 0) return;
    if (n == 1) return;  // identity either way
    PlanEntry& e = cached_plan(n, inverse);
    static_assert(sizeof(fftw_complex) == sizeof(cplx));
    std::memcpy(e.buf, data.data(), sizeof(cplx) * n);
    fftw_execute(e.plan);
    std::memcpy(data.data(), e.buf, sizeof(cplx) * n);
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (auto& v : data) v *= inv_n;
    }
}

std::vector<cplx> forward(const std::vector<cplx>& in) {
    std::vector<cplx> out = in;
    transform(out, false);
    return out;
}

std::vector<cplx> inverse(const std::vector<cplx>& in) {
    std::vector<cplx> out = in;
    transform(out, true);
    return out;
}

}  // namespace cran::fft
