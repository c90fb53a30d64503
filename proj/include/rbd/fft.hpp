#pragma once

#include <complex>
#include <span>
#include <unordered_map>
#include <vector>

#include "rbd/common.hpp"

namespace rbd {

using cplx = std::complex<double>;

namespace detail {

struct fft_plan {
    int n = 0;
    std::vector<int> rev;
    std::vector<cplx> twiddle;  // exp(-2*pi*i*k/n), k < n/2

    explicit fft_plan(int n_) : n(n_), rev(n_), twiddle(n_ / 2) {
        int log2n = 0;
        while ((1 << log2n) < n) ++log2n;
        for (int i = 0; i < n; ++i) {
            int r = 0;
            for (int b = 0; b < log2n; ++b)
                if (i & (1 << b)) r |= 1 << (log2n - 1 - b);
            rev[i] = r;
        }
        for (int k = 0; k < n / 2; ++k) {
            double a = -2.0 * kPi * k / n;
            twiddle[k] = {std::cos(a), std::sin(a)};
        }
    }
};

inline const fft_plan& plan_for(int n) {
    thread_local std::unordered_map<int, fft_plan> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, fft_plan(n)).first;
    return it->second;
}

}  // namespace detail

// iterative radix-2; n must be a power of two
inline void fft_inplace(std::span<cplx> x, bool inverse = false) {
    const int n = static_cast<int>(x.size());
    if (n == 0) return;
    if ((n & (n - 1)) != 0) throw shape_error("fft size must be a power of two, got " + std::to_string(n));
    const auto& plan = detail::plan_for(n);
    for (int i = 0; i < n; ++i)
        if (plan.rev[i] > i) std::swap(x[i], x[plan.rev[i]]);
    for (int len = 2; len <= n; len <<= 1) {
        int half = len >> 1;
        int step = n / len;
        for (int base = 0; base < n; base += len) {
            for (int k = 0; k < half; ++k) {
                cplx w = plan.twiddle[k * step];
                if (inverse) w = std::conj(w);
                cplx u = x[base + k];
                cplx v = x[base + k + half] * w;
                x[base + k] = u + v;
                x[base + k + half] = u - v;
            }
        }
    }
    if (inverse)
        for (auto& v : x) v /= static_cast<double>(n);
}

// periodic (DFT-even) Hann window
inline std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
    return w;
}

// rotate so the zero-frequency bin lands at n/2
inline void fft_shift(std::span<cplx> x) {
    const int n = static_cast<int>(x.size());
    for (int i = 0; i < n / 2; ++i) std::swap(x[i], x[i + n / 2]);
}

}  // namespace rbd
