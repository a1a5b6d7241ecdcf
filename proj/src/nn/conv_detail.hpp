#pragma once

// Shared im2col packing for the convolution kernels. Both the serial
// reference and the OpenMP kernels build identical patch matrices so their
// per-element accumulation order matches exactly.

#include <cstddef>
#include <vector>

namespace gridagent::nn::kernels::detail {

// Channels that contain at least one nonzero value. One-hot observation
// planes are often entirely zero; skipping them leaves the results unchanged
// (their contributions are exact zeros) and both kernel variants skip
// identically.
inline std::vector<int> live_channels(const double* in, int C, int HW) {
    std::vector<int> live;
    live.reserve(C);
    for (int c = 0; c < C; ++c) {
        const double* inc = in + static_cast<size_t>(c) * HW;
        for (int i = 0; i < HW; ++i) {
            if (inc[i] != 0.0) {
                live.push_back(c);
                break;
            }
        }
    }
    return live;
}

// Dot product with four fixed-order accumulators; deterministic and wide
// enough for the vectorizer.
inline double dot4(const double* a, const double* b, int n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j) s0 += a[j] * b[j];
    double acc = s0;
    acc += s1;
    acc += s2;
    acc += s3;
    return acc;
}

// B[jl * P + p] = input patch element for the jl-th live patch row; padded
// positions stay zero. Rows follow (live channel, ky, kx) order.
inline void im2col_live(const double* in, double* B, const std::vector<int>& live, int H, int W,
                        int k, int stride, int pad, int Ho, int Wo) {
    const int P = Ho * Wo;
    for (size_t li = 0; li < live.size(); ++li) {
        const double* inc = in + static_cast<size_t>(live[li]) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = B + (li * k * k + ky * k + kx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const double* irow = inc + static_cast<size_t>(iy) * W;
                    double* orow = row + static_cast<size_t>(oy) * Wo;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) orow[ox] = irow[ix];
                    }
                }
            }
        }
    }
}

// BT[p * CL + jl]: transposed live-patch layout for the weight gradient.
inline void im2col_transposed_live(const double* in, double* BT, const std::vector<int>& live,
                                   int H, int W, int k, int stride, int pad, int Ho, int Wo) {
    const int CL = static_cast<int>(live.size()) * k * k;
    for (size_t li = 0; li < live.size(); ++li) {
        const double* inc = in + static_cast<size_t>(live[li]) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int jl = static_cast<int>(li) * k * k + ky * k + kx;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const double* irow = inc + static_cast<size_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W)
                            BT[(static_cast<size_t>(oy) * Wo + ox) * CL + jl] = irow[ix];
                    }
                }
            }
        }
    }
}

// Scatters patch-space gradients back to the input (col2im) for one channel.
inline void col2im_channel(const double* gB, double* ginc, int c, int H, int W, int k, int stride,
                           int pad, int Ho, int Wo) {
    const int P = Ho * Wo;
    for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
            const double* row = gB + (static_cast<size_t>(c) * k * k + ky * k + kx) * P;
            for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= H) continue;
                double* irow = ginc + static_cast<size_t>(iy) * W;
                const double* orow = row + static_cast<size_t>(oy) * Wo;
                for (int ox = 0; ox < Wo; ++ox) {
                    const int ix = ox * stride + kx - pad;
                    if (ix >= 0 && ix < W) irow[ix] += orow[ox];
                }
            }
        }
    }
}

}  // namespace gridagent::nn::kernels::detail
