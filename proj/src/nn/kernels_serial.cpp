#include "gridagent/nn/kernels.hpp"

#include <algorithm>

#include "conv_detail.hpp"

namespace gridagent::nn::kernels::serial_ref {

void matvec(const double* W, const double* x, const double* b, double* y, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const double* row = W + static_cast<size_t>(i) * n;
        y[i] = (b ? b[i] : 0.0) + detail::dot4(row, x, n);
    }
}

void matvec_bwd_x(const double* W, const double* gy, double* gx, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const double g = gy[i];
        const double* row = W + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += g * row[j];
    }
}

void matvec_bwd_W(const double* gy, const double* x, double* gW, double* gb, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const double g = gy[i];
        double* row = gW + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] += g * x[j];
        if (gb) gb[i] += g;
    }
}

void conv2d(const double* in, const double* w, const double* b, double* out, int C, int H, int W,
            int O, int k, int stride, int pad, int Ho, int Wo) {
    const int CKK = C * k * k;
    const int P = Ho * Wo;
    const std::vector<int> live = detail::live_channels(in, C, H * W);
    const int CL = static_cast<int>(live.size()) * k * k;
    std::vector<double> B(static_cast<size_t>(CL) * P, 0.0);
    detail::im2col_live(in, B.data(), live, H, W, k, stride, pad, Ho, Wo);
    for (int o = 0; o < O; ++o) {
        double* outo = out + static_cast<size_t>(o) * P;
        const double bias = b ? b[o] : 0.0;
        for (int p = 0; p < P; ++p) outo[p] = bias;
        const double* wo = w + static_cast<size_t>(o) * CKK;
        for (size_t li = 0; li < live.size(); ++li) {
            for (int kk = 0; kk < k * k; ++kk) {
                const double wv = wo[live[li] * k * k + kk];
                const double* row = B.data() + (li * k * k + kk) * P;
                for (int p = 0; p < P; ++p) outo[p] += wv * row[p];
            }
        }
    }
}

void conv2d_bwd_input(const double* w, const double* gout, double* gin, int C, int H, int W, int O,
                      int k, int stride, int pad, int Ho, int Wo) {
    const int CKK = C * k * k;
    const int P = Ho * Wo;
    std::vector<double> gB(static_cast<size_t>(CKK) * P, 0.0);
    for (int j = 0; j < CKK; ++j) {
        double* row = gB.data() + static_cast<size_t>(j) * P;
        for (int o = 0; o < O; ++o) {
            const double wv = w[static_cast<size_t>(o) * CKK + j];
            const double* go = gout + static_cast<size_t>(o) * P;
            for (int p = 0; p < P; ++p) row[p] += wv * go[p];
        }
    }
    for (int c = 0; c < C; ++c)
        detail::col2im_channel(gB.data(), gin + static_cast<size_t>(c) * H * W, c, H, W, k, stride,
                               pad, Ho, Wo);
}

void conv2d_bwd_weight(const double* in, const double* gout, double* gw, double* gb, int C, int H,
                       int W, int O, int k, int stride, int pad, int Ho, int Wo) {
    const int CKK = C * k * k;
    const int P = Ho * Wo;
    const std::vector<int> live = detail::live_channels(in, C, H * W);
    const int CL = static_cast<int>(live.size()) * k * k;
    std::vector<double> BT(static_cast<size_t>(P) * CL, 0.0);
    detail::im2col_transposed_live(in, BT.data(), live, H, W, k, stride, pad, Ho, Wo);
    std::vector<double> scratch(CL);
    for (int o = 0; o < O; ++o) {
        const double* go = gout + static_cast<size_t>(o) * P;
        double* gwo = gw + static_cast<size_t>(o) * CKK;
        std::fill(scratch.begin(), scratch.end(), 0.0);
        for (int p = 0; p < P; ++p) {
            const double g = go[p];
            const double* row = BT.data() + static_cast<size_t>(p) * CL;
            for (int jl = 0; jl < CL; ++jl) scratch[jl] += g * row[jl];
        }
        // dead input channels contribute exactly zero gradient
        for (size_t li = 0; li < live.size(); ++li)
            for (int kk = 0; kk < k * k; ++kk)
                gwo[live[li] * k * k + kk] += scratch[li * k * k + kk];
        if (gb) {
            double acc = 0.0;
            for (int p = 0; p < P; ++p) acc += go[p];
            gb[o] += acc;
        }
    }
}

void conv_transpose2d(const double* in, const double* w, const double* b, double* out, int C, int H,
                      int W, int O, int k, int stride, int pad, int Ho, int Wo) {
    for (int o = 0; o < O; ++o) {
        double* outo = out + static_cast<size_t>(o) * Ho * Wo;
        for (int y = 0; y < Ho; ++y) {
            for (int x = 0; x < Wo; ++x) {
                double acc = b ? b[o] : 0.0;
                for (int ky = 0; ky < k; ++ky) {
                    const int num_y = y + pad - ky;
                    if (num_y < 0 || num_y % stride != 0) continue;
                    const int iy = num_y / stride;
                    if (iy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int num_x = x + pad - kx;
                        if (num_x < 0 || num_x % stride != 0) continue;
                        const int ix = num_x / stride;
                        if (ix >= W) continue;
                        for (int c = 0; c < C; ++c) {
                            acc += in[(static_cast<size_t>(c) * H + iy) * W + ix] *
                                   w[((static_cast<size_t>(c) * O + o) * k + ky) * k + kx];
                        }
                    }
                }
                outo[static_cast<size_t>(y) * Wo + x] = acc;
            }
        }
    }
}

void conv_transpose2d_bwd_input(const double* w, const double* gout, double* gin, int C, int H,
                                int W, int O, int k, int stride, int pad, int Ho, int Wo) {
    for (int c = 0; c < C; ++c) {
        double* ginc = gin + static_cast<size_t>(c) * H * W;
        for (int iy = 0; iy < H; ++iy) {
            for (int ix = 0; ix < W; ++ix) {
                double acc = 0.0;
                for (int o = 0; o < O; ++o) {
                    const double* go = gout + static_cast<size_t>(o) * Ho * Wo;
                    for (int ky = 0; ky < k; ++ky) {
                        const int y = iy * stride + ky - pad;
                        if (y < 0 || y >= Ho) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int x = ix * stride + kx - pad;
                            if (x < 0 || x >= Wo) continue;
                            acc += go[static_cast<size_t>(y) * Wo + x] *
                                   w[((static_cast<size_t>(c) * O + o) * k + ky) * k + kx];
                        }
                    }
                }
                ginc[static_cast<size_t>(iy) * W + ix] += acc;
            }
        }
    }
}

void conv_transpose2d_bwd_weight(const double* in, const double* gout, double* gw, double* gb,
                                 int C, int H, int W, int O, int k, int stride, int pad, int Ho,
                                 int Wo) {
    for (int c = 0; c < C; ++c) {
        const double* inc = in + static_cast<size_t>(c) * H * W;
        for (int o = 0; o < O; ++o) {
            const double* go = gout + static_cast<size_t>(o) * Ho * Wo;
            double* wc = gw + (static_cast<size_t>(c) * O + o) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (int iy = 0; iy < H; ++iy) {
                        const int y = iy * stride + ky - pad;
                        if (y < 0 || y >= Ho) continue;
                        for (int ix = 0; ix < W; ++ix) {
                            const int x = ix * stride + kx - pad;
                            if (x < 0 || x >= Wo) continue;
                            acc += inc[static_cast<size_t>(iy) * W + ix] *
                                   go[static_cast<size_t>(y) * Wo + x];
                        }
                    }
                    wc[ky * k + kx] += acc;
                }
            }
        }
    }
    if (gb) {
        for (int o = 0; o < O; ++o) {
            const double* go = gout + static_cast<size_t>(o) * Ho * Wo;
            double acc = 0.0;
            for (int p = 0; p < Ho * Wo; ++p) acc += go[p];
            gb[o] += acc;
        }
    }
}

}  // namespace gridagent::nn::kernels::serial_ref
