#pragma once

#include <cstddef>

// Dense compute kernels behind the autodiff graph. Every kernel exists twice:
// a serial reference in `serial_ref` and an OpenMP version in `omp_par` that
// partitions independent output elements across threads while keeping each
// element's reduction order identical, so the two produce bit-equal results.
// The unqualified entry points dispatch on the configured thread count.

namespace gridagent::nn::kernels {

void set_threads(int n);
int threads();

#define GRIDAGENT_KERNEL_SIGNATURES                                                                 \
    /* y[m] = W[m,n] x[n] (+ b[m]) */                                                               \
    void matvec(const double* W, const double* x, const double* b, double* y, int m, int n);        \
    /* gx[n] += W^T gy */                                                                           \
    void matvec_bwd_x(const double* W, const double* gy, double* gx, int m, int n);                 \
    /* gW[m,n] += gy x^T ; gb[m] += gy */                                                           \
    void matvec_bwd_W(const double* gy, const double* x, double* gW, double* gb, int m, int n);     \
    /* in [C,H,W], w [O,C,k,k], out [O,Ho,Wo] */                                                    \
    void conv2d(const double* in, const double* w, const double* b, double* out, int C, int H,      \
                int W, int O, int k, int stride, int pad, int Ho, int Wo);                          \
    void conv2d_bwd_input(const double* w, const double* gout, double* gin, int C, int H, int W,    \
                          int O, int k, int stride, int pad, int Ho, int Wo);                       \
    void conv2d_bwd_weight(const double* in, const double* gout, double* gw, double* gb, int C,     \
                           int H, int W, int O, int k, int stride, int pad, int Ho, int Wo);        \
    /* in [C,H,W], w [C,O,k,k], out [O,Ho,Wo] with Ho=(H-1)*stride-2*pad+k */                       \
    void conv_transpose2d(const double* in, const double* w, const double* b, double* out, int C,   \
                          int H, int W, int O, int k, int stride, int pad, int Ho, int Wo);         \
    void conv_transpose2d_bwd_input(const double* w, const double* gout, double* gin, int C, int H, \
                                    int W, int O, int k, int stride, int pad, int Ho, int Wo);      \
    void conv_transpose2d_bwd_weight(const double* in, const double* gout, double* gw, double* gb,  \
                                     int C, int H, int W, int O, int k, int stride, int pad,        \
                                     int Ho, int Wo);

namespace serial_ref {
GRIDAGENT_KERNEL_SIGNATURES
}

namespace omp_par {
GRIDAGENT_KERNEL_SIGNATURES
}

GRIDAGENT_KERNEL_SIGNATURES

#undef GRIDAGENT_KERNEL_SIGNATURES

}  // namespace gridagent::nn::kernels
