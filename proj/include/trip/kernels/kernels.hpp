#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "trip/core/parallel.hpp"

// Dense kernels behind the autodiff ops. Each has a serial reference and
// an OpenMP variant; both call the same per-slice inner routine over
// disjoint output regions, so results are bit-identical at any thread
// count. The benchmark tool compares the two paths.

namespace trip::kern {

// ---- matmul: C[m,n] = A[m,k] * B[k,n] ----

template <class S>
inline void matmul_row(const S* a, const S* b, S* c, int row, int k, int n) {
    S* crow = c + size_t(row) * n;
    std::fill(crow, crow + n, S(0));
    const S* arow = a + size_t(row) * k;
    for (int kk = 0; kk < k; ++kk) {
        S av = arow[kk];
        const S* brow = b + size_t(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

template <class S>
void matmul_serial(const S* a, const S* b, S* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

template <class S>
void matmul_omp(const S* a, const S* b, S* c, int m, int k, int n) {
    parallel_for(size_t(m), [&](size_t i) { matmul_row(a, b, c, int(i), k, n); });
}

// C[m,n] = A[m,k] * B^T where B is stored [n, k].
template <class S>
inline void matmul_bt_row(const S* a, const S* b, S* c, int row, int k, int n) {
    S* crow = c + size_t(row) * n;
    const S* arow = a + size_t(row) * k;
    for (int j = 0; j < n; ++j) {
        const S* brow = b + size_t(j) * k;
        S acc(0);
        for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        crow[j] = acc;
    }
}

// Accumulating variants used on gradient buffers, which may already hold
// contributions from other uses of the same tensor.

template <class S>
inline void matmul_row_acc(const S* a, const S* b, S* c, int row, int k, int n) {
    S* crow = c + size_t(row) * n;
    const S* arow = a + size_t(row) * k;
    for (int kk = 0; kk < k; ++kk) {
        S av = arow[kk];
        const S* brow = b + size_t(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// C[row,:] += A^T * B where A is stored [k, m]; row indexes A's columns.
template <class S>
inline void matmul_at_row_acc(const S* a, const S* b, S* c, int row, int k, int m, int n) {
    S* crow = c + size_t(row) * n;
    for (int kk = 0; kk < k; ++kk) {
        S av = a[size_t(kk) * m + row];
        const S* brow = b + size_t(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// C[row,:] += A * B^T where B is stored [n, k].
template <class S>
inline void matmul_bt_row_acc(const S* a, const S* b, S* c, int row, int k, int n) {
    S* crow = c + size_t(row) * n;
    const S* arow = a + size_t(row) * k;
    for (int j = 0; j < n; ++j) {
        const S* brow = b + size_t(j) * k;
        S acc(0);
        for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        crow[j] += acc;
    }
}

// ---- conv1d, stride 1, same padding, odd kernel ----
// x: [Cin, L], w: [Cout, Cin, K], out: [Cout, L]

template <class S>
inline void conv1d_channel(const S* x, const S* w, S bias, S* out, int co, int cin, int len,
                           int k) {
    int pad = k / 2;
    S* orow = out + size_t(co) * len;
    std::fill(orow, orow + len, bias);
    const S* wbase = w + size_t(co) * cin * k;
    for (int ci = 0; ci < cin; ++ci) {
        const S* xrow = x + size_t(ci) * len;
        const S* wrow = wbase + size_t(ci) * k;
        for (int t = 0; t < k; ++t) {
            S wv = wrow[t];
            int shift = t - pad;
            int lo = std::max(0, -shift), hi = std::min(len, len - shift);
            for (int l = lo; l < hi; ++l) orow[l] += wv * xrow[l + shift];
        }
    }
}

template <class S>
void conv1d_serial(const S* x, const S* w, const S* b, S* out, int cout, int cin, int len,
                   int k) {
    for (int co = 0; co < cout; ++co)
        conv1d_channel(x, w, b ? b[co] : S(0), out, co, cin, len, k);
}

template <class S>
void conv1d_omp(const S* x, const S* w, const S* b, S* out, int cout, int cin, int len, int k) {
    parallel_for(size_t(cout), [&](size_t co) {
        conv1d_channel(x, w, b ? b[co] : S(0), out, int(co), cin, len, k);
    });
}

// dx[ci,l] += sum_co sum_t dout[co, l - t + pad] * w[co,ci,t]
template <class S>
inline void conv1d_dx_channel(const S* dout, const S* w, S* dx, int ci, int cout, int cin,
                              int len, int k) {
    int pad = k / 2;
    S* drow = dx + size_t(ci) * len;
    for (int co = 0; co < cout; ++co) {
        const S* dorow = dout + size_t(co) * len;
        const S* wrow = w + (size_t(co) * cin + ci) * k;
        for (int t = 0; t < k; ++t) {
            S wv = wrow[t];
            int shift = pad - t;
            int lo = std::max(0, -shift), hi = std::min(len, len - shift);
            for (int l = lo; l < hi; ++l) drow[l] += wv * dorow[l + shift];
        }
    }
}

// dw[co,ci,t] += sum_l dout[co,l] * x[ci, l + t - pad]; db[co] += sum_l dout[co,l]
template <class S>
inline void conv1d_dw_channel(const S* x, const S* dout, S* dw, S* db, int co, int cin, int len,
                              int k) {
    int pad = k / 2;
    const S* dorow = dout + size_t(co) * len;
    if (db) {
        S acc(0);
        for (int l = 0; l < len; ++l) acc += dorow[l];
        db[co] += acc;
    }
    for (int ci = 0; ci < cin; ++ci) {
        const S* xrow = x + size_t(ci) * len;
        S* wrow = dw + (size_t(co) * cin + ci) * k;
        for (int t = 0; t < k; ++t) {
            int shift = t - pad;
            int lo = std::max(0, -shift), hi = std::min(len, len - shift);
            S acc(0);
            for (int l = lo; l < hi; ++l) acc += dorow[l] * xrow[l + shift];
            wrow[t] += acc;
        }
    }
}

// ---- conv2d, stride 1, same padding, odd square kernel ----
// x: [Cin, H, W], w: [Cout, Cin, K, K], out: [Cout, H, W]

template <class S>
inline void conv2d_channel(const S* x, const S* w, S bias, S* out, int co, int cin, int h,
                           int wd, int k) {
    int pad = k / 2;
    size_t plane = size_t(h) * wd;
    S* oplane = out + size_t(co) * plane;
    std::fill(oplane, oplane + plane, bias);
    const S* wbase = w + size_t(co) * cin * k * k;
    for (int ci = 0; ci < cin; ++ci) {
        const S* xplane = x + size_t(ci) * plane;
        const S* wk = wbase + size_t(ci) * k * k;
        for (int ty = 0; ty < k; ++ty) {
            int sy = ty - pad;
            int ylo = std::max(0, -sy), yhi = std::min(h, h - sy);
            for (int tx = 0; tx < k; ++tx) {
                S wv = wk[ty * k + tx];
                int sx = tx - pad;
                int xlo = std::max(0, -sx), xhi = std::min(wd, wd - sx);
                for (int y = ylo; y < yhi; ++y) {
                    S* orow = oplane + size_t(y) * wd;
                    const S* xrow = xplane + size_t(y + sy) * wd + sx;
                    for (int xx = xlo; xx < xhi; ++xx) orow[xx] += wv * xrow[xx];
                }
            }
        }
    }
}

template <class S>
void conv2d_serial(const S* x, const S* w, const S* b, S* out, int cout, int cin, int h, int wd,
                   int k) {
    for (int co = 0; co < cout; ++co)
        conv2d_channel(x, w, b ? b[co] : S(0), out, co, cin, h, wd, k);
}

template <class S>
void conv2d_omp(const S* x, const S* w, const S* b, S* out, int cout, int cin, int h, int wd,
                int k) {
    parallel_for(size_t(cout), [&](size_t co) {
        conv2d_channel(x, w, b ? b[co] : S(0), out, int(co), cin, h, wd, k);
    });
}

template <class S>
inline void conv2d_dx_channel(const S* dout, const S* w, S* dx, int ci, int cout, int cin,
                              int h, int wd, int k) {
    int pad = k / 2;
    size_t plane = size_t(h) * wd;
    S* dplane = dx + size_t(ci) * plane;
    for (int co = 0; co < cout; ++co) {
        const S* doplane = dout + size_t(co) * plane;
        const S* wk = w + (size_t(co) * cin + ci) * k * k;
        for (int ty = 0; ty < k; ++ty) {
            int sy = pad - ty;
            int ylo = std::max(0, -sy), yhi = std::min(h, h - sy);
            for (int tx = 0; tx < k; ++tx) {
                S wv = wk[ty * k + tx];
                int sx = pad - tx;
                int xlo = std::max(0, -sx), xhi = std::min(wd, wd - sx);
                for (int y = ylo; y < yhi; ++y) {
                    S* drow = dplane + size_t(y) * wd;
                    const S* dorow = doplane + size_t(y + sy) * wd + sx;
                    for (int xx = xlo; xx < xhi; ++xx) drow[xx] += wv * dorow[xx];
                }
            }
        }
    }
}

template <class S>
inline void conv2d_dw_channel(const S* x, const S* dout, S* dw, S* db, int co, int cin, int h,
                              int wd, int k) {
    int pad = k / 2;
    size_t plane = size_t(h) * wd;
    const S* doplane = dout + size_t(co) * plane;
    if (db) {
        S acc(0);
        for (size_t i = 0; i < plane; ++i) acc += doplane[i];
        db[co] += acc;
    }
    for (int ci = 0; ci < cin; ++ci) {
        const S* xplane = x + size_t(ci) * plane;
        S* wk = dw + (size_t(co) * cin + ci) * k * k;
        for (int ty = 0; ty < k; ++ty) {
            int sy = ty - pad;
            int ylo = std::max(0, -sy), yhi = std::min(h, h - sy);
            for (int tx = 0; tx < k; ++tx) {
                int sx = tx - pad;
                int xlo = std::max(0, -sx), xhi = std::min(wd, wd - sx);
                S acc(0);
                for (int y = ylo; y < yhi; ++y) {
                    const S* dorow = doplane + size_t(y) * wd;
                    const S* xrow = xplane + size_t(y + sy) * wd + sx;
                    for (int xx = xlo; xx < xhi; ++xx) acc += dorow[xx] * xrow[xx];
                }
                wk[ty * k + tx] += acc;
            }
        }
    }
}

// ---- bilinear plane sampling ----
// plane: [C, R, R] (row = v/y, column = u/x), coords: [K, 2] in [-1, 1]
// (clamped), align-corners pixel mapping. out: [K, C]

struct SampleTap {
    int x0, x1, y0, y1;
    double wx, wy;  // fractional weights toward x1 / y1
};

template <class S>
inline SampleTap plane_tap(S u, S v, int r) {
    double uc = std::clamp(double(u), -1.0, 1.0);
    double vc = std::clamp(double(v), -1.0, 1.0);
    double px = (uc + 1.0) * 0.5 * double(r - 1);
    double py = (vc + 1.0) * 0.5 * double(r - 1);
    SampleTap t;
    t.x0 = std::clamp(int(std::floor(px)), 0, r - 1);
    t.y0 = std::clamp(int(std::floor(py)), 0, r - 1);
    t.x1 = std::min(t.x0 + 1, r - 1);
    t.y1 = std::min(t.y0 + 1, r - 1);
    t.wx = px - double(t.x0);
    t.wy = py - double(t.y0);
    return t;
}

template <class S>
inline void grid_sample_query(const S* plane, const S* coord, S* out, int q, int c, int r) {
    SampleTap t = plane_tap(coord[2 * q], coord[2 * q + 1], r);
    S w00 = S((1 - t.wx) * (1 - t.wy)), w10 = S(t.wx * (1 - t.wy));
    S w01 = S((1 - t.wx) * t.wy), w11 = S(t.wx * t.wy);
    size_t plane_sz = size_t(r) * r;
    S* orow = out + size_t(q) * c;
    for (int ch = 0; ch < c; ++ch) {
        const S* p = plane + size_t(ch) * plane_sz;
        orow[ch] = w00 * p[size_t(t.y0) * r + t.x0] + w10 * p[size_t(t.y0) * r + t.x1] +
                   w01 * p[size_t(t.y1) * r + t.x0] + w11 * p[size_t(t.y1) * r + t.x1];
    }
}

template <class S>
void grid_sample_serial(const S* plane, const S* coords, S* out, int k, int c, int r) {
    for (int q = 0; q < k; ++q) grid_sample_query(plane, coords, out, q, c, r);
}

template <class S>
void grid_sample_omp(const S* plane, const S* coords, S* out, int k, int c, int r) {
    parallel_for(size_t(k), [&](size_t q) { grid_sample_query(plane, coords, out, int(q), c, r); });
}

// Scatter-add of output grads back into the plane, one channel per call so
// parallel callers write disjoint slices.
template <class S>
inline void grid_sample_back_channel(const S* coords, const S* dout, S* dplane, int ch, int k,
                                     int c, int r) {
    size_t plane_sz = size_t(r) * r;
    S* p = dplane + size_t(ch) * plane_sz;
    for (int q = 0; q < k; ++q) {
        SampleTap t = plane_tap(coords[2 * q], coords[2 * q + 1], r);
        S g = dout[size_t(q) * c + ch];
        p[size_t(t.y0) * r + t.x0] += S((1 - t.wx) * (1 - t.wy)) * g;
        p[size_t(t.y0) * r + t.x1] += S(t.wx * (1 - t.wy)) * g;
        p[size_t(t.y1) * r + t.x0] += S((1 - t.wx) * t.wy) * g;
        p[size_t(t.y1) * r + t.x1] += S(t.wx * t.wy) * g;
    }
}

template <class S>
void grid_sample_back_serial(const S* coords, const S* dout, S* dplane, int k, int c, int r) {
    for (int ch = 0; ch < c; ++ch) grid_sample_back_channel(coords, dout, dplane, ch, k, c, r);
}

template <class S>
void grid_sample_back_omp(const S* coords, const S* dout, S* dplane, int k, int c, int r) {
    parallel_for(size_t(c), [&](size_t ch) {
        grid_sample_back_channel(coords, dout, dplane, int(ch), k, c, r);
    });
}

}  // namespace trip::kern
