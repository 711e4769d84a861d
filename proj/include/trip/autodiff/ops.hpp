#pragma once

#include <cmath>
#include <vector>

#include "trip/autodiff/tape.hpp"
#include "trip/core/rng.hpp"
#include "trip/kernels/kernels.hpp"

// Differentiable ops. Forward results are appended to the tape together
// with a closure that scatters the output gradient into the inputs.
// Gradient buffers accumulate, so tensors used by several ops pick up all
// contributions. Heavy ops skip gradient work for inputs flagged as not
// requiring gradients (targets, query coordinates, frozen inputs).

namespace trip::ad {

namespace detail {

template <class S>
inline Tape<S>& same_tape(Var<S> a, Var<S> b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw internal_error(std::string(op) + ": operands on different tapes");
    return *a.tape;
}

}  // namespace detail

// ---- elementwise binary ----

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
    Tape<S>& t = detail::same_tape(a, b, "add");
    const Tensor<S>&av = a.val(), &bv = b.val();
    if (!av.same_shape(bv)) throw internal_error("add: shape mismatch");
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    uint32_t ai = a.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(a) || t.wants_grad(b),
                  [ai, bi](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>&ga = tp.grad(ai), &gb = tp.grad(bi);
                      for (size_t i = 0; i < g.numel(); ++i) {
                          ga[i] += g[i];
                          gb[i] += g[i];
                      }
                  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
    Tape<S>& t = detail::same_tape(a, b, "sub");
    const Tensor<S>&av = a.val(), &bv = b.val();
    if (!av.same_shape(bv)) throw internal_error("sub: shape mismatch");
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
    uint32_t ai = a.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(a) || t.wants_grad(b),
                  [ai, bi](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>&ga = tp.grad(ai), &gb = tp.grad(bi);
                      for (size_t i = 0; i < g.numel(); ++i) {
                          ga[i] += g[i];
                          gb[i] -= g[i];
                      }
                  });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
    Tape<S>& t = detail::same_tape(a, b, "mul");
    const Tensor<S>&av = a.val(), &bv = b.val();
    if (!av.same_shape(bv)) throw internal_error("mul: shape mismatch");
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    uint32_t ai = a.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(a) || t.wants_grad(b),
                  [ai, bi](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      const Tensor<S>&av2 = tp.value(ai), &bv2 = tp.value(bi);
                      Tensor<S>&ga = tp.grad(ai), &gb = tp.grad(bi);
                      for (size_t i = 0; i < g.numel(); ++i) {
                          ga[i] += g[i] * bv2[i];
                          gb[i] += g[i] * av2[i];
                      }
                  });
}

template <class S>
Var<S> divide(Var<S> a, Var<S> b) {
    Tape<S>& t = detail::same_tape(a, b, "divide");
    const Tensor<S>&av = a.val(), &bv = b.val();
    if (!av.same_shape(bv)) throw internal_error("divide: shape mismatch");
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] / bv[i];
    uint32_t ai = a.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(a) || t.wants_grad(b),
                  [ai, bi](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      const Tensor<S>&av2 = tp.value(ai), &bv2 = tp.value(bi);
                      Tensor<S>&ga = tp.grad(ai), &gb = tp.grad(bi);
                      for (size_t i = 0; i < g.numel(); ++i) {
                          S inv = S(1) / bv2[i];
                          ga[i] += g[i] * inv;
                          gb[i] -= g[i] * av2[i] * inv * inv;
                      }
                  });
}

// ---- scalar and constant-tensor arithmetic ----

template <class S>
Var<S> add_scalar(Var<S> a, S c) {
    Tape<S>& t = *a.tape;
    const Tensor<S>& av = a.val();
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c;
    uint32_t ai = a.id;
    return t.make(std::move(out), t.wants_grad(a), [ai](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& ga = tp.grad(ai);
        for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

template <class S>
Var<S> scale(Var<S> a, S c) {
    Tape<S>& t = *a.tape;
    const Tensor<S>& av = a.val();
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
    uint32_t ai = a.id;
    return t.make(std::move(out), t.wants_grad(a), [ai, c](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& ga = tp.grad(ai);
        for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
    });
}

template <class S>
Var<S> neg(Var<S> a) {
    return scale(a, S(-1));
}

template <class S>
Var<S> mul_const(Var<S> a, Tensor<S> c) {
    Tape<S>& t = *a.tape;
    const Tensor<S>& av = a.val();
    if (!av.same_shape(c)) throw internal_error("mul_const: shape mismatch");
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c[i];
    uint32_t ai = a.id;
    return t.make(std::move(out), t.wants_grad(a),
                  [ai, c = std::move(c)](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>& ga = tp.grad(ai);
                      for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c[i];
                  });
}

template <class S>
Var<S> sub_const(Var<S> a, const Tensor<S>& c) {
    Tape<S>& t = *a.tape;
    const Tensor<S>& av = a.val();
    if (!av.same_shape(c)) throw internal_error("sub_const: shape mismatch");
    Tensor<S> out(av.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - c[i];
    uint32_t ai = a.id;
    return t.make(std::move(out), t.wants_grad(a), [ai](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& ga = tp.grad(ai);
        for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

// ---- broadcast adds ----

// x: [C, ...], b: [C]; adds b[c] to every element of channel c.
template <class S>
Var<S> add_channel(Var<S> x, Var<S> b) {
    Tape<S>& t = detail::same_tape(x, b, "add_channel");
    const Tensor<S>&xv = x.val(), &bv = b.val();
    int c = xv.dim(0);
    if (bv.numel() != size_t(c)) throw internal_error("add_channel: bias size mismatch");
    size_t rest = xv.numel() / size_t(c);
    Tensor<S> out(xv.shape);
    for (int ch = 0; ch < c; ++ch) {
        S bc = bv[size_t(ch)];
        const S* xr = xv.ptr() + size_t(ch) * rest;
        S* orow = out.ptr() + size_t(ch) * rest;
        for (size_t i = 0; i < rest; ++i) orow[i] = xr[i] + bc;
    }
    uint32_t xi = x.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(x) || t.wants_grad(b),
                  [xi, bi, c, rest](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>&gx = tp.grad(xi), &gb = tp.grad(bi);
                      for (int ch = 0; ch < c; ++ch) {
                          const S* gr = g.ptr() + size_t(ch) * rest;
                          S* gxr = gx.ptr() + size_t(ch) * rest;
                          S acc(0);
                          for (size_t i = 0; i < rest; ++i) {
                              gxr[i] += gr[i];
                              acc += gr[i];
                          }
                          gb[size_t(ch)] += acc;
                      }
                  });
}

// x: [R, C], b: [C]; adds b to every row.
template <class S>
Var<S> add_rowvec(Var<S> x, Var<S> b) {
    Tape<S>& t = detail::same_tape(x, b, "add_rowvec");
    const Tensor<S>&xv = x.val(), &bv = b.val();
    if (xv.ndim() != 2 || bv.numel() != size_t(xv.dim(1)))
        throw internal_error("add_rowvec: shape mismatch");
    int r = xv.dim(0), c = xv.dim(1);
    Tensor<S> out(xv.shape);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[size_t(i) * c + j] = xv[size_t(i) * c + j] + bv[size_t(j)];
    uint32_t xi = x.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(x) || t.wants_grad(b),
                  [xi, bi, r, c](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>&gx = tp.grad(xi), &gb = tp.grad(bi);
                      for (int i = 0; i < r; ++i)
                          for (int j = 0; j < c; ++j) {
                              S gv = g[size_t(i) * c + j];
                              gx[size_t(i) * c + j] += gv;
                              gb[size_t(j)] += gv;
                          }
                  });
}

// ---- elementwise unary ----

template <class S>
Var<S> relu(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        const Tensor<S>& xv2 = tp.value(xi);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i)
            if (xv2[i] > S(0)) gx[i] += g[i];
    });
}

template <class S>
Var<S> sigmoid(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = S(1) / (S(1) + std::exp(-xv[i]));
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>&g = tp.grad(self), &y = tp.value(self);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i] * (S(1) - y[i]);
    });
}

template <class S>
Var<S> tanh_op(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(xv[i]);
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>&g = tp.grad(self), &y = tp.value(self);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (S(1) - y[i] * y[i]);
    });
}

template <class S>
Var<S> exp_op(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(xv[i]);
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>&g = tp.grad(self), &y = tp.value(self);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * y[i];
    });
}

template <class S>
Var<S> log_op(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = std::log(xv[i]);
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        const Tensor<S>& xv2 = tp.value(xi);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] / xv2[i];
    });
}

template <class S>
Var<S> square_op(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * xv[i];
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        const Tensor<S>& xv2 = tp.value(xi);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i) gx[i] += S(2) * g[i] * xv2[i];
    });
}

template <class S>
Var<S> abs_op(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = std::abs(xv[i]);
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        const Tensor<S>& xv2 = tp.value(xi);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i) {
            if (xv2[i] > S(0))
                gx[i] += g[i];
            else if (xv2[i] < S(0))
                gx[i] -= g[i];
        }
    });
}

// Gradient passes through strictly inside (lo, hi), zero elsewhere.
template <class S>
Var<S> clamp_op(Var<S> x, S lo, S hi) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(xv[i], lo, hi);
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi, lo, hi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        const Tensor<S>& xv2 = tp.value(xi);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i)
            if (xv2[i] > lo && xv2[i] < hi) gx[i] += g[i];
    });
}

// ---- matmul ----

// a: [m, k], b: [k, n] -> [m, n]
template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
    Tape<S>& t = detail::same_tape(a, b, "matmul");
    const Tensor<S>&av = a.val(), &bv = b.val();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
        throw internal_error("matmul: shape mismatch");
    int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<S> out({m, n});
    kern::matmul_omp(av.ptr(), bv.ptr(), out.ptr(), m, k, n);
    uint32_t ai = a.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(a) || t.wants_grad(b),
                  [ai, bi, m, k, n](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      const Tensor<S>&av2 = tp.value(ai), &bv2 = tp.value(bi);
                      if (tp.wants_grad(ai)) {
                          Tensor<S>& ga = tp.grad(ai);
                          parallel_for(size_t(m), [&](size_t i) {
                              kern::matmul_bt_row_acc(g.ptr(), bv2.ptr(), ga.ptr(), int(i), n, k);
                          });
                      }
                      if (tp.wants_grad(bi)) {
                          Tensor<S>& gb = tp.grad(bi);
                          parallel_for(size_t(k), [&](size_t i) {
                              kern::matmul_at_row_acc(av2.ptr(), g.ptr(), gb.ptr(), int(i), m, k,
                                                      n);
                          });
                      }
                  });
}

// a: [B, m, k]; b: [B, k, n], or [B, n, k] with transpose_b. -> [B, m, n]
template <class S>
Var<S> batched_matmul(Var<S> a, Var<S> b, bool transpose_b = false) {
    Tape<S>& t = detail::same_tape(a, b, "batched_matmul");
    const Tensor<S>&av = a.val(), &bv = b.val();
    if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(0) != bv.dim(0))
        throw internal_error("batched_matmul: shape mismatch");
    int bt = av.dim(0), m = av.dim(1), k = av.dim(2);
    int n = transpose_b ? bv.dim(1) : bv.dim(2);
    if ((transpose_b ? bv.dim(2) : bv.dim(1)) != k)
        throw internal_error("batched_matmul: inner dimension mismatch");
    Tensor<S> out({bt, m, n});
    size_t as = size_t(m) * k, bs = size_t(k) * n, os = size_t(m) * n;
    parallel_for(size_t(bt), [&](size_t bb) {
        const S* ap = av.ptr() + bb * as;
        const S* bp = bv.ptr() + bb * bs;
        S* op = out.ptr() + bb * os;
        for (int i = 0; i < m; ++i) {
            if (transpose_b) {
                kern::matmul_bt_row(ap, bp, op, i, k, n);
            } else {
                kern::matmul_row(ap, bp, op, i, k, n);
            }
        }
    });
    uint32_t ai = a.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(a) || t.wants_grad(b),
                  [ai, bi, bt, m, k, n, transpose_b, as, bs, os](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      const Tensor<S>&av2 = tp.value(ai), &bv2 = tp.value(bi);
                      Tensor<S>&ga = tp.grad(ai), &gb = tp.grad(bi);
                      parallel_for(size_t(bt), [&](size_t bb) {
                          const S* gp = g.ptr() + bb * os;
                          const S* ap = av2.ptr() + bb * as;
                          const S* bp = bv2.ptr() + bb * bs;
                          S* gap = ga.ptr() + bb * as;
                          S* gbp = gb.ptr() + bb * bs;
                          if (transpose_b) {
                              // out = a * b^T, b stored [n, k]
                              for (int i = 0; i < m; ++i)
                                  kern::matmul_row_acc(gp, bp, gap, i, n, k);
                              for (int j = 0; j < n; ++j)
                                  kern::matmul_at_row_acc(gp, ap, gbp, j, m, n, k);
                          } else {
                              for (int i = 0; i < m; ++i)
                                  kern::matmul_bt_row_acc(gp, bp, gap, i, n, k);
                              for (int j = 0; j < k; ++j)
                                  kern::matmul_at_row_acc(ap, gp, gbp, j, m, k, n);
                          }
                      });
                  });
}

// ---- convolutions (stride 1, same padding, odd kernel) ----

// x: [Cin, L], w: [Cout, Cin, K], b: [Cout] -> [Cout, L]
template <class S>
Var<S> conv1d(Var<S> x, Var<S> w, Var<S> b) {
    Tape<S>& t = detail::same_tape(x, w, "conv1d");
    const Tensor<S>&xv = x.val(), &wv = w.val(), &bv = b.val();
    if (xv.ndim() != 2 || wv.ndim() != 3 || wv.dim(1) != xv.dim(0))
        throw internal_error("conv1d: shape mismatch");
    int cin = xv.dim(0), len = xv.dim(1), cout = wv.dim(0), k = wv.dim(2);
    if (k % 2 == 0) throw internal_error("conv1d: kernel size must be odd");
    if (bv.numel() != size_t(cout)) throw internal_error("conv1d: bias size mismatch");
    Tensor<S> out({cout, len});
    kern::conv1d_omp(xv.ptr(), wv.ptr(), bv.ptr(), out.ptr(), cout, cin, len, k);
    uint32_t xi = x.id, wi = w.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(x) || t.wants_grad(w) || t.wants_grad(b),
                  [xi, wi, bi, cin, len, cout, k](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      const Tensor<S>&xv2 = tp.value(xi), &wv2 = tp.value(wi);
                      if (tp.wants_grad(xi)) {
                          Tensor<S>& gx = tp.grad(xi);
                          parallel_for(size_t(cin), [&](size_t ci) {
                              kern::conv1d_dx_channel(g.ptr(), wv2.ptr(), gx.ptr(), int(ci),
                                                      cout, cin, len, k);
                          });
                      }
                      if (tp.wants_grad(wi)) {
                          Tensor<S>&gw = tp.grad(wi), &gb = tp.grad(bi);
                          parallel_for(size_t(cout), [&](size_t co) {
                              kern::conv1d_dw_channel(xv2.ptr(), g.ptr(), gw.ptr(), gb.ptr(),
                                                      int(co), cin, len, k);
                          });
                      }
                  });
}

// x: [Cin, H, W], w: [Cout, Cin, K, K], b: [Cout] -> [Cout, H, W]
template <class S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b) {
    Tape<S>& t = detail::same_tape(x, w, "conv2d");
    const Tensor<S>&xv = x.val(), &wv = w.val(), &bv = b.val();
    if (xv.ndim() != 3 || wv.ndim() != 4 || wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3))
        throw internal_error("conv2d: shape mismatch");
    int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2), cout = wv.dim(0), k = wv.dim(2);
    if (k % 2 == 0) throw internal_error("conv2d: kernel size must be odd");
    if (bv.numel() != size_t(cout)) throw internal_error("conv2d: bias size mismatch");
    Tensor<S> out({cout, h, wd});
    kern::conv2d_omp(xv.ptr(), wv.ptr(), bv.ptr(), out.ptr(), cout, cin, h, wd, k);
    uint32_t xi = x.id, wi = w.id, bi = b.id;
    return t.make(std::move(out), t.wants_grad(x) || t.wants_grad(w) || t.wants_grad(b),
                  [xi, wi, bi, cin, h, wd, cout, k](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      const Tensor<S>&xv2 = tp.value(xi), &wv2 = tp.value(wi);
                      if (tp.wants_grad(xi)) {
                          Tensor<S>& gx = tp.grad(xi);
                          parallel_for(size_t(cin), [&](size_t ci) {
                              kern::conv2d_dx_channel(g.ptr(), wv2.ptr(), gx.ptr(), int(ci),
                                                      cout, cin, h, wd, k);
                          });
                      }
                      if (tp.wants_grad(wi)) {
                          Tensor<S>&gw = tp.grad(wi), &gb = tp.grad(bi);
                          parallel_for(size_t(cout), [&](size_t co) {
                              kern::conv2d_dw_channel(xv2.ptr(), g.ptr(), gw.ptr(), gb.ptr(),
                                                      int(co), cin, h, wd, k);
                          });
                      }
                  });
}

// ---- upsampling ----

// x: [C, H, W] -> [C, H*f, W*f], nearest neighbour.
template <class S>
Var<S> upsample2d_nearest(Var<S> x, int factor) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (xv.ndim() != 3 || factor < 1) throw internal_error("upsample2d_nearest: bad input");
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    int h2 = h * factor, w2 = w * factor;
    Tensor<S> out({c, h2, w2});
    for (int ch = 0; ch < c; ++ch) {
        const S* xp = xv.ptr() + size_t(ch) * h * w;
        S* op = out.ptr() + size_t(ch) * h2 * w2;
        for (int y = 0; y < h2; ++y) {
            const S* xrow = xp + size_t(y / factor) * w;
            S* orow = op + size_t(y) * w2;
            for (int xx = 0; xx < w2; ++xx) orow[xx] = xrow[xx / factor];
        }
    }
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x),
                  [xi, c, h, w, factor, h2, w2](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>& gx = tp.grad(xi);
                      parallel_for(size_t(c), [&](size_t ch) {
                          const S* gp = g.ptr() + ch * size_t(h2) * w2;
                          S* gxp = gx.ptr() + ch * size_t(h) * w;
                          for (int y = 0; y < h2; ++y) {
                              const S* grow = gp + size_t(y) * w2;
                              S* gxrow = gxp + size_t(y / factor) * w;
                              for (int xx = 0; xx < w2; ++xx) gxrow[xx / factor] += grow[xx];
                          }
                      });
                  });
}

namespace detail {

struct LerpTap {
    int i0, i1;
    double w1;
};

inline std::vector<LerpTap> lerp_taps(int n_out, int n_in) {
    std::vector<LerpTap> taps(size_t(n_out), LerpTap{});
    double s = n_out > 1 ? double(n_in - 1) / double(n_out - 1) : 0.0;
    for (int i = 0; i < n_out; ++i) {
        double p = double(i) * s;
        int i0 = std::min(int(p), n_in - 1);
        taps[size_t(i)] = {i0, std::min(i0 + 1, n_in - 1), p - double(i0)};
    }
    return taps;
}

}  // namespace detail

// x: [C, H, W] -> [C, H*f, W*f], bilinear with corner alignment.
template <class S>
Var<S> upsample2d_bilinear(Var<S> x, int factor) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (xv.ndim() != 3 || factor < 1) throw internal_error("upsample2d_bilinear: bad input");
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    int h2 = h * factor, w2 = w * factor;
    auto ty = detail::lerp_taps(h2, h), tx = detail::lerp_taps(w2, w);
    Tensor<S> out({c, h2, w2});
    for (int ch = 0; ch < c; ++ch) {
        const S* xp = xv.ptr() + size_t(ch) * h * w;
        S* op = out.ptr() + size_t(ch) * h2 * w2;
        for (int y = 0; y < h2; ++y) {
            const auto& ay = ty[size_t(y)];
            const S* r0 = xp + size_t(ay.i0) * w;
            const S* r1 = xp + size_t(ay.i1) * w;
            S* orow = op + size_t(y) * w2;
            for (int xx = 0; xx < w2; ++xx) {
                const auto& ax = tx[size_t(xx)];
                double v0 = (1 - ax.w1) * double(r0[ax.i0]) + ax.w1 * double(r0[ax.i1]);
                double v1 = (1 - ax.w1) * double(r1[ax.i0]) + ax.w1 * double(r1[ax.i1]);
                orow[xx] = S((1 - ay.w1) * v0 + ay.w1 * v1);
            }
        }
    }
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x),
                  [xi, c, h, w, h2, w2, ty = std::move(ty),
                   tx = std::move(tx)](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>& gx = tp.grad(xi);
                      parallel_for(size_t(c), [&](size_t ch) {
                          const S* gp = g.ptr() + ch * size_t(h2) * w2;
                          S* gxp = gx.ptr() + ch * size_t(h) * w;
                          for (int y = 0; y < h2; ++y) {
                              const auto& ay = ty[size_t(y)];
                              const S* grow = gp + size_t(y) * w2;
                              S* r0 = gxp + size_t(ay.i0) * w;
                              S* r1 = gxp + size_t(ay.i1) * w;
                              for (int xx = 0; xx < w2; ++xx) {
                                  const auto& ax = tx[size_t(xx)];
                                  S gv = grow[xx];
                                  r0[ax.i0] += S((1 - ay.w1) * (1 - ax.w1)) * gv;
                                  r0[ax.i1] += S((1 - ay.w1) * ax.w1) * gv;
                                  r1[ax.i0] += S(ay.w1 * (1 - ax.w1)) * gv;
                                  r1[ax.i1] += S(ay.w1 * ax.w1) * gv;
                              }
                          }
                      });
                  });
}

// ---- normalization ----

// x: [C, spatial...], gamma/beta: [C]. Statistics per group of channels
// over that group's channels and all spatial positions; affine per channel.
template <class S>
Var<S> group_norm(Var<S> x, int groups, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
    Tape<S>& t = detail::same_tape(x, gamma, "group_norm");
    const Tensor<S>&xv = x.val(), &gv = gamma.val(), &bv = beta.val();
    int c = xv.dim(0);
    if (groups < 1 || c % groups != 0) throw internal_error("group_norm: bad group count");
    if (gv.numel() != size_t(c) || bv.numel() != size_t(c))
        throw internal_error("group_norm: affine size mismatch");
    size_t spatial = xv.numel() / size_t(c);
    int cpg = c / groups;
    size_t n = size_t(cpg) * spatial;
    std::vector<double> mean(size_t(groups), 0.0), istd(size_t(groups), 0.0);
    Tensor<S> out(xv.shape);
    for (int gidx = 0; gidx < groups; ++gidx) {
        const S* xp = xv.ptr() + size_t(gidx) * n;
        double s1 = 0, s2 = 0;
        for (size_t i = 0; i < n; ++i) {
            double v = double(xp[i]);
            s1 += v;
            s2 += v * v;
        }
        double mu = s1 / double(n);
        double var = std::max(s2 / double(n) - mu * mu, 0.0);
        double is = 1.0 / std::sqrt(var + double(eps));
        mean[size_t(gidx)] = mu;
        istd[size_t(gidx)] = is;
        S* op = out.ptr() + size_t(gidx) * n;
        for (int cc = 0; cc < cpg; ++cc) {
            int ch = gidx * cpg + cc;
            S gm = gv[size_t(ch)], bt = bv[size_t(ch)];
            const S* xr = xp + size_t(cc) * spatial;
            S* orow = op + size_t(cc) * spatial;
            for (size_t i = 0; i < spatial; ++i)
                orow[i] = gm * S((double(xr[i]) - mu) * is) + bt;
        }
    }
    uint32_t xi = x.id, gi = gamma.id, bi = beta.id;
    return t.make(
        std::move(out), t.wants_grad(x) || t.wants_grad(gamma) || t.wants_grad(beta),
        [xi, gi, bi, groups, cpg, spatial, n, mean = std::move(mean),
         istd = std::move(istd)](Tape<S>& tp, uint32_t self) {
            const Tensor<S>& g = tp.grad(self);
            const Tensor<S>&xv2 = tp.value(xi), &gv2 = tp.value(gi);
            Tensor<S>&gx = tp.grad(xi), &gg = tp.grad(gi), &gb = tp.grad(bi);
            parallel_for(size_t(groups), [&](size_t gidx) {
                const S* xp = xv2.ptr() + gidx * n;
                const S* gp = g.ptr() + gidx * n;
                S* gxp = gx.ptr() + gidx * n;
                double mu = mean[gidx], is = istd[gidx];
                double s1 = 0, s2 = 0;
                for (int cc = 0; cc < cpg; ++cc) {
                    int ch = int(gidx) * cpg + cc;
                    double gm = double(gv2[size_t(ch)]);
                    const S* xr = xp + size_t(cc) * spatial;
                    const S* gr = gp + size_t(cc) * spatial;
                    double dga = 0, dbe = 0;
                    for (size_t i = 0; i < spatial; ++i) {
                        double yh = (double(xr[i]) - mu) * is;
                        double dy = double(gr[i]) * gm;
                        s1 += dy;
                        s2 += dy * yh;
                        dga += double(gr[i]) * yh;
                        dbe += double(gr[i]);
                    }
                    gg[size_t(ch)] += S(dga);
                    gb[size_t(ch)] += S(dbe);
                }
                double m1 = s1 / double(n), m2 = s2 / double(n);
                for (int cc = 0; cc < cpg; ++cc) {
                    int ch = int(gidx) * cpg + cc;
                    double gm = double(gv2[size_t(ch)]);
                    const S* xr = xp + size_t(cc) * spatial;
                    const S* gr = gp + size_t(cc) * spatial;
                    S* gxr = gxp + size_t(cc) * spatial;
                    for (size_t i = 0; i < spatial; ++i) {
                        double yh = (double(xr[i]) - mu) * is;
                        double dy = double(gr[i]) * gm;
                        gxr[i] += S(is * (dy - m1 - yh * m2));
                    }
                }
            });
        });
}

// Per-channel statistics: group_norm with one channel per group.
template <class S>
Var<S> instance_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
    return group_norm(x, x.val().dim(0), gamma, beta, eps);
}

// ---- softmax over the last axis ----

template <class S>
Var<S> softmax_lastdim(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (xv.ndim() < 1) throw internal_error("softmax_lastdim: scalar input");
    int last = xv.dim(xv.ndim() - 1);
    size_t rows = xv.numel() / size_t(last);
    Tensor<S> out(xv.shape);
    for (size_t r = 0; r < rows; ++r) {
        const S* xr = xv.ptr() + r * size_t(last);
        S* orow = out.ptr() + r * size_t(last);
        S mx = xr[0];
        for (int i = 1; i < last; ++i) mx = std::max(mx, xr[i]);
        double sum = 0;
        for (int i = 0; i < last; ++i) {
            double e = std::exp(double(xr[i] - mx));
            orow[i] = S(e);
            sum += e;
        }
        S inv = S(1.0 / sum);
        for (int i = 0; i < last; ++i) orow[i] *= inv;
    }
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi, rows, last](Tape<S>& tp, uint32_t self) {
        const Tensor<S>&g = tp.grad(self), &y = tp.value(self);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t r = 0; r < rows; ++r) {
            const S* gr = g.ptr() + r * size_t(last);
            const S* yr = y.ptr() + r * size_t(last);
            S* gxr = gx.ptr() + r * size_t(last);
            double dot = 0;
            for (int i = 0; i < last; ++i) dot += double(gr[i]) * double(yr[i]);
            for (int i = 0; i < last; ++i) gxr[i] += yr[i] * (gr[i] - S(dot));
        }
    });
}

// ---- reductions ----

template <class S>
Var<S> sum_all(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    double acc = 0;
    for (size_t i = 0; i < xv.numel(); ++i) acc += double(xv[i]);
    uint32_t xi = x.id;
    return t.make(Tensor<S>::scalar(S(acc)), t.wants_grad(x),
                  [xi](Tape<S>& tp, uint32_t self) {
                      S gv = tp.grad(self)[0];
                      Tensor<S>& gx = tp.grad(xi);
                      for (size_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
                  });
}

template <class S>
Var<S> mean_all(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    size_t n = xv.numel();
    double acc = 0;
    for (size_t i = 0; i < n; ++i) acc += double(xv[i]);
    uint32_t xi = x.id;
    return t.make(Tensor<S>::scalar(S(acc / double(n))), t.wants_grad(x),
                  [xi, n](Tape<S>& tp, uint32_t self) {
                      S gv = tp.grad(self)[0] / S(n);
                      Tensor<S>& gx = tp.grad(xi);
                      for (size_t i = 0; i < n; ++i) gx[i] += gv;
                  });
}

// x: [R, C] -> [C], mean over rows.
template <class S>
Var<S> mean_rows(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (xv.ndim() != 2) throw internal_error("mean_rows: expects 2d input");
    int r = xv.dim(0), c = xv.dim(1);
    Tensor<S> out({c});
    std::vector<double> acc(size_t(c), 0.0);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) acc[size_t(j)] += double(xv[size_t(i) * c + j]);
    for (int j = 0; j < c; ++j) out[size_t(j)] = S(acc[size_t(j)] / double(r));
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi, r, c](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& gx = tp.grad(xi);
        S inv = S(1) / S(r);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) gx[size_t(i) * c + j] += g[size_t(j)] * inv;
    });
}

// x: [C, spatial...] -> [C], mean over everything but the channel axis.
template <class S>
Var<S> spatial_mean(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    int c = xv.dim(0);
    size_t rest = xv.numel() / size_t(c);
    Tensor<S> out({c});
    for (int ch = 0; ch < c; ++ch) {
        const S* xr = xv.ptr() + size_t(ch) * rest;
        double acc = 0;
        for (size_t i = 0; i < rest; ++i) acc += double(xr[i]);
        out[size_t(ch)] = S(acc / double(rest));
    }
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi, c, rest](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& gx = tp.grad(xi);
        S inv = S(1) / S(rest);
        for (int ch = 0; ch < c; ++ch) {
            S gv = g[size_t(ch)] * inv;
            S* gxr = gx.ptr() + size_t(ch) * rest;
            for (size_t i = 0; i < rest; ++i) gxr[i] += gv;
        }
    });
}

// ---- shape ops ----

template <class S>
Var<S> reshape(Var<S> x, Shape shape) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (shape_numel(shape) != xv.numel()) throw internal_error("reshape: element count mismatch");
    Tensor<S> out(std::move(shape), xv.data);
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& gx = tp.grad(xi);
        for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
}

template <class S>
Var<S> transpose2d(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (xv.ndim() != 2) throw internal_error("transpose2d: expects 2d input");
    int r = xv.dim(0), c = xv.dim(1);
    Tensor<S> out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[size_t(j) * r + i] = xv[size_t(i) * c + j];
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi, r, c](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& gx = tp.grad(xi);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) gx[size_t(i) * c + j] += g[size_t(j) * r + i];
    });
}

// [A, B, C] -> [B, A, C], swapping the first two axes.
template <class S>
Var<S> transpose_01_3d(Var<S> x) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (xv.ndim() != 3) throw internal_error("transpose_01_3d: expects 3d input");
    int a = xv.dim(0), b = xv.dim(1), c = xv.dim(2);
    Tensor<S> out({b, a, c});
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j) {
            const S* src = xv.ptr() + (size_t(i) * b + j) * c;
            S* dst = out.ptr() + (size_t(j) * a + i) * c;
            std::copy(src, src + c, dst);
        }
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi, a, b, c](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& gx = tp.grad(xi);
        for (int i = 0; i < a; ++i)
            for (int j = 0; j < b; ++j) {
                const S* src = g.ptr() + (size_t(j) * a + i) * c;
                S* dst = gx.ptr() + (size_t(i) * b + j) * c;
                for (int kk = 0; kk < c; ++kk) dst[kk] += src[kk];
            }
    });
}

// Rows [begin, end) of a 2d tensor.
template <class S>
Var<S> slice_rows(Var<S> x, int begin, int end) {
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    if (xv.ndim() != 2 || begin < 0 || end > xv.dim(0) || begin >= end)
        throw internal_error("slice_rows: bad range");
    int c = xv.dim(1), rows = end - begin;
    Tensor<S> out({rows, c});
    std::copy(xv.ptr() + size_t(begin) * c, xv.ptr() + size_t(end) * c, out.ptr());
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x), [xi, begin, rows, c](Tape<S>& tp, uint32_t self) {
        const Tensor<S>& g = tp.grad(self);
        Tensor<S>& gx = tp.grad(xi);
        S* dst = gx.ptr() + size_t(begin) * c;
        for (size_t i = 0; i < size_t(rows) * c; ++i) dst[i] += g[i];
    });
}

// ---- concatenation ----

// xs: [R_i, C] stacked into [sum R_i, C].
template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& xs) {
    if (xs.empty()) throw internal_error("concat_rows: no inputs");
    Tape<S>& t = *xs[0].tape;
    int c = xs[0].val().dim(1);
    int rows = 0;
    bool rg = false;
    for (const auto& x : xs) {
        if (x.tape != &t || x.val().ndim() != 2 || x.val().dim(1) != c)
            throw internal_error("concat_rows: shape mismatch");
        rows += x.val().dim(0);
        rg = rg || t.wants_grad(x);
    }
    Tensor<S> out({rows, c});
    std::vector<uint32_t> ids;
    std::vector<int> offsets;
    int at = 0;
    for (const auto& x : xs) {
        const Tensor<S>& xv = x.val();
        std::copy(xv.ptr(), xv.ptr() + xv.numel(), out.ptr() + size_t(at) * c);
        ids.push_back(x.id);
        offsets.push_back(at);
        at += xv.dim(0);
    }
    return t.make(std::move(out), rg,
                  [ids = std::move(ids), offsets = std::move(offsets), c](Tape<S>& tp,
                                                                          uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      for (size_t k = 0; k < ids.size(); ++k) {
                          Tensor<S>& gx = tp.grad(ids[k]);
                          const S* src = g.ptr() + size_t(offsets[k]) * c;
                          for (size_t i = 0; i < gx.numel(); ++i) gx[i] += src[i];
                      }
                  });
}

// xs: [R, C_i] side by side into [R, sum C_i].
template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& xs) {
    if (xs.empty()) throw internal_error("concat_cols: no inputs");
    Tape<S>& t = *xs[0].tape;
    int r = xs[0].val().dim(0);
    int cols = 0;
    bool rg = false;
    for (const auto& x : xs) {
        if (x.tape != &t || x.val().ndim() != 2 || x.val().dim(0) != r)
            throw internal_error("concat_cols: shape mismatch");
        cols += x.val().dim(1);
        rg = rg || t.wants_grad(x);
    }
    Tensor<S> out({r, cols});
    std::vector<uint32_t> ids;
    std::vector<int> offsets, widths;
    int at = 0;
    for (const auto& x : xs) {
        const Tensor<S>& xv = x.val();
        int c = xv.dim(1);
        for (int i = 0; i < r; ++i)
            std::copy(xv.ptr() + size_t(i) * c, xv.ptr() + size_t(i + 1) * c,
                      out.ptr() + size_t(i) * cols + at);
        ids.push_back(x.id);
        offsets.push_back(at);
        widths.push_back(c);
        at += c;
    }
    return t.make(std::move(out), rg,
                  [ids = std::move(ids), offsets = std::move(offsets), widths = std::move(widths),
                   r, cols](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      for (size_t k = 0; k < ids.size(); ++k) {
                          Tensor<S>& gx = tp.grad(ids[k]);
                          int c = widths[k], off = offsets[k];
                          for (int i = 0; i < r; ++i) {
                              const S* src = g.ptr() + size_t(i) * cols + off;
                              S* dst = gx.ptr() + size_t(i) * c;
                              for (int j = 0; j < c; ++j) dst[j] += src[j];
                          }
                      }
                  });
}

// ---- bilinear plane sampling ----

// plane: [C, R, R]; coords: [K, 2] in [-1, 1], clamped to the border.
// Returns [K, C]. Differentiable with respect to the plane only; the
// coordinates are a fixed input.
template <class S>
Var<S> grid_sample_plane(Var<S> plane, Tensor<S> coords) {
    Tape<S>& t = *plane.tape;
    const Tensor<S>& pv = plane.val();
    if (pv.ndim() != 3 || pv.dim(1) != pv.dim(2))
        throw internal_error("grid_sample_plane: plane must be [C, R, R]");
    if (coords.ndim() != 2 || coords.dim(1) != 2)
        throw internal_error("grid_sample_plane: coords must be [K, 2]");
    int c = pv.dim(0), r = pv.dim(1), k = coords.dim(0);
    Tensor<S> out({k, c});
    kern::grid_sample_omp(pv.ptr(), coords.ptr(), out.ptr(), k, c, r);
    uint32_t pi = plane.id;
    return t.make(std::move(out), t.wants_grad(plane),
                  [pi, c, r, k, coords = std::move(coords)](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>& gp = tp.grad(pi);
                      kern::grid_sample_back_omp(coords.ptr(), g.ptr(), gp.ptr(), k, c, r);
                  });
}

// ---- dropout (inverted scaling) ----

template <class S>
Var<S> dropout(Var<S> x, double p, Rng& rng, bool train) {
    if (!train || p <= 0.0) return x;
    if (p >= 1.0) throw internal_error("dropout: rate must be below 1");
    Tape<S>& t = *x.tape;
    const Tensor<S>& xv = x.val();
    S keep_scale = S(1.0 / (1.0 - p));
    Tensor<S> mask(xv.shape);
    for (size_t i = 0; i < mask.numel(); ++i)
        mask[i] = rng.uniform() < p ? S(0) : keep_scale;
    Tensor<S> out(xv.shape);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * mask[i];
    uint32_t xi = x.id;
    return t.make(std::move(out), t.wants_grad(x),
                  [xi, mask = std::move(mask)](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      Tensor<S>& gx = tp.grad(xi);
                      for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * mask[i];
                  });
}

// x: [C, rest...], s: [C]; scales channel c by s[c].
template <class S>
Var<S> channel_scale(Var<S> x, Var<S> s) {
    Tape<S>& t = detail::same_tape(x, s, "channel_scale");
    const Tensor<S>&xv = x.val(), &sv = s.val();
    int c = xv.dim(0);
    if (sv.numel() != size_t(c)) throw internal_error("channel_scale: scale size mismatch");
    size_t rest = xv.numel() / size_t(c);
    Tensor<S> out(xv.shape);
    for (int ch = 0; ch < c; ++ch) {
        S sc = sv[size_t(ch)];
        const S* xr = xv.ptr() + size_t(ch) * rest;
        S* orow = out.ptr() + size_t(ch) * rest;
        for (size_t i = 0; i < rest; ++i) orow[i] = xr[i] * sc;
    }
    uint32_t xi = x.id, si = s.id;
    return t.make(std::move(out), t.wants_grad(x) || t.wants_grad(s),
                  [xi, si, c, rest](Tape<S>& tp, uint32_t self) {
                      const Tensor<S>& g = tp.grad(self);
                      const Tensor<S>&xv2 = tp.value(xi), &sv2 = tp.value(si);
                      Tensor<S>&gx = tp.grad(xi), &gs = tp.grad(si);
                      for (int ch = 0; ch < c; ++ch) {
                          S sc = sv2[size_t(ch)];
                          const S* gr = g.ptr() + size_t(ch) * rest;
                          const S* xr = xv2.ptr() + size_t(ch) * rest;
                          S* gxr = gx.ptr() + size_t(ch) * rest;
                          double acc = 0;
                          for (size_t i = 0; i < rest; ++i) {
                              gxr[i] += gr[i] * sc;
                              acc += double(gr[i]) * double(xr[i]);
                          }
                          gs[size_t(ch)] += S(acc);
                      }
                  });
}

}  // namespace trip::ad
