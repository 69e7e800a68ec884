#pragma once

#include <omp.h>

#include <cstddef>

namespace amc::tensornet::kern {

// Runtime switch between the OpenMP kernels and the serial reference
// implementation. Both produce bit-identical results: the parallel variants
// split work at whole-output-scalar granularity, so every floating-point
// reduction runs in the same order as the serial code.
bool parallel_enabled();
void set_parallel(bool on);

inline bool use_omp() {
  return parallel_enabled() && omp_get_max_threads() > 1 && !omp_in_parallel();
}

// ---- conv1d ----------------------------------------------------------------
// x: batch of ci x n blocks at stride xbs; w: co x ci x k; y: co x n blocks at
// stride ybs. Stride-1 convolution with zero padding `pad`. alpha scales the
// contribution; accumulate keeps existing y contents (bias is only applied
// when not accumulating, and may be null).

template <typename T>
void conv1d_fwd_serial(const T* x, const T* w, const T* bias, int batch,
                       int ci, int co, int n, int k, int pad,
                       size_t xbs, size_t ybs, T alpha, bool accumulate, T* y);
template <typename T>
void conv1d_fwd_omp(const T* x, const T* w, const T* bias, int batch,
                    int ci, int co, int n, int k, int pad,
                    size_t xbs, size_t ybs, T alpha, bool accumulate, T* y);

template <typename T>
void conv1d_xgrad_serial(const T* dy, const T* w, int batch, int ci, int co,
                         int n, int k, int pad, size_t dybs, size_t dxbs,
                         T alpha, bool accumulate, T* dx);
template <typename T>
void conv1d_xgrad_omp(const T* dy, const T* w, int batch, int ci, int co,
                      int n, int k, int pad, size_t dybs, size_t dxbs,
                      T alpha, bool accumulate, T* dx);

template <typename T>
void conv1d_wgrad_serial(const T* x, const T* dy, int batch, int ci, int co,
                         int n, int k, int pad, size_t xbs, size_t dybs,
                         T alpha, bool accumulate, T* dw, T* db);
template <typename T>
void conv1d_wgrad_omp(const T* x, const T* dy, int batch, int ci, int co,
                      int n, int k, int pad, size_t xbs, size_t dybs,
                      T alpha, bool accumulate, T* dw, T* db);

// ---- dense -----------------------------------------------------------------
// x: batch x fin; w: fout x fin; y: batch x fout.

template <typename T>
void dense_fwd_serial(const T* x, const T* w, const T* bias, int batch,
                      int fin, int fout, T* y);
template <typename T>
void dense_fwd_omp(const T* x, const T* w, const T* bias, int batch, int fin,
                   int fout, T* y);

template <typename T>
void dense_xgrad_serial(const T* dy, const T* w, int batch, int fin, int fout,
                        bool accumulate, T* dx);
template <typename T>
void dense_xgrad_omp(const T* dy, const T* w, int batch, int fin, int fout,
                     bool accumulate, T* dx);

template <typename T>
void dense_wgrad_serial(const T* x, const T* dy, int batch, int fin, int fout,
                        T* dw, T* db);
template <typename T>
void dense_wgrad_omp(const T* x, const T* dy, int batch, int fin, int fout,
                     T* dw, T* db);

// ---- batchnorm -------------------------------------------------------------
// Tensors are batch x c x n. Statistics are per channel over (batch, n).

template <typename T>
void bn_stats_serial(const T* x, int batch, int c, int n, T* mean, T* var);
template <typename T>
void bn_stats_omp(const T* x, int batch, int c, int n, T* mean, T* var);

template <typename T>
void bn_fwd_serial(const T* x, const T* mean, const T* var, const T* gamma,
                   const T* beta, int batch, int c, int n, T eps, T* y);
template <typename T>
void bn_fwd_omp(const T* x, const T* mean, const T* var, const T* gamma,
                const T* beta, int batch, int c, int n, T eps, T* y);

// Backward through batch statistics (training mode).
template <typename T>
void bn_bwd_train_serial(const T* x, const T* dy, const T* mean, const T* var,
                         const T* gamma, int batch, int c, int n, T eps,
                         T* dx, T* dgamma, T* dbeta);
template <typename T>
void bn_bwd_train_omp(const T* x, const T* dy, const T* mean, const T* var,
                      const T* gamma, int batch, int c, int n, T eps,
                      T* dx, T* dgamma, T* dbeta);

// Backward treating mean/var as constants (inference mode).
template <typename T>
void bn_bwd_infer_serial(const T* x, const T* dy, const T* mean, const T* var,
                         const T* gamma, int batch, int c, int n, T eps,
                         T* dx, T* dgamma, T* dbeta);
template <typename T>
void bn_bwd_infer_omp(const T* x, const T* dy, const T* mean, const T* var,
                      const T* gamma, int batch, int c, int n, T eps,
                      T* dx, T* dgamma, T* dbeta);

// ---- elementwise -----------------------------------------------------------

template <typename T>
void relu_fwd_serial(const T* x, size_t len, T* y);
template <typename T>
void relu_fwd_omp(const T* x, size_t len, T* y);

template <typename T>
void relu_bwd_serial(const T* x, const T* dy, size_t len, bool accumulate,
                     T* dx);
template <typename T>
void relu_bwd_omp(const T* x, const T* dy, size_t len, bool accumulate, T* dx);

template <typename T>
void add_serial(const T* a, const T* b, size_t len, T* y);
template <typename T>
void add_omp(const T* a, const T* b, size_t len, T* y);

template <typename T>
void axpy_serial(const T* src, size_t len, T alpha, bool accumulate, T* dst);
template <typename T>
void axpy_omp(const T* src, size_t len, T alpha, bool accumulate, T* dst);

// ---- global average pool ---------------------------------------------------

template <typename T>
void gap_fwd_serial(const T* x, int batch, int c, int n, T* y);
template <typename T>
void gap_fwd_omp(const T* x, int batch, int c, int n, T* y);

template <typename T>
void gap_bwd_serial(const T* dy, int batch, int c, int n, bool accumulate,
                    T* dx);
template <typename T>
void gap_bwd_omp(const T* dy, int batch, int c, int n, bool accumulate, T* dx);

// ---- simple recurrent ------------------------------------------------------
// x: batch x cin x tlen; h: batch x hidden x tlen;
// h[:, :, t] = tanh(wx x[:, :, t] + wh h[:, :, t-1] + b), h[:, :, -1] = 0.

template <typename T>
void rnn_fwd_step_serial(const T* x, const T* wx, const T* wh, const T* bias,
                         int batch, int cin, int hidden, int tlen, int t,
                         T* h);
template <typename T>
void rnn_fwd_step_omp(const T* x, const T* wx, const T* wh, const T* bias,
                      int batch, int cin, int hidden, int tlen, int t, T* h);

// One time step of backprop-through-time: consumes dh (grad on h[:, :, t],
// already including the recurrent contribution), emits dpre[:, :, t] and the
// additive contribution to dh[:, :, t-1].
template <typename T>
void rnn_bwd_step_serial(const T* h, const T* wh, int batch, int hidden,
                         int tlen, int t, const T* dh_t, T* dpre, T* dh_prev);
template <typename T>
void rnn_bwd_step_omp(const T* h, const T* wh, int batch, int hidden,
                      int tlen, int t, const T* dh_t, T* dpre, T* dh_prev);

// Parameter gradients given the full dpre trace.
template <typename T>
void rnn_wgrad_serial(const T* x, const T* h, const T* dpre, int batch,
                      int cin, int hidden, int tlen, T* dwx, T* dwh, T* db);
template <typename T>
void rnn_wgrad_omp(const T* x, const T* h, const T* dpre, int batch, int cin,
                   int hidden, int tlen, T* dwx, T* dwh, T* db);

// dx[:, :, t] = wx^T dpre[:, :, t] for all t.
template <typename T>
void rnn_xgrad_serial(const T* dpre, const T* wx, int batch, int cin,
                      int hidden, int tlen, bool accumulate, T* dx);
template <typename T>
void rnn_xgrad_omp(const T* dpre, const T* wx, int batch, int cin, int hidden,
                   int tlen, bool accumulate, T* dx);

// ---- softmax ---------------------------------------------------------------
// Row softmax over the feature axis: x, y are batch x m.

template <typename T>
void softmax_fwd_serial(const T* x, int batch, int m, T* y);
template <typename T>
void softmax_fwd_omp(const T* x, int batch, int m, T* y);

template <typename T>
void softmax_bwd_serial(const T* y, const T* dy, int batch, int m,
                        bool accumulate, T* dx);
template <typename T>
void softmax_bwd_omp(const T* y, const T* dy, int batch, int m,
                     bool accumulate, T* dx);

// ---- dispatchers -----------------------------------------------------------

template <typename T>
inline void conv1d_fwd(const T* x, const T* w, const T* bias, int batch,
                       int ci, int co, int n, int k, int pad, size_t xbs,
                       size_t ybs, T alpha, bool accumulate, T* y) {
  if (use_omp())
    conv1d_fwd_omp(x, w, bias, batch, ci, co, n, k, pad, xbs, ybs, alpha,
                   accumulate, y);
  else
    conv1d_fwd_serial(x, w, bias, batch, ci, co, n, k, pad, xbs, ybs, alpha,
                      accumulate, y);
}

template <typename T>
inline void conv1d_xgrad(const T* dy, const T* w, int batch, int ci, int co,
                         int n, int k, int pad, size_t dybs, size_t dxbs,
                         T alpha, bool accumulate, T* dx) {
  if (use_omp())
    conv1d_xgrad_omp(dy, w, batch, ci, co, n, k, pad, dybs, dxbs, alpha,
                     accumulate, dx);
  else
    conv1d_xgrad_serial(dy, w, batch, ci, co, n, k, pad, dybs, dxbs, alpha,
                        accumulate, dx);
}

template <typename T>
inline void conv1d_wgrad(const T* x, const T* dy, int batch, int ci, int co,
                         int n, int k, int pad, size_t xbs, size_t dybs,
                         T alpha, bool accumulate, T* dw, T* db) {
  if (use_omp())
    conv1d_wgrad_omp(x, dy, batch, ci, co, n, k, pad, xbs, dybs, alpha,
                     accumulate, dw, db);
  else
    conv1d_wgrad_serial(x, dy, batch, ci, co, n, k, pad, xbs, dybs, alpha,
                        accumulate, dw, db);
}

template <typename T>
inline void dense_fwd(const T* x, const T* w, const T* bias, int batch,
                      int fin, int fout, T* y) {
  if (use_omp())
    dense_fwd_omp(x, w, bias, batch, fin, fout, y);
  else
    dense_fwd_serial(x, w, bias, batch, fin, fout, y);
}

template <typename T>
inline void dense_xgrad(const T* dy, const T* w, int batch, int fin, int fout,
                        bool accumulate, T* dx) {
  if (use_omp())
    dense_xgrad_omp(dy, w, batch, fin, fout, accumulate, dx);
  else
    dense_xgrad_serial(dy, w, batch, fin, fout, accumulate, dx);
}

template <typename T>
inline void dense_wgrad(const T* x, const T* dy, int batch, int fin, int fout,
                        T* dw, T* db) {
  if (use_omp())
    dense_wgrad_omp(x, dy, batch, fin, fout, dw, db);
  else
    dense_wgrad_serial(x, dy, batch, fin, fout, dw, db);
}

template <typename T>
inline void bn_stats(const T* x, int batch, int c, int n, T* mean, T* var) {
  if (use_omp())
    bn_stats_omp(x, batch, c, n, mean, var);
  else
    bn_stats_serial(x, batch, c, n, mean, var);
}

template <typename T>
inline void bn_fwd(const T* x, const T* mean, const T* var, const T* gamma,
                   const T* beta, int batch, int c, int n, T eps, T* y) {
  if (use_omp())
    bn_fwd_omp(x, mean, var, gamma, beta, batch, c, n, eps, y);
  else
    bn_fwd_serial(x, mean, var, gamma, beta, batch, c, n, eps, y);
}

template <typename T>
inline void bn_bwd_train(const T* x, const T* dy, const T* mean, const T* var,
                         const T* gamma, int batch, int c, int n, T eps,
                         T* dx, T* dgamma, T* dbeta) {
  if (use_omp())
    bn_bwd_train_omp(x, dy, mean, var, gamma, batch, c, n, eps, dx, dgamma,
                     dbeta);
  else
    bn_bwd_train_serial(x, dy, mean, var, gamma, batch, c, n, eps, dx, dgamma,
                        dbeta);
}

template <typename T>
inline void bn_bwd_infer(const T* x, const T* dy, const T* mean, const T* var,
                         const T* gamma, int batch, int c, int n, T eps,
                         T* dx, T* dgamma, T* dbeta) {
  if (use_omp())
    bn_bwd_infer_omp(x, dy, mean, var, gamma, batch, c, n, eps, dx, dgamma,
                     dbeta);
  else
    bn_bwd_infer_serial(x, dy, mean, var, gamma, batch, c, n, eps, dx, dgamma,
                        dbeta);
}

template <typename T>
inline void relu_fwd(const T* x, size_t len, T* y) {
  if (use_omp())
    relu_fwd_omp(x, len, y);
  else
    relu_fwd_serial(x, len, y);
}

template <typename T>
inline void relu_bwd(const T* x, const T* dy, size_t len, bool accumulate,
                     T* dx) {
  if (use_omp())
    relu_bwd_omp(x, dy, len, accumulate, dx);
  else
    relu_bwd_serial(x, dy, len, accumulate, dx);
}

template <typename T>
inline void add(const T* a, const T* b, size_t len, T* y) {
  if (use_omp())
    add_omp(a, b, len, y);
  else
    add_serial(a, b, len, y);
}

template <typename T>
inline void axpy(const T* src, size_t len, T alpha, bool accumulate, T* dst) {
  if (use_omp())
    axpy_omp(src, len, alpha, accumulate, dst);
  else
    axpy_serial(src, len, alpha, accumulate, dst);
}

template <typename T>
inline void gap_fwd(const T* x, int batch, int c, int n, T* y) {
  if (use_omp())
    gap_fwd_omp(x, batch, c, n, y);
  else
    gap_fwd_serial(x, batch, c, n, y);
}

template <typename T>
inline void gap_bwd(const T* dy, int batch, int c, int n, bool accumulate,
                    T* dx) {
  if (use_omp())
    gap_bwd_omp(dy, batch, c, n, accumulate, dx);
  else
    gap_bwd_serial(dy, batch, c, n, accumulate, dx);
}

template <typename T>
inline void rnn_fwd_step(const T* x, const T* wx, const T* wh, const T* bias,
                         int batch, int cin, int hidden, int tlen, int t,
                         T* h) {
  if (use_omp())
    rnn_fwd_step_omp(x, wx, wh, bias, batch, cin, hidden, tlen, t, h);
  else
    rnn_fwd_step_serial(x, wx, wh, bias, batch, cin, hidden, tlen, t, h);
}

template <typename T>
inline void rnn_bwd_step(const T* h, const T* wh, int batch, int hidden,
                         int tlen, int t, const T* dh_t, T* dpre, T* dh_prev) {
  if (use_omp())
    rnn_bwd_step_omp(h, wh, batch, hidden, tlen, t, dh_t, dpre, dh_prev);
  else
    rnn_bwd_step_serial(h, wh, batch, hidden, tlen, t, dh_t, dpre, dh_prev);
}

template <typename T>
inline void rnn_wgrad(const T* x, const T* h, const T* dpre, int batch,
                      int cin, int hidden, int tlen, T* dwx, T* dwh, T* db) {
  if (use_omp())
    rnn_wgrad_omp(x, h, dpre, batch, cin, hidden, tlen, dwx, dwh, db);
  else
    rnn_wgrad_serial(x, h, dpre, batch, cin, hidden, tlen, dwx, dwh, db);
}

template <typename T>
inline void rnn_xgrad(const T* dpre, const T* wx, int batch, int cin,
                      int hidden, int tlen, bool accumulate, T* dx) {
  if (use_omp())
    rnn_xgrad_omp(dpre, wx, batch, cin, hidden, tlen, accumulate, dx);
  else
    rnn_xgrad_serial(dpre, wx, batch, cin, hidden, tlen, accumulate, dx);
}

template <typename T>
inline void softmax_fwd(const T* x, int batch, int m, T* y) {
  if (use_omp())
    softmax_fwd_omp(x, batch, m, y);
  else
    softmax_fwd_serial(x, batch, m, y);
}

template <typename T>
inline void softmax_bwd(const T* y, const T* dy, int batch, int m,
                        bool accumulate, T* dx) {
  if (use_omp())
    softmax_bwd_omp(y, dy, batch, m, accumulate, dx);
  else
    softmax_bwd_serial(y, dy, batch, m, accumulate, dx);
}

}  // namespace amc::tensornet::kern
