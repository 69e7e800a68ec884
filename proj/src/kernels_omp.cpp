// OpenMP kernels. Work is split at whole-output-scalar granularity and every
// item calls the same per-item body as the serial reference, so results are
// bit-identical for any thread count.

#include <omp.h>

#include "amc/kernels.hpp"
#include "kernels_detail.hpp"

namespace amc::tensornet::kern {

template <typename T>
void conv1d_fwd_omp(const T* x, const T* w, const T* bias, int batch, int ci,
                    int co, int n, int k, int pad, size_t xbs, size_t ybs,
                    T alpha, bool accumulate, T* y) {
  #pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < batch; ++b)
    for (int oc = 0; oc < co; ++oc)
      detail::conv_fwd_row(x + b * xbs, w + size_t(oc) * ci * k,
                           bias ? bias + oc : nullptr, ci, n, k, pad, alpha,
                           accumulate, y + b * ybs + size_t(oc) * n);
}

template <typename T>
void conv1d_xgrad_omp(const T* dy, const T* w, int batch, int ci, int co,
                      int n, int k, int pad, size_t dybs, size_t dxbs,
                      T alpha, bool accumulate, T* dx) {
  #pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < batch; ++b)
    for (int ic = 0; ic < ci; ++ic)
      detail::conv_xgrad_row(dy + b * dybs, w, ci, co, ic, n, k, pad, alpha,
                             accumulate, dx + b * dxbs + size_t(ic) * n);
}

template <typename T>
void conv1d_wgrad_omp(const T* x, const T* dy, int batch, int ci, int co,
                      int n, int k, int pad, size_t xbs, size_t dybs, T alpha,
                      bool accumulate, T* dw, T* db) {
  #pragma omp parallel for schedule(static)
  for (int oc = 0; oc < co; ++oc)
    detail::conv_wgrad_slice(x, dy, batch, ci, n, k, pad, xbs, dybs, oc, alpha,
                             accumulate, dw + size_t(oc) * ci * k,
                             db ? db + oc : nullptr);
}

template <typename T>
void dense_fwd_omp(const T* x, const T* w, const T* bias, int batch, int fin,
                   int fout, T* y) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    detail::dense_fwd_ex(x + size_t(b) * fin, w, bias, fin, fout,
                         y + size_t(b) * fout);
}

template <typename T>
void dense_xgrad_omp(const T* dy, const T* w, int batch, int fin, int fout,
                     bool accumulate, T* dx) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    detail::dense_xgrad_ex(dy + size_t(b) * fout, w, fin, fout, accumulate,
                           dx + size_t(b) * fin);
}

template <typename T>
void dense_wgrad_omp(const T* x, const T* dy, int batch, int fin, int fout,
                     T* dw, T* db) {
  #pragma omp parallel for schedule(static)
  for (int o = 0; o < fout; ++o)
    detail::dense_wgrad_row(x, dy, batch, fin, fout, o, dw + size_t(o) * fin,
                            db ? db + o : nullptr);
}

template <typename T>
void bn_stats_omp(const T* x, int batch, int c, int n, T* mean, T* var) {
  #pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch)
    detail::bn_stats_ch(x, batch, c, n, ch, mean + ch, var + ch);
}

template <typename T>
void bn_fwd_omp(const T* x, const T* mean, const T* var, const T* gamma,
                const T* beta, int batch, int c, int n, T eps, T* y) {
  #pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch)
    detail::bn_fwd_ch(x, mean[ch], var[ch], gamma[ch], beta[ch], batch, c, n,
                      ch, eps, y);
}

template <typename T>
void bn_bwd_train_omp(const T* x, const T* dy, const T* mean, const T* var,
                      const T* gamma, int batch, int c, int n, T eps, T* dx,
                      T* dgamma, T* dbeta) {
  #pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch)
    detail::bn_bwd_train_ch(x, dy, mean[ch], var[ch], gamma[ch], batch, c, n,
                            ch, eps, dx, dgamma + ch, dbeta + ch);
}

template <typename T>
void bn_bwd_infer_omp(const T* x, const T* dy, const T* mean, const T* var,
                      const T* gamma, int batch, int c, int n, T eps, T* dx,
                      T* dgamma, T* dbeta) {
  #pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch)
    detail::bn_bwd_infer_ch(x, dy, mean[ch], var[ch], gamma[ch], batch, c, n,
                            ch, eps, dx, dgamma + ch, dbeta + ch);
}

template <typename T>
void relu_fwd_omp(const T* x, size_t len, T* y) {
  #pragma omp parallel for schedule(static)
  for (size_t i = 0; i < len; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd_omp(const T* x, const T* dy, size_t len, bool accumulate,
                  T* dx) {
  if (accumulate) {
    #pragma omp parallel for schedule(static)
    for (size_t i = 0; i < len; ++i) dx[i] += x[i] > T(0) ? dy[i] : T(0);
  } else {
    #pragma omp parallel for schedule(static)
    for (size_t i = 0; i < len; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  }
}

template <typename T>
void add_omp(const T* a, const T* b, size_t len, T* y) {
  #pragma omp parallel for schedule(static)
  for (size_t i = 0; i < len; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void axpy_omp(const T* src, size_t len, T alpha, bool accumulate, T* dst) {
  if (accumulate) {
    #pragma omp parallel for schedule(static)
    for (size_t i = 0; i < len; ++i) dst[i] += alpha * src[i];
  } else {
    #pragma omp parallel for schedule(static)
    for (size_t i = 0; i < len; ++i) dst[i] = alpha * src[i];
  }
}

template <typename T>
void gap_fwd_omp(const T* x, int batch, int c, int n, T* y) {
  #pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < batch; ++b)
    for (int ch = 0; ch < c; ++ch)
      detail::gap_fwd_bc(x + (size_t(b) * c + ch) * n, n,
                         y + size_t(b) * c + ch);
}

template <typename T>
void gap_bwd_omp(const T* dy, int batch, int c, int n, bool accumulate,
                 T* dx) {
  #pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < batch; ++b)
    for (int ch = 0; ch < c; ++ch) {
      T g = dy[size_t(b) * c + ch] / T(n);
      T* dxr = dx + (size_t(b) * c + ch) * n;
      if (accumulate)
        for (int m = 0; m < n; ++m) dxr[m] += g;
      else
        for (int m = 0; m < n; ++m) dxr[m] = g;
    }
}

template <typename T>
void rnn_fwd_step_omp(const T* x, const T* wx, const T* wh, const T* bias,
                      int batch, int cin, int hidden, int tlen, int t, T* h) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    detail::rnn_fwd_ex_step(x + size_t(b) * cin * tlen, wx, wh, bias, cin,
                            hidden, tlen, t, h + size_t(b) * hidden * tlen);
}

template <typename T>
void rnn_bwd_step_omp(const T* h, const T* wh, int batch, int hidden, int tlen,
                      int t, const T* dh_t, T* dpre, T* dh_prev) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    detail::rnn_bwd_ex_step(h + size_t(b) * hidden * tlen, wh, hidden, tlen, t,
                            dh_t + size_t(b) * hidden,
                            dpre + size_t(b) * hidden * tlen,
                            dh_prev + size_t(b) * hidden);
}

template <typename T>
void rnn_wgrad_omp(const T* x, const T* h, const T* dpre, int batch, int cin,
                   int hidden, int tlen, T* dwx, T* dwh, T* db) {
  #pragma omp parallel for schedule(static)
  for (int i = 0; i < hidden; ++i)
    detail::rnn_wgrad_row(x, h, dpre, batch, cin, hidden, tlen, i,
                          dwx + size_t(i) * cin, dwh + size_t(i) * hidden,
                          db + i);
}

template <typename T>
void rnn_xgrad_omp(const T* dpre, const T* wx, int batch, int cin, int hidden,
                   int tlen, bool accumulate, T* dx) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    detail::rnn_xgrad_ex(dpre + size_t(b) * hidden * tlen, wx, cin, hidden,
                         tlen, accumulate, dx + size_t(b) * cin * tlen);
}

template <typename T>
void softmax_fwd_omp(const T* x, int batch, int m, T* y) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    detail::softmax_row(x + size_t(b) * m, m, y + size_t(b) * m);
}

template <typename T>
void softmax_bwd_omp(const T* y, const T* dy, int batch, int m,
                     bool accumulate, T* dx) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b)
    detail::softmax_bwd_row(y + size_t(b) * m, dy + size_t(b) * m, m,
                            accumulate, dx + size_t(b) * m);
}

#define AMC_INSTANTIATE_OMP(T)                                                 \
  template void conv1d_fwd_omp<T>(const T*, const T*, const T*, int, int,     \
                                  int, int, int, int, size_t, size_t, T,      \
                                  bool, T*);                                  \
  template void conv1d_xgrad_omp<T>(const T*, const T*, int, int, int, int,   \
                                    int, int, size_t, size_t, T, bool, T*);   \
  template void conv1d_wgrad_omp<T>(const T*, const T*, int, int, int, int,   \
                                    int, int, size_t, size_t, T, bool, T*,    \
                                    T*);                                      \
  template void dense_fwd_omp<T>(const T*, const T*, const T*, int, int, int, \
                                 T*);                                         \
  template void dense_xgrad_omp<T>(const T*, const T*, int, int, int, bool,   \
                                   T*);                                       \
  template void dense_wgrad_omp<T>(const T*, const T*, int, int, int, T*,     \
                                   T*);                                       \
  template void bn_stats_omp<T>(const T*, int, int, int, T*, T*);             \
  template void bn_fwd_omp<T>(const T*, const T*, const T*, const T*,         \
                              const T*, int, int, int, T, T*);                \
  template void bn_bwd_train_omp<T>(const T*, const T*, const T*, const T*,   \
                                    const T*, int, int, int, T, T*, T*, T*);  \
  template void bn_bwd_infer_omp<T>(const T*, const T*, const T*, const T*,   \
                                    const T*, int, int, int, T, T*, T*, T*);  \
  template void relu_fwd_omp<T>(const T*, size_t, T*);                        \
  template void relu_bwd_omp<T>(const T*, const T*, size_t, bool, T*);        \
  template void add_omp<T>(const T*, const T*, size_t, T*);                   \
  template void axpy_omp<T>(const T*, size_t, T, bool, T*);                   \
  template void gap_fwd_omp<T>(const T*, int, int, int, T*);                  \
  template void gap_bwd_omp<T>(const T*, int, int, int, bool, T*);            \
  template void rnn_fwd_step_omp<T>(const T*, const T*, const T*, const T*,   \
                                    int, int, int, int, int, T*);             \
  template void rnn_bwd_step_omp<T>(const T*, const T*, int, int, int, int,   \
                                    const T*, T*, T*);                        \
  template void rnn_wgrad_omp<T>(const T*, const T*, const T*, int, int, int, \
                                 int, T*, T*, T*);                            \
  template void rnn_xgrad_omp<T>(const T*, const T*, int, int, int, int,      \
                                 bool, T*);                                   \
  template void softmax_fwd_omp<T>(const T*, int, int, T*);                   \
  template void softmax_bwd_omp<T>(const T*, const T*, int, int, bool, T*);

AMC_INSTANTIATE_OMP(float)
AMC_INSTANTIATE_OMP(double)

}  // namespace amc::tensornet::kern
