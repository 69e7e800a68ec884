#pragma once

// Per-item kernel bodies shared by the serial reference and the OpenMP
// variants. Each function computes a complete output scalar/row/channel, so
// the surrounding loop structure (serial or parallel) cannot change any
// floating-point accumulation order. Kept noinline so both paths execute the
// same machine code.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace amc::tensornet::kern::detail {

#define AMC_NOINLINE __attribute__((noinline))

// One (example, out-channel) row of conv1d forward.
template <typename T>
AMC_NOINLINE inline void conv_fwd_row(const T* x, const T* w_oc, const T* bias,
                                      int ci, int n, int k, int pad, T alpha,
                                      bool accumulate, T* y) {
  if (!accumulate) {
    T b0 = bias ? *bias : T(0);
    for (int m = 0; m < n; ++m) y[m] = b0;
  }
  for (int ic = 0; ic < ci; ++ic) {
    const T* xr = x + size_t(ic) * n;
    for (int kk = 0; kk < k; ++kk) {
      T wv = alpha * w_oc[size_t(ic) * k + kk];
      int shift = kk - pad;
      int mlo = std::max(0, -shift);
      int mhi = std::min(n, n - shift);
      for (int m = mlo; m < mhi; ++m) y[m] += wv * xr[m + shift];
    }
  }
}

// One (example, in-channel) row of conv1d input gradient.
template <typename T>
AMC_NOINLINE inline void conv_xgrad_row(const T* dy, const T* w, int ci,
                                        int co, int ic, int n, int k, int pad,
                                        T alpha, bool accumulate, T* dx) {
  if (!accumulate)
    for (int m = 0; m < n; ++m) dx[m] = T(0);
  for (int oc = 0; oc < co; ++oc) {
    const T* dyr = dy + size_t(oc) * n;
    for (int kk = 0; kk < k; ++kk) {
      T wv = alpha * w[(size_t(oc) * ci + ic) * k + kk];
      int shift = pad - kk;
      int mlo = std::max(0, -shift);
      int mhi = std::min(n, n - shift);
      for (int m = mlo; m < mhi; ++m) dx[m] += wv * dyr[m + shift];
    }
  }
}

// Full weight-gradient slice for one out-channel, reduced over the batch in
// example order.
template <typename T>
AMC_NOINLINE inline void conv_wgrad_slice(const T* x, const T* dy, int batch,
                                          int ci, int n, int k, int pad,
                                          size_t xbs, size_t dybs, int oc,
                                          T alpha, bool accumulate, T* dw_oc,
                                          T* db_oc) {
  for (int ic = 0; ic < ci; ++ic) {
    for (int kk = 0; kk < k; ++kk) {
      int shift = kk - pad;
      int mlo = std::max(0, -shift);
      int mhi = std::min(n, n - shift);
      T s = 0;
      for (int b = 0; b < batch; ++b) {
        const T* dyr = dy + b * dybs + size_t(oc) * n;
        const T* xr = x + b * xbs + size_t(ic) * n;
        for (int m = mlo; m < mhi; ++m) s += dyr[m] * xr[m + shift];
      }
      T* slot = dw_oc + size_t(ic) * k + kk;
      if (accumulate)
        *slot += alpha * s;
      else
        *slot = alpha * s;
    }
  }
  if (db_oc) {
    T s = 0;
    for (int b = 0; b < batch; ++b) {
      const T* dyr = dy + b * dybs + size_t(oc) * n;
      for (int m = 0; m < n; ++m) s += dyr[m];
    }
    if (accumulate)
      *db_oc += alpha * s;
    else
      *db_oc = alpha * s;
  }
}

template <typename T>
AMC_NOINLINE inline void dense_fwd_ex(const T* x, const T* w, const T* bias,
                                      int fin, int fout, T* y) {
  for (int o = 0; o < fout; ++o) {
    T s = bias ? bias[o] : T(0);
    const T* wr = w + size_t(o) * fin;
    for (int i = 0; i < fin; ++i) s += wr[i] * x[i];
    y[o] = s;
  }
}

template <typename T>
AMC_NOINLINE inline void dense_xgrad_ex(const T* dy, const T* w, int fin,
                                        int fout, bool accumulate, T* dx) {
  if (!accumulate)
    for (int i = 0; i < fin; ++i) dx[i] = T(0);
  for (int o = 0; o < fout; ++o) {
    T dv = dy[o];
    const T* wr = w + size_t(o) * fin;
    for (int i = 0; i < fin; ++i) dx[i] += wr[i] * dv;
  }
}

template <typename T>
AMC_NOINLINE inline void dense_wgrad_row(const T* x, const T* dy, int batch,
                                         int fin, int fout, int o, T* dw_row,
                                         T* db_o) {
  for (int i = 0; i < fin; ++i) dw_row[i] = T(0);
  T bsum = 0;
  for (int b = 0; b < batch; ++b) {
    T dv = dy[size_t(b) * fout + o];
    bsum += dv;
    const T* xr = x + size_t(b) * fin;
    for (int i = 0; i < fin; ++i) dw_row[i] += dv * xr[i];
  }
  if (db_o) *db_o = bsum;
}

template <typename T>
AMC_NOINLINE inline void bn_stats_ch(const T* x, int batch, int c, int n,
                                     int ch, T* mean, T* var) {
  size_t stride = size_t(c) * n;
  T sum = 0;
  for (int b = 0; b < batch; ++b) {
    const T* xr = x + b * stride + size_t(ch) * n;
    for (int m = 0; m < n; ++m) sum += xr[m];
  }
  T mu = sum / T(batch * n);
  T sq = 0;
  for (int b = 0; b < batch; ++b) {
    const T* xr = x + b * stride + size_t(ch) * n;
    for (int m = 0; m < n; ++m) {
      T d = xr[m] - mu;
      sq += d * d;
    }
  }
  *mean = mu;
  *var = sq / T(batch * n);  // biased, consistent everywhere
}

template <typename T>
AMC_NOINLINE inline void bn_fwd_ch(const T* x, T mean, T var, T gamma, T beta,
                                   int batch, int c, int n, int ch, T eps,
                                   T* y) {
  size_t stride = size_t(c) * n;
  T inv = T(1) / std::sqrt(var + eps);
  T a = gamma * inv;
  T b0 = beta - gamma * inv * mean;
  for (int b = 0; b < batch; ++b) {
    const T* xr = x + b * stride + size_t(ch) * n;
    T* yr = y + b * stride + size_t(ch) * n;
    for (int m = 0; m < n; ++m) yr[m] = a * xr[m] + b0;
  }
}

template <typename T>
AMC_NOINLINE inline void bn_bwd_train_ch(const T* x, const T* dy, T mean,
                                         T var, T gamma, int batch, int c,
                                         int n, int ch, T eps, T* dx,
                                         T* dgamma, T* dbeta) {
  size_t stride = size_t(c) * n;
  T inv = T(1) / std::sqrt(var + eps);
  T count = T(batch * n);
  T dbeta_s = 0, dgamma_s = 0;
  for (int b = 0; b < batch; ++b) {
    const T* xr = x + b * stride + size_t(ch) * n;
    const T* dyr = dy + b * stride + size_t(ch) * n;
    for (int m = 0; m < n; ++m) {
      dbeta_s += dyr[m];
      dgamma_s += dyr[m] * (xr[m] - mean) * inv;
    }
  }
  for (int b = 0; b < batch; ++b) {
    const T* xr = x + b * stride + size_t(ch) * n;
    const T* dyr = dy + b * stride + size_t(ch) * n;
    T* dxr = dx + b * stride + size_t(ch) * n;
    for (int m = 0; m < n; ++m) {
      T xh = (xr[m] - mean) * inv;
      dxr[m] = gamma * inv * (dyr[m] - dbeta_s / count - xh * dgamma_s / count);
    }
  }
  *dgamma = dgamma_s;
  *dbeta = dbeta_s;
}

template <typename T>
AMC_NOINLINE inline void bn_bwd_infer_ch(const T* x, const T* dy, T mean,
                                         T var, T gamma, int batch, int c,
                                         int n, int ch, T eps, T* dx,
                                         T* dgamma, T* dbeta) {
  size_t stride = size_t(c) * n;
  T inv = T(1) / std::sqrt(var + eps);
  T dbeta_s = 0, dgamma_s = 0;
  for (int b = 0; b < batch; ++b) {
    const T* xr = x + b * stride + size_t(ch) * n;
    const T* dyr = dy + b * stride + size_t(ch) * n;
    T* dxr = dx + b * stride + size_t(ch) * n;
    for (int m = 0; m < n; ++m) {
      dbeta_s += dyr[m];
      dgamma_s += dyr[m] * (xr[m] - mean) * inv;
      dxr[m] = dyr[m] * gamma * inv;
    }
  }
  *dgamma = dgamma_s;
  *dbeta = dbeta_s;
}

template <typename T>
AMC_NOINLINE inline void gap_fwd_bc(const T* x, int n, T* y) {
  T s = 0;
  for (int m = 0; m < n; ++m) s += x[m];
  *y = s / T(n);
}

template <typename T>
AMC_NOINLINE inline void rnn_fwd_ex_step(const T* x_ex, const T* wx,
                                         const T* wh, const T* bias, int cin,
                                         int hidden, int tlen, int t,
                                         T* h_ex) {
  for (int i = 0; i < hidden; ++i) {
    T pre = bias[i];
    const T* wxr = wx + size_t(i) * cin;
    for (int j = 0; j < cin; ++j) pre += wxr[j] * x_ex[size_t(j) * tlen + t];
    if (t > 0) {
      const T* whr = wh + size_t(i) * hidden;
      for (int j = 0; j < hidden; ++j)
        pre += whr[j] * h_ex[size_t(j) * tlen + t - 1];
    }
    h_ex[size_t(i) * tlen + t] = std::tanh(pre);
  }
}

template <typename T>
AMC_NOINLINE inline void rnn_bwd_ex_step(const T* h_ex, const T* wh,
                                         int hidden, int tlen, int t,
                                         const T* dh_t, T* dpre_ex,
                                         T* dh_prev) {
  for (int i = 0; i < hidden; ++i) {
    T hv = h_ex[size_t(i) * tlen + t];
    dpre_ex[size_t(i) * tlen + t] = dh_t[i] * (T(1) - hv * hv);
  }
  if (t > 0) {
    for (int j = 0; j < hidden; ++j) {
      T s = 0;
      for (int i = 0; i < hidden; ++i)
        s += wh[size_t(i) * hidden + j] * dpre_ex[size_t(i) * tlen + t];
      dh_prev[j] = s;
    }
  }
}

template <typename T>
AMC_NOINLINE inline void rnn_wgrad_row(const T* x, const T* h, const T* dpre,
                                       int batch, int cin, int hidden,
                                       int tlen, int i, T* dwx_row, T* dwh_row,
                                       T* db_i) {
  size_t xstride = size_t(cin) * tlen;
  size_t hstride = size_t(hidden) * tlen;
  for (int j = 0; j < cin; ++j) {
    T s = 0;
    for (int b = 0; b < batch; ++b) {
      const T* dp = dpre + b * hstride + size_t(i) * tlen;
      const T* xr = x + b * xstride + size_t(j) * tlen;
      for (int t = 0; t < tlen; ++t) s += dp[t] * xr[t];
    }
    dwx_row[j] = s;
  }
  for (int j = 0; j < hidden; ++j) {
    T s = 0;
    for (int b = 0; b < batch; ++b) {
      const T* dp = dpre + b * hstride + size_t(i) * tlen;
      const T* hr = h + b * hstride + size_t(j) * tlen;
      for (int t = 1; t < tlen; ++t) s += dp[t] * hr[t - 1];
    }
    dwh_row[j] = s;
  }
  T s = 0;
  for (int b = 0; b < batch; ++b) {
    const T* dp = dpre + b * hstride + size_t(i) * tlen;
    for (int t = 0; t < tlen; ++t) s += dp[t];
  }
  *db_i = s;
}

template <typename T>
AMC_NOINLINE inline void rnn_xgrad_ex(const T* dpre_ex, const T* wx, int cin,
                                      int hidden, int tlen, bool accumulate,
                                      T* dx_ex) {
  for (int j = 0; j < cin; ++j) {
    T* dxr = dx_ex + size_t(j) * tlen;
    for (int t = 0; t < tlen; ++t) {
      T s = 0;
      for (int i = 0; i < hidden; ++i)
        s += wx[size_t(i) * cin + j] * dpre_ex[size_t(i) * tlen + t];
      if (accumulate)
        dxr[t] += s;
      else
        dxr[t] = s;
    }
  }
}

template <typename T>
AMC_NOINLINE inline void softmax_row(const T* x, int m, T* y) {
  T mx = x[0];
  for (int i = 1; i < m; ++i) mx = std::max(mx, x[i]);
  T sum = 0;
  for (int i = 0; i < m; ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  for (int i = 0; i < m; ++i) y[i] /= sum;
}

template <typename T>
AMC_NOINLINE inline void softmax_bwd_row(const T* y, const T* dy, int m,
                                         bool accumulate, T* dx) {
  T dot = 0;
  for (int i = 0; i < m; ++i) dot += y[i] * dy[i];
  for (int i = 0; i < m; ++i) {
    T v = y[i] * (dy[i] - dot);
    if (accumulate)
      dx[i] += v;
    else
      dx[i] = v;
  }
}

#undef AMC_NOINLINE

}  // namespace amc::tensornet::kern::detail
