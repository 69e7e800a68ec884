#include "amc/tensornet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "amc/kernels.hpp"

namespace amc::tensornet {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::complex_conv1d: return "complex_conv1d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::dense: return "dense";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::residual_add: return "residual_add";
    case LayerKind::simple_recurrent: return "simple_recurrent";
    case LayerKind::softmax_output: return "softmax_output";
  }
  return "?";
}

namespace {

void expect(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

template <typename T>
std::vector<int> layer_out_shape(const LayerT<T>& layer,
                                 const std::vector<int>& in,
                                 const std::vector<int>* in2) {
  switch (layer.kind) {
    case LayerKind::conv1d: {
      expect(layer.iparams.size() == 4, "conv1d: need 4 iparams");
      int ci = int(layer.iparams[0]), co = int(layer.iparams[1]);
      expect(in.size() == 3 && in[1] == ci,
             "conv1d: input must be batch x " + std::to_string(ci) + " x n");
      return {in[0], co, in[2]};
    }
    case LayerKind::complex_conv1d: {
      expect(layer.iparams.size() == 4, "complex_conv1d: need 4 iparams");
      int icc = int(layer.iparams[0]), occ = int(layer.iparams[1]);
      expect(in.size() == 3 && in[1] == 2 * icc,
             "complex_conv1d: input must have 2*icc channels");
      return {in[0], 2 * occ, in[2]};
    }
    case LayerKind::batchnorm: {
      expect(layer.iparams.size() == 1, "batchnorm: need 1 iparam");
      expect(in.size() == 3 && in[1] == int(layer.iparams[0]),
             "batchnorm: channel mismatch");
      return in;
    }
    case LayerKind::relu:
      return in;
    case LayerKind::dense: {
      expect(layer.iparams.size() == 2, "dense: need 2 iparams");
      size_t fin = 1;
      for (size_t i = 1; i < in.size(); ++i) fin *= size_t(in[i]);
      expect(fin == layer.iparams[0], "dense: input feature count mismatch");
      return {in[0], int(layer.iparams[1])};
    }
    case LayerKind::global_avg_pool:
      expect(in.size() == 3, "global_avg_pool: input must be rank 3");
      return {in[0], in[1]};
    case LayerKind::residual_add:
      expect(in2 != nullptr && *in2 == in,
             "residual_add: input shapes must match");
      return in;
    case LayerKind::simple_recurrent: {
      expect(layer.iparams.size() == 2, "simple_recurrent: need 2 iparams");
      expect(in.size() == 3 && in[1] == int(layer.iparams[0]),
             "simple_recurrent: input channel mismatch");
      return {in[0], int(layer.iparams[1]), in[2]};
    }
    case LayerKind::softmax_output:
      expect(in.size() == 2, "softmax_output: input must be batch x m");
      return in;
  }
  throw ValidationError("unknown layer kind");
}

template <typename T>
void check_param_shapes(const LayerT<T>& layer) {
  auto want = [&](size_t idx, std::vector<int> shape, const char* name) {
    expect(idx < layer.params.size() && layer.params[idx].shape == shape,
           std::string(layer_kind_name(layer.kind)) + ": bad shape for " +
               name);
  };
  switch (layer.kind) {
    case LayerKind::conv1d: {
      int ci = int(layer.iparams[0]), co = int(layer.iparams[1]),
          k = int(layer.iparams[2]);
      expect(layer.params.size() == 2, "conv1d: expected 2 param tensors");
      want(0, {co, ci, k}, "weight");
      want(1, {co}, "bias");
      break;
    }
    case LayerKind::complex_conv1d: {
      int icc = int(layer.iparams[0]), occ = int(layer.iparams[1]),
          k = int(layer.iparams[2]);
      expect(layer.params.size() == 4,
             "complex_conv1d: expected 4 param tensors");
      want(0, {occ, icc, k}, "weight_a");
      want(1, {occ, icc, k}, "weight_b");
      want(2, {occ}, "bias_a");
      want(3, {occ}, "bias_b");
      break;
    }
    case LayerKind::batchnorm: {
      int c = int(layer.iparams[0]);
      expect(layer.params.size() == 2 && layer.running.size() == 2,
             "batchnorm: expected 2 params and 2 running tensors");
      want(0, {c}, "gamma");
      want(1, {c}, "beta");
      expect(layer.running[0].shape == std::vector<int>{c} &&
                 layer.running[1].shape == std::vector<int>{c},
             "batchnorm: bad running stat shapes");
      expect(layer.fparams.size() == 2, "batchnorm: need {eps, momentum}");
      break;
    }
    case LayerKind::dense: {
      int fin = int(layer.iparams[0]), fout = int(layer.iparams[1]);
      expect(layer.params.size() == 2, "dense: expected 2 param tensors");
      want(0, {fout, fin}, "weight");
      want(1, {fout}, "bias");
      break;
    }
    case LayerKind::simple_recurrent: {
      int cin = int(layer.iparams[0]), h = int(layer.iparams[1]);
      expect(layer.params.size() == 3,
             "simple_recurrent: expected 3 param tensors");
      want(0, {h, cin}, "weight_x");
      want(1, {h, h}, "weight_h");
      want(2, {h}, "bias");
      break;
    }
    default:
      expect(layer.params.empty(),
             std::string(layer_kind_name(layer.kind)) + ": takes no params");
  }
}

}  // namespace

template <typename T>
std::vector<std::vector<int>> ModelGraphT<T>::node_shapes(int batch) const {
  std::vector<std::vector<int>> shapes;
  shapes.reserve(layers.size() + 1);
  shapes.push_back({batch, input_channels, input_len});
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& ly = layers[i];
    expect(ly.in0 >= 0 && ly.in0 <= int(i), "layer input must precede it");
    const std::vector<int>* in2 = nullptr;
    if (ly.kind == LayerKind::residual_add) {
      expect(ly.in1 >= 0 && ly.in1 <= int(i),
             "residual_add second input must precede it");
      in2 = &shapes[ly.in1];
    } else {
      expect(ly.in1 == -1, "only residual_add takes a second input");
    }
    shapes.push_back(layer_out_shape(ly, shapes[ly.in0], in2));
  }
  return shapes;
}

template <typename T>
void ModelGraphT<T>::validate() const {
  expect(input_channels > 0 && input_len > 0 && num_classes > 0,
         "model: bad input shape or class count");
  expect(!layers.empty(), "model: no layers");
  for (const auto& ly : layers) check_param_shapes(ly);
  auto shapes = node_shapes(1);
  expect(shapes.back() == std::vector<int>({1, num_classes}),
         "model: final node must be a logit vector of length num_classes");
  for (const auto& ly : layers)
    for (const auto& p : ly.params)
      for (T v : p.data)
        if (!std::isfinite(double(v)))
          throw NumericError("model: non-finite parameter");
}

ModelGraphT<double> to_double(const ModelGraph& model) {
  ModelGraphT<double> out;
  out.input_channels = model.input_channels;
  out.input_len = model.input_len;
  out.num_classes = model.num_classes;
  out.mode = model.mode;
  out.layers.reserve(model.layers.size());
  for (const auto& ly : model.layers) {
    LayerT<double> dl;
    dl.kind = ly.kind;
    dl.in0 = ly.in0;
    dl.in1 = ly.in1;
    dl.iparams = ly.iparams;
    dl.fparams = ly.fparams;
    auto conv = [](const Tensor& t) {
      TensorT<double> d(t.shape);
      for (size_t i = 0; i < t.data.size(); ++i) d.data[i] = t.data[i];
      return d;
    };
    for (const auto& p : ly.params) dl.params.push_back(conv(p));
    for (const auto& r : ly.running) dl.running.push_back(conv(r));
    out.layers.push_back(std::move(dl));
  }
  return out;
}

uint64_t param_digest(const ModelGraph& model) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, size_t len) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    for (size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& ly : model.layers) {
    for (const auto& p : ly.params)
      mix(p.data.data(), p.data.size() * sizeof(float));
    for (const auto& r : ly.running)
      mix(r.data.data(), r.data.size() * sizeof(float));
  }
  return h;
}

namespace {

// Forward evaluation of a single layer; bn_mean/bn_var receive the statistics
// used when the layer is a batchnorm.
template <typename T>
void layer_forward(ModelGraphT<T>& model, size_t li, const TensorT<T>& x,
                   const TensorT<T>* x2, TensorT<T>& y, TensorT<T>* bn_mean,
                   TensorT<T>* bn_var) {
  auto& ly = model.layers[li];
  int batch = x.shape[0];
  switch (ly.kind) {
    case LayerKind::conv1d: {
      int ci = int(ly.iparams[0]), co = int(ly.iparams[1]),
          k = int(ly.iparams[2]), pad = int(ly.iparams[3]);
      int n = x.shape[2];
      kern::conv1d_fwd(x.data.data(), ly.params[0].data.data(),
                       ly.params[1].data.data(), batch, ci, co, n, k, pad,
                       size_t(ci) * n, size_t(co) * n, T(1), false,
                       y.data.data());
      break;
    }
    case LayerKind::complex_conv1d: {
      int icc = int(ly.iparams[0]), occ = int(ly.iparams[1]),
          k = int(ly.iparams[2]), pad = int(ly.iparams[3]);
      int n = x.shape[2];
      size_t xbs = size_t(2) * icc * n, ybs = size_t(2) * occ * n;
      const T* xi = x.data.data();
      const T* xq = x.data.data() + size_t(icc) * n;
      T* yi = y.data.data();
      T* yq = y.data.data() + size_t(occ) * n;
      const T* wa = ly.params[0].data.data();
      const T* wb = ly.params[1].data.data();
      // (yi + j yq) = (wa + j wb) * (xi + j xq) + (ba + j bb)
      kern::conv1d_fwd(xi, wa, ly.params[2].data.data(), batch, icc, occ, n, k,
                       pad, xbs, ybs, T(1), false, yi);
      kern::conv1d_fwd(xq, wb, (const T*)nullptr, batch, icc, occ, n, k, pad,
                       xbs, ybs, T(-1), true, yi);
      kern::conv1d_fwd(xq, wa, ly.params[3].data.data(), batch, icc, occ, n, k,
                       pad, xbs, ybs, T(1), false, yq);
      kern::conv1d_fwd(xi, wb, (const T*)nullptr, batch, icc, occ, n, k, pad,
                       xbs, ybs, T(1), true, yq);
      break;
    }
    case LayerKind::batchnorm: {
      int c = int(ly.iparams[0]);
      int n = x.shape[2];
      T eps = T(ly.fparams[0]);
      T momentum = T(ly.fparams[1]);
      *bn_mean = TensorT<T>({c});
      *bn_var = TensorT<T>({c});
      if (model.mode == Mode::train) {
        kern::bn_stats(x.data.data(), batch, c, n, bn_mean->data.data(),
                       bn_var->data.data());
        for (int ch = 0; ch < c; ++ch) {
          ly.running[0].data[ch] = (T(1) - momentum) * ly.running[0].data[ch] +
                                   momentum * bn_mean->data[ch];
          ly.running[1].data[ch] = (T(1) - momentum) * ly.running[1].data[ch] +
                                   momentum * bn_var->data[ch];
        }
      } else {
        bn_mean->data = ly.running[0].data;
        bn_var->data = ly.running[1].data;
      }
      kern::bn_fwd(x.data.data(), bn_mean->data.data(), bn_var->data.data(),
                   ly.params[0].data.data(), ly.params[1].data.data(), batch,
                   c, n, eps, y.data.data());
      break;
    }
    case LayerKind::relu:
      kern::relu_fwd(x.data.data(), x.numel(), y.data.data());
      break;
    case LayerKind::dense: {
      int fin = int(ly.iparams[0]), fout = int(ly.iparams[1]);
      kern::dense_fwd(x.data.data(), ly.params[0].data.data(),
                      ly.params[1].data.data(), batch, fin, fout,
                      y.data.data());
      break;
    }
    case LayerKind::global_avg_pool:
      kern::gap_fwd(x.data.data(), batch, x.shape[1], x.shape[2],
                    y.data.data());
      break;
    case LayerKind::residual_add:
      kern::add(x.data.data(), x2->data.data(), x.numel(), y.data.data());
      break;
    case LayerKind::simple_recurrent: {
      int cin = int(ly.iparams[0]), hidden = int(ly.iparams[1]);
      int tlen = x.shape[2];
      for (int t = 0; t < tlen; ++t)
        kern::rnn_fwd_step(x.data.data(), ly.params[0].data.data(),
                           ly.params[1].data.data(), ly.params[2].data.data(),
                           batch, cin, hidden, tlen, t, y.data.data());
      break;
    }
    case LayerKind::softmax_output:
      kern::softmax_fwd(x.data.data(), batch, x.shape[1], y.data.data());
      break;
  }
}

}  // namespace

template <typename T>
TraceT<T> forward_trace(ModelGraphT<T>& model, const TensorT<T>& batch) {
  if (batch.shape.size() != 3 || batch.shape[1] != model.input_channels ||
      batch.shape[2] != model.input_len)
    throw ValidationError("forward: batch shape does not match model input");
  auto shapes = model.node_shapes(batch.shape[0]);
  TraceT<T> trace;
  trace.nodes.resize(shapes.size());
  trace.bn_mean.resize(model.layers.size());
  trace.bn_var.resize(model.layers.size());
  trace.nodes[0] = batch;
  for (size_t li = 0; li < model.layers.size(); ++li) {
    const auto& ly = model.layers[li];
    trace.nodes[li + 1] = TensorT<T>(shapes[li + 1]);
    const TensorT<T>* x2 = ly.kind == LayerKind::residual_add
                               ? &trace.nodes[ly.in1]
                               : nullptr;
    layer_forward(model, li, trace.nodes[ly.in0], x2, trace.nodes[li + 1],
                  &trace.bn_mean[li], &trace.bn_var[li]);
  }
  return trace;
}

template <typename T>
TensorT<T> forward(ModelGraphT<T>& model, const TensorT<T>& batch) {
  auto trace = forward_trace(model, batch);
  return std::move(trace.nodes.back());
}

namespace {

// Reverse traversal shared by loss_and_grads and backward_input.
template <typename T>
void backward_impl(const ModelGraphT<T>& model, const TraceT<T>& trace,
                   const TensorT<T>& dlogits, bool want_params,
                   std::vector<std::vector<TensorT<T>>>* param_grads,
                   TensorT<T>* input_grad) {
  const int num_nodes = model.num_nodes();
  int batch = trace.nodes[0].shape[0];
  std::vector<TensorT<T>> ngrad(num_nodes);
  std::vector<bool> touched(num_nodes, false);
  ngrad[num_nodes - 1] = dlogits;
  touched[num_nodes - 1] = true;

  if (want_params) {
    param_grads->resize(model.layers.size());
    for (size_t li = 0; li < model.layers.size(); ++li) {
      (*param_grads)[li].clear();
      for (const auto& p : model.layers[li].params)
        (*param_grads)[li].push_back(TensorT<T>(p.shape));
    }
  }

  // Returns the gradient buffer for a node plus whether it already holds a
  // partial gradient (then callers must accumulate).
  auto grad_into = [&](int node) -> std::pair<TensorT<T>&, bool> {
    bool acc = touched[node];
    if (!acc) {
      ngrad[node] = TensorT<T>(trace.nodes[node].shape);
      touched[node] = true;
    }
    return {ngrad[node], acc};
  };

  for (int li = int(model.layers.size()) - 1; li >= 0; --li) {
    int node = li + 1;
    if (!touched[node]) continue;  // unused branch
    const auto& ly = model.layers[li];
    const TensorT<T>& dy = ngrad[node];
    const TensorT<T>& x = trace.nodes[ly.in0];
    switch (ly.kind) {
      case LayerKind::conv1d: {
        int ci = int(ly.iparams[0]), co = int(ly.iparams[1]),
            k = int(ly.iparams[2]), pad = int(ly.iparams[3]);
        int n = x.shape[2];
        auto [dx, acc] = grad_into(ly.in0);
        kern::conv1d_xgrad(dy.data.data(), ly.params[0].data.data(), batch,
                           ci, co, n, k, pad, size_t(co) * n, size_t(ci) * n,
                           T(1), acc, dx.data.data());
        if (want_params)
          kern::conv1d_wgrad(x.data.data(), dy.data.data(), batch, ci, co, n,
                             k, pad, size_t(ci) * n, size_t(co) * n, T(1),
                             false, (*param_grads)[li][0].data.data(),
                             (*param_grads)[li][1].data.data());
        break;
      }
      case LayerKind::complex_conv1d: {
        int icc = int(ly.iparams[0]), occ = int(ly.iparams[1]),
            k = int(ly.iparams[2]), pad = int(ly.iparams[3]);
        int n = x.shape[2];
        size_t xbs = size_t(2) * icc * n, ybs = size_t(2) * occ * n;
        const T* dyi = dy.data.data();
        const T* dyq = dy.data.data() + size_t(occ) * n;
        const T* wa = ly.params[0].data.data();
        const T* wb = ly.params[1].data.data();
        auto [dx, acc] = grad_into(ly.in0);
        T* dxi = dx.data.data();
        T* dxq = dx.data.data() + size_t(icc) * n;
        kern::conv1d_xgrad(dyi, wa, batch, icc, occ, n, k, pad, ybs, xbs,
                           T(1), acc, dxi);
        kern::conv1d_xgrad(dyq, wb, batch, icc, occ, n, k, pad, ybs, xbs,
                           T(1), true, dxi);
        kern::conv1d_xgrad(dyi, wb, batch, icc, occ, n, k, pad, ybs, xbs,
                           T(-1), acc, dxq);
        kern::conv1d_xgrad(dyq, wa, batch, icc, occ, n, k, pad, ybs, xbs,
                           T(1), true, dxq);
        if (want_params) {
          const T* xi = x.data.data();
          const T* xq = x.data.data() + size_t(icc) * n;
          auto& pg = (*param_grads)[li];
          // dWa = dyi * xi + dyq * xq, ba <- sum dyi, bb <- sum dyq
          kern::conv1d_wgrad(xi, dyi, batch, icc, occ, n, k, pad, xbs, ybs,
                             T(1), false, pg[0].data.data(),
                             pg[2].data.data());
          kern::conv1d_wgrad(xq, dyq, batch, icc, occ, n, k, pad, xbs, ybs,
                             T(1), true, pg[0].data.data(),
                             pg[3].data.data());
          // dWb = -dyi * xq + dyq * xi
          kern::conv1d_wgrad(xq, dyi, batch, icc, occ, n, k, pad, xbs, ybs,
                             T(-1), false, pg[1].data.data(), (T*)nullptr);
          kern::conv1d_wgrad(xi, dyq, batch, icc, occ, n, k, pad, xbs, ybs,
                             T(1), true, pg[1].data.data(), (T*)nullptr);
        }
        break;
      }
      case LayerKind::batchnorm: {
        int c = int(ly.iparams[0]);
        int n = x.shape[2];
        T eps = T(ly.fparams[0]);
        TensorT<T> dgamma({c}), dbeta({c});
        TensorT<T> dx_tmp(x.shape);
        if (model.mode == Mode::train)
          kern::bn_bwd_train(x.data.data(), dy.data.data(),
                             trace.bn_mean[li].data.data(),
                             trace.bn_var[li].data.data(),
                             ly.params[0].data.data(), batch, c, n, eps,
                             dx_tmp.data.data(), dgamma.data.data(),
                             dbeta.data.data());
        else
          kern::bn_bwd_infer(x.data.data(), dy.data.data(),
                             trace.bn_mean[li].data.data(),
                             trace.bn_var[li].data.data(),
                             ly.params[0].data.data(), batch, c, n, eps,
                             dx_tmp.data.data(), dgamma.data.data(),
                             dbeta.data.data());
        auto [dx, acc] = grad_into(ly.in0);
        kern::axpy(dx_tmp.data.data(), dx_tmp.numel(), T(1), acc,
                   dx.data.data());
        if (want_params) {
          (*param_grads)[li][0] = std::move(dgamma);
          (*param_grads)[li][1] = std::move(dbeta);
        }
        break;
      }
      case LayerKind::relu: {
        auto [dx, acc] = grad_into(ly.in0);
        kern::relu_bwd(x.data.data(), dy.data.data(), x.numel(), acc,
                       dx.data.data());
        break;
      }
      case LayerKind::dense: {
        int fin = int(ly.iparams[0]), fout = int(ly.iparams[1]);
        auto [dx, acc] = grad_into(ly.in0);
        kern::dense_xgrad(dy.data.data(), ly.params[0].data.data(), batch,
                          fin, fout, acc, dx.data.data());
        if (want_params)
          kern::dense_wgrad(x.data.data(), dy.data.data(), batch, fin, fout,
                            (*param_grads)[li][0].data.data(),
                            (*param_grads)[li][1].data.data());
        break;
      }
      case LayerKind::global_avg_pool: {
        auto [dx, acc] = grad_into(ly.in0);
        kern::gap_bwd(dy.data.data(), batch, x.shape[1], x.shape[2], acc,
                      dx.data.data());
        break;
      }
      case LayerKind::residual_add: {
        {
          auto [dx, acc] = grad_into(ly.in0);
          kern::axpy(dy.data.data(), dy.numel(), T(1), acc, dx.data.data());
        }
        {
          auto [dx2, acc2] = grad_into(ly.in1);
          kern::axpy(dy.data.data(), dy.numel(), T(1), acc2,
                     dx2.data.data());
        }
        break;
      }
      case LayerKind::simple_recurrent: {
        int cin = int(ly.iparams[0]), hidden = int(ly.iparams[1]);
        int tlen = x.shape[2];
        const TensorT<T>& h = trace.nodes[node];
        TensorT<T> dpre(h.shape);
        std::vector<T> dh_cur(size_t(batch) * hidden);
        std::vector<T> dh_prev(size_t(batch) * hidden);
        for (int b = 0; b < batch; ++b)
          for (int i = 0; i < hidden; ++i)
            dh_cur[size_t(b) * hidden + i] =
                dy.data[(size_t(b) * hidden + i) * tlen + tlen - 1];
        for (int t = tlen - 1; t >= 0; --t) {
          kern::rnn_bwd_step(h.data.data(), ly.params[1].data.data(), batch,
                             hidden, tlen, t, dh_cur.data(), dpre.data.data(),
                             dh_prev.data());
          if (t > 0)
            for (int b = 0; b < batch; ++b)
              for (int i = 0; i < hidden; ++i)
                dh_cur[size_t(b) * hidden + i] =
                    dy.data[(size_t(b) * hidden + i) * tlen + t - 1] +
                    dh_prev[size_t(b) * hidden + i];
        }
        auto [dx, acc] = grad_into(ly.in0);
        kern::rnn_xgrad(dpre.data.data(), ly.params[0].data.data(), batch,
                        cin, hidden, tlen, acc, dx.data.data());
        if (want_params)
          kern::rnn_wgrad(x.data.data(), h.data.data(), dpre.data.data(),
                          batch, cin, hidden, tlen,
                          (*param_grads)[li][0].data.data(),
                          (*param_grads)[li][1].data.data(),
                          (*param_grads)[li][2].data.data());
        break;
      }
      case LayerKind::softmax_output: {
        const TensorT<T>& y = trace.nodes[node];
        auto [dx, acc] = grad_into(ly.in0);
        kern::softmax_bwd(y.data.data(), dy.data.data(), batch, x.shape[1],
                          acc, dx.data.data());
        break;
      }
    }
  }

  if (touched[0])
    *input_grad = std::move(ngrad[0]);
  else
    *input_grad = TensorT<T>(trace.nodes[0].shape);
}

}  // namespace

template <typename T>
TensorT<T> backward_input(const ModelGraphT<T>& model, const TraceT<T>& trace,
                          const TensorT<T>& dlogits) {
  TensorT<T> input_grad;
  backward_impl(model, trace, dlogits, false, nullptr, &input_grad);
  return input_grad;
}

template <typename T>
LossGradsT<T> loss_and_grads(ModelGraphT<T>& model, const TensorT<T>& batch,
                             std::span<const int> labels) {
  int b = batch.shape.empty() ? 0 : batch.shape[0];
  if (int(labels.size()) != b)
    throw ValidationError("loss_and_grads: label count must equal batch size");
  for (int lb : labels)
    if (lb < 0 || lb >= model.num_classes)
      throw ValidationError("loss_and_grads: label out of range");
  auto trace = forward_trace(model, batch);
  const TensorT<T>& logits = trace.nodes.back();
  int m = model.num_classes;

  TensorT<T> probs(logits.shape);
  kern::softmax_fwd(logits.data.data(), b, m, probs.data.data());

  T loss = 0;
  TensorT<T> dlogits(logits.shape);
  for (int i = 0; i < b; ++i) {
    const T* z = logits.data.data() + size_t(i) * m;
    T mx = z[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, z[j]);
    T sum = 0;
    for (int j = 0; j < m; ++j) sum += std::exp(z[j] - mx);
    loss += (mx + std::log(sum)) - z[labels[i]];
  }
  loss /= T(b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < m; ++j)
      dlogits.data[size_t(i) * m + j] =
          (probs.data[size_t(i) * m + j] - (j == labels[i] ? T(1) : T(0))) /
          T(b);

  LossGradsT<T> out;
  out.loss = loss;
  backward_impl(model, trace, dlogits, true, &out.param_grads,
                &out.input_grad);
  return out;
}

OptimizerState OptimizerState::for_model(const ModelGraph& model) {
  OptimizerState st;
  st.m.resize(model.layers.size());
  st.v.resize(model.layers.size());
  for (size_t li = 0; li < model.layers.size(); ++li)
    for (const auto& p : model.layers[li].params) {
      st.m[li].push_back(Tensor(p.shape));
      st.v[li].push_back(Tensor(p.shape));
    }
  return st;
}

void apply_update(ModelGraph& model,
                  const std::vector<std::vector<Tensor>>& grads,
                  const TrainSchedule& sched, OptimizerState& state) {
  if (grads.size() != model.layers.size())
    throw ValidationError("apply_update: gradient layer count mismatch");
  for (size_t li = 0; li < grads.size(); ++li) {
    if (grads[li].size() != model.layers[li].params.size())
      throw ValidationError("apply_update: missing gradient for a parameter");
    for (size_t pi = 0; pi < grads[li].size(); ++pi)
      if (grads[li][pi].shape != model.layers[li].params[pi].shape)
        throw ValidationError("apply_update: gradient shape mismatch");
  }
  float lr = float(sched.learning_rate);
  if (sched.optimizer == TrainSchedule::Optimizer::sgd) {
    for (size_t li = 0; li < grads.size(); ++li)
      for (size_t pi = 0; pi < grads[li].size(); ++pi) {
        auto& p = model.layers[li].params[pi].data;
        const auto& g = grads[li][pi].data;
        for (size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      }
    return;
  }
  const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  state.step += 1;
  float bc1 = 1.0f - std::pow(beta1, float(state.step));
  float bc2 = 1.0f - std::pow(beta2, float(state.step));
  for (size_t li = 0; li < grads.size(); ++li)
    for (size_t pi = 0; pi < grads[li].size(); ++pi) {
      auto& p = model.layers[li].params[pi].data;
      const auto& g = grads[li][pi].data;
      auto& m = state.m[li][pi].data;
      auto& v = state.v[li][pi].data;
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        float mh = m[i] / bc1;
        float vh = v[i] / bc2;
        p[i] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
}

Tensor make_batch(std::span<const sigmod::IQFrame> frames,
                  const std::vector<int>* columns) {
  if (frames.empty()) throw ValidationError("make_batch: no frames");
  int full_len = frames[0].length();
  int n = columns ? int(columns->size()) : full_len;
  Tensor batch({int(frames.size()), 2, n});
  for (size_t b = 0; b < frames.size(); ++b) {
    const auto& fr = frames[b];
    if (fr.length() != full_len)
      throw ValidationError("make_batch: inconsistent frame lengths");
    float* dst = batch.data.data() + b * size_t(2) * n;
    if (columns) {
      for (int j = 0; j < n; ++j) {
        int col = (*columns)[j];
        dst[j] = fr.iq[col];
        dst[n + j] = fr.iq[full_len + col];
      }
    } else {
      std::memcpy(dst, fr.iq.data(), sizeof(float) * 2 * size_t(n));
    }
  }
  return batch;
}

namespace {

struct ParamSnapshot {
  std::vector<std::vector<Tensor>> params, running;
};

ParamSnapshot snapshot_params(const ModelGraph& model) {
  ParamSnapshot s;
  for (const auto& ly : model.layers) {
    s.params.push_back(ly.params);
    s.running.push_back(ly.running);
  }
  return s;
}

void restore_params(ModelGraph& model, const ParamSnapshot& s) {
  for (size_t li = 0; li < model.layers.size(); ++li) {
    model.layers[li].params = s.params[li];
    model.layers[li].running = s.running[li];
  }
}

}  // namespace

std::vector<int> predict(const ModelGraph& model,
                         std::span<const sigmod::IQFrame> frames,
                         const std::vector<int>* columns) {
  if (model.mode != Mode::inference)
    throw ValidationError("predict: model must be in inference mode");
  auto& m = const_cast<ModelGraph&>(model);  // no mutation in inference mode
  std::vector<int> out(frames.size());
  const size_t chunk = 256;
  for (size_t at = 0; at < frames.size(); at += chunk) {
    size_t cnt = std::min(chunk, frames.size() - at);
    Tensor batch = make_batch(frames.subspan(at, cnt), columns);
    Tensor logits = forward(m, batch);
    int mm = model.num_classes;
    for (size_t i = 0; i < cnt; ++i) {
      const float* z = logits.data.data() + i * size_t(mm);
      int best = 0;
      for (int j = 1; j < mm; ++j)
        if (z[j] > z[best]) best = j;  // ties stay at the lowest index
      out[at + i] = best;
    }
  }
  return out;
}

double accuracy_frames(const ModelGraph& model,
                       std::span<const sigmod::IQFrame> frames,
                       const std::vector<int>* columns) {
  if (frames.empty()) throw ValidationError("accuracy: empty frame set");
  auto preds = predict(model, frames, columns);
  size_t hits = 0;
  for (size_t i = 0; i < frames.size(); ++i)
    if (preds[i] == int(frames[i].label)) ++hits;
  return double(hits) / double(frames.size());
}

double accuracy(const ModelGraph& model, const sigmod::DatasetBundle& bundle,
                sigmod::Split split, const std::vector<int>* columns,
                const std::vector<sigmod::IQFrame>* override_frames) {
  if (override_frames)
    return accuracy_frames(model, *override_frames, columns);
  auto ids = bundle.split_indices(split);
  if (ids.empty()) throw ValidationError("accuracy: split is empty");
  std::vector<sigmod::IQFrame> frames;
  frames.reserve(ids.size());
  for (int id : ids) frames.push_back(bundle.frames[id]);
  return accuracy_frames(model, frames, columns);
}

TrainResult train(ModelGraph& model, const sigmod::DatasetBundle& bundle,
                  sigmod::Split split, const TrainSchedule& sched,
                  const std::vector<int>* columns) {
  auto ids = bundle.split_indices(split);
  if (ids.empty()) throw ValidationError("train: split is empty");
  int n = columns ? int(columns->size()) : bundle.frame_len();
  if (model.input_len != n)
    throw ValidationError("train: model input length does not match frames");
  if (sched.epochs < 0 || sched.batch_size < 1)
    throw ValidationError("train: bad schedule");

  TrainResult result;
  if (sched.epochs == 0) return result;

  auto val_ids = bundle.split_indices(sigmod::Split::validation);
  std::vector<sigmod::IQFrame> val_frames;
  val_frames.reserve(val_ids.size());
  for (int id : val_ids) val_frames.push_back(bundle.frames[id]);

  RngStream rng(sched.seed);
  OptimizerState opt = OptimizerState::for_model(model);
  ParamSnapshot best;
  double best_val = -1.0;
  int since_best = 0;
  bool have_best = false;

  std::vector<sigmod::IQFrame> batch_frames;
  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    std::vector<int> order = ids;
    if (sched.shuffle) rng.shuffle(order);
    model.mode = Mode::train;
    for (size_t at = 0; at < order.size(); at += size_t(sched.batch_size)) {
      size_t cnt = std::min(size_t(sched.batch_size), order.size() - at);
      batch_frames.clear();
      std::vector<int> labels(cnt);
      for (size_t i = 0; i < cnt; ++i) {
        batch_frames.push_back(bundle.frames[order[at + i]]);
        labels[i] = bundle.frames[order[at + i]].label;
      }
      Tensor batch = make_batch(batch_frames, columns);
      auto lg = loss_and_grads<float>(model, batch, labels);
      if (!std::isfinite(double(lg.loss)))
        throw NumericError("train: non-finite loss");
      apply_update(model, lg.param_grads, sched, opt);
    }
    model.mode = Mode::inference;
    double val = std::numeric_limits<double>::quiet_NaN();
    if (!val_frames.empty())
      val = accuracy_frames(model, val_frames, columns);
    result.val_accuracy.push_back(val);

    if (sched.early_stop_patience > 0 && !val_frames.empty()) {
      if (val > best_val) {
        best_val = val;
        best = snapshot_params(model);
        have_best = true;
        since_best = 0;
      } else if (++since_best >= sched.early_stop_patience) {
        break;
      }
    }
  }
  if (have_best) restore_params(model, best);
  model.mode = Mode::inference;
  return result;
}

// Explicit instantiations: 32-bit is the working precision, 64-bit backs the
// gradient-check reference path.
template struct ModelGraphT<float>;
template struct ModelGraphT<double>;
template TensorT<float> forward<float>(ModelGraphT<float>&,
                                       const TensorT<float>&);
template TensorT<double> forward<double>(ModelGraphT<double>&,
                                         const TensorT<double>&);
template TraceT<float> forward_trace<float>(ModelGraphT<float>&,
                                            const TensorT<float>&);
template TraceT<double> forward_trace<double>(ModelGraphT<double>&,
                                              const TensorT<double>&);
template TensorT<float> backward_input<float>(const ModelGraphT<float>&,
                                              const TraceT<float>&,
                                              const TensorT<float>&);
template TensorT<double> backward_input<double>(const ModelGraphT<double>&,
                                                const TraceT<double>&,
                                                const TensorT<double>&);
template LossGradsT<float> loss_and_grads<float>(ModelGraphT<float>&,
                                                 const TensorT<float>&,
                                                 std::span<const int>);
template LossGradsT<double> loss_and_grads<double>(ModelGraphT<double>&,
                                                   const TensorT<double>&,
                                                   std::span<const int>);

}  // namespace amc::tensornet
