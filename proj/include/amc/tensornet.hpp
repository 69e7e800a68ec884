#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amc/common.hpp"
#include "amc/sigmod.hpp"

namespace amc::tensornet {

template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= size_t(d);
    return n;
  }
  size_t numel() const { return data.size(); }
};

using Tensor = TensorT<float>;

enum class LayerKind : uint8_t {
  conv1d = 0,
  complex_conv1d = 1,
  batchnorm = 2,
  relu = 3,
  dense = 4,
  global_avg_pool = 5,
  residual_add = 6,
  simple_recurrent = 7,
  softmax_output = 8,
};

std::string layer_kind_name(LayerKind k);

// iparams / params layout by kind:
//   conv1d           iparams {ci, co, k, pad}; params {W[co,ci,k], b[co]}
//   complex_conv1d   iparams {icc, occ, k, pad};
//                    params {Wa[occ,icc,k], Wb[occ,icc,k], ba[occ], bb[occ]}
//                    (channels: first half I, second half Q)
//   batchnorm        iparams {c}; fparams {eps, momentum};
//                    params {gamma, beta}; running {mean, var}
//   dense            iparams {fin, fout}; params {W[fout,fin], b[fout]}
//   simple_recurrent iparams {cin, hidden};
//                    params {Wx[h,cin], Wh[h,h], b[h]}; output is the full
//                    hidden-state trace (batch x hidden x tlen)
template <typename T>
struct LayerT {
  LayerKind kind;
  int in0 = 0;   // input node id (node 0 = graph input, node i+1 = layer i)
  int in1 = -1;  // second input, residual_add only
  std::vector<uint32_t> iparams;
  std::vector<float> fparams;
  std::vector<TensorT<T>> params;
  std::vector<TensorT<T>> running;
};

using Layer = LayerT<float>;

enum class Mode : uint8_t { train = 0, inference = 1 };

template <typename T>
struct ModelGraphT {
  std::vector<LayerT<T>> layers;
  int input_channels = 2;
  int input_len = 0;
  int num_classes = 0;
  Mode mode = Mode::inference;

  int num_nodes() const { return int(layers.size()) + 1; }
  // Throws ValidationError on bad wiring or a final node that is not a
  // length-num_classes logit vector.
  void validate() const;
  std::vector<std::vector<int>> node_shapes(int batch) const;
};

using ModelGraph = ModelGraphT<float>;

ModelGraphT<double> to_double(const ModelGraph& model);

uint64_t param_digest(const ModelGraph& model);

// Node outputs of one forward pass, kept for the backward pass.
template <typename T>
struct TraceT {
  std::vector<TensorT<T>> nodes;  // [0] = input copy, [i+1] = layer i output
  // Batchnorm statistics actually used (batch stats in train mode, running
  // stats in inference mode), indexed by layer.
  std::vector<TensorT<T>> bn_mean, bn_var;
};

// Forward pass; updates batchnorm running statistics when mode == train.
template <typename T>
TensorT<T> forward(ModelGraphT<T>& model, const TensorT<T>& batch);

template <typename T>
TraceT<T> forward_trace(ModelGraphT<T>& model, const TensorT<T>& batch);

// Gradient of an arbitrary scalar wrt input, given d(scalar)/d(logits).
// Parameter gradients are skipped.
template <typename T>
TensorT<T> backward_input(const ModelGraphT<T>& model, const TraceT<T>& trace,
                          const TensorT<T>& dlogits);

template <typename T>
struct LossGradsT {
  T loss = 0;
  std::vector<std::vector<TensorT<T>>> param_grads;  // [layer][param]
  TensorT<T> input_grad;
};

// Mean softmax cross-entropy plus exact reverse-mode gradients for every
// parameter and for the input batch.
template <typename T>
LossGradsT<T> loss_and_grads(ModelGraphT<T>& model, const TensorT<T>& batch,
                             std::span<const int> labels);

struct TrainSchedule {
  int epochs = 30;
  int batch_size = 128;
  double learning_rate = 1e-3;
  enum class Optimizer : uint8_t { sgd = 0, adam = 1 };
  Optimizer optimizer = Optimizer::adam;
  uint64_t seed = 0;
  bool shuffle = true;
  // 0 disables early stopping; otherwise stop after this many epochs without
  // a validation-accuracy improvement and restore the best snapshot.
  int early_stop_patience = 0;
};

struct OptimizerState {
  int64_t step = 0;
  std::vector<std::vector<Tensor>> m, v;

  static OptimizerState for_model(const ModelGraph& model);
};

// sgd: p -= lr*g; adam: bias-corrected moments, beta1=0.9 beta2=0.999 eps=1e-8.
void apply_update(ModelGraph& model,
                  const std::vector<std::vector<Tensor>>& grads,
                  const TrainSchedule& sched, OptimizerState& state);

struct TrainResult {
  std::vector<double> val_accuracy;  // one entry per completed epoch
};

// Mini-batch training over the given split; a column subset restricts frames
// to those sample positions (in subset order). Deterministic for a fixed
// seed; results are independent of thread count.
TrainResult train(ModelGraph& model, const sigmod::DatasetBundle& bundle,
                  sigmod::Split split, const TrainSchedule& sched,
                  const std::vector<int>* columns = nullptr);

// Batch assembly: frames -> tensor [B x 2 x N], optionally gathering columns.
Tensor make_batch(std::span<const sigmod::IQFrame> frames,
                  const std::vector<int>* columns = nullptr);

// Argmax predictions, ties resolved toward the lowest class index.
std::vector<int> predict(const ModelGraph& model,
                         std::span<const sigmod::IQFrame> frames,
                         const std::vector<int>* columns = nullptr);

double accuracy_frames(const ModelGraph& model,
                       std::span<const sigmod::IQFrame> frames,
                       const std::vector<int>* columns = nullptr);

// Accuracy over a bundle split; override_frames, when given, replaces the
// split's frames (e.g. with attacked copies) while labels come from the
// frames themselves.
double accuracy(const ModelGraph& model, const sigmod::DatasetBundle& bundle,
                sigmod::Split split, const std::vector<int>* columns = nullptr,
                const std::vector<sigmod::IQFrame>* override_frames = nullptr);

}  // namespace amc::tensornet
