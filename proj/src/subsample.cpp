#include "amc/subsample.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>

namespace amc::subsample {

using sigmod::DatasetBundle;
using sigmod::IQFrame;
using sigmod::Split;
using tensornet::ModelGraph;
using tensornet::Tensor;

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::none: return "none";
    case Scheme::uniform: return "uniform";
    case Scheme::complex_cnn: return "complex_cnn";
    case Scheme::resnet: return "resnet";
    case Scheme::cldnn: return "cldnn";
    case Scheme::holistic: return "holistic";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  for (Scheme s : {Scheme::none, Scheme::uniform, Scheme::complex_cnn,
                   Scheme::resnet, Scheme::cldnn, Scheme::holistic})
    if (scheme_name(s) == name) return s;
  throw ValidationError("unknown subsampler scheme: " + name);
}

void IndexSet::validate() const {
  if (frame_len <= 0) throw ValidationError("index set: frame_len must be > 0");
  std::vector<bool> seen(frame_len, false);
  for (int i : indices) {
    if (i < 0 || i >= frame_len)
      throw ValidationError("index set: index out of range");
    if (seen[i]) throw ValidationError("index set: duplicate index");
    seen[i] = true;
  }
}

IndexSet IndexSet::identity(int frame_len) {
  std::vector<int> idx(frame_len);
  for (int i = 0; i < frame_len; ++i) idx[i] = i;
  return IndexSet(std::move(idx), frame_len);
}

IndexSet uniform_indices(int frame_len, int n) {
  if (frame_len <= 0 || n <= 0 || frame_len % n != 0)
    throw ValidationError("uniform_indices: N must divide L");
  int alpha = frame_len / n;
  std::vector<int> idx(n);
  for (int k = 1; k <= n; ++k) idx[k - 1] = k * alpha - 1;
  return IndexSet(std::move(idx), frame_len);
}

IQFrame apply_indices(const IQFrame& frame, const IndexSet& idx) {
  if (frame.length() != idx.frame_len)
    throw ValidationError("apply_indices: frame length mismatch");
  IQFrame out;
  out.label = frame.label;
  out.snr_db = frame.snr_db;
  out.signal_power = frame.signal_power;
  out.noise_power = frame.noise_power;
  int n = idx.n();
  out.iq.resize(size_t(2) * n);
  for (int j = 0; j < n; ++j) {
    out.iq[j] = frame.iq[idx.indices[j]];
    out.iq[n + j] = frame.iq[frame.length() + idx.indices[j]];
  }
  return out;
}

std::vector<IQFrame> apply_indices(std::span<const IQFrame> frames,
                                   const IndexSet& idx) {
  std::vector<IQFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(apply_indices(f, idx));
  return out;
}

IQFrame embed_indices(const IQFrame& reduced, const IndexSet& idx) {
  if (reduced.length() != idx.n())
    throw ValidationError("embed_indices: reduced length mismatch");
  IQFrame out;
  out.label = reduced.label;
  out.snr_db = reduced.snr_db;
  out.signal_power = reduced.signal_power;
  out.noise_power = reduced.noise_power;
  out.iq.assign(size_t(2) * idx.frame_len, 0.0f);
  for (int j = 0; j < idx.n(); ++j) {
    out.iq[idx.indices[j]] = reduced.iq[j];
    out.iq[idx.frame_len + idx.indices[j]] = reduced.iq[idx.n() + j];
  }
  return out;
}

namespace {

// Accuracy of rm over frames with masked columns zeroed in both rows.
double eval_masked(const ModelGraph& rm, std::span<const IQFrame> frames,
                   const std::vector<uint8_t>& mask) {
  auto& model = const_cast<ModelGraph&>(rm);  // inference mode, no mutation
  int len = frames[0].length();
  size_t hits = 0;
  const size_t chunk = 256;
  for (size_t at = 0; at < frames.size(); at += chunk) {
    size_t cnt = std::min(chunk, frames.size() - at);
    Tensor batch = tensornet::make_batch(frames.subspan(at, cnt));
    for (size_t b = 0; b < cnt; ++b) {
      float* row = batch.data.data() + b * size_t(2) * len;
      for (int j = 0; j < len; ++j)
        if (mask[j]) {
          row[j] = 0.0f;
          row[len + j] = 0.0f;
        }
    }
    Tensor logits = tensornet::forward(model, batch);
    int m = rm.num_classes;
    for (size_t b = 0; b < cnt; ++b) {
      const float* z = logits.data.data() + b * size_t(m);
      int best = 0;
      for (int j = 1; j < m; ++j)
        if (z[j] > z[best]) best = j;
      if (best == int(frames[at + b].label)) ++hits;
    }
  }
  return double(hits) / double(frames.size());
}

std::vector<IQFrame> split_frames(const DatasetBundle& bundle, Split split) {
  std::vector<IQFrame> frames;
  for (size_t i = 0; i < bundle.frames.size(); ++i)
    if (bundle.split_of[i] == split) frames.push_back(bundle.frames[i]);
  return frames;
}

}  // namespace

std::vector<std::pair<int, double>> occlusion_scores(
    const ModelGraph& rm, const DatasetBundle& bundle, Split split,
    const IndexSet& zeroed, std::span<const int> candidates) {
  const int len = bundle.frame_len();
  if (rm.input_len != len)
    throw ValidationError("occlusion: rm must accept full-length frames");
  if (rm.mode != tensornet::Mode::inference)
    throw ValidationError("occlusion: rm must be in inference mode");
  std::vector<uint8_t> base_mask(len, 0);
  for (int i : zeroed.indices) base_mask[i] = 1;
  for (int c : candidates) {
    if (c < 0 || c >= len)
      throw ValidationError("occlusion: candidate out of range");
    if (base_mask[c])
      throw ValidationError("occlusion: candidate already zeroed");
  }
  std::vector<std::pair<int, double>> scores(candidates.size());
  if (candidates.empty()) return scores;

  auto frames = split_frames(bundle, split);
  if (frames.empty()) throw ValidationError("occlusion: split is empty");

  // Candidates are independent read-only evaluations; nested kernel
  // parallelism collapses to serial inside this region.
  #pragma omp parallel for schedule(dynamic)
  for (size_t ci = 0; ci < candidates.size(); ++ci) {
    std::vector<uint8_t> mask = base_mask;
    mask[candidates[ci]] = 1;
    scores[ci] = {candidates[ci], eval_masked(rm, frames, mask)};
  }
  return scores;
}

namespace {

void zero_column(DatasetBundle& bundle, int col) {
  int len = bundle.frame_len();
  for (size_t i = 0; i < bundle.frames.size(); ++i) {
    if (bundle.split_of[i] == Split::test) continue;
    auto& fr = bundle.frames[i];
    fr.iq[col] = 0.0f;
    fr.iq[size_t(len) + col] = 0.0f;
  }
}

modelzoo::Family ranker_family(Scheme scheme) {
  switch (scheme) {
    case Scheme::complex_cnn: return modelzoo::Family::conv_ranker_complex;
    case Scheme::resnet: return modelzoo::Family::residual_ranker;
    case Scheme::cldnn: return modelzoo::Family::conv_recurrent_ranker;
    default:
      throw ValidationError("rank_datadriven: " + scheme_name(scheme) +
                            " is not a data-driven scheme");
  }
}

}  // namespace

RankResult rank_datadriven(Scheme scheme, const DatasetBundle& bundle, int n,
                           const RankOptions& options) {
  const int len = bundle.frame_len();
  if (n < 1 || n > len)
    throw ValidationError("rank_datadriven: need 1 <= N <= L");

  modelzoo::ArchSpec arch;
  arch.family = ranker_family(scheme);
  arch.input_len = len;
  arch.num_classes = bundle.num_classes();
  arch.width_scale = options.width_scale;
  arch.kernel_len = options.kernel_len;
  arch.init_seed = options.init_seed;
  ModelGraph rm = modelzoo::build_ranker(arch);

  tensornet::train(rm, bundle, Split::train, options.initial);

  RankResult result;
  result.initial_rm = rm;
  result.ranking.scheme = scheme;
  result.ranking.ranker_model_digest = tensornet::param_digest(rm);

  // Working copy: selected columns get permanently zeroed for fine-tuning.
  DatasetBundle work = bundle;

  std::vector<int> selected;
  std::vector<bool> taken(len, false);
  for (int round = 0; round < n; ++round) {
    std::vector<int> candidates;
    for (int i = 0; i < len; ++i)
      if (!taken[i]) candidates.push_back(i);

    auto scores = occlusion_scores(rm, bundle, Split::validation,
                                   IndexSet(selected, len), candidates);

    int best_idx = -1;
    double best_acc = 2.0;
    for (const auto& [idx, acc] : scores) {
      if (options.record_scores)
        result.ranking.per_round_scores.push_back({round, idx, acc});
      if (acc < best_acc || (acc == best_acc && idx < best_idx)) {
        best_acc = acc;
        best_idx = idx;
      }
    }

    selected.push_back(best_idx);
    taken[best_idx] = true;
    zero_column(work, best_idx);

    if (round + 1 < n && options.finetune.epochs > 0) {
      if (options.retrain_from_scratch) {
        arch.init_seed = derive_seed(options.init_seed, {uint64_t(round) + 1});
        rm = modelzoo::build_ranker(arch);
        tensornet::TrainSchedule sched = options.initial;
        sched.seed = derive_seed(sched.seed, {uint64_t(round) + 1});
        tensornet::train(rm, work, Split::train, sched);
      } else {
        tensornet::TrainSchedule sched = options.finetune;
        sched.seed = derive_seed(sched.seed, {uint64_t(round) + 1});
        tensornet::train(rm, work, Split::train, sched);
      }
    }
  }

  result.ranking.base = IndexSet(std::move(selected), len);
  return result;
}

Ranking holistic_combine(const Ranking& r0, const Ranking& r1,
                         const Ranking& r2, const ModelGraph& rm,
                         const DatasetBundle& bundle, int n) {
  const Ranking* rs[3] = {&r0, &r1, &r2};
  int len = r0.base.frame_len;
  for (const Ranking* r : rs) {
    if (r->base.frame_len != len || r->base.n() != r0.base.n())
      throw ValidationError("holistic: rankings disagree on L or N");
  }
  if (n < 1 || n > len) throw ValidationError("holistic: bad N");
  if (rm.input_len != len)
    throw ValidationError("holistic: rm must accept full-length frames");

  std::vector<int> votes(len, 0);
  for (const Ranking* r : rs)
    for (int i : r->base.indices) votes[i] += 1;

  std::vector<int> pool;
  for (int i = 0; i < len; ++i)
    if (votes[i] > 0) pool.push_back(i);
  if (int(pool.size()) < n)
    throw ValidationError("holistic: candidate pool smaller than N");

  auto scored = occlusion_scores(rm, bundle, Split::validation,
                                 IndexSet({}, len), pool);
  std::vector<double> acc(len, 0.0);
  for (const auto& [idx, a] : scored) acc[idx] = a;

  std::sort(pool.begin(), pool.end(), [&](int a, int b) {
    if (votes[a] != votes[b]) return votes[a] > votes[b];
    if (acc[a] != acc[b]) return acc[a] < acc[b];
    return a < b;
  });

  Ranking out;
  out.scheme = Scheme::holistic;
  out.ranker_model_digest = tensornet::param_digest(rm);
  out.base = IndexSet(std::vector<int>(pool.begin(), pool.begin() + n), len);
  for (const auto& [idx, a] : scored)
    out.per_round_scores.push_back({0, idx, a});
  return out;
}

}  // namespace amc::subsample
