#pragma once

#include <span>
#include <string>
#include <vector>

#include "amc/modelzoo.hpp"
#include "amc/sigmod.hpp"
#include "amc/tensornet.hpp"

namespace amc::subsample {

enum class Scheme : uint8_t {
  none = 0,
  uniform = 1,
  complex_cnn = 2,
  resnet = 3,
  cldnn = 4,
  holistic = 5,
};

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

constexpr Scheme kDataDrivenSchemes[3] = {Scheme::complex_cnn, Scheme::resnet,
                                          Scheme::cldnn};

// Ordered set of distinct sample positions within a length-L frame. May be
// empty (e.g. as an occlusion "already zeroed" set).
struct IndexSet {
  std::vector<int> indices;
  int frame_len = 0;

  IndexSet() = default;
  IndexSet(std::vector<int> idx, int len)
      : indices(std::move(idx)), frame_len(len) {
    validate();
  }

  int n() const { return int(indices.size()); }
  void validate() const;
  static IndexSet identity(int frame_len);
};

struct RoundScore {
  int round = 0;
  int index = 0;
  double accuracy = 0.0;
};

struct Ranking {
  IndexSet base;  // most-important-first
  Scheme scheme = Scheme::uniform;
  uint64_t ranker_model_digest = 0;  // hash of the trained RM's parameters
  std::vector<RoundScore> per_round_scores;  // full candidate log, optional
};

// Zero-based positions {alpha-1, 2*alpha-1, ..., L-1} with alpha = L/N.
IndexSet uniform_indices(int frame_len, int n);

// Column gather in index order; frame metadata preserved.
sigmod::IQFrame apply_indices(const sigmod::IQFrame& frame,
                              const IndexSet& idx);
std::vector<sigmod::IQFrame> apply_indices(
    std::span<const sigmod::IQFrame> frames, const IndexSet& idx);

// Scatter a reduced frame back into a zero-filled length-L frame.
sigmod::IQFrame embed_indices(const sigmod::IQFrame& reduced,
                              const IndexSet& idx);

// For every candidate i, the ranker model's accuracy on the split when
// columns zeroed + {i} are set to 0 in both rows. Results in candidate
// order; neither the model nor the bundle is mutated.
std::vector<std::pair<int, double>> occlusion_scores(
    const tensornet::ModelGraph& rm, const sigmod::DatasetBundle& bundle,
    sigmod::Split split, const IndexSet& zeroed,
    std::span<const int> candidates);

struct RankOptions {
  tensornet::TrainSchedule initial;    // RM training on full frames
  tensornet::TrainSchedule finetune;   // per-round adaptation; 0 epochs = frozen
  bool retrain_from_scratch = false;   // rebuild + retrain the RM every round
  bool record_scores = true;
  double width_scale = 1.0;
  int kernel_len = 5;
  uint64_t init_seed = 0;
};

struct RankResult {
  Ranking ranking;
  // RM state right after the initial training pass (the scheme's ranker
  // model; the holistic combiner scores against this).
  tensornet::ModelGraph initial_rm;
};

// Greedy occlusion ranking: each round scores all remaining candidates on the
// validation split, keeps the accuracy argmin (ties to the lowest index),
// permanently zeroes that column in the working train/validation copies and
// adapts the RM.
RankResult rank_datadriven(Scheme scheme, const sigmod::DatasetBundle& bundle,
                           int n, const RankOptions& options);

// Ensemble of exactly three data-driven rankings: vote count first, then
// single-pass occlusion accuracy (lower = more important), then lowest index.
Ranking holistic_combine(const Ranking& r0, const Ranking& r1,
                         const Ranking& r2, const tensornet::ModelGraph& rm,
                         const sigmod::DatasetBundle& bundle, int n);

}  // namespace amc::subsample
