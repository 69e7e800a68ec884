#pragma once

#include <cstdint>

#include "amc/tensornet.hpp"

namespace amc::modelzoo {

enum class Family : uint8_t {
  residual_classifier = 0,
  conv_ranker_complex = 1,
  residual_ranker = 2,
  conv_recurrent_ranker = 3,
};

std::string family_name(Family f);

struct ArchSpec {
  Family family = Family::residual_classifier;
  int input_len = 128;
  int num_classes = 8;
  double width_scale = 1.0;  // presets: 0.25, 0.5, 1.0
  int kernel_len = 5;
  uint64_t init_seed = 0;

  void validate() const;
};

// Four residual blocks (conv-bn-relu x3, skip from the first conv output to
// the third conv output) -> global average pool -> dense -> dense(M).
// Filter counts 16/24/32/48 at width_scale 1.0.
tensornet::ModelGraph build_classifier(const ArchSpec& spec);

// conv_ranker_complex:   two complex conv layers -> relu -> pool -> dense(M)
// residual_ranker:       classifier topology
// conv_recurrent_ranker: two conv layers -> tanh recurrence -> dense(M)
tensornet::ModelGraph build_ranker(const ArchSpec& spec);

size_t param_count(const tensornet::ModelGraph& model);

}  // namespace amc::modelzoo
