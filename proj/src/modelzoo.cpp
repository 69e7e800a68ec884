#include "amc/modelzoo.hpp"

#include <cmath>

namespace amc::modelzoo {

using tensornet::Layer;
using tensornet::LayerKind;
using tensornet::ModelGraph;
using tensornet::Tensor;

std::string family_name(Family f) {
  switch (f) {
    case Family::residual_classifier: return "residual_classifier";
    case Family::conv_ranker_complex: return "conv_ranker_complex";
    case Family::residual_ranker: return "residual_ranker";
    case Family::conv_recurrent_ranker: return "conv_recurrent_ranker";
  }
  return "?";
}

void ArchSpec::validate() const {
  if (input_len < 8) throw ValidationError("arch: input_len must be >= 8");
  if (num_classes < 2) throw ValidationError("arch: need >= 2 classes");
  bool preset = false;
  for (double w : {0.25, 0.5, 1.0})
    if (std::abs(width_scale - w) < 1e-12) preset = true;
  if (!preset)
    throw ValidationError("arch: width_scale must be one of 0.25, 0.5, 1.0");
  if (kernel_len < 1 || kernel_len % 2 == 0)
    throw ValidationError("arch: kernel_len must be odd and positive");
}

namespace {

int scaled(int base, double scale, int floor_at = 2) {
  return std::max(floor_at, int(std::lround(base * scale)));
}

void fill_kaiming(Tensor& t, int fan_in, RngStream& rng) {
  double bound = std::sqrt(6.0 / double(fan_in));
  for (auto& v : t.data) v = float(rng.uniform(-bound, bound));
}

// Orthogonalize a seeded Gaussian square matrix by Gram-Schmidt.
void fill_orthogonal(Tensor& t, int dim, RngStream& rng) {
  std::vector<double> a(size_t(dim) * dim);
  for (auto& v : a) v = rng.normal();
  for (int r = 0; r < dim; ++r) {
    double* row = a.data() + size_t(r) * dim;
    for (int p = 0; p < r; ++p) {
      const double* prev = a.data() + size_t(p) * dim;
      double dot = 0;
      for (int j = 0; j < dim; ++j) dot += row[j] * prev[j];
      for (int j = 0; j < dim; ++j) row[j] -= dot * prev[j];
    }
    double norm = 0;
    for (int j = 0; j < dim; ++j) norm += row[j] * row[j];
    norm = std::sqrt(std::max(norm, 1e-12));
    for (int j = 0; j < dim; ++j) row[j] /= norm;
  }
  for (size_t i = 0; i < a.size(); ++i) t.data[i] = float(a[i]);
}

struct Builder {
  ModelGraph model;
  RngStream rng;

  Builder(int channels, int len, int classes, uint64_t seed)
      : rng(seed, {0x494e4954ULL}) {
    model.input_channels = channels;
    model.input_len = len;
    model.num_classes = classes;
  }

  int last() const { return int(model.layers.size()); }

  int conv(int in_node, int ci, int co, int k) {
    Layer ly;
    ly.kind = LayerKind::conv1d;
    ly.in0 = in_node;
    ly.iparams = {uint32_t(ci), uint32_t(co), uint32_t(k), uint32_t(k / 2)};
    ly.params.emplace_back(std::vector<int>{co, ci, k});
    ly.params.emplace_back(std::vector<int>{co});
    fill_kaiming(ly.params[0], ci * k, rng);
    model.layers.push_back(std::move(ly));
    return last();
  }

  int complex_conv(int in_node, int icc, int occ, int k) {
    Layer ly;
    ly.kind = LayerKind::complex_conv1d;
    ly.in0 = in_node;
    ly.iparams = {uint32_t(icc), uint32_t(occ), uint32_t(k), uint32_t(k / 2)};
    ly.params.emplace_back(std::vector<int>{occ, icc, k});
    ly.params.emplace_back(std::vector<int>{occ, icc, k});
    ly.params.emplace_back(std::vector<int>{occ});
    ly.params.emplace_back(std::vector<int>{occ});
    fill_kaiming(ly.params[0], 2 * icc * k, rng);
    fill_kaiming(ly.params[1], 2 * icc * k, rng);
    model.layers.push_back(std::move(ly));
    return last();
  }

  int batchnorm(int in_node, int c) {
    Layer ly;
    ly.kind = LayerKind::batchnorm;
    ly.in0 = in_node;
    ly.iparams = {uint32_t(c)};
    ly.fparams = {1e-5f, 0.1f};
    ly.params.emplace_back(std::vector<int>{c});
    ly.params.emplace_back(std::vector<int>{c});
    for (auto& v : ly.params[0].data) v = 1.0f;  // gamma
    ly.running.emplace_back(std::vector<int>{c});
    ly.running.emplace_back(std::vector<int>{c});
    for (auto& v : ly.running[1].data) v = 1.0f;  // running var
    model.layers.push_back(std::move(ly));
    return last();
  }

  int relu(int in_node) {
    Layer ly;
    ly.kind = LayerKind::relu;
    ly.in0 = in_node;
    model.layers.push_back(std::move(ly));
    return last();
  }

  int dense(int in_node, int fin, int fout) {
    Layer ly;
    ly.kind = LayerKind::dense;
    ly.in0 = in_node;
    ly.iparams = {uint32_t(fin), uint32_t(fout)};
    ly.params.emplace_back(std::vector<int>{fout, fin});
    ly.params.emplace_back(std::vector<int>{fout});
    fill_kaiming(ly.params[0], fin, rng);
    model.layers.push_back(std::move(ly));
    return last();
  }

  int gap(int in_node) {
    Layer ly;
    ly.kind = LayerKind::global_avg_pool;
    ly.in0 = in_node;
    model.layers.push_back(std::move(ly));
    return last();
  }

  int add(int a, int b) {
    Layer ly;
    ly.kind = LayerKind::residual_add;
    ly.in0 = a;
    ly.in1 = b;
    model.layers.push_back(std::move(ly));
    return last();
  }

  int recurrent(int in_node, int cin, int hidden) {
    Layer ly;
    ly.kind = LayerKind::simple_recurrent;
    ly.in0 = in_node;
    ly.iparams = {uint32_t(cin), uint32_t(hidden)};
    ly.params.emplace_back(std::vector<int>{hidden, cin});
    ly.params.emplace_back(std::vector<int>{hidden, hidden});
    ly.params.emplace_back(std::vector<int>{hidden});
    fill_kaiming(ly.params[0], cin, rng);
    fill_orthogonal(ly.params[1], hidden, rng);
    model.layers.push_back(std::move(ly));
    return last();
  }

  // conv-bn-relu x3 with a skip connection from the first conv output to the
  // third conv output.
  int residual_block(int in_node, int cin, int width, int k) {
    int y1 = conv(in_node, cin, width, k);
    int r1 = relu(batchnorm(y1, width));
    int y2 = conv(r1, width, width, k);
    int r2 = relu(batchnorm(y2, width));
    int y3 = conv(r2, width, width, k);
    int s = add(y3, y1);
    return relu(batchnorm(s, width));
  }
};

ModelGraph build_residual(const ArchSpec& spec) {
  Builder b(2, spec.input_len, spec.num_classes, spec.init_seed);
  const int widths[4] = {scaled(16, spec.width_scale),
                         scaled(24, spec.width_scale),
                         scaled(32, spec.width_scale),
                         scaled(48, spec.width_scale)};
  int node = 0;
  int cin = 2;
  for (int blk = 0; blk < 4; ++blk) {
    node = b.residual_block(node, cin, widths[blk], spec.kernel_len);
    cin = widths[blk];
  }
  node = b.gap(node);
  int hidden = scaled(64, spec.width_scale, 8);
  node = b.relu(b.dense(node, cin, hidden));
  b.dense(node, hidden, spec.num_classes);
  b.model.validate();
  return std::move(b.model);
}

}  // namespace

ModelGraph build_classifier(const ArchSpec& spec) {
  spec.validate();
  if (spec.family != Family::residual_classifier)
    throw ValidationError("build_classifier: wrong family " +
                          family_name(spec.family));
  return build_residual(spec);
}

ModelGraph build_ranker(const ArchSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case Family::residual_ranker:
      return build_residual(spec);
    case Family::conv_ranker_complex: {
      Builder b(2, spec.input_len, spec.num_classes, spec.init_seed);
      int w = scaled(8, spec.width_scale);
      int node = b.complex_conv(0, 1, w, spec.kernel_len);
      node = b.complex_conv(node, w, w, spec.kernel_len);
      node = b.gap(b.relu(node));
      b.dense(node, 2 * w, spec.num_classes);
      b.model.validate();
      return std::move(b.model);
    }
    case Family::conv_recurrent_ranker: {
      Builder b(2, spec.input_len, spec.num_classes, spec.init_seed);
      int w = scaled(16, spec.width_scale, 4);
      int hidden = scaled(16, spec.width_scale, 4);
      int node = b.conv(0, 2, w, spec.kernel_len);
      node = b.conv(node, w, w, spec.kernel_len);
      node = b.recurrent(node, w, hidden);
      b.dense(node, hidden * spec.input_len, spec.num_classes);
      b.model.validate();
      return std::move(b.model);
    }
    default:
      throw ValidationError("build_ranker: wrong family " +
                            family_name(spec.family));
  }
}

size_t param_count(const tensornet::ModelGraph& model) {
  size_t n = 0;
  for (const auto& ly : model.layers)
    for (const auto& p : ly.params) n += p.numel();
  return n;
}

}  // namespace amc::modelzoo
