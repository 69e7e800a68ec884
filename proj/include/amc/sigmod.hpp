#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "amc/common.hpp"

namespace amc::sigmod {

using cplx = std::complex<double>;

// Raw complex baseband frame before I/Q splitting.
struct ComplexSignal {
  std::vector<cplx> samples;

  size_t length() const { return samples.size(); }
};

enum class Scheme : uint8_t {
  bpsk,
  qpsk,
  psk8,
  pam4,
  qam16,
  qam64,
  gfsk,
  cpfsk,
};

constexpr std::array<Scheme, 8> kAllSchemes = {
    Scheme::bpsk, Scheme::qpsk,  Scheme::psk8, Scheme::pam4,
    Scheme::qam16, Scheme::qam64, Scheme::gfsk, Scheme::cpfsk};

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);  // throws ValidationError

// One labeled example: row 0 holds I, row 1 holds Q.
struct IQFrame {
  std::vector<float> iq;  // 2*L, row-major
  uint16_t label = 0;
  int16_t snr_db = 0;
  float signal_power = 0.0f;  // mean square of pre-noise samples
  float noise_power = 0.0f;   // per-sample complex noise variance

  int length() const { return int(iq.size() / 2); }
  float& at(int row, int col) { return iq[size_t(row) * (iq.size() / 2) + col]; }
  float at(int row, int col) const {
    return iq[size_t(row) * (iq.size() / 2) + col];
  }
};

struct ChannelConfig {
  int num_taps = 3;
  double tap_power_decay_db = 3.0;        // per-tap amplitude profile
  double max_cfo_cycles_per_sample = 0.002;
  double max_sro_ppm = 50.0;
  bool phase_offset_uniform = true;

  void validate() const;
};

enum class Split : uint8_t { train = 0, validation = 1, test = 2 };

struct GenConfig {
  std::vector<Scheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};
  std::vector<int> snr_grid_db{0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  int frames_per_cell = 500;
  int frame_len = 128;
  ChannelConfig channel;
  std::array<double, 3> split_fractions{0.4, 0.1, 0.5};
  uint64_t seed = 1;
  // Pulse-shaping stand-ins; the reference dataset's generator does not pin
  // them, so they stay configurable.
  int samples_per_symbol = 8;
  double rrc_rolloff = 0.35;
  int rrc_span_symbols = 8;
  double gfsk_bt = 0.35;

  int num_classes() const { return int(schemes.size()); }
  void validate() const;
};

struct DatasetBundle {
  std::vector<IQFrame> frames;
  std::vector<Split> split_of;
  GenConfig gen_config;
  uint32_t format_version = 1;

  int num_classes() const { return gen_config.num_classes(); }
  int frame_len() const { return gen_config.frame_len; }
  std::vector<int> split_indices(Split s) const;
};

struct ModulationParams {
  int samples_per_symbol = 8;
  double rrc_rolloff = 0.35;
  int rrc_span_symbols = 8;
  double gfsk_bt = 0.35;
};

// L complex samples with unit mean power in expectation over payloads.
// Symbols are drawn i.i.d. uniform over the constellation from payload_rng.
ComplexSignal modulate_frame(Scheme scheme, int frame_len, RngStream& payload_rng,
                             const ModulationParams& params = {});

// Static per-frame tapped delay line + CFO + phase offset + fractional
// sample-rate offset; result truncated/zero-padded back to the input length.
ComplexSignal impair(const ComplexSignal& sig, const ChannelConfig& ch,
                     RngStream& rng);

// Adds circular complex Gaussian noise at the requested SNR relative to the
// measured signal power. Returns the per-sample noise variance used.
std::pair<ComplexSignal, double> add_noise(const ComplexSignal& sig,
                                           int snr_db, RngStream& rng);

double measure_power(const ComplexSignal& sig);

DatasetBundle generate_dataset(const GenConfig& cfg);

// Constellations exposed for tests (unit mean power by construction).
std::vector<cplx> constellation(Scheme s);

}  // namespace amc::sigmod
