#include "amc/sigmod.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace amc::sigmod {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Gray-coded square QAM axis levels, unit mean power overall.
std::vector<double> qam_axis(int levels_per_axis) {
  std::vector<double> lv(levels_per_axis);
  for (int i = 0; i < levels_per_axis; ++i)
    lv[i] = double(2 * i - levels_per_axis + 1);
  double mean_sq = 0.0;
  for (double v : lv) mean_sq += v * v;
  mean_sq /= levels_per_axis;
  // Two axes contribute equally, so each axis carries half the power.
  double scale = 1.0 / std::sqrt(2.0 * mean_sq);
  for (double& v : lv) v *= scale;
  return lv;
}

int gray(int i) { return i ^ (i >> 1); }

}  // namespace

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::bpsk: return "bpsk";
    case Scheme::qpsk: return "qpsk";
    case Scheme::psk8: return "8psk";
    case Scheme::pam4: return "pam4";
    case Scheme::qam16: return "qam16";
    case Scheme::qam64: return "qam64";
    case Scheme::gfsk: return "gfsk";
    case Scheme::cpfsk: return "cpfsk";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  for (Scheme s : kAllSchemes)
    if (scheme_name(s) == name) return s;
  throw ValidationError("unknown modulation scheme identifier: " + name);
}

std::vector<cplx> constellation(Scheme s) {
  switch (s) {
    case Scheme::bpsk:
      return {cplx(1, 0), cplx(-1, 0)};
    case Scheme::qpsk: {
      double a = 1.0 / std::sqrt(2.0);
      return {cplx(a, a), cplx(-a, a), cplx(-a, -a), cplx(a, -a)};
    }
    case Scheme::psk8: {
      std::vector<cplx> pts(8);
      for (int i = 0; i < 8; ++i) {
        double ang = 2.0 * kPi * gray(i) / 8.0;
        pts[i] = cplx(std::cos(ang), std::sin(ang));
      }
      return pts;
    }
    case Scheme::pam4: {
      std::vector<double> lv = {-3, -1, 1, 3};
      double scale = 1.0 / std::sqrt(5.0);  // mean square of {1,3} pairs
      std::vector<cplx> pts(4);
      for (int i = 0; i < 4; ++i) pts[i] = cplx(lv[gray(i)] * scale, 0.0);
      return pts;
    }
    case Scheme::qam16: {
      auto ax = qam_axis(4);
      std::vector<cplx> pts(16);
      for (int i = 0; i < 16; ++i)
        pts[i] = cplx(ax[gray(i >> 2)], ax[gray(i & 3)]);
      return pts;
    }
    case Scheme::qam64: {
      auto ax = qam_axis(8);
      std::vector<cplx> pts(64);
      for (int i = 0; i < 64; ++i)
        pts[i] = cplx(ax[gray(i >> 3)], ax[gray(i & 7)]);
      return pts;
    }
    default:
      throw ValidationError("no linear constellation for scheme " +
                            scheme_name(s));
  }
}

namespace {

// Root-raised-cosine taps in symbol-time, normalized so the interpolated
// waveform keeps unit mean power (sum of squared taps = samples/symbol).
std::vector<double> rrc_taps(int sps, double beta, int span_symbols) {
  int n = span_symbols * sps + 1;
  std::vector<double> h(n);
  for (int i = 0; i < n; ++i) {
    double t = (i - span_symbols * sps / 2) / double(sps);
    double v;
    if (std::abs(t) < 1e-12) {
      v = 1.0 - beta + 4.0 * beta / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
      v = beta / std::sqrt(2.0) *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) +
           (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
    } else {
      double num = std::sin(kPi * t * (1.0 - beta)) +
                   4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
      double den = kPi * t * (1.0 - 16.0 * beta * beta * t * t);
      v = num / den;
    }
    h[i] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  double scale = std::sqrt(double(sps) / energy);
  for (double& v : h) v *= scale;
  return h;
}

// Gaussian pulse for GFSK, unit area.
std::vector<double> gaussian_taps(int sps, double bt, int span_symbols) {
  int n = span_symbols * sps + 1;
  std::vector<double> g(n);
  double sigma = std::sqrt(std::log(2.0)) / (2.0 * kPi * bt);
  for (int i = 0; i < n; ++i) {
    double t = (i - span_symbols * sps / 2) / double(sps);
    g[i] = std::exp(-t * t / (2.0 * sigma * sigma));
  }
  double sum = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= sum;
  return g;
}

// Linear modulation: draw extra symbols so the returned window contains only
// steady-state filter output (no edge transients).
ComplexSignal modulate_linear(Scheme scheme, int frame_len, int sps,
                              double beta, int span, RngStream& rng) {
  auto pts = constellation(scheme);
  auto h = rrc_taps(sps, beta, span);
  int payload_syms = frame_len / sps;
  int total_syms = payload_syms + span;
  std::vector<cplx> syms(total_syms);
  for (auto& s : syms) s = pts[rng.uniform_int(pts.size())];

  int offset = span / 2 * sps;
  ComplexSignal out;
  out.samples.assign(frame_len, cplx(0, 0));
  int half = span * sps / 2;
  for (int m = 0; m < frame_len; ++m) {
    int mm = m + offset;
    cplx acc(0, 0);
    for (int k = 0; k < total_syms; ++k) {
      int hi = mm - k * sps + half;
      if (hi >= 0 && hi < int(h.size())) acc += syms[k] * h[hi];
    }
    out.samples[m] = acc;
  }
  return out;
}

// Continuous-phase binary FSK with modulation index 0.5; optional Gaussian
// frequency pulse (GFSK). Constant envelope by construction.
ComplexSignal modulate_cpm(int frame_len, int sps, bool gaussian, double bt,
                           RngStream& rng) {
  const double mod_index = 0.5;
  int guard_syms = gaussian ? 4 : 1;
  int payload_syms = frame_len / sps + 2 * guard_syms;
  std::vector<double> nrz(size_t(payload_syms) * sps);
  for (int k = 0; k < payload_syms; ++k) {
    double a = rng.uniform_int(2) ? 1.0 : -1.0;
    for (int j = 0; j < sps; ++j) nrz[size_t(k) * sps + j] = a;
  }
  std::vector<double> freq;
  if (gaussian) {
    auto g = gaussian_taps(sps, bt, 2 * guard_syms);
    int half = int(g.size()) / 2;
    freq.assign(nrz.size(), 0.0);
    for (size_t m = 0; m < nrz.size(); ++m) {
      double acc = 0.0;
      for (size_t j = 0; j < g.size(); ++j) {
        int idx = int(m) - int(j) + half;
        if (idx >= 0 && idx < int(nrz.size())) acc += nrz[idx] * g[j];
      }
      freq[m] = acc;
    }
  } else {
    freq = nrz;
  }
  int offset = guard_syms * sps;
  double phase = 0.0;
  // Integrate phase over the leading guard to randomize the entry phase.
  for (int m = 0; m < offset; ++m) phase += kPi * mod_index * freq[m] / sps;
  ComplexSignal out;
  out.samples.resize(frame_len);
  for (int m = 0; m < frame_len; ++m) {
    phase += kPi * mod_index * freq[offset + m] / sps;
    out.samples[m] = cplx(std::cos(phase), std::sin(phase));
  }
  return out;
}

}  // namespace

ComplexSignal modulate_frame(Scheme scheme, int frame_len,
                             RngStream& payload_rng,
                             const ModulationParams& params) {
  if (frame_len <= 0 || frame_len % params.samples_per_symbol != 0)
    throw ValidationError(
        "frame length must be a positive multiple of samples-per-symbol");
  switch (scheme) {
    case Scheme::gfsk:
      return modulate_cpm(frame_len, params.samples_per_symbol, true,
                          params.gfsk_bt, payload_rng);
    case Scheme::cpfsk:
      return modulate_cpm(frame_len, params.samples_per_symbol, false,
                          params.gfsk_bt, payload_rng);
    default:
      return modulate_linear(scheme, frame_len, params.samples_per_symbol,
                             params.rrc_rolloff, params.rrc_span_symbols,
                             payload_rng);
  }
}

void ChannelConfig::validate() const {
  if (num_taps < 1) throw ValidationError("channel: num_taps must be >= 1");
  if (max_cfo_cycles_per_sample < 0 || max_cfo_cycles_per_sample >= 0.5)
    throw ValidationError("channel: max CFO must lie in [0, 0.5) cycles/sample");
  if (max_sro_ppm < 0) throw ValidationError("channel: max SRO must be >= 0");
}

ComplexSignal impair(const ComplexSignal& sig, const ChannelConfig& ch,
                     RngStream& rng) {
  if (sig.samples.empty()) throw ValidationError("impair: empty signal");
  ch.validate();
  const int n = int(sig.samples.size());

  // Draw order is part of the determinism contract: taps, CFO, phase, SRO.
  std::vector<cplx> taps(ch.num_taps);
  double norm = 0.0;
  for (int k = 0; k < ch.num_taps; ++k) {
    double amp = std::pow(10.0, -ch.tap_power_decay_db * k / 20.0);
    double re = rng.normal();
    double im = rng.normal();
    taps[k] = amp * cplx(re, im) / std::sqrt(2.0);
    norm += std::norm(taps[k]);
  }
  norm = std::sqrt(norm);
  for (auto& t : taps) t /= norm;

  double cfo = rng.uniform(-ch.max_cfo_cycles_per_sample,
                           ch.max_cfo_cycles_per_sample);
  double phi = ch.phase_offset_uniform ? rng.uniform(0.0, 2.0 * kPi) : 0.0;
  double sro = rng.uniform(-ch.max_sro_ppm, ch.max_sro_ppm) * 1e-6;

  std::vector<cplx> faded(n, cplx(0, 0));
  for (int m = 0; m < n; ++m) {
    cplx acc(0, 0);
    for (int k = 0; k < ch.num_taps && k <= m; ++k)
      acc += taps[k] * sig.samples[m - k];
    faded[m] = acc;
  }

  for (int m = 0; m < n; ++m) {
    double ang = 2.0 * kPi * cfo * m + phi;
    faded[m] *= cplx(std::cos(ang), std::sin(ang));
  }

  // Fractional resampling by (1 + sro) via linear interpolation.
  ComplexSignal out;
  out.samples.assign(n, cplx(0, 0));
  double rate = 1.0 + sro;
  for (int m = 0; m < n; ++m) {
    double pos = m * rate;
    int i0 = int(std::floor(pos));
    double frac = pos - i0;
    if (i0 >= n) break;  // zero-pad tail
    cplx a = faded[i0];
    cplx b = (i0 + 1 < n) ? faded[i0 + 1] : cplx(0, 0);
    out.samples[m] = a * (1.0 - frac) + b * frac;
  }
  return out;
}

double measure_power(const ComplexSignal& sig) {
  if (sig.samples.empty()) throw ValidationError("measure_power: empty signal");
  double p = 0.0;
  for (const cplx& s : sig.samples) p += std::norm(s);
  return p / double(sig.samples.size());
}

std::pair<ComplexSignal, double> add_noise(const ComplexSignal& sig,
                                           int snr_db, RngStream& rng) {
  double ps = measure_power(sig);
  if (ps <= 0.0) throw ValidationError("add_noise: signal power must be > 0");
  double pn = ps * std::pow(10.0, -snr_db / 10.0);
  double sigma = std::sqrt(pn / 2.0);
  ComplexSignal out = sig;
  for (auto& s : out.samples)
    s += cplx(sigma * rng.normal(), sigma * rng.normal());
  return {std::move(out), pn};
}

void GenConfig::validate() const {
  if (schemes.size() < 2) throw ValidationError("gen: need at least 2 schemes");
  for (size_t i = 0; i < schemes.size(); ++i)
    for (size_t j = i + 1; j < schemes.size(); ++j)
      if (schemes[i] == schemes[j])
        throw ValidationError("gen: duplicate scheme in list");
  if (snr_grid_db.empty()) throw ValidationError("gen: empty SNR grid");
  for (size_t i = 0; i < snr_grid_db.size(); ++i)
    for (size_t j = i + 1; j < snr_grid_db.size(); ++j)
      if (snr_grid_db[i] == snr_grid_db[j])
        throw ValidationError("gen: duplicate SNR level");
  if (frames_per_cell < 1)
    throw ValidationError("gen: frames_per_cell must be >= 1");
  if (frame_len < 1 || frame_len % samples_per_symbol != 0)
    throw ValidationError(
        "gen: frame_len must be a positive multiple of samples_per_symbol");
  double sum = split_fractions[0] + split_fractions[1] + split_fractions[2];
  for (double f : split_fractions)
    if (f < 0) throw ValidationError("gen: split fractions must be >= 0");
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("gen: split fractions must sum to 1");
  channel.validate();
}

std::vector<int> DatasetBundle::split_indices(Split s) const {
  std::vector<int> idx;
  for (size_t i = 0; i < frames.size(); ++i)
    if (split_of[i] == s) idx.push_back(int(i));
  return idx;
}

namespace {

// Largest-remainder rounding of split fractions to integer counts.
std::array<int, 3> split_counts(const std::array<double, 3>& fr, int total) {
  std::array<int, 3> cnt;
  std::array<double, 3> rem;
  int used = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = fr[i] * total;
    cnt[i] = int(std::floor(exact));
    rem[i] = exact - cnt[i];
    used += cnt[i];
  }
  while (used < total) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    cnt[best]++;
    rem[best] = -1.0;
    used++;
  }
  return cnt;
}

}  // namespace

DatasetBundle generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  const int num_snrs = int(cfg.snr_grid_db.size());
  const int num_cells = cfg.num_classes() * num_snrs;
  const int total = num_cells * cfg.frames_per_cell;

  DatasetBundle bundle;
  bundle.gen_config = cfg;
  bundle.frames.resize(total);
  bundle.split_of.assign(total, Split::train);

  ModulationParams mp;
  mp.samples_per_symbol = cfg.samples_per_symbol;
  mp.rrc_rolloff = cfg.rrc_rolloff;
  mp.rrc_span_symbols = cfg.rrc_span_symbols;
  mp.gfsk_bt = cfg.gfsk_bt;

  // Each frame owns an independent stream derived from (seed, cell, frame),
  // so the fill order below has no effect on the result.
  #pragma omp parallel for schedule(dynamic)
  for (int cell = 0; cell < num_cells; ++cell) {
    int scheme_idx = cell / num_snrs;
    int snr_idx = cell % num_snrs;
    Scheme scheme = cfg.schemes[scheme_idx];
    int snr_db = cfg.snr_grid_db[snr_idx];
    for (int f = 0; f < cfg.frames_per_cell; ++f) {
      RngStream rng(cfg.seed, {0x5349474dULL, uint64_t(cell), uint64_t(f)});
      ComplexSignal clean = modulate_frame(scheme, cfg.frame_len, rng, mp);
      ComplexSignal rx = impair(clean, cfg.channel, rng);
      double ps = measure_power(rx);
      auto [noisy, pn] = add_noise(rx, snr_db, rng);

      IQFrame frame;
      frame.iq.resize(size_t(2) * cfg.frame_len);
      for (int m = 0; m < cfg.frame_len; ++m) {
        frame.iq[m] = float(noisy.samples[m].real());
        frame.iq[cfg.frame_len + m] = float(noisy.samples[m].imag());
      }
      frame.label = uint16_t(scheme_idx);
      frame.snr_db = int16_t(snr_db);
      frame.signal_power = float(ps);
      frame.noise_power = float(pn);
      bundle.frames[size_t(cell) * cfg.frames_per_cell + f] = std::move(frame);
    }

    // Per-cell split assignment keeps every class present in every split.
    auto counts = split_counts(cfg.split_fractions, cfg.frames_per_cell);
    std::vector<int> order(cfg.frames_per_cell);
    for (int i = 0; i < cfg.frames_per_cell; ++i) order[i] = i;
    RngStream split_rng(cfg.seed, {0x53504c54ULL, uint64_t(cell)});
    split_rng.shuffle(order);
    for (int i = 0; i < cfg.frames_per_cell; ++i) {
      Split s = i < counts[0]                ? Split::train
                : i < counts[0] + counts[1] ? Split::validation
                                            : Split::test;
      bundle.split_of[size_t(cell) * cfg.frames_per_cell + order[i]] = s;
    }
  }
  return bundle;
}

}  // namespace amc::sigmod
