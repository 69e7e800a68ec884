#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amc/subsample.hpp"
#include "amc/tensornet.hpp"

namespace amc::adversary {

enum class ThreatScenario : uint8_t { no_attack = 0, mod = 1, mod_subsamp = 2 };

std::string scenario_name(ThreatScenario s);
ThreatScenario parse_scenario(const std::string& name);

struct AttackBudget {
  double epsilon = 0.0;    // per-component L-inf bound; 0 pins delta to zero
  double c = 1.0;          // objective trade-off constant
  int steps = 100;
  double step_size = 0.0;  // absolute per-step magnitude

  void validate() const;
};

// What the attacker knows. assumed_indices is the support the optimizer
// perturbs; true_indices is the victim's actual index set, carried only for
// the evaluation harness and never consulted by the optimizer.
struct AttackerView {
  ThreatScenario scenario = ThreatScenario::no_attack;
  const tensornet::ModelGraph* classifier = nullptr;
  std::optional<subsample::IndexSet> assumed_indices;
  std::optional<subsample::IndexSet> true_indices;
  subsample::Scheme assumed_scheme = subsample::Scheme::none;
};

struct AttackResult {
  std::vector<float> perturbed;  // 2 x L row-major
  double delta_linf = 0.0;
  int target_used = -1;
  double objective = 0.0;
  bool success_under_view = false;
};

// Eq-style hinge on the logits: max(max_{i != t} Z_i - Z_t, 0).
double objective_ft(std::span<const float> logits, int target);

// Budget derivation: noise power P_n = P_s * 10^(-snr/10); a full-magnitude
// perturbation epsilon on both I and Q then carries exactly P_n per complex
// sample, so epsilon = sqrt(P_n / 2).
double epsilon_from_noise(double signal_power, double snr_db);

// Scenario wiring. For subsampled victims the mod attacker picks one of the
// five scheme index sets uniformly at random; mod_subsamp uses the victim's
// exact set. Unsubsampled victims get the full identity support.
AttackerView build_view(ThreatScenario scenario,
                        const tensornet::ModelGraph& victim,
                        const subsample::Ranking* victim_ranking,
                        std::span<const subsample::Ranking> all_rankings,
                        RngStream& rng, int frame_len);

// Projected sign-gradient descent on c*f_t for every target t != true label,
// support-restricted to assumed_indices; keeps the target with the smallest
// final objective ||delta||_inf + c*f_t, preferring targets whose hinge
// reached zero.
AttackResult cw_linf(const AttackerView& view, const sigmod::IQFrame& frame,
                     const AttackBudget& budget);

struct BudgetPolicy {
  double c = 1.0;
  int steps = 100;
  double step_size_factor = 0.1;  // step_size = factor * epsilon
  uint64_t seed = 0;
};

struct AttackedFrame {
  int bundle_index = -1;
  double epsilon = 0.0;
  AttackResult result;
};

struct AttackedStore {
  ThreatScenario scenario = ThreatScenario::no_attack;
  std::vector<AttackedFrame> frames;
};

using ProgressFn = std::function<void(size_t done, size_t total)>;

// Attacks every frame of the split (or the given subset of bundle indices),
// deriving epsilon per frame from its stored signal power and SNR tag. The
// bundle itself is never modified.
AttackedStore attack_dataset(const AttackerView& view,
                             const sigmod::DatasetBundle& bundle,
                             sigmod::Split split, const BudgetPolicy& policy,
                             const std::vector<int>* subset_ids = nullptr,
                             const ProgressFn& progress = {});

}  // namespace amc::adversary
