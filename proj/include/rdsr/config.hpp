// Run configuration and its flat key=value text form.
#ifndef RDSR_CONFIG_HPP
#define RDSR_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

#include "rdsr/downsampler.hpp"
#include "rdsr/losses.hpp"

namespace rdsr {

enum class SelectionPolicy { Auto, Random, Reverse };

SelectionPolicy parse_policy(const std::string& s);
std::string to_string(SelectionPolicy p);

struct PretrainConfig {
  int max_iters = 1500;
  int eval_every = 100;
  int patience = 3;
  int batch = 2;
  int patch_lr = 32;
  double lr = 5e-4;
  double val_fraction = 0.1;
};

struct TrainConfig {
  int iters_initial = 300;
  int iters_per_ref = 100;
  int eval_every = 50;
  double lr_gdn = 2e-3;
  double lr_gup = 1e-5;
  double lr_enc = 5e-5;
  double lr_disc = 1e-5;
  double adam_beta1 = 0.25;
  double adam_beta2 = 0.99;
  int patch_lr = 32;
  int scale = 2;
  std::uint64_t seed = 0;
  int n_refs = 3;
  SelectionPolicy policy = SelectionPolicy::Auto;
  double gdn_init_std = 0.05;
  int width = 32;
  std::string perceptual_backend = "filterbank";
  std::string nr_backend = "mscn";
  LossWeights weights;
  PenaltyWeights penalties;
  PretrainConfig pretrain;

  /// Throws UsageError when an invariant is violated.
  void validate() const;
};

/// "paper": 3000 initial / 500 per reference. "desk": 300 / 100.
TrainConfig make_profile(const std::string& name);

using KeyValues = std::map<std::string, std::string>;

KeyValues to_key_values(const TrainConfig& cfg);
/// Applies the given keys on top of `cfg`; unknown keys are a UsageError.
void apply_key_values(TrainConfig& cfg, const KeyValues& kv);

KeyValues read_key_values(const std::string& path);
void write_key_values(const KeyValues& kv, const std::string& path);

}  // namespace rdsr

#endif  // RDSR_CONFIG_HPP
