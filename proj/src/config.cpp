#include "rdsr/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <vector>

namespace rdsr {

SelectionPolicy parse_policy(const std::string& s) {
  if (s == "auto") return SelectionPolicy::Auto;
  if (s == "random") return SelectionPolicy::Random;
  if (s == "reverse") return SelectionPolicy::Reverse;
  throw UsageError("unknown selection policy: " + s);
}

std::string to_string(SelectionPolicy p) {
  switch (p) {
    case SelectionPolicy::Auto:
      return "auto";
    case SelectionPolicy::Random:
      return "random";
    case SelectionPolicy::Reverse:
      return "reverse";
  }
  return "auto";
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("invalid config: " + what);
  };
  require(iters_initial >= 0 && iters_per_ref >= 0, "iteration counts must be non-negative");
  require(eval_every > 0, "eval_every must be positive");
  require(iters_per_ref % eval_every == 0, "eval_every must divide iters_per_ref");
  require(lr_gdn > 0 && lr_gup > 0 && lr_enc > 0 && lr_disc > 0, "learning rates must be positive");
  require(scale == 2 || scale == 4, "scale must be 2 or 4");
  require(patch_lr >= 16, "patch_lr must be at least 16");
  require(n_refs >= 1, "n_refs must be at least 1");
  require(weights.charbonnier_eps > 0, "charbonnier_eps must be positive");
  require(weights.lambda_cycle_target >= 0 && weights.lambda_cycle_ref >= 0 && weights.lambda_reg >= 0 &&
              weights.lambda_gan >= 0 && weights.charbonnier_weight >= 0 && weights.perceptual_weight >= 0,
          "loss weights must be non-negative");
  require(perceptual_backend == "filterbank", "perceptual_backend must be 'filterbank'");
  require(nr_backend == "mscn", "nr_backend must be 'mscn'");
  require(pretrain.eval_every > 0 && pretrain.batch > 0 && pretrain.patience > 0, "pretrain schedule");
}

TrainConfig make_profile(const std::string& name) {
  TrainConfig cfg;
  if (name == "paper") {
    cfg.iters_initial = 3000;
    cfg.iters_per_ref = 500;
  } else if (name == "desk") {
    cfg.iters_initial = 300;
    cfg.iters_per_ref = 100;
  } else {
    throw UsageError("unknown profile: " + name);
  }
  return cfg;
}

namespace {

struct Field {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename T, typename Get>
Field numeric(std::string key, Get access) {
  return Field{key,
               [access](const TrainConfig& c) {
                 const T v = access(const_cast<TrainConfig&>(c));
                 if constexpr (std::is_floating_point_v<T>)
                   return fmt(v);
                 else
                   return std::to_string(v);
               },
               [access, key](TrainConfig& c, const std::string& s) {
                 try {
                   size_t used = 0;
                   T v;
                   if constexpr (std::is_floating_point_v<T>)
                     v = std::stod(s, &used);
                   else if constexpr (std::is_same_v<T, std::uint64_t>)
                     v = std::stoull(s, &used);
                   else
                     v = static_cast<T>(std::stol(s, &used));
                   if (used != s.size()) throw std::invalid_argument(s);
                   access(c) = v;
                 } catch (const std::logic_error&) {
                   throw UsageError("bad value for " + key + ": " + s);
                 }
               }};
}

#define RDSR_FIELD(T, key, member) numeric<T>(key, [](TrainConfig& c) -> T& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      RDSR_FIELD(int, "iters_initial", iters_initial),
      RDSR_FIELD(int, "iters_per_ref", iters_per_ref),
      RDSR_FIELD(int, "eval_every", eval_every),
      RDSR_FIELD(double, "lr_gdn", lr_gdn),
      RDSR_FIELD(double, "lr_gup", lr_gup),
      RDSR_FIELD(double, "lr_enc", lr_enc),
      RDSR_FIELD(double, "lr_disc", lr_disc),
      RDSR_FIELD(double, "adam_beta1", adam_beta1),
      RDSR_FIELD(double, "adam_beta2", adam_beta2),
      RDSR_FIELD(int, "patch_lr", patch_lr),
      RDSR_FIELD(int, "scale", scale),
      RDSR_FIELD(std::uint64_t, "seed", seed),
      RDSR_FIELD(int, "n_refs", n_refs),
      Field{"policy", [](const TrainConfig& c) { return to_string(c.policy); },
            [](TrainConfig& c, const std::string& s) { c.policy = parse_policy(s); }},
      RDSR_FIELD(double, "gdn_init_std", gdn_init_std),
      RDSR_FIELD(int, "width", width),
      Field{"perceptual_backend", [](const TrainConfig& c) { return c.perceptual_backend; },
            [](TrainConfig& c, const std::string& s) { c.perceptual_backend = s; }},
      Field{"nr_backend", [](const TrainConfig& c) { return c.nr_backend; },
            [](TrainConfig& c, const std::string& s) { c.nr_backend = s; }},
      RDSR_FIELD(double, "lambda_cycle_target", weights.lambda_cycle_target),
      RDSR_FIELD(double, "lambda_cycle_ref", weights.lambda_cycle_ref),
      RDSR_FIELD(double, "lambda_reg", weights.lambda_reg),
      RDSR_FIELD(double, "lambda_gan", weights.lambda_gan),
      RDSR_FIELD(double, "charbonnier_eps", weights.charbonnier_eps),
      RDSR_FIELD(double, "charbonnier_weight", weights.charbonnier_weight),
      RDSR_FIELD(double, "perceptual_weight", weights.perceptual_weight),
      RDSR_FIELD(double, "penalty_sum_to_one", penalties.sum_to_one),
      RDSR_FIELD(double, "penalty_boundary", penalties.boundary),
      RDSR_FIELD(double, "penalty_centroid", penalties.centroid),
      RDSR_FIELD(int, "pretrain_max_iters", pretrain.max_iters),
      RDSR_FIELD(int, "pretrain_eval_every", pretrain.eval_every),
      RDSR_FIELD(int, "pretrain_patience", pretrain.patience),
      RDSR_FIELD(int, "pretrain_batch", pretrain.batch),
      RDSR_FIELD(int, "pretrain_patch_lr", pretrain.patch_lr),
      RDSR_FIELD(double, "pretrain_lr", pretrain.lr),
      RDSR_FIELD(double, "pretrain_val_fraction", pretrain.val_fraction),
  };
  return f;
}

#undef RDSR_FIELD

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues to_key_values(const TrainConfig& cfg) {
  KeyValues kv;
  for (const auto& f : fields()) kv[f.key] = f.get(cfg);
  return kv;
}

void apply_key_values(TrainConfig& cfg, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const auto& f : fields())
      if (f.key == key) {
        f.set(cfg, value);
        found = true;
        break;
      }
    if (!found) throw UsageError("unknown config key: " + key);
  }
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const KeyValues& kv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

}  // namespace rdsr
