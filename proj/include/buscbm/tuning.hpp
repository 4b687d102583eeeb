#pragma once

// Seeded random hyperparameter search for the cancer heads.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "buscbm/error.hpp"
#include "buscbm/heads.hpp"
#include "buscbm/random.hpp"

namespace buscbm {

struct SearchSpace {
  std::vector<int> hidden_widths{kHiddenWidths.begin(), kHiddenWidths.end()};
  double learning_rate_min = 1e-7;
  double learning_rate_max = 1e-1;
  std::vector<bool> intermediate_sigmoid{true, false};
  double momentum_min = 0.1;
  double momentum_max = 0.9;

  void validate() const {
    if (hidden_widths.empty()) throw InputError("search space: hidden_widths is empty");
    for (int w : hidden_widths) {
      HeadConfig c;
      c.hidden_width = w;
      c.validate();
    }
    if (!(learning_rate_min > 0.0 && learning_rate_min <= learning_rate_max)) {
      throw InputError("search space: learning-rate range must be positive and ordered");
    }
    if (intermediate_sigmoid.empty()) throw InputError("search space: intermediate_sigmoid is empty");
    if (!(momentum_min >= 0.0 && momentum_min <= momentum_max && momentum_max < 1.0)) {
      throw InputError("search space: momentum range must lie in [0, 1) and be ordered");
    }
  }
};

struct Trial {
  int index = 0;
  HeadConfig config;
  std::optional<double> val_auroc;
  int best_epoch = 0;
  double final_train_loss = 0.0;
  std::string failure;  // empty when training completed
};

struct TuneResult {
  HeadConfig best;
  std::size_t best_trial = 0;
  std::vector<Trial> trials;
  std::uint64_t seed = 0;
};

/// Draws one configuration: width, learning rate (log-uniform), intermediate
/// sigmoid, momentum, in that order. Everything else comes from `base`.
inline HeadConfig sample_config(const HeadConfig& base, const SearchSpace& space, Rng& rng) {
  HeadConfig c = base;
  c.hidden_width = space.hidden_widths[rng.index(space.hidden_widths.size())];
  c.base_learning_rate = rng.log_uniform(space.learning_rate_min, space.learning_rate_max);
  c.intermediate_sigmoid = space.intermediate_sigmoid[rng.index(space.intermediate_sigmoid.size())];
  c.momentum = rng.uniform(space.momentum_min, space.momentum_max);
  return c;
}

/// Trains `n_trials` sampled configurations and keeps the one with the best
/// validation AUROC (earlier trial on ties). Trials that diverge are recorded
/// with their failure and never selected.
inline TuneResult tune(const HeadConfig& base, const SearchSpace& space, std::span<const TrainRecord> train_records,
                       std::span<const TrainRecord> val_records, int n_trials = 25, std::uint64_t seed = 0) {
  if (n_trials < 1) throw InputError("tune: n_trials must be >= 1");
  if (val_records.empty()) throw InputError("tune: an empty validation set cannot rank trials");
  space.validate();
  base.validate();
  Rng rng(derive_seed(seed, 4));
  TuneResult out;
  out.seed = seed;
  std::optional<double> best;
  for (int t = 0; t < n_trials; ++t) {
    Trial trial;
    trial.index = t;
    trial.config = sample_config(base, space, rng);
    try {
      const auto result = train(trial.config, train_records, val_records);
      trial.val_auroc = result.best_val_auroc;
      trial.best_epoch = result.best_epoch;
      trial.final_train_loss = result.log.back().train_loss;
    } catch (const UndefinedMetricError&) {
      throw;
    } catch (const InputError&) {
      throw;
    } catch (const Error& e) {
      trial.failure = e.what();
    }
    if (trial.val_auroc && (!best || *trial.val_auroc > *best)) {
      best = trial.val_auroc;
      out.best_trial = static_cast<std::size_t>(t);
    }
    out.trials.push_back(std::move(trial));
  }
  if (!best) throw Error("tune: every trial failed");
  out.best = out.trials[out.best_trial].config;
  return out;
}

inline Json trial_to_json(const Trial& t) {
  return Json{{"trial", t.index},
              {"hidden_width", t.config.hidden_width},
              {"base_learning_rate", t.config.base_learning_rate},
              {"intermediate_sigmoid", t.config.intermediate_sigmoid},
              {"momentum", t.config.momentum},
              {"val_auroc", t.val_auroc ? Json(*t.val_auroc) : Json(nullptr)},
              {"best_epoch", t.best_epoch},
              {"final_train_loss", t.failure.empty() ? Json(t.final_train_loss) : Json(nullptr)},
              {"failure", t.failure.empty() ? Json(nullptr) : Json(t.failure)}};
}

}  // namespace buscbm
