// SPDX-License-Identifier: Apache-2.0
//
// Training loop. Each step draws a batch of (frame, pixel) pairs from a
// stream seeded by (seed, step index), so a resumed run replays exactly the
// batches an uninterrupted run would have seen.
#pragma once
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gnelf/checkpoint.hpp"
#include "gnelf/dataio.hpp"
#include "gnelf/model.hpp"
#include "gnelf/optim.hpp"

namespace gnelf {

struct TrainRecord {
  std::uint64_t step = 0;  // 1-based index of the completed step
  double loss = 0.0;
  int rays = 0;            // rays that hit the sampling box
  bool skipped = false;    // no ray hit; parameters untouched
  double seconds = 0.0;
  std::optional<double> val_psnr;
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::vector<TrainRecord> records;
};

/// One JSON object per line.
std::string to_json_line(const TrainRecord& record);

class Trainer {
 public:
  /// `threads` == 1 is the sequential, bit-reproducible mode. `val` may be
  /// null.
  Trainer(Model model, const dataio::SceneDataset& train, const dataio::SceneDataset* val,
          int threads = 1);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Runs one optimizer step. Throws DivergenceError with parameters left at
  /// their last good values.
  TrainRecord step();
  /// Mean PSNR over the configured validation views, nullopt without a
  /// validation set.
  std::optional<double> validate() const;

  std::uint64_t steps_done() const { return steps_; }
  const Model& model() const { return model_; }
  /// Multiplier applied to both base learning rates at the next step.
  double lr_scale() const;

  OptimizerState optimizer_state() const;
  void restore(const OptimizerState& state);

 private:
  struct Worker;
  void accumulate(Worker& w, std::span<const MarchedRay> rays, std::span<const Color> targets,
                  double inv_count, float* grid_grad, float* dec_grad, double& loss);

  Model model_;
  const dataio::SceneDataset& train_;
  const dataio::SceneDataset* val_;
  int threads_;
  std::uint64_t steps_ = 0;
  optim::ParamGroup grid_group_;
  optim::ParamGroup decoder_group_;
  std::vector<Worker> workers_;
  std::chrono::steady_clock::time_point start_;
  double elapsed_before_ = 0.0;
};

/// Model to continue training from `checkpoint` under `config`. The
/// architecture must match; schedule, seed and cadences come from `config`.
Model resume_model(const LoadedCheckpoint& checkpoint, const PresetConfig& config);

struct TrainOptions {
  int threads = 1;
  /// Called after every step with its record.
  std::function<void(const TrainRecord&)> on_record;
  /// Called every train.checkpoint_every steps and after the final step.
  std::function<void(const Trainer&)> on_checkpoint;
  /// Resume from this state instead of fresh initialization.
  const LoadedCheckpoint* resume = nullptr;
};

struct TrainResult {
  Model model;
  TrainLog log;
};

/// Trains until train.steps steps have been completed. The dataset's
/// intrinsics are stored in the model.
TrainResult train(const PresetConfig& config, const dataio::SceneDataset& data,
                  const dataio::SceneDataset* val = nullptr, const TrainOptions& options = {});

}  // namespace gnelf
