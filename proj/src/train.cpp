// SPDX-License-Identifier: Apache-2.0
#include "gnelf/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gnelf/error.hpp"
#include "gnelf/metrics.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace gnelf {

namespace {

constexpr std::uint64_t kBatchStream = 0x62617463685f7273ull;
constexpr int kTrainChunk = 64;

optim::AdamHyper hyper(const TrainConfig& t, float lr) {
  optim::AdamHyper h;
  h.lr = lr;
  h.beta1 = t.beta1;
  h.beta2 = t.beta2;
  h.eps = t.eps;
  return h;
}

}  // namespace

std::string to_json_line(const TrainRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["rays"] = r.rays;
  if (r.skipped) j["skipped"] = true;
  j["seconds"] = r.seconds;
  if (r.val_psnr) j["val_psnr"] = *r.val_psnr;
  return j.dump();
}

struct Trainer::Worker {
  decoder::DecoderTape tape;
  RayBatch batch;
  std::vector<float> rgb, upstream, step_grad, feat_grad;
  std::vector<float> grid_grad, dec_grad;  // private accumulators in parallel mode
};

Trainer::Trainer(Model model, const dataio::SceneDataset& train, const dataio::SceneDataset* val,
                 int threads)
    : model_(std::move(model)),
      train_(train),
      val_(val),
      threads_(resolve_threads(threads)),
      grid_group_("grid", model_.grid.values(), hyper(model_.config.train, model_.config.train.lr_grid)),
      decoder_group_("decoder", model_.decoder.values(),
                     hyper(model_.config.train, model_.config.train.lr_decoder)),
      workers_(threads_),
      start_(std::chrono::steady_clock::now()) {
  if (train_.frames.empty()) throw InputDomainError("training set has no frames");
  train_.intrinsics.validate();
  if (threads_ > 1) {
    for (auto& w : workers_) {
      w.grid_grad.assign(model_.grid.parameter_count(), 0.0f);
      w.dec_grad.assign(model_.decoder.values().size(), 0.0f);
    }
  }
}

Trainer::~Trainer() = default;

double Trainer::lr_scale() const {
  const int total = model_.config.train.steps;
  if (total <= 0) return 1.0;
  return std::pow(static_cast<double>(model_.config.train.lr_decay),
                  std::min(1.0, static_cast<double>(steps_) / total));
}

OptimizerState Trainer::optimizer_state() const {
  return {steps_,          grid_group_.hyper.t, decoder_group_.hyper.t, grid_group_.m,
          grid_group_.v,   decoder_group_.m,    decoder_group_.v};
}

void Trainer::restore(const OptimizerState& s) {
  if (s.m_grid.size() != grid_group_.m.size() || s.v_grid.size() != grid_group_.v.size() ||
      s.m_decoder.size() != decoder_group_.m.size() || s.v_decoder.size() != decoder_group_.v.size()) {
    throw ContractError("optimizer state does not match the model");
  }
  steps_ = s.step;
  grid_group_.hyper.t = s.t_grid;
  decoder_group_.hyper.t = s.t_decoder;
  grid_group_.m = s.m_grid;
  grid_group_.v = s.v_grid;
  decoder_group_.m = s.m_decoder;
  decoder_group_.v = s.v_decoder;
}

void Trainer::accumulate(Worker& w, std::span<const MarchedRay> rays, std::span<const Color> targets,
                         double inv_count, float* grid_grad, float* dec_grad, double& loss) {
  const int b = static_cast<int>(rays.size());
  encode_batch(model_, rays, {}, w.batch);
  const int k = w.batch.steps;
  const int n = w.batch.width;
  w.rgb.resize(3u * b);
  w.upstream.resize(3u * b);
  w.step_grad.resize(static_cast<std::size_t>(k) * n * b);
  w.feat_grad.resize(n);
  w.tape.forward(model_.decoder, b, k, w.batch.step_inputs, w.batch.ray_inputs, w.rgb, true);
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < b; ++r) {
      const double d = static_cast<double>(w.rgb[c * b + r]) - targets[r][c];
      sum += d * d;
      w.upstream[c * b + r] = static_cast<float>(2.0 * d * inv_count);
    }
  }
  loss = sum;
  const std::size_t grid_n = model_.grid.parameter_count();
  const std::size_t dec_n = model_.decoder.values().size();
  w.tape.backward(model_.decoder, w.upstream, std::span<float>(dec_grad, dec_n), w.step_grad);
  for (int r = 0; r < b; ++r) {
    for (int t = 0; t < k; ++t) {
      const float* src = w.step_grad.data() + static_cast<std::size_t>(t) * n * b + r;
      for (int f = 0; f < n; ++f) w.feat_grad[f] = src[static_cast<std::size_t>(f) * b];
      gridenc::point_feature_backward(model_.grid, rays[r].point(t, k), {}, w.feat_grad,
                                      std::span<float>(grid_grad, grid_n));
    }
  }
}

TrainRecord Trainer::step() {
  const auto& cfg = model_.config;
  const auto& cam = train_.intrinsics;
  std::mt19937_64 rng(detail::mix_seed(cfg.seed ^ kBatchStream, steps_));
  std::vector<MarchedRay> rays;
  std::vector<Color> targets;
  rays.reserve(cfg.train.batch_size);
  const std::uint64_t pixels = static_cast<std::uint64_t>(cam.width) * cam.height;
  for (int i = 0; i < cfg.train.batch_size; ++i) {
    const auto& frame = train_.frames[detail::below(rng, train_.frames.size())];
    const auto p = detail::below(rng, pixels);
    const int x = static_cast<int>(p % cam.width);
    const int y = static_cast<int>(p / cam.width);
    if (auto m = march(model_, geometry::generate_ray(cam, frame.pose, x, y))) {
      rays.push_back(*m);
      targets.push_back(frame.image.pixel(x, y));
    }
  }

  TrainRecord rec;
  rec.rays = static_cast<int>(rays.size());
  if (rays.empty()) {
    rec.skipped = true;
  } else {
    const double inv_count = 1.0 / (3.0 * static_cast<double>(rays.size()));
    const int chunks = static_cast<int>((rays.size() + kTrainChunk - 1) / kTrainChunk);
    std::vector<double> chunk_loss(chunks, 0.0);
    auto run = [&](int w, int c) {
      const std::size_t begin = static_cast<std::size_t>(c) * kTrainChunk;
      const std::size_t count = std::min<std::size_t>(kTrainChunk, rays.size() - begin);
      auto& worker = workers_[w];
      float* gg = threads_ > 1 ? worker.grid_grad.data() : grid_group_.grads.data();
      float* dg = threads_ > 1 ? worker.dec_grad.data() : decoder_group_.grads.data();
      accumulate(worker, std::span<const MarchedRay>(rays).subspan(begin, count),
                 std::span<const Color>(targets).subspan(begin, count), inv_count, gg, dg, chunk_loss[c]);
    };
    parallel_for(chunks, threads_, run);
    if (threads_ > 1) {
      for (auto& w : workers_) {
        for (std::size_t i = 0; i < w.grid_grad.size(); ++i) grid_group_.grads[i] += w.grid_grad[i];
        for (std::size_t i = 0; i < w.dec_grad.size(); ++i) decoder_group_.grads[i] += w.dec_grad[i];
        std::fill(w.grid_grad.begin(), w.grid_grad.end(), 0.0f);
        std::fill(w.dec_grad.begin(), w.dec_grad.end(), 0.0f);
      }
    }
    double total = 0.0;
    for (double l : chunk_loss) total += l;
    rec.loss = total * inv_count;
    if (!std::isfinite(rec.loss)) {
      grid_group_.zero_grad();
      decoder_group_.zero_grad();
      throw DivergenceError("non-finite loss at step " + std::to_string(steps_ + 1));
    }
    for (auto* g : {&grid_group_, &decoder_group_}) {
      for (std::size_t i = 0; i < g->grads.size(); ++i) {
        if (!std::isfinite(g->grads[i])) {
          grid_group_.zero_grad();
          decoder_group_.zero_grad();
          throw DivergenceError("non-finite gradient in group '" + g->name + "' at step " +
                                std::to_string(steps_ + 1));
        }
      }
    }
    const double scale = lr_scale();
    grid_group_.hyper.lr = static_cast<float>(cfg.train.lr_grid * scale);
    decoder_group_.hyper.lr = static_cast<float>(cfg.train.lr_decoder * scale);
    optim::adam_step(grid_group_);
    optim::adam_step(decoder_group_);
  }
  ++steps_;
  rec.step = steps_;
  if (val_ && cfg.train.val_every > 0 && steps_ % cfg.train.val_every == 0) rec.val_psnr = validate();
  rec.seconds = elapsed_before_ +
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return rec;
}

std::optional<double> Trainer::validate() const {
  if (!val_ || val_->frames.empty() || model_.config.train.val_views == 0) return std::nullopt;
  RenderOptions opts;
  opts.threads = threads_;
  return evaluate(model_, *val_, model_.config.train.val_scale, opts, model_.config.train.val_views)
      .mean_psnr;
}

Model resume_model(const LoadedCheckpoint& checkpoint, const PresetConfig& config) {
  Model init = checkpoint.model;
  const auto& have = init.config;
  PresetConfig want = config;
  want.finalize();
  if (have.grid.levels != want.grid.levels || have.grid.r_min != want.grid.r_min ||
      have.grid.r_max != want.grid.r_max || have.grid.feature_dim != want.grid.feature_dim ||
      have.grid.table_cap != want.grid.table_cap ||
      have.decoder.hidden_size != want.decoder.hidden_size ||
      have.decoder.num_layers != want.decoder.num_layers ||
      have.decoder.mlp_hidden != want.decoder.mlp_hidden || have.samples != want.samples ||
      have.mode != want.mode) {
    throw ConfigError("config does not match the architecture of the checkpoint being resumed");
  }
  // The model keeps its box and background.
  init.config.train = want.train;
  init.config.seed = want.seed;
  return init;
}

TrainResult train(const PresetConfig& config, const dataio::SceneDataset& data,
                  const dataio::SceneDataset* val, const TrainOptions& options) {
  if (data.frames.empty()) throw InputDomainError("training set has no frames");
  Model init = options.resume ? resume_model(*options.resume, config) : Model::create(config, data.intrinsics);
  Trainer trainer(std::move(init), data, val, options.threads);
  if (options.resume && options.resume->optimizer) trainer.restore(*options.resume->optimizer);
  TrainLog log;
  log.seed = trainer.model().config.seed;
  const int every = trainer.model().config.train.checkpoint_every;
  const auto total = static_cast<std::uint64_t>(trainer.model().config.train.steps);
  while (trainer.steps_done() < total) {
    TrainRecord rec = trainer.step();
    if (options.on_record) options.on_record(rec);
    log.records.push_back(rec);
    if (options.on_checkpoint && every > 0 && trainer.steps_done() % every == 0 &&
        trainer.steps_done() < total) {
      options.on_checkpoint(trainer);
    }
  }
  if (options.on_checkpoint) options.on_checkpoint(trainer);
  return {trainer.model(), std::move(log)};
}

}  // namespace gnelf
