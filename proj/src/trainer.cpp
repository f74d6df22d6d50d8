#include "steerkit/trainer.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "steerkit/adam.hpp"
#include "steerkit/serialize.hpp"

namespace steerkit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Validation membership depends only on the record index, so the split is
// stable across runs and seeds.
bool is_validation_index(size_t i, double fraction) {
  const double u = static_cast<double>(splitmix64(static_cast<std::uint64_t>(i)) >> 11) * 0x1.0p-53;
  return u < fraction;
}

RngStream derived_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return RngStream(seq);
}

ImageU8 load_frame(const LabeledFrame& f) {
  if (f.image) return *f.image;
  return load_jpeg(f.path);
}

struct LoadedBatch {
  TensorF batch;
  std::vector<float> labels;
};

// Assembles one batch: decode, optional augmentation (per-batch stream, so
// workers can build batches in any order), preprocess, stack.
LoadedBatch load_batch(const Dataset& dataset, const std::vector<int>& indices,
                       const TrainConfig& cfg, int epoch, int batch_index, bool augmented) {
  std::vector<TensorF> images;
  LoadedBatch out;
  images.reserve(indices.size());
  out.labels.reserve(indices.size());
  RngStream rng = derived_stream(cfg.seed, static_cast<std::uint64_t>(epoch) + 1,
                                 0x61756700ull + static_cast<std::uint64_t>(batch_index));
  for (int i : indices) {
    const LabeledFrame& f = dataset[static_cast<size_t>(i)];
    ImageU8 raw = load_frame(f);
    float label = f.label;
    if (augmented) {
      auto [img, lab] = augment(raw, label, rng, cfg.aug);
      raw = std::move(img);
      label = lab;
    }
    images.push_back(preprocess(raw, cfg.crop_top, cfg.crop_bottom));
    out.labels.push_back(label);
  }
  std::vector<const TensorF*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& t : images) ptrs.push_back(&t);
  out.batch = stack_images(ptrs);
  return out;
}

// Bounded in-order prefetch: workers claim batch indices from a counter and
// the consumer takes batches strictly in plan order.
class BatchPrefetcher {
 public:
  BatchPrefetcher(const Dataset& dataset, const std::vector<std::vector<int>>& plan,
                  const TrainConfig& cfg, int epoch, bool augmented, int workers)
      : dataset_(dataset), plan_(plan), cfg_(cfg), epoch_(epoch), augmented_(augmented) {
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(plan.size())));
    window_ = static_cast<size_t>(2 * n);
    for (int i = 0; i < n; ++i) threads_.emplace_back([this] { worker(); });
  }

  ~BatchPrefetcher() {
    {
      std::lock_guard lock(mu_);
      cancelled_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  LoadedBatch take(size_t index) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return ready_.count(index) > 0 || !error_.empty(); });
    if (!error_.empty()) throw TrainingError(error_);
    LoadedBatch b = std::move(ready_.at(index));
    ready_.erase(index);
    consumed_ = index + 1;
    cv_.notify_all();
    return b;
  }

 private:
  void worker() {
    while (true) {
      const size_t mine = next_.fetch_add(1);
      if (mine >= plan_.size()) return;
      {
        // Stay within the bounded window of the consumer.
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return cancelled_ || mine < consumed_ + window_; });
        if (cancelled_) return;
      }
      try {
        LoadedBatch b = load_batch(dataset_, plan_[mine], cfg_, epoch_, static_cast<int>(mine),
                                   augmented_);
        std::lock_guard lock(mu_);
        ready_.emplace(mine, std::move(b));
      } catch (const std::exception& e) {
        std::lock_guard lock(mu_);
        if (error_.empty()) error_ = std::string("batch load failed: ") + e.what();
      }
      cv_.notify_all();
    }
  }

  const Dataset& dataset_;
  const std::vector<std::vector<int>>& plan_;
  const TrainConfig& cfg_;
  const int epoch_;
  const bool augmented_;

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<size_t, LoadedBatch> ready_;
  std::atomic<size_t> next_{0};
  size_t consumed_ = 0;
  size_t window_ = 2;
  bool cancelled_ = false;
  std::string error_;
};

double default_clock() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::vector<float> predict_all(const Network<float>& net, const Dataset& frames,
                               const TrainConfig* cfg, int eval_batch = 32) {
  std::vector<float> out;
  out.reserve(frames.size());
  for (size_t at = 0; at < frames.size(); at += static_cast<size_t>(eval_batch)) {
    const size_t take = std::min<size_t>(static_cast<size_t>(eval_batch), frames.size() - at);
    std::vector<TensorF> images;
    images.reserve(take);
    for (size_t i = 0; i < take; ++i) {
      ImageU8 raw = load_frame(frames[at + i]);
      images.push_back(preprocess(raw, cfg ? cfg->crop_top : 0, cfg ? cfg->crop_bottom : 0));
    }
    std::vector<const TensorF*> ptrs;
    for (const auto& t : images) ptrs.push_back(&t);
    auto preds = forward(net, stack_images(ptrs), Mode::Eval);
    for (size_t i = 0; i < take; ++i) out.push_back(preds[static_cast<std::int64_t>(i)]);
  }
  return out;
}

}  // namespace

int worker_count() {
  if (const char* env = std::getenv("STEERKIT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 4u));
}

Dataset dataset_from_records(const std::vector<DrivingLogRecord>& records,
                             const std::vector<Camera>& cameras, float correction) {
  Dataset out;
  out.reserve(records.size() * cameras.size());
  for (const auto& rec : records) {
    for (Camera cam : cameras) {
      auto [path, label] = select_camera(rec, cam, correction);
      out.push_back(LabeledFrame{path, std::nullopt, label});
    }
  }
  return out;
}

std::string metrics_to_json(const EpochMetrics& m) {
  return "{\"epoch\":" + std::to_string(m.epoch) + ",\"train_mse\":" + format_double(m.train_mse) +
         ",\"val_mse\":" + format_double(m.val_mse) + ",\"lr\":" + format_double(m.learning_rate) +
         ",\"seconds\":" + format_double(m.wall_seconds) + "}";
}

TrainResult train(const TrainConfig& cfg, const Dataset& dataset, Network<float> net) {
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
    throw ConfigError("train: validation fraction must be in (0,1)");

  Dataset train_set, val_set;
  for (size_t i = 0; i < dataset.size(); ++i) {
    (is_validation_index(i, cfg.validation_fraction) ? val_set : train_set).push_back(dataset[i]);
  }
  if (train_set.empty()) throw ConfigError("train: validation split leaves no training samples");

  auto clock = cfg.clock ? cfg.clock : default_clock;

  TrainResult result;
  AdamState<float> adam = adam_init(net, cfg.learning_rate);
  int start_epoch = 0;
  if (cfg.resume_from) {
    Checkpoint ck = load_checkpoint(*cfg.resume_from);
    net = std::move(ck.net);
    adam = std::move(ck.adam);
    start_epoch = ck.epoch;
  }

  std::ofstream metrics_out;
  if (!cfg.metrics_path.empty()) {
    metrics_out.open(cfg.metrics_path, start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics_out) throw IoError("cannot open metrics file " + cfg.metrics_path.string());
  }

  const int workers = worker_count();
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double t0 = clock();
    RngStream epoch_rng = derived_stream(cfg.seed, static_cast<std::uint64_t>(epoch) + 1, 0);
    const std::uint64_t shuffle_seed =
        splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(epoch) + 1));
    auto plan = make_batch_plan(static_cast<int>(train_set.size()), cfg.batch_size, shuffle_seed);

    double loss_sum = 0.0;
    std::int64_t seen = 0;
    BatchPrefetcher prefetch(train_set, plan, cfg, epoch, cfg.augment, workers);
    for (size_t b = 0; b < plan.size(); ++b) {
      LoadedBatch lb = prefetch.take(b);
      ForwardTrace<float> trace;
      auto preds = forward(net, lb.batch, Mode::Train, &epoch_rng, &trace);
      std::vector<float> pred_v(preds.data(), preds.data() + preds.size());
      auto loss = mse_loss(lb.labels, pred_v);
      if (!std::isfinite(loss.loss))
        throw TrainingError("diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(b + 1) +
                            " (try a lower learning rate)");
      TensorF grad({static_cast<int>(lb.labels.size()), 1});
      for (size_t i = 0; i < loss.grad.size(); ++i) grad[static_cast<std::int64_t>(i)] = loss.grad[i];
      auto grads = backward(net, trace, grad);
      adam_step(net, grads, adam);
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(lb.labels.size());
      seen += static_cast<std::int64_t>(lb.labels.size());
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.learning_rate = cfg.learning_rate;
    m.train_mse = loss_sum / static_cast<double>(seen);
    if (!val_set.empty()) {
      auto preds = predict_all(net, val_set, &cfg);
      std::vector<float> actual;
      actual.reserve(val_set.size());
      for (const auto& f : val_set) actual.push_back(f.label);
      m.val_mse = mse_loss(actual, preds).loss;
    }
    m.wall_seconds = clock() - t0;
    if (metrics_out) {
      metrics_out << metrics_to_json(m) << "\n";
      metrics_out.flush();
    }
    result.metrics.push_back(m);

    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)) {
      save_checkpoint(net, adam, epoch + 1, cfg.checkpoint_path);
    }
  }

  result.net = std::move(net);
  result.adam = std::move(adam);
  return result;
}

EvalReport evaluate(const Network<float>& net, const Dataset& dataset, int crop_top,
                    int crop_bottom) {
  if (dataset.empty()) throw ConfigError("evaluate: empty dataset");
  TrainConfig cfg;
  cfg.crop_top = crop_top;
  cfg.crop_bottom = crop_bottom;
  EvalReport report;
  report.n = static_cast<int>(dataset.size());
  report.predicted = predict_all(net, dataset, &cfg);
  report.actual.reserve(dataset.size());
  for (const auto& f : dataset) report.actual.push_back(f.label);
  report.mse = mse_loss(report.actual, report.predicted).loss;
  return report;
}

}  // namespace steerkit
