#include <cmath>
#include <fstream>

#include "emt/ops.hpp"
#include "emt/tape.hpp"
#include "emt/train.hpp"

namespace emt {

namespace {

void check_dtype(const TrainConfig& cfg, DType want) {
  if (cfg.dtype != want) {
    throw TrainError(std::string("train config asks for ") + dtype_name(cfg.dtype) +
                     " but the trainer was built for " + dtype_name(want));
  }
}

}  // namespace

std::string checkpoint_name(std::int64_t iteration) { return "ckpt_" + std::to_string(iteration); }

template <typename T>
Trainer<T>::Trainer(ModelConfig model, TrainConfig train, const Dataset& data, EmtParameters<T> params)
    : model_(std::move(model)),
      train_(std::move(train)),
      data_(&data),
      params_(std::move(params)),
      adam_(params_.entries(), train_.beta1, train_.beta2, train_.eps_adam),
      threads_(data_threads()) {
  train_.validate();
  check_dtype(train_, dtype_of<T>());
  if (data.scale() != model_.scale) {
    throw TrainError("dataset scale " + std::to_string(data.scale()) + " differs from model scale " +
                     std::to_string(model_.scale));
  }
}

template <typename T>
Trainer<T>::Trainer(const ModelConfig& model, const TrainConfig& train, const Dataset& data)
    : Trainer(model, train, data, EmtParameters<T>::initialized(model, mix64(train.seed ^ 0x5eedULL))) {}

template <typename T>
Trainer<T> Trainer<T>::resume(const std::filesystem::path& checkpoint, const Dataset& data) {
  auto ck = load_checkpoint<T>(checkpoint);
  Trainer t(ck.model, ck.train, data, std::move(ck.params));
  t.adam_.first_moments() = std::move(ck.adam_m);
  t.adam_.second_moments() = std::move(ck.adam_v);
  t.adam_.set_step_count(ck.adam_step);
  t.iteration_ = ck.iteration;
  if (t.iteration_ < 0 || t.iteration_ > t.train_.total_iters) {
    throw CheckpointError("checkpoint iteration " + std::to_string(t.iteration_) + " outside the schedule");
  }
  return t;
}

template <typename T>
StepLog Trainer<T>::step() {
  if (done()) throw TrainError("training already finished at iteration " + std::to_string(iteration_));
  const std::int64_t t = iteration_;
  const double lr = cosine_lr(t, train_);
  auto batch = sample_batch<T>(*data_, train_.batch_size, train_.patch_lr, train_.seed,
                               static_cast<std::uint64_t>(t), train_.augment, threads_);
  params_.zero_grad();
  double loss_value;
  {
    Tape<T> tape;
    typename Tape<T>::Scope scope(tape);
    auto loss = l1_loss(emt_forward(batch.lr, params_), batch.hr);
    loss_value = static_cast<double>(loss.item());
    if (!std::isfinite(loss_value)) {
      throw TrainError("non-finite loss at iteration " + std::to_string(t + 1));
    }
    tape.backward(loss);
  }
  adam_.step(params_.entries(), lr);
  iteration_ = t + 1;
  return {iteration_, lr, loss_value};
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path) const {
  save_checkpoint(path, model_, train_, iteration_, params_, adam_);
}

template <typename T>
std::filesystem::path train(Trainer<T>& trainer, const std::filesystem::path& out_dir,
                            const std::function<void(const StepLog&)>& on_step) {
  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / "loss.tsv";
  const bool fresh = trainer.iteration() == 0 || !std::filesystem::exists(log_path);
  std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
  if (!log) throw TrainError("cannot write loss log '" + log_path.string() + "'");
  if (fresh) log << "iteration\tlr\tloss\n";
  log.precision(17);

  const auto every = trainer.train_config().checkpoint_every;
  std::filesystem::path last;
  while (!trainer.done()) {
    const auto s = trainer.step();
    log << s.iteration << '\t' << s.lr << '\t' << s.loss << '\n';
    if (on_step) on_step(s);
    if ((every > 0 && s.iteration % every == 0) || trainer.done()) {
      log.flush();
      last = out_dir / checkpoint_name(s.iteration);
      trainer.save(last);
    }
  }
  if (last.empty()) {
    last = out_dir / checkpoint_name(trainer.iteration());
    trainer.save(last);
  }
  return last;
}

template class Trainer<float>;
template class Trainer<double>;
template std::filesystem::path train(Trainer<float>&, const std::filesystem::path&,
                                     const std::function<void(const StepLog&)>&);
template std::filesystem::path train(Trainer<double>&, const std::filesystem::path&,
                                     const std::function<void(const StepLog&)>&);

}  // namespace emt
