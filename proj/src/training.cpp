#include "basen/training.hpp"

#include "basen/loss_graph.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace fs = std::filesystem;

namespace basen {

double lr_at(int64_t step, int64_t total_steps, const ScheduleConfig& sched) {
  sched.validate("lr_at");
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_at: step out of range");
  if (total_steps <= 0) return 0.0;
  const auto warmup = static_cast<int64_t>(
      std::max(1.0, std::floor(sched.warmup_ratio * static_cast<double>(total_steps))));
  if (step <= warmup)
    return sched.max_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return sched.max_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double tau_at(double epoch, const TemperatureSchedule& sched) {
  sched.validate("tau_at");
  if (epoch < 0.0 || epoch > static_cast<double>(sched.total_epochs))
    throw std::invalid_argument("tau_at: epoch out of range");
  const double frac = epoch / static_cast<double>(sched.total_epochs);
  return sched.tau_start * std::pow(sched.tau_end / sched.tau_start, frac);
}

// --- RunLogger -----------------------------------------------------------------

RunLogger::RunLogger(std::string run_dir) : dir_(std::move(run_dir)) {
  if (!dir_.empty()) fs::create_directories(dir_);
}

void RunLogger::write_text(const std::string& filename, const std::string& content) const {
  if (dir_.empty()) return;
  std::ofstream out(fs::path(dir_) / filename);
  if (!out) throw std::runtime_error("RunLogger: cannot write " + filename);
  out << content;
}

void RunLogger::append_step(const StepLog& s, const std::string& stage) const {
  if (dir_.empty()) return;
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["si_sdr_db"] = s.si_sdr_db;
  j["l_d"] = s.l_d;
  j["l_reg"] = s.l_reg;
  j["total"] = s.total;
  j["lr"] = s.lr;
  j["tau"] = s.tau;
  if (!stage.empty()) j["stage"] = stage;
  std::ofstream out(fs::path(dir_) / "metrics.jsonl", std::ios::app);
  out << j.dump() << "\n";
}

void RunLogger::save_checkpoint(const std::string& filename, const Checkpoint& ckpt) const {
  if (dir_.empty()) return;
  basen::save_checkpoint((fs::path(dir_) / filename).string(), ckpt);
}

// --- shared loop machinery --------------------------------------------------------

namespace {

MatF audio_row(const AudioWaveform& w) {
  return Eigen::Map<const MatF>(w.samples.data(), 1, w.samples.size());
}

std::vector<std::vector<size_t>> make_batches(size_t n, int batch_size, Rng& rng) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<size_t>> batches;
  for (size_t i = 0; i < n; i += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(n, i + static_cast<size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<MatF> snapshot_store(const ParameterStore<float>& ps) {
  std::vector<MatF> snap;
  snap.reserve(static_cast<size_t>(ps.count()));
  for (int i = 0; i < ps.count(); ++i) snap.push_back(ps.value(i));
  return snap;
}

void restore_store(ParameterStore<float>& ps, const std::vector<MatF>& snap) {
  for (int i = 0; i < ps.count(); ++i) ps.value(i) = snap[static_cast<size_t>(i)];
}

// Scales gradients of all given stores so the joint global norm stays within
// clip; returns the pre-clip norm.
double clip_joint_grad_norm(std::vector<ParameterStore<float>*> stores, double clip) {
  double sq = 0.0;
  for (auto* ps : stores)
    for (int i = 0; i < ps->count(); ++i)
      if (ps->trainable(i)) sq += static_cast<double>(ps->grad(i).squaredNorm());
  const double norm = std::sqrt(sq);
  if (clip > 0.0 && norm > clip) {
    const auto s = static_cast<float>(clip / norm);
    for (auto* ps : stores)
      for (int i = 0; i < ps->count(); ++i)
        if (ps->trainable(i)) ps->grad(i) *= s;
  }
  return norm;
}

// Per-method EEG front end: how an example's EEG becomes the model input.
struct MethodHooks {
  ParameterStore<float>* selector_store = nullptr;
  // Training-graph input. sel_ctx is non-null iff selector_store is set.
  std::function<Var<float>(Graph<float>& g, GraphContext<float>* sel_ctx,
                           const MixtureExample& ex, double tau, Rng& noise_rng,
                           Var<float>* s_out)>
      train_input;
  // Deterministic value-mode input for validation.
  std::function<MatF(const MixtureExample& ex, double tau, Eigen::VectorXd* s_out)> eval_input;
};

struct ValMetrics {
  double total = 0.0, si = 0.0, l_d = 0.0, l_reg = 0.0, mean_abs_dev = 0.0;
};

ValMetrics validate_model(BasenModel<float>& model, const MethodHooks& hooks,
                          const Dataset& val, const LossWeights& lw, double tau,
                          bool aux_loss) {
  ValMetrics m;
  if (val.empty()) return m;
  std::vector<Eigen::VectorXd> s_vectors;
  double si_sum = 0.0;
  for (const auto& ex : val) {
    Eigen::VectorXd s;
    const MatF eeg_in = hooks.eval_input(ex, tau, &s);
    Graph<float> g;
    GraphContext<float> ctx(g, model.params());
    ctx.inference = true;
    auto fwd = model.forward(ctx, audio_row(ex.mixture), eeg_in);
    const ArrF est = fwd.est_target.val().row(0).transpose().array();
    double si = si_sdr(est, ex.target.samples);
    if (aux_loss) si += si_sdr(ArrF(fwd.est_other.val().row(0).transpose().array()),
                               ex.interferer.samples);
    si_sum += si;
    if (s.size() > 0) s_vectors.push_back(std::move(s));
  }
  m.si = si_sum / static_cast<double>(val.size());
  if (!s_vectors.empty()) {
    Eigen::MatrixXd sel(static_cast<Eigen::Index>(s_vectors.size()), s_vectors[0].size());
    for (size_t i = 0; i < s_vectors.size(); ++i)
      sel.row(static_cast<Eigen::Index>(i)) = s_vectors[i].transpose();
    m.l_d = discretization_loss(sel, lw.k1, lw.b, lw.q);
    m.l_reg = sparsity_loss(sel, lw.k2);
    m.mean_abs_dev = (sel.array() - lw.q).abs().mean();
  }
  m.total = -lw.alpha * m.si + lw.beta * m.l_d + lw.gamma * m.l_reg;
  return m;
}

struct LoopConfig {
  int epochs = 1;
  ScheduleConfig sched;
  LossWeights loss;
  TemperatureSchedule temp;
  bool use_tau = false;
  double selector_lr_mult = 1.0;
  double clip = 5.0;
  bool aux_loss = false;
  uint64_t seed = 0;
  std::string stage_name;
  const RunLogger* logger = nullptr;
  int64_t step_offset = 0;
};

TrainLog run_training_loop(BasenModel<float>& model, const MethodHooks& hooks,
                           const Dataset& train, const Dataset& val, const LoopConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("training: empty training set");
  cfg.sched.validate("training");
  TrainLog log;
  AdamOptimizer<float> opt_model(model.params(), cfg.sched.beta1, cfg.sched.beta2);
  std::optional<AdamOptimizer<float>> opt_sel;
  if (hooks.selector_store)
    opt_sel.emplace(*hooks.selector_store, cfg.sched.beta1, cfg.sched.beta2);

  Rng shuffle_rng = derive_rng(cfg.seed, cfg.stage_name + ".shuffle");
  Rng noise_rng = derive_rng(cfg.seed, cfg.stage_name + ".noise");

  const auto steps_per_epoch = static_cast<int64_t>(
      (train.size() + static_cast<size_t>(cfg.sched.batch_size) - 1) /
      static_cast<size_t>(cfg.sched.batch_size));
  const int64_t total_steps = steps_per_epoch * cfg.epochs;

  auto record_epoch = [&](int epoch, double tau) {
    const ValMetrics m = validate_model(model, hooks, val, cfg.loss, tau, cfg.aux_loss);
    EpochLog e;
    e.epoch = epoch;
    e.val_total = m.total;
    e.val_si_sdr = m.si;
    e.val_l_d = m.l_d;
    e.val_l_reg = m.l_reg;
    e.mean_abs_dev = m.mean_abs_dev;
    log.epochs.push_back(e);
  };

  double tau = cfg.use_tau ? tau_at(0.0, cfg.temp) : 0.0;
  record_epoch(0, tau);

  std::vector<MatF> snap_model = snapshot_store(model.params());
  std::vector<MatF> snap_sel;
  if (hooks.selector_store) snap_sel = snapshot_store(*hooks.selector_store);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    tau = cfg.use_tau ? tau_at(static_cast<double>(epoch), cfg.temp) : 0.0;
    const auto batches = make_batches(train.size(), cfg.sched.batch_size, shuffle_rng);
    for (const auto& batch : batches) {
      const double lr = lr_at(std::min(step + 1, total_steps), total_steps, cfg.sched);

      Graph<float> g;
      GraphContext<float> mctx(g, model.params());
      std::optional<GraphContext<float>> sctx;
      if (hooks.selector_store) sctx.emplace(g, *hooks.selector_store);

      Var<float> si_sum;
      std::vector<Var<float>> s_rows;
      for (const size_t idx : batch) {
        const MixtureExample& ex = train[idx];
        Var<float> s_var;
        Var<float> eeg_in = hooks.train_input(g, sctx ? &*sctx : nullptr, ex, tau, noise_rng,
                                              &s_var);
        auto fwd = model.forward(mctx, constant(g, audio_row(ex.mixture)), eeg_in);
        Var<float> si = si_sdr_graph(mctx, fwd.est_target, audio_row(ex.target));
        if (cfg.aux_loss)
          si = add(si, si_sdr_graph(mctx, fwd.est_other, audio_row(ex.interferer)));
        si_sum = si_sum.valid() ? add(si_sum, si) : si;
        if (s_var.valid()) s_rows.push_back(transpose(s_var));
      }
      Var<float> mean_si = scale(si_sum, 1.0f / static_cast<float>(batch.size()));
      Var<float> total = scale(mean_si, static_cast<float>(-cfg.loss.alpha));
      Var<float> l_d_var, l_reg_var;
      if (!s_rows.empty()) {
        Var<float> sel = concat_rows(s_rows);
        l_d_var = discretization_loss_graph(sel, cfg.loss.k1, cfg.loss.b, cfg.loss.q);
        l_reg_var = sparsity_loss_graph(sel, cfg.loss.k2);
        if (cfg.loss.beta > 0.0)
          total = add(total, scale(l_d_var, static_cast<float>(cfg.loss.beta)));
        if (cfg.loss.gamma > 0.0)
          total = add(total, scale(l_reg_var, static_cast<float>(cfg.loss.gamma)));
      }

      const double total_value = static_cast<double>(total.val()(0, 0));
      if (!std::isfinite(total_value)) {
        restore_store(model.params(), snap_model);
        if (hooks.selector_store) restore_store(*hooks.selector_store, snap_sel);
        log.aborted_nan = true;
        log.abort_reason = cfg.stage_name + ": non-finite loss at step " + std::to_string(step) +
                           "; parameters restored to last completed epoch";
        return log;
      }

      g.backward(total.id());
      mctx.accumulate_param_grads();
      if (sctx) sctx->accumulate_param_grads();

      std::vector<ParameterStore<float>*> stores{&model.params()};
      if (hooks.selector_store) stores.push_back(hooks.selector_store);
      clip_joint_grad_norm(stores, cfg.clip);
      opt_model.step(model.params(), lr, 0.0);
      if (opt_sel) opt_sel->step(*hooks.selector_store, lr * cfg.selector_lr_mult, 0.0);
      model.params().zero_grads();
      if (hooks.selector_store) hooks.selector_store->zero_grads();

      StepLog sl;
      sl.step = cfg.step_offset + step;
      sl.si_sdr_db = static_cast<double>(mean_si.val()(0, 0));
      sl.l_d = l_d_var.valid() ? static_cast<double>(l_d_var.val()(0, 0)) : 0.0;
      sl.l_reg = l_reg_var.valid() ? static_cast<double>(l_reg_var.val()(0, 0)) : 0.0;
      sl.total = total_value;
      sl.lr = lr;
      sl.tau = tau;
      log.steps.push_back(sl);
      if (cfg.logger) cfg.logger->append_step(sl, cfg.stage_name);
      ++step;
    }
    record_epoch(epoch + 1, tau);
    snap_model = snapshot_store(model.params());
    if (hooks.selector_store) snap_sel = snapshot_store(*hooks.selector_store);
  }
  return log;
}

MethodHooks basen_hooks(bool zero_eeg) {
  MethodHooks h;
  h.train_input = [zero_eeg](Graph<float>& g, GraphContext<float>*, const MixtureExample& ex,
                             double, Rng&, Var<float>*) {
    if (zero_eeg) return constant(g, MatF(MatF::Zero(ex.eeg.data.rows(), ex.eeg.data.cols())));
    return constant(g, ex.eeg.data);
  };
  h.eval_input = [zero_eeg](const MixtureExample& ex, double, Eigen::VectorXd*) {
    if (zero_eeg) return MatF(MatF::Zero(ex.eeg.data.rows(), ex.eeg.data.cols()));
    return ex.eeg.data;
  };
  return h;
}

Checkpoint make_checkpoint(const BasenModel<float>& model, const std::string& method,
                           const ParameterStore<float>* selector) {
  Checkpoint ckpt =
      checkpoint_from_store(model.params(), model_config_to_json(model.config(),
                                                                 model.q_channels(), method));
  if (selector)
    for (int i = 0; i < selector->count(); ++i)
      ckpt.tensors.emplace_back(selector->name(i), selector->value(i));
  return ckpt;
}

void check_dataset(const Dataset& ds, const char* where) {
  if (ds.empty()) throw std::invalid_argument(std::string(where) + ": empty dataset");
  const auto q = ds.front().eeg.data.rows();
  for (const auto& ex : ds) {
    if (ex.eeg.data.rows() != q)
      throw std::invalid_argument(std::string(where) + ": inconsistent EEG channel counts");
    if (ex.mixture.samples.size() != ex.target.samples.size())
      throw std::invalid_argument(std::string(where) + ": mixture/target length mismatch");
  }
}

}  // namespace

// --- BASEN ---------------------------------------------------------------------

BasenTrainResult train_basen(const Dataset& train, const Dataset& val, const ModelConfig& mc,
                             const TrainOptions& opt) {
  check_dataset(train, "train_basen");
  BasenModel<float> model(mc, static_cast<int>(train.front().eeg.data.rows()));

  RunLogger logger(opt.run_dir);
  LoopConfig cfg;
  cfg.epochs = opt.sched.total_epochs;
  cfg.sched = opt.sched;
  cfg.loss = opt.loss;
  cfg.loss.beta = 0.0;  // no selector terms in plain BASEN training
  cfg.loss.gamma = 0.0;
  cfg.clip = opt.grad_clip_norm;
  cfg.aux_loss = opt.aux_interferer_loss;
  cfg.seed = opt.seed;
  cfg.stage_name = "basen";
  cfg.logger = logger.active() ? &logger : nullptr;

  BasenTrainResult result;
  result.log = run_training_loop(model, basen_hooks(opt.zero_eeg), train, val, cfg);
  result.checkpoint = make_checkpoint(model, "basen", nullptr);
  result.final_val_total = result.log.epochs.back().val_total;
  logger.save_checkpoint("basen_final.ckpt", result.checkpoint);
  return result;
}

// --- plain GCS + BASEN (unstable baseline) ----------------------------------------

GcsTrainResult train_gcs(const Dataset& train, const Dataset& val, const ModelConfig& mc,
                         const GcsOptions& gopt, const TrainOptions& opt) {
  check_dataset(train, "train_gcs");
  const int q = static_cast<int>(train.front().eeg.data.rows());
  GumbelSelector<float> selector(gopt.k_neurons, q, opt.seed, gopt.selector_init_std);
  BasenModel<float> model(mc, gopt.k_neurons);  // sees the K mixdown channels

  RunLogger logger(opt.run_dir);
  MethodHooks hooks;
  hooks.selector_store = &selector.params();
  hooks.train_input = [&selector](Graph<float>& g, GraphContext<float>* sctx,
                                  const MixtureExample& ex, double tau, Rng& noise_rng,
                                  Var<float>*) {
    const MatF noise = selector.draw_gumbel_noise(noise_rng);
    Var<float> w = selector.sample_weights(*sctx, noise, tau);
    return matmul(w, constant(g, ex.eeg.data));
  };
  hooks.eval_input = [&selector](const MixtureExample& ex, double tau, Eigen::VectorXd*) {
    return MatF(selector.mean_weights(tau) * ex.eeg.data);
  };

  LoopConfig cfg;
  cfg.epochs = opt.sched.total_epochs;
  cfg.sched = opt.sched;
  cfg.loss = opt.loss;
  cfg.loss.beta = 0.0;
  cfg.loss.gamma = 0.0;
  cfg.temp = opt.temp;
  cfg.temp.total_epochs = opt.sched.total_epochs;
  cfg.use_tau = true;
  cfg.selector_lr_mult = opt.selector_lr_mult;
  cfg.clip = opt.grad_clip_norm;
  cfg.seed = opt.seed;
  cfg.stage_name = "gcs";
  cfg.logger = logger.active() ? &logger : nullptr;

  GcsTrainResult result;
  result.log = run_training_loop(model, hooks, train, val, cfg);
  result.subset = selector.test_select();
  result.subset.method = "gcs";
  result.checkpoint = make_checkpoint(model, "gcs", &selector.params());
  result.final_val_total = result.log.epochs.back().val_total;
  logger.save_checkpoint("gcs_final.ckpt", result.checkpoint);
  logger.write_text("selection.json", channel_subset_to_json(result.subset));
  return result;
}

// --- ResGS ------------------------------------------------------------------------

ResgsTrainResult train_resgs(const Dataset& train, const Dataset& val,
                             const Checkpoint& pretrained_basen, const ResgsOptions& ropt,
                             const TrainOptions& opt) {
  check_dataset(train, "train_resgs");
  int q = 0;
  const ModelConfig mc = model_config_from_json(pretrained_basen.config_json, &q);
  if (q != static_cast<int>(train.front().eeg.data.rows()))
    throw std::invalid_argument("train_resgs: checkpoint channel count does not match dataset");
  if (ropt.k_neurons > q)
    throw std::invalid_argument("train_resgs: K must be <= Q");

  BasenModel<float> model(mc, q);
  load_into_store(pretrained_basen, model.params());
  GumbelSelector<float> selector(ropt.k_neurons, q, opt.seed, ropt.selector_init_std);
  RunLogger logger(opt.run_dir);

  // Stage 1: weighted residual blend of the padded selector output, selector
  // and BASEN trained jointly under temperature annealing.
  MethodHooks stage1;
  stage1.selector_store = &selector.params();
  const double a = ropt.residual_weight;
  const ResgsPadding mode = ropt.padding;
  stage1.train_input = [&selector, a, mode](Graph<float>& g, GraphContext<float>* sctx,
                                            const MixtureExample& ex, double tau,
                                            Rng& noise_rng, Var<float>*) {
    const MatF noise = selector.draw_gumbel_noise(noise_rng);
    Var<float> w = selector.sample_weights(*sctx, noise, tau);
    Var<float> z = matmul(w, constant(g, ex.eeg.data));
    std::vector<int> targets;
    if (mode == ResgsPadding::scatter) targets = selector.test_select().indices;
    return resgs_combine(*sctx, ex.eeg.data, z, a, mode, &targets);
  };
  stage1.eval_input = [&selector, a, mode](const MixtureExample& ex, double tau,
                                           Eigen::VectorXd*) {
    const MatF z = selector.mean_weights(tau) * ex.eeg.data;
    std::vector<int> targets;
    if (mode == ResgsPadding::scatter) targets = selector.test_select().indices;
    return resgs_combine<float>(ex.eeg.data, z, a, mode, &targets);
  };

  LoopConfig cfg1;
  cfg1.epochs = ropt.stage1_epochs;
  cfg1.sched = opt.sched;
  cfg1.sched.total_epochs = ropt.stage1_epochs;
  cfg1.loss = opt.loss;
  cfg1.loss.beta = 0.0;
  cfg1.loss.gamma = 0.0;
  cfg1.temp = opt.temp;
  cfg1.temp.total_epochs = ropt.stage1_epochs;
  cfg1.use_tau = true;
  cfg1.selector_lr_mult = opt.selector_lr_mult;
  cfg1.clip = opt.grad_clip_norm;
  cfg1.seed = opt.seed;
  cfg1.stage_name = "resgs_stage1";
  cfg1.logger = logger.active() ? &logger : nullptr;

  ResgsTrainResult result;
  result.stage1 = run_training_loop(model, stage1, train, val, cfg1);

  result.subset = selector.test_select();
  result.subset.method = "resgs";
  result.subset.gamma_or_k = static_cast<double>(ropt.k_neurons);
  logger.write_text("selection.json", channel_subset_to_json(result.subset));
  logger.save_checkpoint("resgs_stage1.ckpt", make_checkpoint(model, "resgs", &selector.params()));

  if (result.stage1.aborted_nan) {
    result.checkpoint = make_checkpoint(model, "resgs", &selector.params());
    result.final_val_total = result.stage1.epochs.back().val_total;
    return result;
  }

  // Stage 2: selector frozen in test mode; BASEN fine-tunes on the selected
  // channels, the rest zeroed in place. Fresh optimizer state.
  selector.params().set_all_trainable(false);
  std::vector<bool> keep(static_cast<size_t>(q), false);
  for (int idx : result.subset.indices) keep[static_cast<size_t>(idx)] = true;
  auto mask_eeg = [keep](const MatF& eeg) {
    MatF masked = eeg;
    for (Eigen::Index c = 0; c < masked.rows(); ++c)
      if (!keep[static_cast<size_t>(c)]) masked.row(c).setZero();
    return masked;
  };

  MethodHooks stage2;
  stage2.train_input = [mask_eeg](Graph<float>& g, GraphContext<float>*,
                                  const MixtureExample& ex, double, Rng&, Var<float>*) {
    return constant(g, mask_eeg(ex.eeg.data));
  };
  stage2.eval_input = [mask_eeg](const MixtureExample& ex, double, Eigen::VectorXd*) {
    return mask_eeg(ex.eeg.data);
  };

  LoopConfig cfg2 = cfg1;
  cfg2.epochs = ropt.stage2_epochs;
  cfg2.sched.total_epochs = ropt.stage2_epochs;
  cfg2.use_tau = false;
  cfg2.stage_name = "resgs_stage2";
  cfg2.step_offset = static_cast<int64_t>(result.stage1.steps.size());
  result.stage2 = run_training_loop(model, stage2, train, val, cfg2);
  selector.params().set_all_trainable(true);

  result.checkpoint = make_checkpoint(model, "resgs", &selector.params());
  result.final_val_total = result.stage2.epochs.back().val_total;
  logger.save_checkpoint("resgs_final.ckpt", result.checkpoint);
  return result;
}

// --- progressive ConvRS -------------------------------------------------------------

std::vector<ConvrsGammaResult> train_convrs_progressive(const Dataset& train, const Dataset& val,
                                                        const ModelConfig& mc,
                                                        const std::vector<double>& gamma_list,
                                                        const ConvrsOptions& copt,
                                                        const TrainOptions& opt) {
  check_dataset(train, "train_convrs_progressive");
  if (gamma_list.empty())
    throw std::invalid_argument("train_convrs_progressive: gamma_list is empty");
  if (gamma_list.front() != 0.0)
    throw std::invalid_argument("train_convrs_progressive: gamma_list must start at 0");
  for (size_t i = 1; i < gamma_list.size(); ++i)
    if (gamma_list[i] <= gamma_list[i - 1])
      throw std::invalid_argument(
          "train_convrs_progressive: gamma_list must be sorted ascending");

  const int q = static_cast<int>(train.front().eeg.data.rows());
  const Eigen::Index eeg_len = train.front().eeg.data.cols();
  BasenModel<float> model(mc, q);
  ConvRSelector<float> selector(q, eeg_len, copt.n1_blocks, opt.seed ^ 0xc0117ULL);
  RunLogger logger(opt.run_dir);

  MethodHooks hooks;
  hooks.selector_store = &selector.params();
  hooks.train_input = [&selector](Graph<float>& g, GraphContext<float>* sctx,
                                  const MixtureExample& ex, double, Rng&, Var<float>* s_out) {
    Var<float> s = selector.forward(*sctx, constant(g, ex.eeg.data));
    if (s_out) *s_out = s;
    return convrs_apply(*sctx, ex.eeg.data, s);
  };
  hooks.eval_input = [&selector](const MixtureExample& ex, double, Eigen::VectorXd* s_out) {
    const Eigen::VectorXd s = selector.forward_value(ex.eeg.data);
    if (s_out) *s_out = s;
    return MatF((ex.eeg.data.array().colwise() * s.cast<float>().array()).matrix());
  };

  auto collect_subset = [&](double gamma) {
    std::vector<Eigen::VectorXd> s_vectors;
    s_vectors.reserve(val.size());
    for (const auto& ex : val) s_vectors.push_back(selector.forward_value(ex.eeg.data));
    ChannelSubset subset = aggregate_selection(s_vectors, copt.select_threshold);
    subset.method = "convrs";
    subset.gamma_or_k = gamma;
    return subset;
  };

  std::vector<ConvrsGammaResult> results;
  int64_t step_offset = 0;
  for (size_t gi = 0; gi < gamma_list.size(); ++gi) {
    const double gamma = gamma_list[gi];
    ConvrsGammaResult r;
    r.gamma = gamma;

    LoopConfig cfg;
    cfg.sched = opt.sched;
    cfg.loss = opt.loss;
    cfg.loss.gamma = gamma;
    cfg.selector_lr_mult = opt.selector_lr_mult;
    cfg.clip = opt.grad_clip_norm;
    cfg.aux_loss = opt.aux_interferer_loss;
    cfg.seed = splitmix64(opt.seed ^ (0x9e00 + gi));
    cfg.logger = logger.active() ? &logger : nullptr;

    if (gi == 0) {
      // gamma = 0: the whole model trains jointly from scratch
      cfg.epochs = copt.gamma0_epochs;
      cfg.sched.total_epochs = copt.gamma0_epochs;
      cfg.stage_name = "convrs_g0";
      cfg.step_offset = step_offset;
      r.stage2 = run_training_loop(model, hooks, train, val, cfg);
      step_offset += static_cast<int64_t>(r.stage2.steps.size());
    } else {
      // stage 1: BASEN frozen, selector trains
      model.params().set_all_trainable(false);
      LoopConfig cfg1 = cfg;
      cfg1.epochs = copt.stage1_epochs;
      cfg1.sched.total_epochs = copt.stage1_epochs;
      cfg1.sched.max_lr = copt.stage1_max_lr;
      cfg1.stage_name = "convrs_g" + std::to_string(gi) + "_s1";
      cfg1.step_offset = step_offset;
      r.stage1 = run_training_loop(model, hooks, train, val, cfg1);
      step_offset += static_cast<int64_t>(r.stage1.steps.size());
      model.params().set_all_trainable(true);

      // stage 2: selector frozen, BASEN adapts to the selected channels
      selector.params().set_all_trainable(false);
      LoopConfig cfg2 = cfg;
      cfg2.epochs = copt.stage2_epochs;
      cfg2.sched.total_epochs = copt.stage2_epochs;
      cfg2.sched.max_lr = copt.stage2_max_lr;
      cfg2.stage_name = "convrs_g" + std::to_string(gi) + "_s2";
      cfg2.step_offset = step_offset;
      r.stage2 = run_training_loop(model, hooks, train, val, cfg2);
      step_offset += static_cast<int64_t>(r.stage2.steps.size());
      selector.params().set_all_trainable(true);
    }

    r.subset = collect_subset(gamma);
    r.checkpoint = make_checkpoint(model, "convrs", &selector.params());
    r.final_val_total = r.stage2.epochs.back().val_total;
    const std::string tag = "convrs_gamma" + std::to_string(gi);
    logger.save_checkpoint(tag + ".ckpt", r.checkpoint);
    logger.write_text(tag + "_selection.json", channel_subset_to_json(r.subset));
    results.push_back(std::move(r));
    if (results.back().stage2.aborted_nan) break;
  }
  return results;
}

}  // namespace basen
