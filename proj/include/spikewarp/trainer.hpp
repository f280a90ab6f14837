#pragma once

// Optimization machinery (Adam, cosine decay, global-norm clipping) and the
// phase runner shared by the analog warm-start, spiking fine-tune, and
// scratch-spiking protocols.

#include <map>
#include <ostream>

#include "json.hpp"
#include "spikewarp/losses.hpp"
#include "spikewarp/unet.hpp"

namespace spikewarp {

struct OptimConfig {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double eta_min = 1e-6;
  std::int64_t epochs = 60;
  double clip_norm = 1.0;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(lr > eta_min && eta_min >= 0)) throw std::invalid_argument("need lr > eta_min >= 0");
    if (!(clip_norm > 0)) throw std::invalid_argument("clip_norm must be positive");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  }
};

inline double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0, double eta_min) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step out of range");
  return eta_min + 0.5 * (lr0 - eta_min) *
                       (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                                       static_cast<double>(total_steps)));
}

// Scales all gradients so the global l2 norm is at most max_norm.
// Returns the pre-clip norm.
template <class T>
double clip_global_norm(std::vector<Tensor<T>*> grads, double max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto* g : grads)
    for (T v : g->data) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto* g : grads)
      for (auto& v : g->data) v = static_cast<T>(v * s);
  }
  return norm;
}

struct AdamSlot {
  std::vector<double> m, v;
};

struct AdamState {
  std::map<std::string, AdamSlot> slots;
  std::int64_t step = 0;  // completed steps
  std::int64_t skipped = 0;
};

// One bias-corrected Adam update over named parameters. If any gradient is
// non-finite the whole step is skipped and the counter does not advance.
// Returns false for a skipped step.
template <class T>
bool adam_step(const std::vector<std::pair<std::string, Tensor<T>*>>& params,
               const std::vector<Tensor<T>*>& grads, AdamState& state, const OptimConfig& cfg,
               double lr) {
  for (auto* g : grads)
    if (!g->all_finite()) {
      ++state.skipped;
      return false;
    }
  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& [name, p] = params[k];
    auto& slot = state.slots[name];
    if (slot.m.empty()) {
      slot.m.assign(static_cast<std::size_t>(p->numel()), 0.0);
      slot.v.assign(static_cast<std::size_t>(p->numel()), 0.0);
    }
    for (std::int64_t i = 0; i < p->numel(); ++i) {
      const double g = static_cast<double>((*grads[k])[i]);
      auto& m = slot.m[static_cast<std::size_t>(i)];
      auto& v = slot.v[static_cast<std::size_t>(i)];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double mh = m / bc1, vh = v / bc2;
      (*p)[i] = static_cast<T>(static_cast<double>((*p)[i]) -
                               lr * mh / (std::sqrt(vh) + cfg.eps));
    }
  }
  ++state.step;
  return true;
}

enum class Phase { ann_warmstart, snn_finetune, snn_scratch };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::ann_warmstart: return "ann_warmstart";
    case Phase::snn_finetune: return "snn_finetune";
    default: return "snn_scratch";
  }
}

template <class T>
struct TrainPair {
  Tensor<T> fixed, moving;          // [1,D,H,W]
  Tensor<T> fixed_labels, moving_labels;  // [1,D,H,W] integer-valued, may be empty
};

template <class T>
Tensor<T> one_hot(const Tensor<T>& labels, std::int64_t classes) {
  Dims4 d = Dims4::of(labels.shape);
  if (d.c != 1) throw std::invalid_argument("one_hot: expected single-channel labels");
  Tensor<T> out(Shape{classes, d.d, d.h, d.w});
  for (std::int64_t i = 0; i < d.spatial(); ++i) {
    const auto c = static_cast<std::int64_t>(labels[i]);
    if (c < 0 || c >= classes) throw std::invalid_argument("one_hot: label out of range");
    out[c * d.spatial() + i] = T(1);
  }
  return out;
}

template <class T>
struct PhasePlan {
  Phase phase = Phase::ann_warmstart;
  LossWeights weights;
  OptimConfig optim;
  std::int64_t label_classes = 0;          // needed when lambda_seg > 0
  Network<T>* distill_teacher = nullptr;   // needed when lambda_distill > 0
};

// Trains the network in place over the pair list; one pair per step, shuffled
// per epoch from the phase seed. Emits one JSON record per step to `log`.
// Deterministic given the seed. Aborts after 10 consecutive non-finite steps.
template <class T>
void run_phase(Network<T>& net, std::vector<TrainPair<T>>& data, const PhasePlan<T>& plan,
               std::ostream* log = nullptr) {
  plan.optim.validate();
  plan.weights.validate();
  if (data.empty()) throw std::invalid_argument("run_phase: no training pairs");
  const bool snn = plan.phase != Phase::ann_warmstart;
  if (snn != (net.flavor == Flavor::snn))
    throw std::invalid_argument("run_phase: phase does not match network flavor");
  if (plan.weights.lambda_distill > 0 && !plan.distill_teacher)
    throw std::invalid_argument("run_phase: distillation weight set but no teacher");
  net.bn_training = !snn;  // spiking phases keep batch norm frozen

  // teacher fields are fixed throughout the phase
  std::vector<Tensor<T>> teacher_fields;
  if (plan.weights.lambda_distill > 0) {
    for (auto& pr : data) {
      Tape<T> tape;
      auto res = forward(*plan.distill_teacher, tape, pr.fixed, pr.moving);
      teacher_fields.push_back(tape.value(res.field));
    }
  }

  AdamState adam;
  std::mt19937_64 shuffle_rng(plan.optim.seed);
  const std::int64_t total_steps = plan.optim.epochs * static_cast<std::int64_t>(data.size());
  std::int64_t step = 0;
  int consecutive_bad = 0;

  for (std::int64_t epoch = 0; epoch < plan.optim.epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t idx : order) {
      auto& pr = data[idx];
      const double lr = cosine_lr(step, total_steps, plan.optim.lr, plan.optim.eta_min);
      double loss_val = 0, grad_norm = 0;
      LossBreakdown<T> breakdown{};
      std::vector<double> rates;
      bool ok = true;
      try {
        Tape<T> tape;
        auto res = forward(net, tape, pr.fixed, pr.moving);
        auto fixed_id = tape.leaf(pr.fixed);
        auto moving_id = tape.leaf(pr.moving);
        auto warped = ops::warp_trilinear(tape, moving_id, res.field);
        auto sim = ops::ncc_local(tape, fixed_id, warped, plan.weights.ncc_window,
                                  plan.weights.ncc_eps);
        auto reg = ops::diffusion_reg(tape, res.field);
        typename Tape<T>::Id spk = -1, distill = -1, seg = -1;
        if (snn) spk = ops::spike_reg(tape, res.rate_ids, plan.weights.rho_star, plan.weights.beta);
        if (plan.weights.lambda_distill > 0)
          distill = ops::kd_distill(tape, res.field, teacher_fields[idx]);
        if (plan.weights.lambda_seg > 0) {
          auto fs = tape.leaf(one_hot(pr.fixed_labels, plan.label_classes));
          auto ms = tape.leaf(one_hot(pr.moving_labels, plan.label_classes));
          seg = ops::soft_dice(tape, fs, ms, res.field, plan.weights.dice_eps);
        }
        LossWeights w = plan.weights;
        if (!snn) w.lambda_spk = 0.0;
        breakdown = total_loss(tape, sim, reg, spk, distill, seg, w);
        loss_val = static_cast<double>(tape.value(breakdown.total)[0]);
        rates = res.rates;
        tape.backward(breakdown.total);

        // trainable set: spiking phases freeze the batch-norm affines
        std::vector<std::pair<std::string, Tensor<T>*>> params;
        std::vector<Tensor<T>> grad_store;
        for (auto& b : res.params) {
          const bool affine = b.name.ends_with(".gamma") || b.name.ends_with(".beta");
          if (snn && affine) continue;
          params.emplace_back(b.name, b.storage);
          grad_store.push_back(tape.grad(b.id));
        }
        std::vector<Tensor<T>*> grads;
        for (auto& g : grad_store) grads.push_back(&g);
        grad_norm = clip_global_norm(grads, plan.optim.clip_norm);
        ok = adam_step(params, grads, adam, plan.optim, lr);
        if (ok && snn) {
          for (auto& blk : net.blocks) {
            for (auto& t : blk.tau.data)
              t = std::min(T(1.0), std::max(T(0.0101), t));
            blk.theta[0] = std::max(T(1e-3), blk.theta[0]);
          }
        }
      } catch (const NonFiniteError&) {
        ok = false;
        ++adam.skipped;
      }
      consecutive_bad = ok ? 0 : consecutive_bad + 1;
      if (consecutive_bad >= 10)
        throw std::runtime_error("run_phase: 10 consecutive non-finite steps, aborting");
      if (log) {
        nlohmann::json rec{{"phase", phase_name(plan.phase)}, {"step", step},
                           {"epoch", epoch},   {"pair", idx},
                           {"lr", lr},         {"loss", loss_val},
                           {"sim", breakdown.sim}, {"reg", breakdown.reg},
                           {"spk", breakdown.spk}, {"distill", breakdown.distill},
                           {"seg", breakdown.seg}, {"grad_norm", grad_norm},
                           {"skipped", !ok}};
        if (!rates.empty()) rec["rates"] = rates;
        (*log) << rec.dump() << "\n";
      }
      ++step;
    }
  }
}

}  // namespace spikewarp
