#pragma once

// Soft Dice loss and the per-stage combination used during training.

#include <vector>

#include "plnet/autograd.hpp"

namespace plnet {

// 1 - (2*sum(p*g) + smooth) / (sum(p) + sum(g) + smooth), sums running over
// every element of the batch. Smoothing keeps empty-vs-empty at loss 0.
template <typename T>
Var<T> dice_loss(Tape<T>& tape, const Var<T>& pred_prob, const Var<T>& truth,
                 double smooth = 1.0) {
  if (!pred_prob.value().same_shape(truth.value())) {
    throw ConfigError("dice_loss: shape mismatch " + pred_prob.value().shape_str() + " vs " +
                      truth.value().shape_str());
  }
  Var<T> inter = ag::sum(tape, ag::mul(tape, pred_prob, truth));
  Var<T> denom = ag::s_add(tape, ag::sum(tape, pred_prob), ag::sum(tape, truth));
  Var<T> frac = ag::s_div(tape, ag::s_affine(tape, inter, 2.0, smooth),
                          ag::s_affine(tape, denom, 1.0, smooth));
  return ag::s_affine(tape, frac, -1.0, 1.0);
}

// Equal-weight mean of the active stages' Dice losses. With one probability
// map per stage this is the joint-phase objective; a single entry degenerates
// to that stage's loss alone.
template <typename T>
Var<T> total_loss(Tape<T>& tape, const std::vector<Var<T>>& stage_probs, const Var<T>& truth,
                  double smooth = 1.0) {
  if (stage_probs.empty()) throw ConfigError("total_loss: no stage outputs");
  Var<T> acc = dice_loss(tape, stage_probs[0], truth, smooth);
  for (size_t i = 1; i < stage_probs.size(); ++i) {
    acc = ag::s_add(tape, acc, dice_loss(tape, stage_probs[i], truth, smooth));
  }
  return ag::s_affine(tape, acc, 1.0 / double(stage_probs.size()), 0.0);
}

}  // namespace plnet
