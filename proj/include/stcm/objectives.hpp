#pragma once

#include <vector>

#include "stcm/models.hpp"

namespace stcm {

enum class PairRelation { temporal_neighbor, non_neighbor };

/// Per-term breakdown of an objective, summed over the samples it was evaluated on.
struct LossTerms {
  double reconstruction = 0.0;
  double l1 = 0.0;              // alpha * sum |h|
  double slowness = 0.0;        // beta * sum_i | z_t,i - z_t',i |
  double group_sparsity = 0.0;  // alpha * sum_i z_i
  double contrastive_positive = 0.0;
  double contrastive_negative = 0.0;

  double total() const {
    return reconstruction + l1 + slowness + group_sparsity + contrastive_positive + contrastive_negative;
  }
  LossTerms& operator+=(const LossTerms& o);
  LossTerms scaled(double s) const;
};

struct ObjectiveResult {
  LossTerms terms;
  Gradients grads;  // aligned with parameters(model)
};

// ---- DrLIM contrastive loss ---------------------------------------------------

struct DrlimResult {
  double loss = 0.0;
  Tensor grad_a;
  Tensor grad_b;
};

/// Neighbors: ||z_a - z_b||_p. Non-neighbors: max(0, m - ||z_a - z_b||_p).
/// Every kink (coincident codes, distance exactly m) gets subgradient 0.
DrlimResult drlim_loss(const Tensor& z_a, const Tensor& z_b, PairRelation relation, double margin, double p = 2.0);

/// Siamese DrLIM over a batch of pairs: row n of `x_a`/`x_b` is pair n.
ObjectiveResult drlim_objective(const Model& model, const Tensor& x_a, const Tensor& x_b,
                                const std::vector<PairRelation>& relations, double margin, double p = 2.0);

// ---- auto-encoder objectives ----------------------------------------------------
//
// Both require a single-stage model (one encoder layer plus its decoder). Reconstruction
// is the unnormalized squared error sum ||W_d h - x||^2; batches are summed, not averaged.

struct L1Result {
  double value = 0.0;
  Tensor grad;  // sign(h), sign(0) = 0
};
L1Result l1_penalty(const Tensor& h);

/// Sum over tau in {t, t'} of (||W_d h_tau - x_tau||^2 + alpha |h_tau|_1)
///   + beta * sum_i | z_t,i - z_t',i |   (z = pooled code, summed over pools and positions)
ObjectiveResult slowness_ae_loss(const Model& model, const Tensor& x_t, const Tensor& x_tp, double alpha,
                                 double beta);

/// ||W_d h - x||^2 + alpha * sum_i z_i, with z_i the group L2 norms of h.
ObjectiveResult group_sparsity_loss(const Model& model, const Tensor& x, double alpha);

/// beta-free slowness measure: sum_i |z_t,i - z_t',i| / (pairs * code_dim) over the given
/// pair batch. Used to compare trained models on held-out pairs.
double mean_pooled_difference(const Model& model, const Tensor& x_t, const Tensor& x_tp);

}  // namespace stcm
