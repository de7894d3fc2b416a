#pragma once

// Training objectives: adaptive-threshold relation loss, KL evidence terms,
// and their weighted combination.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "gega/tensor.hpp"

namespace gega {

// Null/threshold class lives at index 0: positives should score above it,
// negatives below. Loss is a pair of grouped cross-entropies against that
// moving threshold.
inline Tensor atl_loss(Tape& tape, const Tensor& scores,
                       const std::vector<int>& positives) {
  if (scores.ndim() != 1 || scores.dim(0) < 2)
    throw TensorError("atl_loss: scores must be a class vector");
  const std::size_t nc = scores.dim(0);
  std::set<int> pos;
  for (int r : positives) {
    if (r <= 0 || std::size_t(r) >= nc)
      throw TensorError("atl_loss: positive id " + std::to_string(r) +
                        " out of range");
    if (!pos.insert(r).second)
      throw TensorError("atl_loss: duplicate positive id " +
                        std::to_string(r));
  }

  std::vector<std::size_t> neg_idx = {0};
  for (std::size_t r = 1; r < nc; ++r)
    if (!pos.count(int(r))) neg_idx.push_back(r);
  Tensor th = tape.gather_rows(scores, {0});
  Tensor loss =
      tape.sub(tape.logsumexp(tape.gather_rows(scores, neg_idx), 0), th);

  if (!pos.empty()) {
    std::vector<std::size_t> pos_idx = {0};
    std::vector<std::size_t> pos_only;
    for (int r : pos) {
      pos_idx.push_back(std::size_t(r));
      pos_only.push_back(std::size_t(r));
    }
    Tensor lse_pos = tape.logsumexp(tape.gather_rows(scores, pos_idx), 0);
    Tensor sum_pos = tape.sum_all(tape.gather_rows(scores, pos_only));
    loss = tape.add(
        loss,
        tape.sub(tape.scalar_mul(lse_pos, double(pos_only.size())), sum_pos));
  }
  return loss;
}

// KL(ref || pred) with ref held constant. pred is floored at 1e-10 inside
// the log so exact zeros never produce infinities; zero-ref terms drop out.
inline Tensor kl_divergence(Tape& tape, const std::vector<double>& ref,
                            const Tensor& pred) {
  if (pred.ndim() != 1 || pred.dim(0) != ref.size())
    throw TensorError("kl_divergence: reference length " +
                      std::to_string(ref.size()) + " vs prediction " +
                      detail::shape_str(pred.shape()));
  double ref_entropy = 0.0;  // sum of z log z over the support
  std::vector<double> weights(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] < 0.0)
      throw TensorError("kl_divergence: negative reference mass");
    weights[i] = ref[i];
    if (ref[i] > 0.0) ref_entropy += ref[i] * std::log(ref[i]);
  }
  Tensor cross = tape.sum_all(
      tape.mul(Tensor::vec(weights), tape.log(tape.clamp_min(pred, 1e-10))));
  return tape.add_scalar(tape.scalar_mul(cross, -1.0), ref_entropy);
}

// Drops negligible mass and rescales. Reference distributions stored for
// distillation pass through this first: with every surviving entry above
// e * 1e-10, the floored-log divergence against any prediction is provably
// nonnegative up to rounding.
inline std::vector<double> floor_distribution(std::vector<double> v,
                                              double floor = 1e-9) {
  double mass = 0.0;
  for (double& x : v) {
    if (x < floor) x = 0.0;
    mass += x;
  }
  if (mass < 0.5)
    throw TensorError("floor_distribution: distribution lost its mass");
  for (double& x : v) x /= mass;
  return v;
}

// Gold sentence distribution against the predicted one.
inline Tensor er_doc_loss(Tape& tape, const std::vector<double>& z,
                          const Tensor& p) {
  return kl_divergence(tape, z, p);
}

// Teacher token distribution against the student's; the teacher side is a
// plain vector, so no gradient can reach it.
inline Tensor er_sent_loss(Tape& tape, const std::vector<double>& q_teacher,
                           const Tensor& q_student) {
  return kl_divergence(tape, q_teacher, q_student);
}

struct LossBundle {
  Tensor l_re;
  Tensor l_er;
  Tensor total;
  double lambda = 0.0;
};

// total = (1 - lambda) * re + lambda * er. The endpoints reuse the input
// tensor itself so equality there is exact, not merely close.
inline LossBundle total_loss(Tape& tape, const Tensor& l_re,
                             const Tensor* l_er, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw TensorError("total_loss: lambda must lie in [0, 1]");
  LossBundle out;
  out.lambda = lambda;
  out.l_re = l_re;
  if (lambda == 0.0 || l_er == nullptr) {
    out.l_er = Tensor::scalar(0.0);
    out.total = l_re;
    return out;
  }
  out.l_er = *l_er;
  if (lambda == 1.0) {
    out.total = out.l_er;
    return out;
  }
  out.total = tape.add(tape.scalar_mul(l_re, 1.0 - lambda),
                       tape.scalar_mul(out.l_er, lambda));
  return out;
}

}  // namespace gega
