#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

struct LossWeights {
  double alpha = 1.0;   // embedding norm penalty
  double beta = 1e-4;   // parameter decay
  double lambda = 1.0;  // alignment
  double gamma = 0.5;   // bidirectional consistency
  double eta = 0.5;     // dissimilarity

  void validate() const {
    if (alpha < 0 || beta < 0 || lambda < 0 || gamma < 0 || eta < 0)
      throw ConfigError("loss weights must be non-negative");
  }
};

struct LossToggles {
  bool embed = true;
  bool align = true;
  bool bidir = true;
  bool dissim = true;
  bool clipped_dissim = false;  // clip cosine below 0 inside the dissim loss
  bool scalar_align = false;    // align match-map scalars instead of pair rows
};

// Raw component values plus the weighted total, one record per step.
struct LossReport {
  double embed = 0;
  double align = 0;
  double bidir = 0;
  double dissim = 0;
  double total = 0;
  LossWeights weights;

  static std::string csv_header() {
    return "step,embed,align,bidir,dissim,total,alpha,beta,lambda,gamma,eta";
  }

  std::string csv_row(std::size_t step) const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", step,
                  embed, align, bidir, dissim, total, weights.alpha, weights.beta,
                  weights.lambda, weights.gamma, weights.eta);
    return buf;
  }
};

// Norm regularizer: alpha pulls every embedding row onto the unit sphere,
// beta decays the listed parameter tensors.
inline Tensor loss_embed(const Tensor& phi_out, const Tensor& psi_out,
                         const std::vector<Tensor>& decay_params, double alpha, double beta) {
  Tensor phi_term = frobenius_sq(add_scalar(l2_norm_rows(phi_out), -1.0));
  Tensor psi_term = frobenius_sq(add_scalar(l2_norm_rows(psi_out), -1.0));
  Tensor total = scale(add(phi_term, psi_term), alpha);
  if (beta != 0.0 && !decay_params.empty()) {
    Tensor decay = frobenius_sq(decay_params[0]);
    for (std::size_t i = 1; i < decay_params.size(); ++i)
      decay = add(decay, frobenius_sq(decay_params[i]));
    total = add(total, scale(decay, beta));
  }
  return total;
}

// Assignment-weighted squared distance between pair-feature rows and their
// target rows. Row l of both matrices describes pair (l / m, l % m).
inline Tensor loss_align(const Tensor& m_ff, const Tensor& targets, const Tensor& a) {
  if (m_ff.rows() != targets.rows() || m_ff.cols() != targets.cols())
    throw ShapeError("pair features and targets differ in shape");
  if (a.rows() * a.cols() != m_ff.rows())
    throw ShapeError("assignment size " + std::to_string(a.rows() * a.cols()) +
                     " does not match " + std::to_string(m_ff.rows()) + " pairs");
  Tensor diff = subtract(m_ff, targets);
  Tensor row_sq = matmul(hadamard(diff, diff), Tensor::filled(m_ff.cols(), 1, 1.0));
  return sum(hadamard(row_sq, reshape(a, a.rows() * a.cols(), 1)));
}

// Scalar variant: aligns match-map entries against each target row's mean.
inline Tensor loss_align_scalar(const Tensor& match_map, const Tensor& targets,
                                const Tensor& a) {
  if (a.rows() != match_map.rows() || a.cols() != match_map.cols())
    throw ShapeError("assignment and match map shapes differ");
  if (targets.rows() != match_map.rows() * match_map.cols())
    throw ShapeError("target rows do not match pair count");
  Tensor row_mean = scale(matmul(targets, Tensor::filled(targets.cols(), 1, 1.0)),
                          1.0 / static_cast<double>(targets.cols()));
  Tensor diff = subtract(reshape(match_map, targets.rows(), 1), row_mean);
  return sum(hadamard(reshape(a, targets.rows(), 1), hadamard(diff, diff)));
}

// Bidirectional consistency: each matched signifier embedding maps onto its
// region embedding and back under two linear heads.
inline Tensor loss_bidir(const Tensor& phi_out, const Tensor& psi_out, const Tensor& g_ins,
                         const Tensor& g_r, const Tensor& a) {
  if (a.rows() != phi_out.rows() || a.cols() != psi_out.rows())
    throw ShapeError("assignment shape does not match embedding counts");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double weight = a.at(i, j);
      if (weight == 0.0) continue;
      Tensor pi = slice_rows(phi_out, i, 1);
      Tensor pj = slice_rows(psi_out, j, 1);
      Tensor forward = frobenius_sq(subtract(matmul(pi, g_ins), pj));
      Tensor backward_ = frobenius_sq(subtract(matmul(pj, g_r), pi));
      total = add(total, scale(add(forward, backward_), weight));
    }
  return total;
}

// Assignment-weighted cosine dissimilarity between matched feature rows.
// Printed form by default (1 - cos, range [0,2]); the clipped flag rectifies
// the cosine first so the loss matches the matcher's dissimilarity values.
inline Tensor loss_dissim(const Tensor& w_m, const Tensor& w_r, const Tensor& a,
                          bool clipped = false) {
  if (a.rows() != w_m.rows() || a.cols() != w_r.rows())
    throw ShapeError("assignment shape does not match feature row counts");
  if (w_m.cols() != w_r.cols()) throw ShapeError("feature widths differ");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double weight = a.at(i, j);
      if (weight == 0.0) continue;
      double norm_i = 0, norm_j = 0;
      for (std::size_t c = 0; c < w_m.cols(); ++c) norm_i += w_m.at(i, c) * w_m.at(i, c);
      for (std::size_t c = 0; c < w_r.cols(); ++c) norm_j += w_r.at(j, c) * w_r.at(j, c);
      if (std::sqrt(norm_i) < 1e-12)
        throw DegenerateError("matched signifier feature row " + std::to_string(i) +
                              " has zero norm");
      if (std::sqrt(norm_j) < 1e-12)
        throw DegenerateError("matched region feature row " + std::to_string(j) +
                              " has zero norm");
      Tensor pi = slice_rows(w_m, i, 1);
      Tensor pj = slice_rows(w_r, j, 1);
      Tensor cosine = divide(matmul(pi, transpose(pj)),
                             matmul(l2_norm_rows(pi), l2_norm_rows(pj)));
      if (clipped) cosine = relu(cosine);
      total = add(total, scale(add_scalar(scale(cosine, -1.0), 1.0), weight));
    }
  return total;
}

struct LossBundle {
  Tensor total;
  LossReport report;
};

// Weighted sum of whichever components the caller computed; absent components
// contribute exactly zero and report as zero.
inline LossBundle combine_losses(const std::optional<Tensor>& embed,
                                 const std::optional<Tensor>& align,
                                 const std::optional<Tensor>& bidir,
                                 const std::optional<Tensor>& dissim,
                                 const LossWeights& weights) {
  weights.validate();
  LossBundle out;
  out.report.weights = weights;
  Tensor total = Tensor::scalar(0.0);
  if (embed) {
    out.report.embed = embed->value();
    total = add(total, *embed);
  }
  if (align) {
    out.report.align = align->value();
    total = add(total, scale(*align, weights.lambda));
  }
  if (bidir) {
    out.report.bidir = bidir->value();
    total = add(total, scale(*bidir, weights.gamma));
  }
  if (dissim) {
    out.report.dissim = dissim->value();
    total = add(total, scale(*dissim, weights.eta));
  }
  out.total = total;
  out.report.total = total.value();
  return out;
}

// Synthetic target rows: one standard-basis direction per action, blended
// with the uniform mixture over the vocabulary. Rows are convex combinations
// of basis rows by construction.
inline Tensor basis_pseudo_targets(const std::vector<std::uint32_t>& region_actions,
                                   std::size_t signifier_count, std::size_t match_dim,
                                   std::size_t vocab, double primary_weight = 0.8) {
  if (vocab > match_dim)
    throw ConfigError("vocabulary size " + std::to_string(vocab) +
                      " exceeds pair-feature width " + std::to_string(match_dim));
  if (!(primary_weight >= 0.0 && primary_weight <= 1.0))
    throw ConfigError("primary_weight must lie in [0,1]");
  const std::size_t m = region_actions.size();
  if (m == 0) throw EmptyInputError("no region actions");
  const double mix = (1.0 - primary_weight) / static_cast<double>(vocab);
  std::vector<double> rows(signifier_count * m * match_dim, 0.0);
  for (std::size_t i = 0; i < signifier_count; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::uint32_t action = region_actions[j];
      if (action >= vocab)
        throw OutOfBoundsError("action id " + std::to_string(action) +
                               " outside vocabulary of size " + std::to_string(vocab));
      double* row = &rows[(i * m + j) * match_dim];
      for (std::size_t k = 0; k < vocab; ++k) row[k] = mix;
      row[action] += primary_weight;
    }
  return Tensor::from(signifier_count * m, match_dim, std::move(rows));
}

using TargetProvider = std::function<Tensor(const std::vector<std::uint32_t>& region_actions,
                                            std::size_t signifier_count, std::size_t match_dim,
                                            std::size_t vocab)>;

inline TargetProvider default_target_provider() {
  return [](const std::vector<std::uint32_t>& actions, std::size_t n, std::size_t width,
            std::size_t vocab) { return basis_pseudo_targets(actions, n, width, vocab); };
}

}  // namespace affmatch
