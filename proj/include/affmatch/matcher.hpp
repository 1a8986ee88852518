#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "affmatch/encoders.hpp"
#include "affmatch/errors.hpp"
#include "affmatch/param_store.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

// Shapes and knobs of the matching stack: bidirectional cross-modal
// attention into a shared width, a cosine-dissimilarity matrix, additive
// global-query attention over the flattened pair grid, and the
// soft-threshold multi-match rule.
struct MatcherDims {
  std::size_t signifier_width = 48;   // columns of the raw signifier features
  std::size_t region_width = 32;      // columns of the raw region features
  std::size_t shared_dim = 32;        // attention output width
  std::size_t match_dim = 16;         // pair-embedding width
  std::size_t head_count = 4;
  double threshold = 0.2;             // dissimilarity cutoff for extra matches
  bool scale_logits = false;          // optional 1/sqrt(shared_dim) on logits

  void validate() const {
    if (signifier_width == 0 || region_width == 0 || shared_dim == 0 || match_dim == 0)
      throw ConfigError("matcher dimensions must be positive");
    if (head_count == 0 || match_dim % head_count != 0)
      throw ConfigError("head_count " + std::to_string(head_count) +
                        " must divide match_dim " + std::to_string(match_dim));
    if (!(threshold > 0.0 && threshold < 1.0))
      throw ConfigError("threshold must lie in (0,1)");
  }

  std::size_t head_width() const { return match_dim / head_count; }
};

// The attention projections and pair-attention vectors train through the
// alignment and dissimilarity losses. The output stage (per-head mixers,
// final projection, bias) receives no gradient from any configured loss, so
// it keeps its initialization; that initialization is chosen deterministically
// so that lower dissimilarity always maps to a higher match score: identity
// mixers and a uniform negative output projection flip the sign of the
// nonnegative pair features exactly once.
inline void create_matcher_params(ParamStore& store, const MatcherDims& dims,
                                  ParamInit& init) {
  dims.validate();
  // When both modalities arrive at the same width, each query projection
  // shares its initial draw with the opposite key projection and the two
  // value projections share theirs. Initial logits are then approximately
  // qk_gain² · fᵢ·fⱼ — a similarity score — so as the consistency loss pulls
  // matched embeddings together the attention sharpens onto the right pairs
  // instead of starting from an unbreakable uniform mixture. The gain keeps
  // the logit spread wide enough for the (unscaled) softmax to commit.
  const double qk_gain = 0.35;
  if (dims.signifier_width == dims.region_width) {
    init.weight_pair(store, "matcher.wq_sig", "matcher.wk_reg", dims.signifier_width,
                     dims.shared_dim, qk_gain);
    init.weight_pair(store, "matcher.wk_sig", "matcher.wq_reg", dims.signifier_width,
                     dims.shared_dim, qk_gain);
    init.weight_pair(store, "matcher.wv_sig", "matcher.wv_reg", dims.signifier_width,
                     dims.shared_dim);
  } else {
    init.weight(store, "matcher.wq_sig", dims.signifier_width, dims.shared_dim, qk_gain);
    init.weight(store, "matcher.wk_sig", dims.signifier_width, dims.shared_dim, qk_gain);
    init.weight(store, "matcher.wv_sig", dims.signifier_width, dims.shared_dim);
    init.weight(store, "matcher.wq_reg", dims.region_width, dims.shared_dim, qk_gain);
    init.weight(store, "matcher.wk_reg", dims.region_width, dims.shared_dim, qk_gain);
    init.weight(store, "matcher.wv_reg", dims.region_width, dims.shared_dim);
  }
  init.weight(store, "matcher.wx", 1, dims.match_dim);
  init.weight(store, "matcher.ff_wq", dims.match_dim, dims.match_dim);
  init.weight(store, "matcher.ff_wk", dims.match_dim, dims.match_dim);
  init.weight(store, "matcher.ff_wv", dims.match_dim, dims.match_dim);
  init.weight(store, "matcher.w_qvec", dims.match_dim, 1);
  init.weight(store, "matcher.w_kvec", dims.match_dim, 1);
  const std::size_t hw = dims.head_width();
  for (std::size_t h = 0; h < dims.head_count; ++h) {
    std::vector<double> identity(hw * hw, 0.0);
    for (std::size_t i = 0; i < hw; ++i) identity[i * hw + i] = 1.0;
    store.create("matcher.head_mix_" + std::to_string(h), hw, hw, std::move(identity));
  }
  store.create("matcher.w_h", dims.match_dim, 1,
               std::vector<double>(dims.match_dim, -1.0 / static_cast<double>(dims.match_dim)));
  store.create("matcher.b_h", 1, 1, {0.0});
}

// Bidirectional attention: each modality queries the other and reads back the
// other's values, landing both in the shared width.
inline std::pair<Tensor, Tensor> cross_modal_attention(const ParamStore& store,
                                                       const MatcherDims& dims,
                                                       const Tensor& f_i, const Tensor& f_p) {
  if (f_i.cols() != dims.signifier_width)
    throw ConfigError("signifier features have width " + std::to_string(f_i.cols()) +
                      ", expected " + std::to_string(dims.signifier_width));
  if (f_p.cols() != dims.region_width)
    throw ConfigError("region features have width " + std::to_string(f_p.cols()) +
                      ", expected " + std::to_string(dims.region_width));
  const double factor =
      dims.scale_logits ? 1.0 / std::sqrt(static_cast<double>(dims.shared_dim)) : 1.0;
  Tensor q_i = matmul(f_i, store.at("matcher.wq_sig"));
  Tensor k_p = matmul(f_p, store.at("matcher.wk_reg"));
  Tensor v_p = matmul(f_p, store.at("matcher.wv_reg"));
  Tensor logits_m = matmul(q_i, transpose(k_p));
  if (dims.scale_logits) logits_m = scale(logits_m, factor);
  Tensor w_m = matmul(softmax_rows(logits_m), v_p);

  Tensor q_p = matmul(f_p, store.at("matcher.wq_reg"));
  Tensor k_i = matmul(f_i, store.at("matcher.wk_sig"));
  Tensor v_i = matmul(f_i, store.at("matcher.wv_sig"));
  Tensor logits_r = matmul(q_p, transpose(k_i));
  if (dims.scale_logits) logits_r = scale(logits_r, factor);
  Tensor w_r = matmul(softmax_rows(logits_r), v_i);
  return {w_m, w_r};
}

// D_ij = 1 - max{0, cos(w_m row i, w_r row j)}. The outer rectifier only
// clips rounding spill past cos = 1, keeping every entry inside [0,1].
inline Tensor dissimilarity(const Tensor& w_m, const Tensor& w_r) {
  if (w_m.cols() != w_r.cols())
    throw ShapeError("dissimilarity expects equal widths, got " + std::to_string(w_m.cols()) +
                     " and " + std::to_string(w_r.cols()));
  Tensor norms_m = l2_norm_rows(w_m);
  Tensor norms_r = l2_norm_rows(w_r);
  for (std::size_t i = 0; i < norms_m.rows(); ++i)
    if (norms_m.at(i, 0) < 1e-12)
      throw DegenerateError("signifier feature row " + std::to_string(i) + " has zero norm");
  for (std::size_t j = 0; j < norms_r.rows(); ++j)
    if (norms_r.at(j, 0) < 1e-12)
      throw DegenerateError("region feature row " + std::to_string(j) + " has zero norm");
  Tensor cosine = divide(matmul(w_m, transpose(w_r)), matmul(norms_m, transpose(norms_r)));
  return relu(add_scalar(scale(relu(cosine), -1.0), 1.0));
}

// Additive attention over the flattened pair grid. One sigmoid-weighted
// column sum of Q forms a global query row that modulates K; the same device
// applied again forms a global key row that modulates V.
inline std::pair<Tensor, Tensor> match2match(const ParamStore& store, const MatcherDims& dims,
                                             const Tensor& d) {
  const std::size_t n = d.rows();
  const std::size_t m = d.cols();
  Tensor x = matmul(reshape(d, n * m, 1), store.at("matcher.wx"));
  Tensor q = matmul(x, store.at("matcher.ff_wq"));
  Tensor k = matmul(x, store.at("matcher.ff_wk"));
  Tensor v = matmul(x, store.at("matcher.ff_wv"));
  Tensor global_q = matmul(transpose(sigmoid(matmul(q, store.at("matcher.w_qvec")))), q);
  Tensor z = hadamard(k, global_q);
  Tensor global_k = matmul(transpose(sigmoid(matmul(z, store.at("matcher.w_kvec")))), z);
  Tensor m_ff = hadamard(v, global_k);

  const std::size_t hw = dims.head_width();
  std::vector<Tensor> heads;
  heads.reserve(dims.head_count);
  for (std::size_t h = 0; h < dims.head_count; ++h)
    heads.push_back(matmul(slice_cols(m_ff, h * hw, hw),
                           store.at("matcher.head_mix_" + std::to_string(h))));
  Tensor mixed = dims.head_count == 1 ? heads[0] : concat_cols(heads);
  Tensor scores = add_row(matmul(mixed, store.at("matcher.w_h")), store.at("matcher.b_h"));
  return {m_ff, reshape(scores, n, m)};
}

struct MatchState {
  Tensor w_m;        // n x shared_dim
  Tensor w_r;        // m x shared_dim
  Tensor d;          // n x m dissimilarity
  Tensor m_ff;       // (n*m) x match_dim pair features
  Tensor match_map;  // n x m scores
};

inline MatchState match_forward(const ParamStore& store, const MatcherDims& dims,
                                const Tensor& f_i, const Tensor& f_p) {
  MatchState state;
  auto [w_m, w_r] = cross_modal_attention(store, dims, f_i, f_p);
  state.w_m = w_m;
  state.w_r = w_r;
  state.d = dissimilarity(w_m, w_r);
  auto [m_ff, match_map] = match2match(store, dims, state.d);
  state.m_ff = m_ff;
  state.match_map = match_map;
  return state;
}

struct Assignment {
  Tensor a;  // n x m row-stochastic confidences
  std::vector<std::vector<std::size_t>> match_sets;  // per-signifier region choices
};

// Predicted assignment: row-softmax confidences plus a discrete match set
// holding the top region and every region under the dissimilarity cutoff.
// Ties on the confidence argmax resolve to the lowest region index.
inline Assignment assign(const Tensor& d, const Tensor& match_map, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("threshold must lie in (0,1)");
  if (d.rows() != match_map.rows() || d.cols() != match_map.cols())
    throw ShapeError("dissimilarity and match map shapes differ");
  Assignment out;
  out.a = softmax_rows(match_map);
  out.match_sets.resize(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < d.cols(); ++j)
      if (out.a.at(i, j) > out.a.at(i, best)) best = j;
    std::vector<std::size_t>& set = out.match_sets[i];
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (j == best || d.at(i, j) < threshold) set.push_back(j);
  }
  return out;
}

}  // namespace affmatch
