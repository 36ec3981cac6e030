#include "survfuse/fusion.hpp"

#include <cmath>
#include <vector>

#include "survfuse/error.hpp"

namespace survfuse {

AttentionBlock::AttentionBlock(std::string prefix, int dim, int heads)
    : prefix_(std::move(prefix)), dim_(dim), heads_(heads) {
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("attention width " + std::to_string(dim) +
                      " is not divisible by " + std::to_string(heads) +
                      " heads");
  q_ = {prefix_ + ".q", dim, dim};
  k_ = {prefix_ + ".k", dim, dim};
  v_ = {prefix_ + ".v", dim, dim};
  o_ = {prefix_ + ".o", dim, dim};
  ff1_ = {prefix_ + ".ff1", dim, 2 * dim};
  ff2_ = {prefix_ + ".ff2", 2 * dim, dim};
}

void AttentionBlock::init(ParamStore& params, Rng& rng) const {
  for (const Linear* l : {&q_, &k_, &v_, &o_, &ff1_, &ff2_}) l->init(params, rng);
  params.add(prefix_ + ".ln.gamma", Matrix::Ones(1, dim_));
  params.add(prefix_ + ".ln.beta", Matrix::Zero(1, dim_));
}

ad::Var AttentionBlock::attention(ad::Graph& g, ParamStore& params,
                                  const ad::Var& x) const {
  if (x.cols() != dim_)
    throw SchemaError(prefix_ + ": token width " + std::to_string(x.cols()) +
                      " != " + std::to_string(dim_));
  const ad::Var q = q_.forward(g, params, x);
  const ad::Var k = k_.forward(g, params, x);
  const ad::Var v = v_.forward(g, params, x);
  const int dh = dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> outs;
  outs.reserve(heads_);
  for (int h = 0; h < heads_; ++h) {
    const ad::Var qh = ad::slice_cols(q, h * dh, dh);
    const ad::Var kh = ad::slice_cols(k, h * dh, dh);
    const ad::Var vh = ad::slice_cols(v, h * dh, dh);
    const ad::Var scores =
        ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  const ad::Var merged = heads_ == 1 ? outs.front() : ad::concat_cols(outs);
  return o_.forward(g, params, merged);
}

ad::Var AttentionBlock::forward(ad::Graph& g, ParamStore& params,
                                const ad::Var& x) const {
  const ad::Var y = ad::layer_norm_rows(
      ad::add(x, attention(g, params, x)),
      g.parameter(params.at(prefix_ + ".ln.gamma")),
      g.parameter(params.at(prefix_ + ".ln.beta")));
  const ad::Var ff =
      ff2_.forward(g, params, ad::relu(ff1_.forward(g, params, y)));
  return ad::add(y, ff);
}

ad::Var intra_modal_transform(ad::Graph& g, ParamStore& params,
                              const AttentionBlock& block,
                              const ad::Var& tokens) {
  if (tokens.rows() < 1) throw SchemaError("intra_modal_transform: no tokens");
  return ad::mean_rows(block.forward(g, params, tokens));
}

ad::Var co_attention(const ad::Var& queries, const ad::Var& keys) {
  if (queries.cols() != keys.cols())
    throw SchemaError("co_attention: width mismatch");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
  const ad::Var scores =
      ad::scale(ad::matmul(queries, ad::transpose(keys)), inv_sqrt);
  return ad::matmul(ad::softmax_rows(scores), keys);
}

namespace {

// (<h, b> / <h, h>) h
ad::Var projection(const ad::Var& b, const ad::Var& h) {
  return ad::scale_by(h, ad::divide(ad::dot(h, b), ad::dot(h, h)));
}

}  // namespace

ad::Var orthogonal_residual(const ad::Var& b, const ad::Var& h_pg,
                            const ad::Var& h_pt, bool* skipped_pg,
                            bool* skipped_pt) {
  const bool skip_pg = !(h_pg.value().norm() >= kDegenerateNorm);
  const bool skip_pt = !(h_pt.value().norm() >= kDegenerateNorm);
  if (skipped_pg) *skipped_pg = skip_pg;
  if (skipped_pt) *skipped_pt = skip_pt;
  ad::Var out = b;
  if (!skip_pg) out = ad::sub(out, projection(b, h_pg));
  if (!skip_pt) out = ad::sub(out, projection(b, h_pt));
  return out;
}

RodModule::RodModule(int dim)
    : projector{"rod.projector", dim, dim}, fusor{"rod.fusor", dim, dim} {}

void RodModule::init(ParamStore& params, Rng& rng) const {
  projector.init(params, rng);
  fusor.init(params, rng);
}

RodState RodModule::forward(ad::Graph& g, ParamStore& params,
                            const ad::Var& patch_feats, const ad::Var& h_pg,
                            const ad::Var& h_pt) const {
  RodState s;
  s.pooled_patch = ad::leaky_relu(
      projector.forward(g, params, ad::mean_rows(patch_feats)));
  s.f_po = orthogonal_residual(s.pooled_patch, h_pg, h_pt, &s.skipped_pg,
                               &s.skipped_pt);
  s.f_prime_p = ad::add(
      s.pooled_patch, ad::leaky_relu(fusor.forward(g, params, s.f_po)));
  return s;
}

UnificationModule::UnificationModule(int dim, int heads)
    : blocks_{AttentionBlock("unify.0", dim, heads),
              AttentionBlock("unify.1", dim, heads)} {}

void UnificationModule::init(ParamStore& params, Rng& rng) const {
  for (const auto& b : blocks_) b.init(params, rng);
}

ad::Var UnificationModule::forward(ad::Graph& g, ParamStore& params,
                                   const ad::Var& five) const {
  if (five.rows() != kFusedTokens)
    throw SchemaError("unify expects " + std::to_string(kFusedTokens) +
                      " tokens, got " + std::to_string(five.rows()));
  ad::Var x = five;
  for (const auto& b : blocks_) x = b.forward(g, params, x);
  return x;
}

ad::Var HazardHead::forward(ad::Graph& g, ParamStore& params,
                            const ad::Var& x) const {
  return ad::sigmoid(fc.forward(g, params, x));
}

ad::Var classify_multimodal(ad::Graph& g, ParamStore& params,
                            const HazardHead& head, const ad::Var& unified) {
  if (unified.rows() != kFusedTokens)
    throw SchemaError("classify_multimodal expects 5 rows");
  std::vector<ad::Var> rows;
  for (int i = 0; i < kFusedTokens; ++i) rows.push_back(ad::slice_rows(unified, i, 1));
  return head.forward(g, params, ad::concat_cols(rows));
}

ad::Var classify_unimodal(ad::Graph& g, ParamStore& params,
                          const HazardHead& head, const ad::Var& vec) {
  if (vec.rows() != 1) throw SchemaError("classify_unimodal expects 1 row");
  return head.forward(g, params, vec);
}

}  // namespace survfuse
