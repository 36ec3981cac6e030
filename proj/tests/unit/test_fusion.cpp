#include <doctest.h>

#include <cmath>

#include "survfuse/error.hpp"
#include "survfuse/fusion.hpp"

using namespace survfuse;

namespace {

Matrix affine(const ParamStore& p, const std::string& name, const Matrix& x) {
  return (x * p.at(name + ".weight").value).rowwise() +
         p.at(name + ".bias").value.row(0);
}

Matrix softmax_rows(Matrix s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    s.row(r).array() -= s.row(r).maxCoeff();
    s.row(r) = s.row(r).array().exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
  return s;
}

// Plain-Eigen transformer block written out from the formula.
Matrix reference_block(const ParamStore& p, const std::string& pre, const Matrix& x,
                       int heads) {
  const Eigen::Index d = x.cols(), dh = d / heads;
  const Matrix q = affine(p, pre + ".q", x), k = affine(p, pre + ".k", x),
               v = affine(p, pre + ".v", x);
  Matrix merged(x.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Matrix a = softmax_rows(q.middleCols(h * dh, dh) *
                                  k.middleCols(h * dh, dh).transpose() /
                                  std::sqrt(double(dh)));
    merged.middleCols(h * dh, dh) = a * v.middleCols(h * dh, dh);
  }
  Matrix y = x + affine(p, pre + ".o", merged);
  const RowVector gamma = p.at(pre + ".ln.gamma").value.row(0);
  const RowVector beta = p.at(pre + ".ln.beta").value.row(0);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double mean = y.row(r).mean();
    const double var = (y.row(r).array() - mean).square().mean();
    y.row(r) = ((y.row(r).array() - mean) / std::sqrt(var + 1e-5)).matrix();
    y.row(r) = y.row(r).cwiseProduct(gamma) + beta;
  }
  const Matrix hidden = affine(p, pre + ".ff1", y).cwiseMax(0.0);
  return y + affine(p, pre + ".ff2", hidden);
}

struct Fixture {
  int d = 8;
  int heads = 2;
  ParamStore params;
  AttentionBlock block{"blk", 8, 2};
  Fixture() {
    Rng rng(3);
    block.init(params, rng);
    // Non-trivial layer-norm affine so the reference exercises it.
    params.at("blk.ln.gamma").value = normal_matrix(1, d, 1.0, rng);
    params.at("blk.ln.beta").value = normal_matrix(1, d, 1.0, rng);
  }
};

double abs_cos(const Matrix& a, const Matrix& b) {
  return std::abs(a.cwiseProduct(b).sum()) / (a.norm() * b.norm());
}

}  // namespace

TEST_CASE("attention block matches a plain-Eigen reference") {
  Fixture f;
  Rng rng(4);
  const Matrix x = normal_matrix(5, f.d, 1.0, rng);
  ad::Graph g;
  const Matrix out = f.block.forward(g, f.params, g.constant(x)).value();
  CHECK((out - reference_block(f.params, "blk", x, f.heads)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(out.rows() == 5);
  CHECK(out.cols() == f.d);
}

TEST_CASE("a single token attends only to itself") {
  Fixture f;
  Rng rng(5);
  const Matrix x = normal_matrix(1, f.d, 1.0, rng);
  ad::Graph g;
  const Matrix att = f.block.attention(g, f.params, g.constant(x)).value();
  const Matrix expect = affine(f.params, "blk.o", affine(f.params, "blk.v", x));
  CHECK((att - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("zero feed-forward leaves the normalised attention residual") {
  Fixture f;
  for (const char* n : {"blk.ff1.weight", "blk.ff1.bias", "blk.ff2.weight", "blk.ff2.bias"})
    f.params.at(n).value.setZero();
  f.params.at("blk.ln.gamma").value.setOnes();
  f.params.at("blk.ln.beta").value.setZero();
  Rng rng(6);
  const Matrix x = normal_matrix(3, f.d, 1.0, rng);
  ad::Graph g;
  const Matrix pooled = intra_modal_transform(g, f.params, f.block, g.constant(x)).value();
  const Matrix att = f.block.attention(g, f.params, g.constant(x)).value();
  Matrix y = x + att;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).mean();
    const double s = std::sqrt((y.row(r).array() - m).square().mean() + 1e-5);
    y.row(r) = ((y.row(r).array() - m) / s).matrix();
  }
  CHECK((pooled - y.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pooled intra-modal vector ignores token order") {
  Fixture f;
  Rng rng(7);
  const Matrix x = normal_matrix(4, f.d, 1.0, rng);
  Matrix shuffled(4, f.d);
  shuffled << x.row(2), x.row(0), x.row(3), x.row(1);
  ad::Graph g;
  const Matrix a = intra_modal_transform(g, f.params, f.block, g.constant(x)).value();
  const Matrix b = intra_modal_transform(g, f.params, f.block, g.constant(shuffled)).value();
  CHECK(a.rows() == 1);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention width must divide by the head count") {
  CHECK_THROWS_AS(AttentionBlock("x", 6, 4), ConfigError);
}

TEST_CASE("orthogonal residual examples") {
  ad::Graph g;
  auto v = [&](std::initializer_list<double> xs) {
    Matrix m(1, static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) m(0, i++) = x;
    return g.constant(m);
  };
  // Already orthogonal: unchanged.
  CHECK(orthogonal_residual(v({0, 0, 3}), v({1, 0, 0}), v({0, 2, 0})).value() ==
        v({0, 0, 3}).value());
  // Parallel to h_pg with h_pg orthogonal to h_pt: vanishes.
  CHECK(orthogonal_residual(v({2, 0}), v({5, 0}), v({0, 1})).value().norm() < 1e-15);
  // Same conditioner twice subtracts the projection twice: e2 - e1.
  const Matrix twice = orthogonal_residual(v({1, 1}), v({1, 0}), v({1, 0})).value();
  CHECK(twice(0, 0) == doctest::Approx(-1.0));
  CHECK(twice(0, 1) == doctest::Approx(1.0));
  // Degenerate conditioner is skipped and flagged.
  bool skip_pg = false, skip_pt = false;
  const Matrix kept = orthogonal_residual(v({1, 1}), v({0, 0}), v({0, 1}), &skip_pg, &skip_pt).value();
  CHECK(skip_pg);
  CHECK_FALSE(skip_pt);
  CHECK(kept(0, 0) == doctest::Approx(1.0));
  CHECK(kept(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("orthogonal conditioners leave a residual orthogonal to both") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix b = normal_matrix(1, 16, 1.0, rng);
    Matrix h_pg = normal_matrix(1, 16, 1.0, rng);
    Matrix h_pt = normal_matrix(1, 16, 1.0, rng);
    h_pt -= (h_pt.cwiseProduct(h_pg).sum() / h_pg.squaredNorm()) * h_pg;
    ad::Graph g;
    const Matrix r = orthogonal_residual(g.constant(b), g.constant(h_pg), g.constant(h_pt)).value();
    CHECK(abs_cos(r, h_pg) <= 1e-10);
    CHECK(abs_cos(r, h_pt) <= 1e-10);
  }
}

TEST_CASE("rod module wires projector, residual and fusor") {
  const int d = 6;
  RodModule rod(d);
  ParamStore p;
  Rng rng(9);
  rod.init(p, rng);
  const Matrix patches = normal_matrix(4, d, 1.0, rng);
  const Matrix h_pg = normal_matrix(1, d, 1.0, rng), h_pt = normal_matrix(1, d, 1.0, rng);
  ad::Graph g;
  const RodState s = rod.forward(g, p, g.constant(patches), g.constant(h_pg), g.constant(h_pt));
  auto leaky = [](Matrix m) { return Matrix(m.unaryExpr([](double x) { return x > 0 ? x : 0.01 * x; })); };
  const Matrix pooled = leaky(affine(p, "rod.projector", patches.colwise().mean()));
  CHECK((s.pooled_patch.value() - pooled).cwiseAbs().maxCoeff() < 1e-13);
  Matrix f_po = pooled;
  f_po -= (h_pg.cwiseProduct(pooled).sum() / h_pg.squaredNorm()) * h_pg;
  f_po -= (h_pt.cwiseProduct(pooled).sum() / h_pt.squaredNorm()) * h_pt;
  CHECK((s.f_po.value() - f_po).cwiseAbs().maxCoeff() < 1e-13);
  const Matrix fp = pooled + leaky(affine(p, "rod.fusor", f_po));
  CHECK((s.f_prime_p.value() - fp).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("unification keeps shape and symmetry") {
  const int d = 8;
  UnificationModule unify(d, 4);
  ParamStore p;
  Rng rng(10);
  unify.init(p, rng);
  ad::Graph g;
  const Matrix five = normal_matrix(5, d, 1.0, rng);
  const Matrix out = unify.forward(g, p, g.constant(five)).value();
  CHECK(out.rows() == 5);
  CHECK(out.cols() == d);
  CHECK(out == unify.forward(g, p, g.constant(five)).value());

  Matrix same(5, d);
  same.rowwise() = normal_matrix(1, d, 1.0, rng).row(0);
  const Matrix sym = unify.forward(g, p, g.constant(same)).value();
  for (int r = 1; r < 5; ++r) CHECK((sym.row(r) - sym.row(0)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(unify.forward(g, p, g.constant(Matrix::Ones(4, d))), SchemaError);
}

TEST_CASE("hazard heads") {
  const int d = 4, n_bins = 4;
  HazardHead multi{{"head.multi", 5 * d, n_bins}};
  std::array<HazardHead, 5> uni;
  ParamStore p;
  Rng rng(11);
  multi.init(p, rng);
  for (int i = 0; i < 5; ++i) {
    uni[i] = {{"head.uni." + std::to_string(i), d, n_bins}};
    uni[i].init(p, rng);
  }
  ad::Graph g;
  const Matrix unified = normal_matrix(5, d, 1.0, rng);
  const Matrix h = classify_multimodal(g, p, multi, g.constant(unified)).value();
  CHECK(h.cols() == n_bins);
  CHECK(h.minCoeff() > 0.0);
  CHECK(h.maxCoeff() < 1.0);

  // The concatenation is row-major over the five tokens.
  Matrix flat(1, 5 * d);
  for (int i = 0; i < 5; ++i) flat.middleCols(i * d, d) = unified.row(i);
  const Matrix logits = affine(p, "head.multi", flat);
  CHECK((h - logits.unaryExpr([](double x) { return 1 / (1 + std::exp(-x)); }))
            .cwiseAbs().maxCoeff() < 1e-14);

  p.at("head.multi.weight").value.setZero();
  p.at("head.multi.bias").value.setZero();
  // A graph snapshots parameter values on first use; mutations need a new one.
  ad::Graph g2;
  const Matrix half = classify_multimodal(g2, p, multi, g2.constant(unified)).value();
  CHECK((half.array() == 0.5).all());

  const Matrix vec = normal_matrix(1, d, 1.0, rng);
  std::array<Matrix, 5> before;
  for (int i = 0; i < 5; ++i) before[i] = classify_unimodal(g, p, uni[i], g.constant(vec)).value();
  p.at("head.uni.2.weight").value.setZero();
  p.at("head.uni.2.bias").value.setZero();
  ad::Graph g3;
  for (int i = 0; i < 5; ++i) {
    const Matrix now = classify_unimodal(g3, p, uni[i], g3.constant(vec)).value();
    CHECK(now.cols() == n_bins);
    if (i == 2)
      CHECK((now.array() == 0.5).all());
    else
      CHECK(now == before[i]);
  }
  CHECK_THROWS_AS(classify_multimodal(g, p, multi, g.constant(Matrix::Ones(4, d))), SchemaError);
}

TEST_CASE("co-attention fallback returns convex combinations of the keys") {
  Rng rng(12);
  const Matrix q = normal_matrix(3, 4, 1.0, rng), k = normal_matrix(5, 4, 1.0, rng);
  ad::Graph g;
  const Matrix out = co_attention(g.constant(q), g.constant(k)).value();
  CHECK(out.rows() == 3);
  const Matrix w = softmax_rows(q * k.transpose() / 2.0);
  CHECK((out - w * k).cwiseAbs().maxCoeff() < 1e-13);
}
