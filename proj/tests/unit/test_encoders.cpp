#include <doctest.h>

#include "survfuse/encoders.hpp"
#include "survfuse/error.hpp"

using namespace survfuse;

namespace {

EncoderDims small_dims(int c_in = 6, int d = 6) {
  EncoderDims dims;
  dims.c_in = c_in;
  dims.genomic_widths = {3, 4, 2, 5, 3, 2};
  dims.hidden_dim = d;
  dims.vocab_size = 64;
  dims.token_dim = 4;
  return dims;
}

std::array<std::vector<double>, kGenomicGroups> groups_for(const EncoderDims& dims,
                                                           std::uint64_t seed) {
  Rng rng(seed);
  std::array<std::vector<double>, kGenomicGroups> g;
  for (int k = 0; k < kGenomicGroups; ++k) {
    const Matrix m = normal_matrix(1, dims.genomic_widths[k], 1.0, rng);
    g[k].assign(m.data(), m.data() + m.size());
  }
  return g;
}

TextBag bag_for(bool radiation) {
  ClinicalInfo c;
  c.sex = Sex::kFemale;
  c.age = 61;
  c.race = "black";
  c.radiation = radiation;
  return make_text_bag(c, {"white", "black", "asian", "other"});
}

}  // namespace

TEST_CASE("zero patch projector gives zero features") {
  const EncoderDims dims = small_dims();
  EncoderSet enc(dims);
  ParamStore p;
  Rng rng(1);
  enc.init(p, rng);
  p.at("patch_proj.weight").value.setZero();
  p.at("patch_proj.bias").value.setZero();
  Rng data(2);
  const Matrix bag = normal_matrix(5, dims.c_in, 1.0, data);
  ad::Graph g;
  const Matrix out = enc.encode_patches(g, p, bag).value();
  CHECK(out.rows() == 5);
  CHECK(out.cols() == dims.hidden_dim);
  CHECK(out.isZero(0.0));
}

TEST_CASE("identity projector in linear mode reproduces the input") {
  const EncoderDims dims = small_dims(6, 6);
  EncoderSet enc(dims);
  enc.patch_activation = Activation::kLinear;
  ParamStore p;
  Rng rng(1);
  enc.init(p, rng);
  p.at("patch_proj.weight").value = Matrix::Identity(6, 6);
  p.at("patch_proj.bias").value.setZero();
  Rng data(3);
  const Matrix bag = normal_matrix(4, 6, 1.0, data);
  ad::Graph g;
  CHECK(enc.encode_patches(g, p, bag).value() == bag);
}

TEST_CASE("patch projection is row-wise: duplicates and permutations carry through") {
  const EncoderDims dims = small_dims();
  EncoderSet enc(dims);
  ParamStore p;
  Rng rng(5);
  enc.init(p, rng);
  Rng data(6);
  Matrix bag = normal_matrix(3, dims.c_in, 1.0, data);
  bag.row(2) = bag.row(0);
  ad::Graph g;
  const Matrix out = enc.encode_patches(g, p, bag).value();
  CHECK(out.row(2) == out.row(0));

  Matrix swapped = bag;
  swapped.row(0) = bag.row(1);
  swapped.row(1) = bag.row(0);
  ad::Graph g2;
  const Matrix out2 = enc.encode_patches(g2, p, swapped).value();
  CHECK(out2.row(0) == out.row(1));
  CHECK(out2.row(1) == out.row(0));

  ad::Graph g3;
  CHECK_THROWS_AS(enc.encode_patches(g3, p, Matrix::Zero(2, dims.c_in + 1)), SchemaError);
  CHECK_THROWS_AS(enc.encode_patches(g3, p, Matrix::Zero(0, dims.c_in)), SchemaError);
}

TEST_CASE("genomic encoders are six non-shared networks") {
  // Equal widths for groups 0 and 1 so their parameters can be swapped.
  EncoderDims dims = small_dims();
  dims.genomic_widths[1] = dims.genomic_widths[0];
  EncoderSet enc(dims);
  ParamStore p;
  Rng rng(7);
  enc.init(p, rng);
  const auto groups = groups_for(dims, 8);
  ad::Graph g;
  const Matrix before = enc.encode_genomics(g, p, groups).value();
  CHECK(before.rows() == 6);
  CHECK(before.cols() == dims.hidden_dim);
  CHECK(before.allFinite());
  // SELU output is bounded below by -lambda * alpha.
  CHECK(before.minCoeff() > -ad::kSeluLambda * ad::kSeluAlpha);

  for (const char* layer : {".fc1.weight", ".fc1.bias", ".fc2.weight", ".fc2.bias"})
    std::swap(p.at(std::string("snn.0") + layer).value,
              p.at(std::string("snn.1") + layer).value);
  ad::Graph g2;
  const Matrix after = enc.encode_genomics(g2, p, groups).value();
  CHECK(after.row(0) != before.row(0));
  CHECK(after.row(1) != before.row(1));
  for (int k = 2; k < 6; ++k) CHECK(after.row(k) == before.row(k));

  auto bad = groups;
  bad[3].push_back(1.0);
  ad::Graph g3;
  try {
    enc.encode_genomics(g3, p, bad);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("group 3") != std::string::npos);
  }
}

TEST_CASE("clinical stack has three rows; the radiation flag touches rows 1 and 2") {
  const EncoderDims dims = small_dims();
  EncoderSet enc(dims);
  ParamStore p;
  Rng rng(9);
  enc.init(p, rng);
  ad::Graph g;
  const Matrix off = enc.encode_clinical(g, p, bag_for(false)).value();
  const Matrix on = enc.encode_clinical(g, p, bag_for(true)).value();
  const Matrix off_again = enc.encode_clinical(g, p, bag_for(false)).value();
  CHECK(off.rows() == 3);
  CHECK(off.cols() == dims.hidden_dim);
  CHECK(off == off_again);
  CHECK(on.row(0) == off.row(0));
  CHECK(on.row(1) != off.row(1));
  CHECK(on.row(2) != off.row(2));

  const Matrix two = enc.encode_clinical(g, p, bag_for(false), {true, false, true}).value();
  CHECK(two.rows() == 2);
  CHECK(two.row(0) == off.row(0));
  CHECK(two.row(1) == off.row(2));
  CHECK_THROWS_AS(enc.encode_clinical(g, p, bag_for(false), {false, false, false}),
                  SchemaError);
}

TEST_CASE("encoder gradients match central differences") {
  const EncoderDims dims = small_dims();
  EncoderSet enc(dims);
  ParamStore p;
  Rng rng(10);
  enc.init(p, rng);
  Rng data(11);
  const Matrix bag = normal_matrix(4, dims.c_in, 1.0, data);
  const auto groups = groups_for(dims, 12);
  const TextBag text = bag_for(true);
  const Matrix w_p = normal_matrix(4, dims.hidden_dim, 1.0, data);
  const Matrix w_g = normal_matrix(6, dims.hidden_dim, 1.0, data);
  const Matrix w_t = normal_matrix(3, dims.hidden_dim, 1.0, data);

  auto objective = [&](ad::Graph& g) {
    return ad::add(ad::add(ad::dot(enc.encode_patches(g, p, bag), g.constant(w_p)),
                           ad::dot(enc.encode_genomics(g, p, groups), g.constant(w_g))),
                   ad::dot(enc.encode_clinical(g, p, text), g.constant(w_t)));
  };
  p.zero_grad();
  {
    ad::Graph g;
    g.backward(objective(g));
  }
  const double h = 1e-5;
  double worst = 0.0;
  for (auto& [name, param] : p) {
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(param.value.size(), 12); ++i) {
      const double orig = param.value(i);
      param.value(i) = orig + h;
      ad::Graph gu;
      const double fu = objective(gu).scalar();
      param.value(i) = orig - h;
      ad::Graph gd;
      const double fd = objective(gd).scalar();
      param.value(i) = orig;
      const double numeric = (fu - fd) / (2 * h);
      const double analytic = param.grad(i);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    }
  }
  CHECK(worst < 1e-4);
}
