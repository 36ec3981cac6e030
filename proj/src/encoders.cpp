#include "survfuse/encoders.hpp"

#include <cmath>

#include "survfuse/error.hpp"

namespace survfuse {

ad::Var activate(const ad::Var& x, Activation act) {
  switch (act) {
    case Activation::kLinear:
      return x;
    case Activation::kRelu:
      return ad::relu(x);
    case Activation::kLeakyRelu:
      return ad::leaky_relu(x);
    case Activation::kSelu:
      return ad::selu(x);
  }
  return x;
}

void Linear::init(ParamStore& params, Rng& rng, InitScheme scheme) const {
  const double fan_in = static_cast<double>(in);
  if (scheme == InitScheme::kLecunNormal) {
    params.add(weight_name(), normal_matrix(in, out, 1.0 / std::sqrt(fan_in), rng));
    params.add(bias_name(), Matrix::Zero(1, out));
  } else {
    const double bound = 1.0 / std::sqrt(fan_in);
    params.add(weight_name(), uniform_matrix(in, out, bound, rng));
    params.add(bias_name(), uniform_matrix(1, out, bound, rng));
  }
}

ad::Var Linear::forward(ad::Graph& g, ParamStore& params,
                        const ad::Var& x) const {
  return ad::add_row(ad::matmul(x, g.parameter(params.at(weight_name()))),
                     g.parameter(params.at(bias_name())));
}

EncoderSet::EncoderSet(EncoderDims dims) : dims_(dims), text_("text") {
  const int d = dims_.hidden_dim;
  patch_proj_ = {"patch_proj", dims_.c_in, d};
  for (int k = 0; k < kGenomicGroups; ++k) {
    const std::string p = "snn." + std::to_string(k);
    snn_fc1_[k] = {p + ".fc1", dims_.genomic_widths[k], d};
    snn_fc2_[k] = {p + ".fc2", d, d};
  }
  clinical_fc1_ = {"clinical_mlp.fc1", kClinicalTensorWidth, d};
  clinical_fc2_ = {"clinical_mlp.fc2", d, d};
}

void EncoderSet::init(ParamStore& params, Rng& rng) const {
  patch_proj_.init(params, rng);
  for (int k = 0; k < kGenomicGroups; ++k) {
    snn_fc1_[k].init(params, rng, InitScheme::kLecunNormal);
    snn_fc2_[k].init(params, rng, InitScheme::kLecunNormal);
  }
  clinical_fc1_.init(params, rng);
  clinical_fc2_.init(params, rng);
  text_.init(params, dims_.vocab_size, dims_.token_dim, dims_.hidden_dim, rng);
}

ad::Var EncoderSet::encode_patches(ad::Graph& g, ParamStore& params,
                                   const Matrix& bag) const {
  if (bag.rows() < 1) throw SchemaError("patch bag is empty");
  if (bag.cols() != dims_.c_in)
    throw SchemaError("patch features have width " +
                      std::to_string(bag.cols()) + ", expected C_in " +
                      std::to_string(dims_.c_in));
  return activate(patch_proj_.forward(g, params, g.constant(bag)),
                  patch_activation);
}

ad::Var EncoderSet::encode_genomics(
    ad::Graph& g, ParamStore& params,
    const std::array<std::vector<double>, kGenomicGroups>& groups) const {
  std::vector<ad::Var> rows;
  rows.reserve(kGenomicGroups);
  for (int k = 0; k < kGenomicGroups; ++k) {
    const auto& x = groups[k];
    if (static_cast<int>(x.size()) != dims_.genomic_widths[k])
      throw SchemaError("genomic group " + std::to_string(k) + " has width " +
                        std::to_string(x.size()) + ", expected " +
                        std::to_string(dims_.genomic_widths[k]));
    Matrix in = Eigen::Map<const Matrix>(x.data(), 1,
                                         static_cast<Eigen::Index>(x.size()));
    ad::Var h = ad::selu(snn_fc1_[k].forward(g, params, g.constant(in)));
    rows.push_back(ad::selu(snn_fc2_[k].forward(g, params, h)));
  }
  return ad::concat_rows(rows);
}

ad::Var EncoderSet::encode_clinical(ad::Graph& g, ParamStore& params,
                                    const TextBag& bag,
                                    ClinicalRows which) const {
  if (which.count() == 0)
    throw SchemaError("encode_clinical: all clinical rows disabled");
  std::vector<ad::Var> rows;
  if (which.demo) rows.push_back(text_.forward(g, params, bag.demo_text));
  if (which.treat) rows.push_back(text_.forward(g, params, bag.treat_text));
  if (which.tensor) {
    Matrix t(1, kClinicalTensorWidth);
    for (int i = 0; i < kClinicalTensorWidth; ++i) t(0, i) = bag.clinical_tensor[i];
    ad::Var h = ad::relu(clinical_fc1_.forward(g, params, g.constant(t)));
    rows.push_back(clinical_fc2_.forward(g, params, h));
  }
  return ad::concat_rows(rows);
}

}  // namespace survfuse
