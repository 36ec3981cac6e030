#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "survfuse/config.hpp"
#include "survfuse/error.hpp"
#include "survfuse/runtime.hpp"

namespace survfuse {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kFormat = "survfuse-checkpoint/1";
constexpr const char* kMomentM = "adam.m/";
constexpr const char* kMomentV = "adam.v/";

std::uint32_t le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v & 0xFF0000u) >> 8) |
        (v >> 24);
  return v;
}

void append_floats(std::string& blob, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const std::uint32_t raw =
          le32(std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
      blob.append(reinterpret_cast<const char*>(&raw), 4);
    }
}

Matrix read_floats(const std::string& blob, std::size_t offset, Eigen::Index rows,
                   Eigen::Index cols) {
  Matrix m(rows, cols);
  std::size_t at = offset;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::uint32_t raw;
      std::memcpy(&raw, blob.data() + at, 4);
      m(r, c) = static_cast<double>(std::bit_cast<float>(le32(raw)));
      at += 4;
    }
  return m;
}

void expect_equal(const char* field, long long stored, long long configured) {
  if (stored != configured)
    throw SchemaError(std::string("checkpoint ") + field + " " +
                      std::to_string(stored) + " != configured " +
                      std::to_string(configured));
}

void check_compatible(const ModelConfig& stored, const ModelConfig& want) {
  expect_equal("hidden_dim", stored.dims.hidden_dim, want.dims.hidden_dim);
  expect_equal("n_bins", stored.n_bins, want.n_bins);
  expect_equal("heads", stored.heads, want.heads);
  expect_equal("c_in", stored.dims.c_in, want.dims.c_in);
  expect_equal("vocab_size", stored.dims.vocab_size, want.dims.vocab_size);
  expect_equal("token_dim", stored.dims.token_dim, want.dims.token_dim);
  for (int k = 0; k < kGenomicGroups; ++k)
    expect_equal(("genomic_widths[" + std::to_string(k) + "]").c_str(),
                 stored.dims.genomic_widths[k], want.dims.genomic_widths[k]);
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create checkpoint directory " + dir.string());

  // Canonical order: every entry sorted by name.
  std::map<std::string, const Matrix*> entries;
  for (const auto& [name, p] : ck.params) entries[name] = &p.value;
  for (const auto& [name, m] : ck.adam.m) entries[kMomentM + name] = &m;
  for (const auto& [name, v] : ck.adam.v) entries[kMomentV + name] = &v;

  std::string blob;
  json tensors = json::array();
  for (const auto& [name, m] : entries) {
    tensors.push_back({{"name", name},
                       {"shape", {m->rows(), m->cols()}},
                       {"offset", blob.size()}});
    append_floats(blob, *m);
  }
  json manifest = {{"format", kFormat},
                   {"model_config", to_json(ck.model_config)},
                   {"train_config", to_json(ck.train_config)},
                   {"bin_edges", ck.bins.edges},
                   {"epochs_completed", ck.epochs_completed},
                   {"val_cindex", ck.val_cindex ? json(*ck.val_cindex) : json()},
                   {"adam_step", ck.adam.step},
                   {"blob_bytes", blob.size()},
                   {"tensors", tensors}};

  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw IOError("cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << '\n';
  std::ofstream bf(dir / "params.bin", std::ios::binary);
  if (!bf) throw IOError("cannot write " + (dir / "params.bin").string());
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!mf || !bf) throw IOError("short write to checkpoint " + dir.string());
}

Checkpoint load_checkpoint(const fs::path& dir, const ModelConfig* expect) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IOError("cannot read " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::parse_error& e) {
    throw SchemaError("checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", std::string()) != kFormat)
    throw SchemaError("checkpoint manifest: unknown format");

  std::ifstream bf(dir / "params.bin", std::ios::binary);
  if (!bf) throw IOError("cannot read " + (dir / "params.bin").string());
  const std::string blob((std::istreambuf_iterator<char>(bf)),
                         std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    ck.model_config = model_config_from_json(manifest.at("model_config"));
    ck.train_config = train_config_from_json(manifest.at("train_config"));
    ck.bins.edges = manifest.at("bin_edges").get<std::vector<double>>();
    ck.epochs_completed = manifest.at("epochs_completed").get<int>();
    if (!manifest.at("val_cindex").is_null())
      ck.val_cindex = manifest.at("val_cindex").get<double>();
    ck.adam.step = manifest.at("adam_step").get<std::int64_t>();

    const auto declared = manifest.at("blob_bytes").get<std::size_t>();
    if (blob.size() != declared)
      throw IOError("checkpoint blob holds " + std::to_string(blob.size()) +
                    " bytes, manifest declares " + std::to_string(declared));

    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<std::array<Eigen::Index, 2>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t bytes = static_cast<std::size_t>(shape[0] * shape[1]) * 4;
      if (shape[0] < 0 || shape[1] < 0 || offset + bytes > blob.size())
        throw IOError("checkpoint tensor " + name + " extends past the blob");
      Matrix value = read_floats(blob, offset, shape[0], shape[1]);
      if (name.rfind(kMomentM, 0) == 0)
        ck.adam.m[name.substr(std::strlen(kMomentM))] = std::move(value);
      else if (name.rfind(kMomentV, 0) == 0)
        ck.adam.v[name.substr(std::strlen(kMomentV))] = std::move(value);
      else
        ck.params.add(name, std::move(value));
    }
  } catch (const json::exception& e) {
    throw SchemaError("checkpoint manifest: " + std::string(e.what()));
  }

  if (expect) check_compatible(ck.model_config, *expect);
  // Validates names and shapes against the stored configuration.
  (void)Model(ck.model_config, ck.params);
  if (ck.bins.n_bins() != ck.model_config.n_bins)
    throw SchemaError("checkpoint bin edges do not match n_bins");
  return ck;
}

}  // namespace survfuse
