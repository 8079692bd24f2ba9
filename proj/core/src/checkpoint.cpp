#include "gdedup/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace gdedup {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[4] = {'G', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t value = 0;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(value))) {
    throw std::runtime_error(std::string("load_model: truncated file reading ") + what);
  }
  return value;
}

}  // namespace

void save_model(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_model: cannot open " + path + " for writing");
  }
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  const auto& c = params.config;
  write_u32(out, static_cast<std::uint32_t>(c.vocab_size));
  write_u32(out, static_cast<std::uint32_t>(c.d_model));
  write_u32(out, static_cast<std::uint32_t>(c.n_heads));
  write_u32(out, static_cast<std::uint32_t>(c.n_encoder_layers));
  write_u32(out, static_cast<std::uint32_t>(c.n_decoder_layers));
  write_u32(out, static_cast<std::uint32_t>(c.d_ff));
  write_u32(out, static_cast<std::uint32_t>(c.max_len));
  write_u32(out, c.seed);
  std::vector<float> buffer;
  for (const auto& ref : params.tensors()) {
    const Matrix& m = *ref.tensor;
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    buffer.resize(static_cast<std::size_t>(m.size()));
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        buffer[at++] = static_cast<float>(m(r, col));
      }
    }
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  }
  if (!out) {
    throw std::runtime_error("save_model: write failed for " + path);
  }
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_model: cannot open " + path);
  }
  char magic[4] = {};
  if (!in.read(magic, sizeof(magic)) ||
      !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw std::runtime_error("load_model: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion) {
    throw std::runtime_error("load_model: unsupported version " + std::to_string(version));
  }
  ModelConfig config;
  config.vocab_size = static_cast<int>(read_u32(in, "vocab_size"));
  config.d_model = static_cast<int>(read_u32(in, "d_model"));
  config.n_heads = static_cast<int>(read_u32(in, "n_heads"));
  config.n_encoder_layers = static_cast<int>(read_u32(in, "n_encoder_layers"));
  config.n_decoder_layers = static_cast<int>(read_u32(in, "n_decoder_layers"));
  config.d_ff = static_cast<int>(read_u32(in, "d_ff"));
  config.max_len = static_cast<int>(read_u32(in, "max_len"));
  config.seed = read_u32(in, "seed");
  config.validate();

  ModelParams params = ModelParams::init(config);
  std::vector<float> buffer;
  for (auto& ref : params.tensors()) {
    Matrix& m = *ref.tensor;
    const auto rows = read_u32(in, ref.name.c_str());
    const auto cols = read_u32(in, ref.name.c_str());
    if (rows != static_cast<std::uint32_t>(m.rows()) ||
        cols != static_cast<std::uint32_t>(m.cols())) {
      throw std::runtime_error("load_model: shape mismatch for " + ref.name +
                               ": header says " + std::to_string(rows) + "x" +
                               std::to_string(cols) + ", config implies " +
                               std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    buffer.resize(static_cast<std::size_t>(rows) * cols);
    if (!in.read(reinterpret_cast<char*>(buffer.data()),
                 static_cast<std::streamsize>(buffer.size() * sizeof(float)))) {
      throw std::runtime_error("load_model: truncated tensor data for " + ref.name);
    }
    std::size_t at = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        m(r, col) = static_cast<double>(buffer[at++]);
      }
    }
  }
  return params;
}

}  // namespace gdedup
