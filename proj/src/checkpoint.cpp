#include "gnndsr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace gnndsr {

namespace {

constexpr char kMagic[8] = {'G', 'N', 'N', 'D', 'S', 'R', 'C', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t read_u64(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  for (double d : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
  }
}

void read_doubles(std::istream& in, std::vector<double>& values) {
  for (double& d : values) {
    const std::uint64_t bits = read_u64(in);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 8);

  nlohmann::json j{
      {"mode", mode_name(meta.mode)},
      {"d", meta.d},
      {"lstm_layers", meta.lstm_layers},
      {"n_users", meta.n_users},
      {"n_items", meta.n_items},
      {"rating_scale", meta.rating_scale},
      {"seed", meta.seed},
      {"ablation",
       {{"use_lstm", meta.ablation.use_lstm},
        {"use_att", meta.ablation.use_att},
        {"use_social", meta.ablation.use_social},
        {"use_correlative", meta.ablation.use_correlative}}},
  };
  const std::string meta_str = j.dump();
  write_u64(out, meta_str.size());
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  const auto named = params.named_params();
  write_u64(out, named.size());
  for (const auto& [name, tensor] : named) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, tensor.shape().size());
    for (int dim : tensor.shape()) write_u64(out, static_cast<std::uint64_t>(dim));
    write_doubles(out, tensor.data());
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("not a checkpoint file: " + path);
  }
  const std::uint64_t meta_len = read_u64(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint meta is not valid JSON: " + std::string(e.what()));
  }

  Checkpoint ck;
  try {
    ck.meta.mode = mode_from_name(j.at("mode").get<std::string>());
    ck.meta.d = j.at("d").get<int>();
    ck.meta.lstm_layers = j.at("lstm_layers").get<int>();
    ck.meta.n_users = j.at("n_users").get<int>();
    ck.meta.n_items = j.at("n_items").get<int>();
    ck.meta.rating_scale = j.at("rating_scale").get<std::vector<int>>();
    ck.meta.seed = j.at("seed").get<std::uint64_t>();
    const auto& ab = j.at("ablation");
    ck.meta.ablation.use_lstm = ab.at("use_lstm").get<bool>();
    ck.meta.ablation.use_att = ab.at("use_att").get<bool>();
    ck.meta.ablation.use_social = ab.at("use_social").get<bool>();
    ck.meta.ablation.use_correlative = ab.at("use_correlative").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint meta is missing fields: " + std::string(e.what()));
  }

  ck.params = ModelParams::build(ck.meta.n_users, ck.meta.n_items,
                                 static_cast<int>(ck.meta.rating_scale.size()), ck.meta.d,
                                 ck.meta.lstm_layers);
  auto named = ck.params.named_params();
  const std::uint64_t count = read_u64(in);
  if (count != named.size()) {
    throw ParseError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                     std::to_string(named.size()));
  }
  for (auto& [name, tensor] : named) {
    const std::uint64_t name_len = read_u64(in);
    std::string got(name_len, '\0');
    in.read(got.data(), static_cast<std::streamsize>(name_len));
    if (got != name) throw ParseError("checkpoint tensor '" + got + "' does not match '" + name + "'");
    const std::uint64_t ndim = read_u64(in);
    std::vector<int> shape(ndim);
    for (auto& dim : shape) dim = static_cast<int>(read_u64(in));
    if (shape != tensor.shape()) {
      throw ParseError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                       ", expected " + shape_str(tensor.shape()));
    }
    read_doubles(in, tensor.mutable_data());
  }
  if (!in) throw ParseError("checkpoint truncated: " + path);
  return ck;
}

}  // namespace gnndsr
