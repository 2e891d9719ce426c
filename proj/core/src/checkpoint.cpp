#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nips/model.hpp"

namespace nips {

namespace {

constexpr char kMagic[8] = {'N', 'I', 'P', 'S', 'C', 'K', '1', '\0'};

nlohmann::json cfg_to_json(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"d", c.d},
          {"d_k", c.d_k},
          {"modes1", c.modes1},
          {"modes2", c.modes2},
          {"n1", c.n1},
          {"n2", c.n2},
          {"norm_placement", to_string(c.norm_placement)},
          {"variant", to_string(c.variant)}};
}

ModelConfig cfg_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.d = j.at("d").get<int>();
  c.d_k = j.at("d_k").get<int>();
  c.modes1 = j.at("modes1").get<int>();
  c.modes2 = j.at("modes2").get<int>();
  c.n1 = j.at("n1").get<int>();
  c.n2 = j.at("n2").get<int>();
  c.norm_placement =
      norm_placement_from_string(j.at("norm_placement").get<std::string>());
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  return c;
}

}  // namespace

std::string model_config_json(const ModelConfig& cfg) {
  return cfg_to_json(cfg).dump();
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Model model = ck.model;  // param_blocks needs mutable access
  auto blocks = param_blocks(model);
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.len;
  if (!ck.adam_m.empty() &&
      (ck.adam_m.size() != total || ck.adam_v.size() != total))
    throw ContractError("save_checkpoint: optimizer state size mismatch");

  nlohmann::json header = {{"version", 1},
                           {"cfg", cfg_to_json(model.cfg)},
                           {"epoch", ck.epoch},
                           {"adam_t", ck.adam_t},
                           {"has_opt_state", !ck.adam_m.empty()},
                           {"param_doubles", total},
                           {"loss_digest", ck.loss_digest}};
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f.write(kMagic, 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xFF),
                           static_cast<unsigned char>((hlen >> 8) & 0xFF),
                           static_cast<unsigned char>((hlen >> 16) & 0xFF),
                           static_cast<unsigned char>((hlen >> 24) & 0xFF)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& b : blocks)
    f.write(reinterpret_cast<const char*>(b.ptr),
            static_cast<std::streamsize>(b.len * sizeof(double)));
  if (!ck.adam_m.empty()) {
    f.write(reinterpret_cast<const char*>(ck.adam_m.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    f.write(reinterpret_cast<const char*>(ck.adam_v.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
  }
  if (!f) throw Error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("bad checkpoint magic", 0);
  unsigned char lenb[4];
  if (!f.read(reinterpret_cast<char*>(lenb), 4))
    throw FormatError("truncated header length", 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(lenb[0]) |
                             (static_cast<std::uint32_t>(lenb[1]) << 8) |
                             (static_cast<std::uint32_t>(lenb[2]) << 16) |
                             (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string header(hlen, '\0');
  if (!f.read(header.data(), hlen)) throw FormatError("truncated header", 12);

  Checkpoint ck;
  bool has_opt = false;
  std::size_t total = 0;
  try {
    nlohmann::json j = nlohmann::json::parse(header);
    ck.model.cfg = cfg_from_json(j.at("cfg"));
    ck.epoch = j.at("epoch").get<int>();
    ck.adam_t = j.at("adam_t").get<long long>();
    has_opt = j.at("has_opt_state").get<bool>();
    total = j.at("param_doubles").get<std::size_t>();
    ck.loss_digest = j.at("loss_digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), 12);
  }

  ck.model = Model::init(ck.model.cfg, 0);  // shapes; contents overwritten
  auto blocks = param_blocks(ck.model);
  std::size_t expect = 0;
  for (const auto& b : blocks) expect += b.len;
  if (expect != total)
    throw FormatError("checkpoint parameter count does not match config", 12);
  long long pos = 12 + static_cast<long long>(hlen);
  for (const auto& b : blocks) {
    if (!f.read(reinterpret_cast<char*>(b.ptr),
                static_cast<std::streamsize>(b.len * sizeof(double))))
      throw FormatError("truncated parameter block", pos);
    pos += static_cast<long long>(b.len * sizeof(double));
  }
  if (has_opt) {
    ck.adam_m.resize(total);
    ck.adam_v.resize(total);
    if (!f.read(reinterpret_cast<char*>(ck.adam_m.data()),
                static_cast<std::streamsize>(total * sizeof(double))))
      throw FormatError("truncated optimizer block", pos);
    pos += static_cast<long long>(total * sizeof(double));
    if (!f.read(reinterpret_cast<char*>(ck.adam_v.data()),
                static_cast<std::streamsize>(total * sizeof(double))))
      throw FormatError("truncated optimizer block", pos);
    pos += static_cast<long long>(total * sizeof(double));
  }
  if (f.get() != std::ifstream::traits_type::eof())
    throw FormatError("trailing bytes after checkpoint blocks", pos);
  return ck;
}

}  // namespace nips
