#include "hyb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "hyb/io.hpp"
#include "json.hpp"

namespace hyb {

namespace {

constexpr char kMagic[8] = {'H', 'Y', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, uint64_t u) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

uint64_t get_u64(const std::string& in, size_t at) {
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i)
    u |= static_cast<uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return u;
}

void put_f32(std::string& out, float f) {
  const uint32_t u = std::bit_cast<uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

float get_f32(const std::string& in, size_t at) {
  uint32_t u = 0;
  for (int i = 0; i < 4; ++i)
    u |= static_cast<uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<float>(u);
}

// Every tensor the checkpoint carries, in file order.
template <typename ModelT, typename OptT, typename F>
void visit_tensors(ModelT& model, OptT* opt, F&& f) {
  model.for_each_param(f);
  if (opt) {
    for (size_t i = 0; i < opt->names.size(); ++i) f("adam.m." + opt->names[i], opt->m[i]);
    for (size_t i = 0; i < opt->names.size(); ++i) f("adam.v." + opt->names[i], opt->v[i]);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const AdamWState<float>* opt, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["arch"] = render_block_spec(model.spec);
  header["dims"] = {{"vocab", model.dims.vocab}, {"d", model.dims.d},     {"n", model.dims.n},
                    {"heads", model.dims.heads}, {"window", model.dims.window},
                    {"blocks", model.dims.blocks}};
  header["step"] = meta.step;
  header["tokens_seen"] = meta.tokens_seen;
  header["seed"] = meta.seed;
  header["rng"] = meta.rng_state;
  if (opt) {
    header["optimizer"] = {{"step", opt->step},
                           {"lr", opt->cfg.lr},
                           {"beta1", opt->cfg.beta1},
                           {"beta2", opt->cfg.beta2},
                           {"eps", opt->cfg.eps},
                           {"weight_decay", opt->cfg.weight_decay}};
  } else {
    header["optimizer"] = nullptr;
  }

  nlohmann::json dir = nlohmann::json::array();
  std::string payload;
  visit_tensors(model, opt, [&](const std::string& name, const Tensor<float>& t) {
    dir.push_back({{"name", name},
                   {"shape", t.shape},
                   {"offset", static_cast<int64_t>(payload.size())},
                   {"count", t.size()}});
    for (int64_t i = 0; i < t.size(); ++i) put_f32(payload, t.v[static_cast<size_t>(i)]);
  });
  header["tensors"] = std::move(dir);

  const std::string json = header.dump();
  std::string bytes;
  bytes.reserve(16 + json.size() + payload.size());
  bytes.append(kMagic, sizeof(kMagic));
  put_u64(bytes, json.size());
  bytes += json;
  bytes += payload;
  write_file(path, bytes);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const uint64_t json_len = get_u64(bytes, 8);
  if (16 + json_len > bytes.size())
    throw std::runtime_error("checkpoint: truncated header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: malformed header: " + std::string(e.what()));
  }
  if (header.at("format_version").get<int>() != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format_version " +
                             header.at("format_version").dump());

  ModelDims dims;
  const auto& jd = header.at("dims");
  dims.vocab = jd.at("vocab").get<int64_t>();
  dims.d = jd.at("d").get<int64_t>();
  dims.n = jd.at("n").get<int64_t>();
  dims.heads = jd.at("heads").get<int64_t>();
  dims.window = jd.at("window").get<int64_t>();
  dims.blocks = jd.at("blocks").get<int64_t>();

  LoadedCheckpoint out{.model = build_model<float>(header.at("arch").get<std::string>(), dims,
                                                   header.at("seed").get<uint64_t>()),
                       .has_optimizer = false,
                       .opt = {},
                       .meta = {}};
  out.meta.step = header.at("step").get<int64_t>();
  out.meta.tokens_seen = header.at("tokens_seen").get<int64_t>();
  out.meta.seed = header.at("seed").get<uint64_t>();
  out.meta.rng_state = header.at("rng").get<std::string>();

  if (!header.at("optimizer").is_null()) {
    const auto& jo = header.at("optimizer");
    AdamWConfig cfg;
    cfg.lr = jo.at("lr").get<double>();
    cfg.beta1 = jo.at("beta1").get<double>();
    cfg.beta2 = jo.at("beta2").get<double>();
    cfg.eps = jo.at("eps").get<double>();
    cfg.weight_decay = jo.at("weight_decay").get<double>();
    out.has_optimizer = true;
    out.opt.init(out.model, cfg);
    out.opt.step = jo.at("step").get<int64_t>();
  }

  const size_t payload_at = 16 + json_len;
  const auto& dir = header.at("tensors");
  size_t entry = 0;
  int64_t expected_end = 0;
  visit_tensors(out.model, out.has_optimizer ? &out.opt : nullptr,
                [&](const std::string& name, Tensor<float>& t) {
                  if (entry >= dir.size())
                    throw std::runtime_error("checkpoint: missing tensor " + name);
                  const auto& e = dir.at(entry);
                  if (e.at("name").get<std::string>() != name)
                    throw std::runtime_error("checkpoint: tensor order mismatch, expected " +
                                             name + ", found " +
                                             e.at("name").get<std::string>());
                  const auto shape = e.at("shape").get<std::vector<int64_t>>();
                  if (shape != t.shape || e.at("count").get<int64_t>() != t.size())
                    throw std::runtime_error("checkpoint: shape mismatch for " + name);
                  const int64_t offset = e.at("offset").get<int64_t>();
                  if (offset != expected_end)
                    throw std::runtime_error("checkpoint: payload gap before " + name);
                  const size_t at = payload_at + static_cast<size_t>(offset);
                  if (at + static_cast<size_t>(t.size()) * 4 > bytes.size())
                    throw std::runtime_error("checkpoint: truncated payload at " + name);
                  for (int64_t i = 0; i < t.size(); ++i)
                    t.v[static_cast<size_t>(i)] = get_f32(bytes, at + static_cast<size_t>(i) * 4);
                  expected_end = offset + t.size() * 4;
                  ++entry;
                });
  if (entry != dir.size())
    throw std::runtime_error("checkpoint: unexpected extra tensor " +
                             dir.at(entry).at("name").get<std::string>());
  if (payload_at + static_cast<size_t>(expected_end) != bytes.size())
    throw std::runtime_error("checkpoint: trailing bytes after payload");
  return out;
}

}  // namespace hyb
