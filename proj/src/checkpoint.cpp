#include "vaf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include "json.hpp"

#include "vaf/error.hpp"

namespace vaf {
namespace {

using nlohmann::json;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = __builtin_bswap64(v);
  }
  return v;
}

void append_u64(std::string& out, std::uint64_t v) {
  v = to_le(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t read_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t v;
  std::memcpy(&v, bytes.data() + at, 8);
  return to_le(v);
}

void append_doubles(std::string& out, const nn::Tensor4& t) {
  for (double d : t.values()) append_u64(out, std::bit_cast<std::uint64_t>(d));
}

json config_to_json(const TsvaConfig& c) {
  return json{{"depth_levels", c.depth_levels},
              {"base_channels", c.base_channels},
              {"input_channels", c.input_channels},
              {"single_input", c.single_input}};
}

TsvaConfig config_from_json(const json& j) {
  TsvaConfig c;
  c.depth_levels = j.at("depth_levels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.input_channels = j.at("input_channels").get<int>();
  c.single_input = j.at("single_input").get<bool>();
  return c;
}

json shape_json(const nn::Shape4& s) { return json::array({s.n, s.c, s.h, s.w}); }

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string blobs;
  json tensors = json::array();
  auto add = [&](const std::string& kind, const std::string& name, const nn::Tensor4& t) {
    tensors.push_back(json{{"kind", kind},
                           {"name", name},
                           {"shape", shape_json(t.shape())},
                           {"offset", blobs.size()},
                           {"count", t.size()}});
    append_doubles(blobs, t);
  };
  for (const auto& [name, p] : ckpt.model.params()) add("param", name, p.value);
  for (const auto& [name, b] : ckpt.model.buffers()) add("buffer", name, b);

  json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = config_to_json(ckpt.model.config());
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    header["optimizer"] = json{{"learning_rate", o.learning_rate},
                               {"beta1", o.beta1},
                               {"beta2", o.beta2},
                               {"epsilon", o.epsilon},
                               {"step", o.step}};
    for (const auto& [name, m] : o.first_moment) add("adam_m", name, m);
    for (const auto& [name, v] : o.second_moment) add("adam_v", name, v);
  } else {
    header["optimizer"] = nullptr;
  }
  header["tensors"] = std::move(tensors);
  const auto& m = ckpt.metadata;
  header["metadata"] = json{{"epoch", m.epoch},
                            {"best_epoch", m.best_epoch},
                            {"train_loss", m.train_loss},
                            {"validation_loss", m.validation_loss},
                            {"dataset_seed", m.dataset_seed},
                            {"train_seed", m.train_seed}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic);
  append_u64(out, text.size());
  out += text;
  out += blobs;
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const std::size_t prefix = kCheckpointMagic.size() + 8;
  if (bytes.size() < prefix || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("checkpoint: missing magic bytes");
  }
  const std::uint64_t header_len = read_u64(bytes, kCheckpointMagic.size());
  if (header_len > bytes.size() - prefix) throw FormatError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(prefix, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const std::string_view blobs = bytes.substr(prefix + header_len);
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw VersionError("checkpoint format version " + std::to_string(version) +
                         " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ckpt{TsvaModel::allocate(config_from_json(header.at("config"))), std::nullopt, {}};
    if (!header.at("optimizer").is_null()) {
      const auto& o = header.at("optimizer");
      nn::AdamState s;
      s.learning_rate = o.at("learning_rate").get<double>();
      s.beta1 = o.at("beta1").get<double>();
      s.beta2 = o.at("beta2").get<double>();
      s.epsilon = o.at("epsilon").get<double>();
      s.step = o.at("step").get<std::int64_t>();
      ckpt.optimizer = std::move(s);
    }
    std::size_t params_seen = 0;
    std::size_t buffers_seen = 0;
    for (const auto& t : header.at("tensors")) {
      const auto kind = t.at("kind").get<std::string>();
      const auto name = t.at("name").get<std::string>();
      const auto shape_v = t.at("shape").get<std::vector<int>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (shape_v.size() != 4) throw FormatError("checkpoint: tensor " + name + " is not 4-D");
      const nn::Shape4 shape{shape_v[0], shape_v[1], shape_v[2], shape_v[3]};
      if (shape.numel() != count) throw FormatError("checkpoint: count mismatch for " + name);
      if (offset > blobs.size() || count * 8 > blobs.size() - offset) {
        throw FormatError("checkpoint: truncated blob for " + name);
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<double>(read_u64(blobs, offset + 8 * i));
      }
      nn::Tensor4 tensor(shape, std::move(values));
      auto place = [&](nn::Tensor4& dst) {
        if (!(dst.shape() == shape)) throw FormatError("checkpoint: shape mismatch for " + name);
        dst = std::move(tensor);
      };
      if (kind == "param") {
        if (!ckpt.model.params().contains(name)) throw FormatError("checkpoint: unknown parameter " + name);
        place(ckpt.model.params().at(name).value);
        ++params_seen;
      } else if (kind == "buffer") {
        auto it = ckpt.model.buffers().find(name);
        if (it == ckpt.model.buffers().end()) throw FormatError("checkpoint: unknown buffer " + name);
        place(it->second);
        ++buffers_seen;
      } else if ((kind == "adam_m" || kind == "adam_v") && ckpt.optimizer) {
        auto& dst = kind == "adam_m" ? ckpt.optimizer->first_moment : ckpt.optimizer->second_moment;
        dst[name] = std::move(tensor);
      } else {
        throw FormatError("checkpoint: unexpected tensor kind " + kind);
      }
    }
    if (params_seen != ckpt.model.params().size() || buffers_seen != ckpt.model.buffers().size()) {
      throw FormatError("checkpoint: missing tensors");
    }
    const auto& m = header.at("metadata");
    ckpt.metadata.epoch = m.at("epoch").get<int>();
    ckpt.metadata.best_epoch = m.at("best_epoch").get<int>();
    ckpt.metadata.train_loss = m.at("train_loss").get<std::vector<double>>();
    ckpt.metadata.validation_loss = m.at("validation_loss").get<std::vector<double>>();
    ckpt.metadata.dataset_seed = m.at("dataset_seed").get<std::uint64_t>();
    ckpt.metadata.train_seed = m.at("train_seed").get<std::uint64_t>();
    return ckpt;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace vaf
