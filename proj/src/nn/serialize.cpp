#include "gleason/nn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace gleason::nn {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'F', 'S', 'C', 'V'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

json spec_to_json(const LayerSpec& s) {
  json j{{"kind", std::string(to_string(s.kind))}, {"name", s.name}, {"frozen", s.frozen}};
  switch (s.kind) {
    case LayerKind::conv2d:
      j["kernel"] = {s.kernel_h, s.kernel_w};
      j["filters"] = s.filters;
      j["stride"] = s.stride;
      j["padding"] = s.padding == Padding::same ? "same" : "valid";
      break;
    case LayerKind::max_pool2d:
      j["window"] = s.window;
      j["stride"] = s.stride;
      break;
    case LayerKind::fully_connected:
      j["units"] = s.units;
      break;
    case LayerKind::dropout:
      j["drop_probability"] = s.drop_probability;
      break;
    case LayerKind::softmax:
      j["groups"] = s.groups;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec spec_from_json(const json& j) {
  LayerSpec s;
  s.kind = parse_layer_kind(j.at("kind").get<std::string>());
  s.name = j.at("name").get<std::string>();
  s.frozen = j.at("frozen").get<bool>();
  switch (s.kind) {
    case LayerKind::conv2d: {
      const auto& k = j.at("kernel");
      s.kernel_h = k.at(0).get<std::size_t>();
      s.kernel_w = k.at(1).get<std::size_t>();
      s.filters = j.at("filters").get<std::size_t>();
      s.stride = j.at("stride").get<std::size_t>();
      const auto pad = j.at("padding").get<std::string>();
      if (pad != "same" && pad != "valid") throw data_error("model manifest: unknown padding '" + pad + "'");
      s.padding = pad == "same" ? Padding::same : Padding::valid;
      break;
    }
    case LayerKind::max_pool2d:
      s.window = j.at("window").get<std::size_t>();
      s.stride = j.at("stride").get<std::size_t>();
      break;
    case LayerKind::fully_connected:
      s.units = j.at("units").get<std::size_t>();
      break;
    case LayerKind::dropout:
      s.drop_probability = j.at("drop_probability").get<double>();
      break;
    case LayerKind::softmax:
      s.groups = j.at("groups").get<std::size_t>();
      break;
    default:
      break;
  }
  return s;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Network<float>& net) {
  json layers = json::array();
  json params = json::array();
  for (const auto& l : net.layers()) {
    layers.push_back(spec_to_json(l.spec));
    for (const auto& p : l.params) params.push_back({{"layer", l.spec.name}, {"shape", p.shape()}});
  }
  const json manifest{{"input_shape", net.input_shape()},
                      {"seed", net.seed()},
                      {"trained_epochs", net.trained_epochs()},
                      {"tags", net.tags()},
                      {"layers", layers},
                      {"parameters", params}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& l : net.layers())
    for (const auto& p : l.params)
      for (float v : p.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Network<float> deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw data_error("model file truncated: missing header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw data_error("not a model file: bad magic bytes");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kModelFormatVersion)
    throw data_error("unsupported model format version " + std::to_string(version) + " (this build reads version " +
                     std::to_string(kModelFormatVersion) + ")");
  const std::uint32_t manifest_size = get_u32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(manifest_size))
    throw data_error("model file truncated inside the manifest");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 12, bytes.begin() + 12 + manifest_size);
  } catch (const json::exception& e) {
    throw data_error(std::string("model manifest is not valid JSON: ") + e.what());
  }

  try {
    Network<float> net(manifest.at("input_shape").get<Shape>(), manifest.at("seed").get<std::uint64_t>());
    net.set_trained_epochs(manifest.at("trained_epochs").get<std::uint64_t>());
    net.tags() = manifest.at("tags").get<std::map<std::string, std::string>>();

    const auto& param_list = manifest.at("parameters");
    std::size_t cursor = 12 + manifest_size;
    std::size_t param_index = 0;
    for (const auto& lj : manifest.at("layers")) {
      Layer<float> layer;
      layer.spec = spec_from_json(lj);
      const std::size_t count = layer.spec.has_parameters() ? 2 : 0;
      for (std::size_t p = 0; p < count; ++p, ++param_index) {
        if (param_index >= param_list.size()) throw data_error("model manifest lists too few parameter tensors");
        const auto& pj = param_list.at(param_index);
        if (pj.at("layer").get<std::string>() != layer.spec.name)
          throw data_error("model manifest parameter order does not match layer '" + layer.spec.name + "'");
        Tensor<float> t(pj.at("shape").get<Shape>());
        if (bytes.size() < cursor + 4 * t.size())
          throw data_error("model file truncated in the parameters of layer '" + layer.spec.name + "'");
        for (std::size_t k = 0; k < t.size(); ++k, cursor += 4) t[k] = std::bit_cast<float>(get_u32(bytes, cursor));
        layer.params.push_back(std::move(t));
      }
      net.append_layer(std::move(layer));
    }
    if (param_index != param_list.size()) throw data_error("model manifest lists unused parameter tensors");
    if (cursor != bytes.size()) throw data_error("model file has trailing bytes after the parameters");
    return net;
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed model manifest: ") + e.what());
  }
}

void save_network(const Network<float>& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write model file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("failed writing model file " + path.string());
}

Network<float> load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace gleason::nn
