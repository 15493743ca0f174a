#include "dib/io/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dib/errors.hpp"

namespace dib {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'I', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr int kVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DibModel& model,
                     const nlohmann::json& metadata) {
  const ParameterSet& params = model.params();
  nlohmann::json header;
  header["version"] = kVersion;
  header["model"] = model.config().to_json();
  header["metadata"] = metadata;
  header["parameters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    header["parameters"].push_back(
        {{"name", params.name(ParamId{i})}, {"shape", params.value(ParamId{i}).shape()}});
  }
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint '" + tmp.string() + "'");
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& t = params.value(ParamId{i});
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw Error("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ConfigError("'" + path.string() + "' is not a checkpoint file");
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ConfigError("truncated checkpoint header in '" + path.string() + "'");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("corrupt checkpoint header in '" + path.string() + "': " + e.what());
  }
  if (header.value("version", 0) != kVersion) {
    throw ConfigError("unsupported checkpoint version in '" + path.string() + "'");
  }
  ParameterSet params;
  for (const auto& p : header.at("parameters")) {
    Tensor t(p.at("shape").get<Tensor::Shape>());
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw ConfigError("truncated checkpoint weights in '" + path.string() + "'");
    params.add(p.at("name").get<std::string>(), std::move(t));
  }
  return Checkpoint{DibModel::from_parameters(ModelConfig::from_json(header.at("model")), std::move(params)),
                    header.value("metadata", nlohmann::json::object())};
}

}  // namespace dib
