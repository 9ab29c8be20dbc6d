#include "ivsg/model/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ivsg/core/error.hpp"

namespace ivsg::model {

std::unique_ptr<Model> Model::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::unique_ptr<Model> m(new Model(config));
  std::mt19937_64 rng(seed);
  m->backbone_ = std::make_unique<ToyBackbone>(config, nn::Builder(m->store_, "backbone.", kBackboneGroup, rng));
  m->didm_ = std::make_unique<Didm>(config, nn::Builder(m->store_, "didm.", kDidmGroup, rng));
  m->sch_ = std::make_unique<Sch>(config, nn::Builder(m->store_, "sch.", kSchGroup, rng));
  if (config.freeze_backbone)
    for (const auto& p : m->store_.all())
      if (p->group == kBackboneGroup) p->frozen = true;
  return m;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const std::string& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& p : model.parameters().all())
    table.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  const nlohmann::json header{{"model", to_json(model.config())}, {"metadata", metadata}, {"tensors", table}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& p : model.parameters().all())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(p->value.data()[i]));

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string in = ss.str();
  if (in.size() < 12 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("not a checkpoint", path.string());
  if (get_le(in, 4, 4) != kCheckpointVersion) throw FormatError("unsupported checkpoint version", path.string());
  const std::size_t len = get_le(in, 8, 4);
  if (in.size() < 12 + len) throw FormatError("truncated checkpoint header", path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), path.string());
  }
  auto model = Model::create(model_config_from_json(header.at("model")), 0);
  const auto& table = header.at("tensors");
  const auto& params = model->parameters().all();
  if (table.size() != params.size()) throw FormatError("tensor count does not match the model", "tensors");
  std::size_t at = 12 + len;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& t = table[i];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<long>() != p.value.rows() ||
        t.at("cols").get<long>() != p.value.cols())
      throw FormatError("tensor " + t.at("name").get<std::string>() + " does not match the model",
                        "tensors[" + std::to_string(i) + "]");
    if (in.size() < at + 8 * static_cast<std::size_t>(p.value.size())) throw FormatError("truncated tensor data", p.name);
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      p.value.data()[k] = std::bit_cast<double>(get_le(in, at, 8));
      at += 8;
    }
  }
  if (at != in.size()) throw FormatError("trailing bytes after tensor data", path.string());
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  return model;
}

}  // namespace ivsg::model
