#include "strucdec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "strucdec/config.hpp"

namespace strucdec {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'D', 'A', 'E'};

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(float));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::pair<std::string, Tensor<float>> tensor() {
    const std::string name = str(u32());
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) throw Error("checkpoint: tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = u32();
    const std::size_t n = shape_numel(shape);
    need(n * sizeof(float));
    std::vector<float> data(n);
    std::memcpy(data.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return {name, Tensor<float>(std::move(shape), std::move(data))};
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint: truncated data");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& params = ckpt.model.params();
  if (ckpt.adam.m.size() != params.size() || ckpt.adam.v.size() != params.size()) {
    throw Error("checkpoint: optimizer state does not match the model");
  }
  std::size_t count = 3 * params.size();
  json header;
  header["config"] = to_json(ckpt.model.config());
  header["step"] = ckpt.step;
  header["adam"] = {{"t", ckpt.adam.t},
                    {"lr", ckpt.adam.hyper.lr},
                    {"beta1", ckpt.adam.hyper.beta1},
                    {"beta2", ckpt.adam.hyper.beta2},
                    {"eps", ckpt.adam.hyper.eps}};
  if (ckpt.bank) {
    ckpt.bank->validate();
    json layout = json::array();
    for (const auto& [s, w] : ckpt.bank->layout.blocks) layout.push_back({s, w});
    header["bank"] = {{"layout", layout}, {"provenance", ckpt.bank->provenance}};
    count += 1;
  } else {
    header["bank"] = nullptr;
  }
  header["tensor_count"] = count;

  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string text = header.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& p : params) put_tensor(out, p.name, p.value);
  for (std::size_t k = 0; k < params.size(); ++k) put_tensor(out, "adam.m." + params[k].name, ckpt.adam.m[k]);
  for (std::size_t k = 0; k < params.size(); ++k) put_tensor(out, "adam.v." + params[k].name, ckpt.adam.v[k]);
  if (ckpt.bank) put_tensor(out, "bank.latents", ckpt.bank->latents);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw Error("checkpoint: bad magic bytes");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw Error("checkpoint: unsupported format version " + std::to_string(version));
  json header;
  try {
    header = json::parse(r.str(r.u32()));
  } catch (const json::parse_error& e) {
    throw Error(std::string("checkpoint: corrupt header: ") + e.what());
  }
  std::map<std::string, Tensor<float>> tensors;
  const auto count = header.at("tensor_count").get<std::size_t>();
  for (std::size_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor();
    tensors.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes after tensor records");

  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " + shape_str(shape));
    }
    return it->second;
  };

  Checkpoint ck{Model<float>(model_config_from_json(header.at("config"))), {}, header.at("step").get<std::uint64_t>(), std::nullopt};
  const auto& a = header.at("adam");
  ck.adam.t = a.at("t").get<std::uint64_t>();
  ck.adam.hyper = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(), a.at("eps").get<double>()};
  for (auto& p : ck.model.params()) {
    p.value = take(p.name, p.value.shape());
    ck.adam.m.push_back(take("adam.m." + p.name, p.value.shape()));
    ck.adam.v.push_back(take("adam.v." + p.name, p.value.shape()));
  }
  if (!header.at("bank").is_null()) {
    const auto& b = header.at("bank");
    LatentBank bank;
    for (const auto& blk : b.at("layout")) bank.layout.blocks.emplace_back(blk.at(0).get<std::size_t>(), blk.at(1).get<std::size_t>());
    bank.provenance = b.at("provenance").get<std::vector<std::size_t>>();
    auto it = tensors.find("bank.latents");
    if (it == tensors.end()) throw Error("checkpoint: missing tensor 'bank.latents'");
    bank.latents = it->second;
    bank.validate();
    ck.bank = std::move(bank);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace strucdec
