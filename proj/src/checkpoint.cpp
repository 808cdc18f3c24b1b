#include "fcd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "fcd/raster.hpp"

namespace fcd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'C', 'D', 'C', 'K', 'P', 'T', '1'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return "float32";
    case torch::kFloat64:
      return "float64";
    case torch::kInt64:
      return "int64";
    default:
      throw Error(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  throw Error("checkpoint: unknown dtype '" + name + "'");
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& file) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");
  json tensors = json::array();
  std::string blob;
  for (const auto& [name, tensor] : ck.tensors) {
    const auto t = tensor.detach().contiguous().cpu();
    const auto nbytes = static_cast<std::size_t>(t.numel()) * t.element_size();
    tensors.push_back({{"name", name},
                       {"dtype", dtype_name(t.scalar_type())},
                       {"shape", t.sizes().vec()},
                       {"offset", blob.size()},
                       {"nbytes", nbytes}});
    blob.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  json header = {{"kind", ck.kind},
                 {"config", ck.config},
                 {"iteration", ck.iteration},
                 {"val_f1", ck.val_f1 ? json(*ck.val_f1) : json(nullptr)},
                 {"extra", ck.extra},
                 {"tensors", tensors}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out += blob;

  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("checkpoint: cannot write " + file.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
  }
  fs::rename(tmp, file);
}

Checkpoint load_checkpoint(const fs::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot open " + file.string());
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw Error("checkpoint: " + file.string() + " is not a checkpoint container");
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (16 + header_len > bytes.size()) throw Error("checkpoint: truncated header in " + file.string());
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::parse_error& e) {
    throw Error("checkpoint: malformed header in " + file.string() + ": " + e.what());
  }
  const std::size_t blob_start = 16 + header_len;

  Checkpoint ck;
  try {
    ck.kind = header.at("kind").get<std::string>();
    ck.config = header.at("config");
    ck.iteration = header.at("iteration").get<std::int64_t>();
    if (!header.at("val_f1").is_null()) ck.val_f1 = header.at("val_f1").get<double>();
    ck.extra = header.at("extra");
    for (const auto& entry : header.at("tensors")) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("nbytes").get<std::size_t>();
      if (blob_start + offset + nbytes > bytes.size())
        throw Error("checkpoint: tensor '" + entry.at("name").get<std::string>() + "' runs past end of file");
      auto t = torch::empty(entry.at("shape").get<std::vector<std::int64_t>>(),
                            torch::TensorOptions().dtype(dtype_from_name(entry.at("dtype").get<std::string>())));
      if (static_cast<std::size_t>(t.numel()) * t.element_size() != nbytes)
        throw Error("checkpoint: tensor '" + entry.at("name").get<std::string>() + "' size does not match its shape");
      std::memcpy(t.data_ptr(), bytes.data() + blob_start + offset, nbytes);
      ck.tensors.emplace_back(entry.at("name").get<std::string>(), t);
    }
  } catch (const json::exception& e) {
    throw Error("checkpoint: malformed header in " + file.string() + ": " + e.what());
  }
  return ck;
}

std::string checkpoint_id(const Checkpoint& ck) {
  std::vector<torch::Tensor> ts;
  for (const auto& [name, t] : ck.tensors) ts.push_back(t);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(tensor_checksum(ts)));
  return ck.kind + "@" + std::to_string(ck.iteration) + ":" + std::string(hash).substr(0, 12);
}

json to_json(const GeneratorOptions& o) {
  return {{"channels", o.channels}, {"base_width", o.base_width}, {"down_blocks", o.down_blocks}, {"res_blocks", o.res_blocks}};
}

json to_json(const DiscriminatorOptions& o) {
  return {{"channels", o.channels}, {"patch_size", o.patch_size}, {"base_width", o.base_width}, {"layers", o.layers}};
}

json to_json(const ClassifierOptions& o) {
  return {{"channels", o.channels}, {"width", o.width}, {"stages", o.stages}};
}

json to_json(const SegNetOptions& o) { return {{"channels", o.channels}, {"width", o.width}, {"depth", o.depth}}; }

GeneratorOptions generator_options_from_json(const json& j) {
  return {j.at("channels").get<int>(), j.at("base_width").get<int>(), j.at("down_blocks").get<int>(),
          j.at("res_blocks").get<int>()};
}

ClassifierOptions classifier_options_from_json(const json& j) {
  return {j.at("channels").get<int>(), j.at("width").get<int>(), j.at("stages").get<int>()};
}

SegNetOptions segnet_options_from_json(const json& j) {
  return {j.at("channels").get<int>(), j.at("width").get<int>(), j.at("depth").get<int>()};
}

namespace {

void expect_kind(const Checkpoint& ck, const char* kind) {
  if (ck.kind != kind) throw Error("checkpoint: expected kind '" + std::string(kind) + "', found '" + ck.kind + "'");
  if (!ck.config.contains("architecture")) throw Error("checkpoint: config has no architecture echo");
}

}  // namespace

Generator load_generator(const Checkpoint& ck) {
  expect_kind(ck, "generator");
  Generator g(generator_options_from_json(ck.config.at("architecture")));
  restore_state(*g, ck.tensors);
  return g;
}

PatchClassifier load_classifier(const Checkpoint& ck) {
  expect_kind(ck, "classifier");
  PatchClassifier c(classifier_options_from_json(ck.config.at("architecture")));
  restore_state(*c, ck.tensors);
  return c;
}

SegNet load_segnet(const Checkpoint& ck) {
  expect_kind(ck, "segnet");
  SegNet s(segnet_options_from_json(ck.config.at("architecture")));
  restore_state(*s, ck.tensors);
  return s;
}

}  // namespace fcd
