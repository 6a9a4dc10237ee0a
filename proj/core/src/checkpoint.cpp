#include "dcg/checkpoint.hpp"

#include <cstring>

#include "dcg/error.hpp"
#include "dcg/io_util.hpp"

namespace dcg {

namespace {

constexpr char kMagic[8] = {'D', 'C', 'G', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}
void put_u64(std::string& out, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}
void put_i64(std::string& out, int64_t v) { put_u64(out, static_cast<uint64_t>(v)); }

struct Reader {
  const std::string& bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size()) throw DataError("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.append(name);
  put_u32(out, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape()) put_i64(out, d);
  const auto& data = t.data();
  size_t nbytes = data.size() * sizeof(double);
  size_t off = out.size();
  out.resize(off + nbytes);
  std::memcpy(out.data() + off, data.data(), nbytes);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, 1);  // version
  put_u64(out, model.dict().schema_hash());

  std::string schema = model.dict().to_json().dump();
  put_u32(out, static_cast<uint32_t>(schema.size()));
  out.append(schema);

  nlohmann::ordered_json meta;
  meta["model"] = model.config().to_json();
  meta["dims"] = {{"patch_count", model.dims().patch_count},
                  {"patch_width", model.dims().patch_width},
                  {"classes", model.dims().classes}};
  std::string meta_s = meta.dump();
  put_u32(out, static_cast<uint32_t>(meta_s.size()));
  out.append(meta_s);

  uint32_t count = static_cast<uint32_t>(model.parameters().size()) + 2;
  put_u32(out, count);
  for (const auto& p : model.parameters()) put_tensor(out, p.name, p.tensor);
  put_tensor(out, "const/prototypes_raw", model.prototypes_raw());
  put_tensor(out, "const/ppmi", model.ppmi());

  write_binary_file_atomic(path, out);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("no checkpoint at " + path.string());
  std::string bytes = read_text_file(path);
  Reader r{bytes};
  if (r.str(8) != std::string(kMagic, 8)) throw DataError("checkpoint: bad magic");
  CheckpointData ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != 1)
    throw DataError("checkpoint: unsupported version " + std::to_string(ckpt.version));
  ckpt.schema_hash = r.u64();
  try {
    ckpt.schema_json = nlohmann::ordered_json::parse(r.str(r.u32()));
    nlohmann::json meta = nlohmann::json::parse(r.str(r.u32()));
    ckpt.model_config = meta.at("model");
    ckpt.dims.patch_count = meta.at("dims").at("patch_count").get<int64_t>();
    ckpt.dims.patch_width = meta.at("dims").at("patch_width").get<int64_t>();
    ckpt.dims.classes = meta.at("dims").at("classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: metadata parse failure: " + std::string(e.what()));
  }

  uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    uint32_t rank = r.u32();
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d) shape.push_back(r.i64());
    int64_t n = shape_numel(shape);
    r.need(static_cast<size_t>(n) * sizeof(double));
    std::vector<double> data(static_cast<size_t>(n));
    std::memcpy(data.data(), bytes.data() + r.pos, data.size() * sizeof(double));
    r.pos += data.size() * sizeof(double);
    ckpt.tensors.emplace(std::move(name), Tensor::from_data(std::move(shape), std::move(data), false));
  }
  return ckpt;
}

Model model_from_checkpoint(const CheckpointData& ckpt) {
  ConceptDictionary dict = ConceptDictionary::from_json(ckpt.schema_json);
  if (dict.schema_hash() != ckpt.schema_hash)
    throw DataError("checkpoint: schema hash does not match its own schema payload");
  ModelConfig cfg = ModelConfig::from_json(ckpt.model_config);
  auto protos = ckpt.tensors.find("const/prototypes_raw");
  auto ppmi = ckpt.tensors.find("const/ppmi");
  if (protos == ckpt.tensors.end() || ppmi == ckpt.tensors.end())
    throw DataError("checkpoint: missing constant tensors");
  return Model::restore(dict, cfg, ckpt.dims, protos->second, ppmi->second, ckpt.tensors);
}

void require_schema_match(const CheckpointData& ckpt, const ConceptDictionary& dataset_schema) {
  if (ckpt.schema_hash != dataset_schema.schema_hash())
    throw SchemaError("checkpoint schema hash " + std::to_string(ckpt.schema_hash) +
                      " does not match dataset schema hash " +
                      std::to_string(dataset_schema.schema_hash()));
}

}  // namespace dcg
