#include "canopy/backbones.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "canopy/errors.hpp"

namespace canopy {

namespace fs = std::filesystem;
using nlohmann::json;

void BackboneSpec::validate() const {
  if (input_size <= 0) throw ConfigError("backbone input_size must be positive");
  if (embedding_dim <= 0) throw ConfigError("backbone embedding_dim must be positive");
  if (learning_rate <= 0.0) throw ConfigError("backbone learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("backbone weight_decay must be >= 0");
  if (classifier_dropout < 0.0 || classifier_dropout >= 1.0)
    throw ConfigError("classifier_dropout must be in [0,1)");
}

BackboneSpec backbone_spec(const std::string& name) {
  BackboneSpec s;
  s.name = name;
  if (name == "resnet50") {
    s.input_size = 224;
    s.embedding_dim = 2048;
    s.learning_rate = 1e-4;
    s.weight_decay = 1e-4;
    s.classifier_dropout = 0.0;
  } else if (name == "dinov3") {
    s.input_size = 512;
    s.embedding_dim = 768;
    s.learning_rate = 1e-4;
    s.weight_decay = 1e-4;
    s.classifier_dropout = 0.1;
  } else if (name == "bioclip2") {
    s.input_size = 224;
    s.embedding_dim = 768;
    s.learning_rate = 5e-5;
    s.weight_decay = 0.0;
    s.classifier_dropout = 0.0;
    s.frozen_components = {"text_encoder"};
  } else if (name == "plantnet") {
    s.input_size = 518;
    s.embedding_dim = 768;
    s.learning_rate = 6e-6;
    s.weight_decay = 1e-4;
    s.classifier_dropout = 0.1;
  } else if (name == "tiny_reference") {
    s.input_size = 64;
    s.embedding_dim = 64;
    s.learning_rate = 1e-3;
    s.weight_decay = 1e-4;
    s.classifier_dropout = 0.0;
  } else {
    throw ConfigError("unknown backbone '" + name + "'");
  }
  return s;
}

std::vector<std::string> backbone_names() {
  return {"resnet50", "dinov3", "bioclip2", "plantnet", "tiny_reference"};
}

std::vector<std::string> trainable_inventory(const BackboneSpec& spec) {
  std::vector<std::string> components;
  if (spec.name == "tiny_reference")
    components = {"encoder", "head"};
  else if (spec.name == "bioclip2")
    components = {"image_encoder", "text_encoder", "classifier_head"};
  else
    components = {"image_encoder", "classifier_head"};
  std::vector<std::string> out;
  for (const std::string& c : components) {
    bool frozen = false;
    for (const std::string& f : spec.frozen_components)
      if (f == c) frozen = true;
    if (!frozen) out.push_back(c);
  }
  return out;
}

std::vector<nn::Param*> ModelBundle::trainable_params() {
  std::vector<nn::Param*> out;
  for (nn::Param* p : all_params())
    if (p->trainable) out.push_back(p);
  return out;
}

std::uint64_t ModelBundle::param_checksum() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (nn::Param* p : all_params()) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->value.data());
    std::size_t n = p->value.size() * sizeof(float);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

// Small conv net: per block 3x3 conv + ReLU + 2x2 average pool, then global
// average pooling down to the embedding, with a dropout->linear head.
class ConvNetModel : public ModelBundle {
 public:
  ConvNetModel(BackboneSpec spec, std::vector<int> channels, int n_species,
               std::uint64_t init_seed)
      : spec_(std::move(spec)), channels_(std::move(channels)), n_species_(n_species) {
    if (n_species_ <= 0) throw ConfigError("n_species must be positive");
    Rng init(Rng::mix(init_seed ^ 0x746f7079ULL));
    int in_c = 3;
    for (std::size_t i = 0; i < channels_.size(); ++i) {
      encoder_.add(std::make_unique<nn::Conv3x3>("encoder.conv" + std::to_string(i), in_c,
                                                 channels_[i], init));
      encoder_.add(std::make_unique<nn::ReLU>());
      encoder_.add(std::make_unique<nn::AvgPool2>());
      in_c = channels_[i];
    }
    encoder_.add(std::make_unique<nn::GlobalAvgPool>());
    if (in_c != spec_.embedding_dim)
      throw ConfigError("encoder output width does not match embedding_dim");
    head_.add(std::make_unique<nn::Dropout>(spec_.classifier_dropout,
                                            Rng::mix(init_seed ^ 0x64726f70ULL)));
    head_.add(std::make_unique<nn::Linear>("head.fc", spec_.embedding_dim, n_species_, init));
  }

  const BackboneSpec& spec() const override { return spec_; }
  int n_species() const override { return n_species_; }

  ForwardResult forward(const nn::Batch& images, bool train) override {
    if (images.c != 3 || images.h != spec_.input_size || images.w != spec_.input_size)
      throw ConfigError("input batch is " + std::to_string(images.c) + "x" +
                        std::to_string(images.h) + "x" + std::to_string(images.w) +
                        ", expected 3x" + std::to_string(spec_.input_size) + "x" +
                        std::to_string(spec_.input_size));
    embedding_batch_ = encoder_.forward(images, train);
    nn::Batch logits = head_.forward(embedding_batch_, train);
    ForwardResult r;
    r.embeddings = nn::batch_to_matrix(embedding_batch_);
    r.logits = nn::batch_to_matrix(logits);
    for (int i = 0; i < r.logits.size(); ++i)
      if (!std::isfinite(r.logits.data()[i])) throw NumericError("non-finite logits");
    return r;
  }

  void backward(const nn::Matrix& grad_logits, const nn::Matrix* grad_embeddings) override {
    nn::Batch g = head_.backward(nn::matrix_to_batch(grad_logits));
    if (grad_embeddings) {
      Eigen::Map<nn::Matrix> gm(g.data.data(), spec_.embedding_dim, g.n);
      gm += *grad_embeddings;
    }
    encoder_.backward(g);
  }

  std::vector<nn::Param*> all_params() override {
    std::vector<nn::Param*> out = encoder_.params();
    for (nn::Param* p : head_.params()) out.push_back(p);
    return out;
  }

  void save(const std::string& dir, const SpeciesCatalog& catalog) override;

  const std::vector<int>& channels() const { return channels_; }

 private:
  BackboneSpec spec_;
  std::vector<int> channels_;
  int n_species_;
  nn::Sequential encoder_;
  nn::Sequential head_;
  nn::Batch embedding_batch_;
};

void write_weights_blob(const std::string& path, const std::vector<nn::Param*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weights: " + path);
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(0x434e5742);  // "BWNC" magic
  put_u32(static_cast<std::uint32_t>(params.size()));
  for (const nn::Param* p : params) {
    put_u32(static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(static_cast<std::uint32_t>(p->value.rows()));
    put_u32(static_cast<std::uint32_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
}

void read_weights_blob(const std::string& path, const std::vector<nn::Param*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read weights: " + path);
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw FormatError("truncated weights blob: " + path);
    return v;
  };
  if (get_u32() != 0x434e5742) throw FormatError("bad weights blob magic: " + path);
  std::uint32_t count = get_u32();
  std::map<std::string, nn::Param*> by_name;
  for (nn::Param* p : params) by_name[p->name] = p;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = get_u32();
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint32_t rows = get_u32();
    std::uint32_t cols = get_u32();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError(path + ": unknown parameter '" + name + "'");
    nn::Param* p = it->second;
    if (p->value.rows() != static_cast<int>(rows) || p->value.cols() != static_cast<int>(cols))
      throw FormatError(path + ": shape mismatch for '" + name + "'");
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!in) throw FormatError("truncated weights blob: " + path);
  }
}

void ConvNetModel::save(const std::string& dir, const SpeciesCatalog& catalog) {
  fs::create_directories(dir);
  json j;
  j["name"] = spec_.name;
  j["input_size"] = spec_.input_size;
  j["embedding_dim"] = spec_.embedding_dim;
  j["learning_rate"] = spec_.learning_rate;
  j["weight_decay"] = spec_.weight_decay;
  j["classifier_dropout"] = spec_.classifier_dropout;
  j["frozen_components"] = spec_.frozen_components;
  j["head"] = "dropout-linear";
  j["arch"] = {{"family", "convnet"}, {"channels", channels_}};
  j["n_species"] = n_species_;
  std::ofstream spec_out((fs::path(dir) / "spec.json").string());
  if (!spec_out) throw IoError("cannot write checkpoint spec in " + dir);
  spec_out << j.dump(2) << '\n';
  write_weights_blob((fs::path(dir) / "weights.bin").string(), all_params());
  write_catalog(catalog, (fs::path(dir) / "catalog.csv").string());
}

const std::vector<int> kTinyChannels = {16, 32, 48, 64};

}  // namespace

std::unique_ptr<ModelBundle> create_model(const BackboneSpec& spec, int n_species,
                                          std::uint64_t init_seed) {
  spec.validate();
  backbone_spec(spec.name);  // rejects unknown names
  if (spec.name == "tiny_reference")
    return std::make_unique<ConvNetModel>(spec, kTinyChannels, n_species, init_seed);

  // The named backbones are plug-ins: their encoder weights must be supplied
  // as a bundle-format blob exported out of band.
  if (spec.weights_path.empty() || !fs::exists(spec.weights_path))
    throw DependencyError("backbone '" + spec.name + "': pretrained weights not found at '" +
                          spec.weights_path + "'");
  std::ifstream spec_in((fs::path(spec.weights_path) / "spec.json").string());
  if (!spec_in)
    throw DependencyError("backbone '" + spec.name + "': " + spec.weights_path +
                          " has no spec.json");
  json j = json::parse(spec_in, nullptr, false);
  if (j.is_discarded() || j.value("arch", json::object()).value("family", "") != "convnet")
    throw FormatError("backbone '" + spec.name + "': unsupported weights format");
  std::vector<int> channels = j["arch"]["channels"].get<std::vector<int>>();
  auto model = std::make_unique<ConvNetModel>(spec, channels, n_species, init_seed);
  // Encoder comes from the blob; the classification head stays freshly
  // initialized at width n_species.
  std::vector<nn::Param*> encoder_params;
  for (nn::Param* p : model->all_params())
    if (p->name.rfind("encoder.", 0) == 0) encoder_params.push_back(p);
  read_weights_blob((fs::path(spec.weights_path) / "weights.bin").string(), encoder_params);
  return model;
}

std::unique_ptr<ModelBundle> load_checkpoint(const std::string& dir, SpeciesCatalog* catalog) {
  std::ifstream spec_in((fs::path(dir) / "spec.json").string());
  if (!spec_in) throw IoError("checkpoint " + dir + " has no spec.json");
  json j = json::parse(spec_in, nullptr, false);
  if (j.is_discarded()) throw ParseError(dir + "/spec.json: malformed JSON");

  BackboneSpec spec;
  spec.name = j.value("name", "tiny_reference");
  spec.input_size = j.value("input_size", 64);
  spec.embedding_dim = j.value("embedding_dim", 64);
  spec.learning_rate = j.value("learning_rate", 1e-3);
  spec.weight_decay = j.value("weight_decay", 1e-4);
  spec.classifier_dropout = j.value("classifier_dropout", 0.0);
  if (j.contains("frozen_components"))
    spec.frozen_components = j["frozen_components"].get<std::vector<std::string>>();
  std::vector<int> channels = j.at("arch").at("channels").get<std::vector<int>>();
  int n_species = j.at("n_species").get<int>();

  auto model = std::make_unique<ConvNetModel>(spec, channels, n_species, 0);
  read_weights_blob((fs::path(dir) / "weights.bin").string(), model->all_params());
  if (catalog) *catalog = read_catalog((fs::path(dir) / "catalog.csv").string());
  return model;
}

}  // namespace canopy
