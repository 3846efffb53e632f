#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "canopy/backbones.hpp"
#include "canopy/errors.hpp"
#include "canopy/nn.hpp"
#include "canopy/rng.hpp"
#include "test_fixtures.hpp"

using namespace canopy;
namespace fs = std::filesystem;

namespace {

BackboneSpec desk_spec(int input_size = 32) {
  BackboneSpec s = backbone_spec("tiny_reference");
  s.input_size = input_size;
  return s;
}

nn::Batch random_batch(int n, int c, int size, std::uint64_t seed) {
  nn::Batch b = nn::Batch::zeros(n, c, size, size);
  Rng rng(seed);
  for (float& v : b.data) v = static_cast<float>(rng.next_double() * 2.0 - 1.0);
  return b;
}

// Mirror of the checkpoint blob layout, so tests can fabricate encoder-only
// bundles for the plug-in backbones.
void write_blob(const std::string& path, const std::vector<nn::Param*>& params) {
  std::ofstream out(path, std::ios::binary);
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(0x434e5742);
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

double model_loss(ModelBundle& model, const nn::Batch& images, const std::vector<int>& labels) {
  ForwardResult r = model.forward(images, /*train=*/false);
  return nn::softmax_cross_entropy(r.logits, labels).loss;
}

}  // namespace

TEST_CASE("registry pins the published fine-tuning recipes") {
  BackboneSpec r = backbone_spec("resnet50");
  CHECK(r.input_size == 224);
  CHECK(r.embedding_dim == 2048);
  CHECK(r.learning_rate == doctest::Approx(1e-4));
  CHECK(r.weight_decay == doctest::Approx(1e-4));
  CHECK(r.classifier_dropout == doctest::Approx(0.0));

  BackboneSpec d = backbone_spec("dinov3");
  CHECK(d.input_size == 512);
  CHECK(d.embedding_dim == 768);
  CHECK(d.learning_rate == doctest::Approx(1e-4));
  CHECK(d.classifier_dropout == doctest::Approx(0.1));

  BackboneSpec b = backbone_spec("bioclip2");
  CHECK(b.input_size == 224);
  CHECK(b.embedding_dim == 768);
  CHECK(b.learning_rate == doctest::Approx(5e-5));
  CHECK(b.weight_decay == doctest::Approx(0.0));
  REQUIRE(b.frozen_components.size() == 1);
  CHECK(b.frozen_components[0] == "text_encoder");

  BackboneSpec p = backbone_spec("plantnet");
  CHECK(p.input_size == 518);
  CHECK(p.embedding_dim == 768);
  CHECK(p.learning_rate == doctest::Approx(6e-6));
  CHECK(p.weight_decay == doctest::Approx(1e-4));
  CHECK(p.classifier_dropout == doctest::Approx(0.1));

  BackboneSpec t = backbone_spec("tiny_reference");
  CHECK(t.input_size == 64);
  CHECK(t.embedding_dim == 64);
  CHECK(t.learning_rate == doctest::Approx(1e-3));

  CHECK(backbone_names().size() == 5);
  CHECK_THROWS_AS(backbone_spec("resnet51"), ConfigError);
}

TEST_CASE("trainable inventory respects frozen components") {
  auto tiny = trainable_inventory(backbone_spec("tiny_reference"));
  CHECK(tiny == std::vector<std::string>{"encoder", "head"});

  auto resnet = trainable_inventory(backbone_spec("resnet50"));
  CHECK(resnet == std::vector<std::string>{"image_encoder", "classifier_head"});

  // bioclip2 ships a text tower, but it stays frozen during fine-tuning.
  auto clip = trainable_inventory(backbone_spec("bioclip2"));
  CHECK(clip == std::vector<std::string>{"image_encoder", "classifier_head"});

  BackboneSpec thawed = backbone_spec("bioclip2");
  thawed.frozen_components.clear();
  CHECK(trainable_inventory(thawed).size() == 3);
}

TEST_CASE("spec validation") {
  BackboneSpec s = backbone_spec("tiny_reference");
  CHECK_NOTHROW(s.validate());
  s.classifier_dropout = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = backbone_spec("tiny_reference");
  s.learning_rate = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("softmax cross entropy matches hand math") {
  // Uniform logits: loss is ln(k), probs are 1/k.
  nn::Matrix logits = nn::Matrix::Zero(4, 3);
  auto r = nn::softmax_cross_entropy(logits, {0, 1, 3});
  CHECK(r.loss == doctest::Approx(std::log(4.0)));
  for (int j = 0; j < 3; ++j) {
    CHECK(r.probs.col(j).sum() == doctest::Approx(1.0));
    CHECK(r.probs(0, j) == doctest::Approx(0.25));
  }
  // grad = (p - onehot) / n
  CHECK(r.grad_logits(0, 0) == doctest::Approx((0.25 - 1.0) / 3.0));
  CHECK(r.grad_logits(1, 0) == doctest::Approx(0.25 / 3.0));

  // Shift invariance per column.
  nn::Matrix shifted = logits;
  shifted.col(1).array() += 100.0f;
  auto r2 = nn::softmax_cross_entropy(shifted, {0, 1, 3});
  CHECK(r2.loss == doctest::Approx(r.loss));
  CHECK((r2.probs - r.probs).cwiseAbs().maxCoeff() < 1e-6f);

  CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, {0, 1}), ConfigError);
  CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, {0, 1, 4}), ConfigError);
}

TEST_CASE("adamw first step and decoupled decay") {
  nn::Param p;
  p.name = "w";
  p.value = nn::Matrix::Constant(1, 1, 2.0f);
  p.zero_grad();
  nn::AdamW opt({&p}, /*lr=*/0.1, /*weight_decay=*/0.0);
  p.grad(0, 0) = 0.5f;
  opt.step();
  // Bias-corrected first step collapses to lr * g / (|g| + eps).
  CHECK(p.value(0, 0) == doctest::Approx(1.9).epsilon(1e-5));

  // With zero gradient, only the decoupled decay moves the weight.
  nn::Param q;
  q.name = "w2";
  q.value = nn::Matrix::Constant(1, 1, 2.0f);
  q.zero_grad();
  nn::AdamW opt2({&q}, 0.1, 0.01);
  opt2.step();
  CHECK(q.value(0, 0) == doctest::Approx(2.0 * (1.0 - 0.1 * 0.01)));

  // Frozen params are untouched.
  nn::Param frozen;
  frozen.name = "f";
  frozen.value = nn::Matrix::Constant(1, 1, 3.0f);
  frozen.trainable = false;
  frozen.zero_grad();
  frozen.grad(0, 0) = 1.0f;
  nn::AdamW opt3({&frozen}, 0.1, 0.1);
  opt3.step();
  CHECK(frozen.value(0, 0) == 3.0f);
}

TEST_CASE("model shape contract and input validation") {
  auto model = create_model(desk_spec(32), 5, 7);
  nn::Batch batch = random_batch(4, 3, 32, 100);
  ForwardResult r = model->forward(batch, false);
  CHECK(r.logits.rows() == 5);
  CHECK(r.logits.cols() == 4);
  CHECK(r.embeddings.rows() == 64);
  CHECK(r.embeddings.cols() == 4);

  nn::Batch wrong = random_batch(2, 3, 16, 100);
  CHECK_THROWS_AS(model->forward(wrong, false), ConfigError);
}

TEST_CASE("all-black input produces finite logits") {
  auto model = create_model(desk_spec(32), 4, 3);
  nn::Batch black = nn::Batch::zeros(2, 3, 32, 32);
  ForwardResult r = model->forward(black, false);
  for (int i = 0; i < r.logits.size(); ++i) CHECK(std::isfinite(r.logits.data()[i]));
}

TEST_CASE("batch size does not change per-sample outputs") {
  auto model = create_model(desk_spec(32), 5, 21);
  nn::Batch batch = random_batch(8, 3, 32, 55);
  ForwardResult all = model->forward(batch, false);
  for (int i = 0; i < 8; ++i) {
    nn::Batch one = nn::Batch::zeros(1, 3, 32, 32);
    std::copy(batch.sample(i), batch.sample(i) + batch.sample_stride(), one.sample(0));
    ForwardResult single = model->forward(one, false);
    CHECK((single.logits.col(0) - all.logits.col(i)).cwiseAbs().maxCoeff() < 1e-4f);
  }
}

TEST_CASE("fresh head starts near the uniform-guess loss") {
  auto model = create_model(desk_spec(32), 5, 13);
  nn::Batch batch = random_batch(6, 3, 32, 77);
  double loss = model_loss(*model, batch, {0, 1, 2, 3, 4, 0});
  CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(0.3));
}

TEST_CASE("gradient flows to every trainable parameter") {
  auto model = create_model(desk_spec(16), 3, 5);
  nn::Batch batch = random_batch(3, 3, 16, 9);
  for (nn::Param* p : model->all_params()) p->zero_grad();
  ForwardResult r = model->forward(batch, true);
  auto ce = nn::softmax_cross_entropy(r.logits, {0, 1, 2});
  model->backward(ce.grad_logits);
  for (nn::Param* p : model->trainable_params()) {
    INFO(p->name);
    CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0f);
  }
}

TEST_CASE("analytic gradients agree with finite differences") {
  auto model = create_model(desk_spec(16), 3, 5);
  nn::Batch batch = random_batch(2, 3, 16, 31);
  std::vector<int> labels{0, 2};

  for (nn::Param* p : model->all_params()) p->zero_grad();
  ForwardResult r = model->forward(batch, false);
  auto ce = nn::softmax_cross_entropy(r.logits, labels);
  model->backward(ce.grad_logits);

  Rng pick(404);
  for (nn::Param* p : model->all_params()) {
    for (int probe = 0; probe < 4; ++probe) {
      int idx = static_cast<int>(pick.next_below(static_cast<std::uint64_t>(p->value.size())));
      const float eps = 1e-2f;
      float saved = p->value.data()[idx];
      p->value.data()[idx] = saved + eps;
      double up = model_loss(*model, batch, labels);
      p->value.data()[idx] = saved - eps;
      double down = model_loss(*model, batch, labels);
      p->value.data()[idx] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double analytic = p->grad.data()[idx];
      INFO(p->name << "[" << idx << "] numeric=" << numeric << " analytic=" << analytic);
      CHECK(std::abs(numeric - analytic) <=
            1e-3 + 0.05 * std::max(std::abs(numeric), std::abs(analytic)));
    }
  }
}

TEST_CASE("the model can fit a two-class toy problem") {
  auto model = create_model(desk_spec(16), 2, 1);
  // Class 0 tiles are warm, class 1 tiles are cool, plus noise.
  Rng rng(6);
  nn::Batch batch = nn::Batch::zeros(8, 3, 16, 16);
  std::vector<int> labels(8);
  for (int i = 0; i < 8; ++i) {
    labels[i] = i % 2;
    float* px = batch.sample(i);
    std::size_t plane = 16 * 16;
    for (std::size_t j = 0; j < plane; ++j) {
      float noise = static_cast<float>(rng.next_double() * 0.1);
      px[j] = (labels[i] == 0 ? 0.9f : 0.1f) + noise;
      px[plane + j] = 0.4f + noise;
      px[2 * plane + j] = (labels[i] == 0 ? 0.1f : 0.9f) + noise;
    }
  }
  nn::AdamW opt(model->trainable_params(), 3e-3, 0.0);
  double first_loss = 0.0, last_loss = 0.0;
  for (int step = 0; step < 60; ++step) {
    opt.zero_grad();
    ForwardResult r = model->forward(batch, true);
    auto ce = nn::softmax_cross_entropy(r.logits, labels);
    model->backward(ce.grad_logits);
    opt.step();
    if (step == 0) first_loss = ce.loss;
    last_loss = ce.loss;
  }
  CHECK(first_loss == doctest::Approx(std::log(2.0)).epsilon(0.5));
  CHECK(last_loss < 0.05);

  ForwardResult r = model->forward(batch, false);
  for (int i = 0; i < 8; ++i) {
    int argmax = 0;
    r.logits.col(i).maxCoeff(&argmax);
    CHECK(argmax == labels[i]);
  }
}

TEST_CASE("param checksum tracks weight changes") {
  auto model = create_model(desk_spec(16), 3, 5);
  std::uint64_t before = model->param_checksum();
  CHECK(model->param_checksum() == before);
  model->all_params()[0]->value(0, 0) += 1.0f;
  CHECK(model->param_checksum() != before);
}

TEST_CASE("checkpoint round trip reproduces the model exactly") {
  std::string dir = canopy::testing::fresh_temp_dir("ckpt");
  auto model = create_model(desk_spec(16), 3, 5);
  SpeciesCatalog catalog = canopy::testing::balanced_catalog(3, 12);
  model->save(dir, catalog);

  SpeciesCatalog back_catalog;
  auto back = load_checkpoint(dir, &back_catalog);
  CHECK(back->spec().name == "tiny_reference");
  CHECK(back->spec().input_size == 16);
  CHECK(back->n_species() == 3);
  CHECK(back->param_checksum() == model->param_checksum());
  CHECK(back_catalog.n_species() == 3);

  nn::Batch batch = random_batch(3, 3, 16, 61);
  ForwardResult a = model->forward(batch, false);
  ForwardResult b = back->forward(batch, false);
  CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() == 0.0f);

  CHECK_THROWS_AS(load_checkpoint(dir + "/nope"), IoError);
}

TEST_CASE("named backbones require a weights bundle") {
  BackboneSpec s = backbone_spec("resnet50");
  CHECK_THROWS_AS(create_model(s, 5, 0), DependencyError);
  s.weights_path = "/nonexistent/resnet50";
  CHECK_THROWS_AS(create_model(s, 5, 0), DependencyError);
}

TEST_CASE("a named backbone loads its encoder from a bundle, head stays fresh") {
  // Fabricate a convnet bundle from a donor desk-scale model.
  auto donor = create_model(desk_spec(32), 7, 99);
  std::string bundle = canopy::testing::fresh_temp_dir("bundle");
  std::vector<nn::Param*> encoder_params;
  for (nn::Param* p : donor->all_params())
    if (p->name.rfind("encoder.", 0) == 0) encoder_params.push_back(p);
  REQUIRE(!encoder_params.empty());
  write_blob(bundle + "/weights.bin", encoder_params);
  {
    std::ofstream spec_out(bundle + "/spec.json");
    spec_out << R"({"arch": {"family": "convnet", "channels": [16, 32, 48, 64]}})" << '\n';
  }

  BackboneSpec s = backbone_spec("resnet50");
  s.input_size = 32;
  s.embedding_dim = 64;  // bundle-scale stand-in
  s.weights_path = bundle;
  auto model = create_model(s, 4, 1);
  CHECK(model->spec().name == "resnet50");
  CHECK(model->n_species() == 4);

  // Encoder weights are bit-identical to the donor; the head is new.
  auto donor_params = donor->all_params();
  auto loaded_params = model->all_params();
  REQUIRE(donor_params.size() == loaded_params.size());
  for (std::size_t i = 0; i < loaded_params.size(); ++i) {
    if (loaded_params[i]->name.rfind("encoder.", 0) == 0) {
      INFO(loaded_params[i]->name);
      CHECK(loaded_params[i]->value == donor_params[i]->value);
    }
  }

  nn::Batch batch = random_batch(2, 3, 32, 8);
  ForwardResult r = model->forward(batch, false);
  CHECK(r.logits.rows() == 4);

  // A bundle with an unsupported family is rejected.
  {
    std::ofstream spec_out(bundle + "/spec.json");
    spec_out << R"({"arch": {"family": "vit"}})" << '\n';
  }
  CHECK_THROWS_AS(create_model(s, 4, 1), FormatError);
}
