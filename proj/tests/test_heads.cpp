#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "mhscreen/errors.hpp"
#include "mhscreen/heads.hpp"

using namespace mhscreen;
namespace fs = std::filesystem;

namespace {

struct Blob {
  RowMatrixXf X;
  std::vector<int> y;
  VectorXf pos_centroid;
  VectorXf neg_centroid;
};

// Two well-separated Gaussian blobs in 8 dimensions, 20 points each.
Blob make_blob(std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.5f);
  Blob b;
  const int n = 40, d = 8;
  b.X.resize(n, d);
  b.y.resize(n);
  b.pos_centroid = VectorXf::Constant(d, 2.0f);
  b.neg_centroid = VectorXf::Constant(d, -2.0f);
  for (int i = 0; i < n; ++i) {
    const bool pos = i < 20;
    b.y[i] = pos ? 1 : 0;
    for (int j = 0; j < d; ++j)
      b.X(i, j) = (pos ? 2.0f : -2.0f) + noise(rng);
  }
  return b;
}

double train_accuracy(const ClassifierHead& head, const Blob& b) {
  int hit = 0;
  for (Eigen::Index i = 0; i < b.X.rows(); ++i)
    if (head.predict(b.X.row(i).transpose()) == b.y[static_cast<std::size_t>(i)])
      ++hit;
  return static_cast<double>(hit) / static_cast<double>(b.X.rows());
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mhscreen_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

HeadConfig cfg_of(const std::string& kind) {
  HeadConfig cfg;
  cfg.kind = kind;
  return cfg;
}

} // namespace

TEST_SUITE("heads") {

TEST_CASE("config validation") {
  CHECK_NOTHROW(HeadConfig{}.validate());
  auto bad = cfg_of("tree-forest");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS((void)make_head(bad), ConfigError);

  auto t = cfg_of("logistic");
  t.threshold = 1.5f;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.threshold = 0.5f;
  t.iters = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);

  for (const auto& kind : {"logistic", "mlp", "gbt"}) {
    const auto head = make_head(cfg_of(kind));
    CHECK(head->kind() == kind);
    CHECK(!head->fitted());
  }
}

TEST_CASE("all kinds separate the blob") {
  const auto b = make_blob();
  for (const auto& kind : {"logistic", "mlp", "gbt"}) {
    CAPTURE(kind);
    auto head = make_head(cfg_of(kind));
    head->fit(b.X, b.y, 11);
    CHECK(head->fitted());
    CHECK(head->input_dim() == 8);
    CHECK(train_accuracy(*head, b) >= 0.95);

    // The centroids land on their own sides of the decision boundary.
    CHECK(head->predict_proba(b.pos_centroid) > 0.5f);
    CHECK(head->predict_proba(b.neg_centroid) < 0.5f);
    CHECK(!head->training_losses().empty());
  }
}

TEST_CASE("fit and predict argument errors") {
  const auto b = make_blob();
  for (const auto& kind : {"logistic", "mlp", "gbt"}) {
    CAPTURE(kind);
    auto head = make_head(cfg_of(kind));

    CHECK_THROWS_AS(head->predict_proba(b.pos_centroid), std::logic_error);

    auto bad_y = b.y;
    bad_y.pop_back();
    CHECK_THROWS_AS(head->fit(b.X, bad_y, 1), std::invalid_argument);

    auto two = bad_y;
    two.resize(b.y.size());
    two[0] = 2;
    CHECK_THROWS_AS(head->fit(b.X, two, 1), std::invalid_argument);

    std::vector<int> ones(static_cast<std::size_t>(b.X.rows()), 1);
    CHECK_THROWS_AS(head->fit(b.X, ones, 1), DataError);

    head->fit(b.X, b.y, 1);
    CHECK_THROWS_AS(head->predict_proba(VectorXf::Zero(3)),
                    std::invalid_argument);
  }
}

TEST_CASE("fits are deterministic in the seed") {
  const auto b = make_blob();
  for (const auto& kind : {"logistic", "mlp", "gbt"}) {
    CAPTURE(kind);
    auto h1 = make_head(cfg_of(kind));
    auto h2 = make_head(cfg_of(kind));
    h1->fit(b.X, b.y, 123);
    h2->fit(b.X, b.y, 123);
    for (Eigen::Index i = 0; i < b.X.rows(); ++i)
      CHECK(h1->predict_proba(b.X.row(i).transpose()) ==
            h2->predict_proba(b.X.row(i).transpose()));
  }

  // The mlp draws its initialization from the seed.
  auto a = make_head(cfg_of("mlp"));
  auto c = make_head(cfg_of("mlp"));
  a->fit(b.X, b.y, 1);
  c->fit(b.X, b.y, 2);
  bool any_diff = false;
  for (Eigen::Index i = 0; i < b.X.rows(); ++i)
    if (a->predict_proba(b.X.row(i).transpose()) !=
        c->predict_proba(b.X.row(i).transpose()))
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("threshold semantics") {
  const auto b = make_blob();
  auto head = make_head(cfg_of("logistic"));
  head->fit(b.X, b.y, 3);

  CHECK_THROWS_AS(head->set_threshold(0.0f), std::invalid_argument);
  CHECK_THROWS_AS(head->set_threshold(1.0f), std::invalid_argument);
  CHECK_THROWS_AS(head->set_threshold(-0.2f), std::invalid_argument);

  // Raising the threshold can only shrink the positive set.
  std::size_t prev = SIZE_MAX;
  for (float t : {0.1f, 0.5f, 0.9f}) {
    head->set_threshold(t);
    CHECK(head->threshold() == t);
    std::size_t positives = 0;
    for (Eigen::Index i = 0; i < b.X.rows(); ++i)
      positives += static_cast<std::size_t>(head->predict(b.X.row(i).transpose()));
    CHECK(positives <= prev);
    prev = positives;
  }

  // Ties go positive: a zero-weight logistic head scores exactly 0.5.
  LogisticHead zero;
  zero.init_joint(4, 0);
  zero.finalize_joint();
  CHECK(zero.predict_proba(VectorXf::Ones(4)) == 0.5f);
  CHECK(zero.predict(VectorXf::Ones(4)) == 1);
}

TEST_CASE("l2 penalty shrinks weights") {
  const auto b = make_blob();
  for (const auto& kind : {"logistic", "mlp"}) {
    CAPTURE(kind);
    std::vector<float> norms;
    for (float l2 : {1e-4f, 1e-1f, 10.0f}) {
      auto cfg = cfg_of(kind);
      cfg.l2 = l2;
      auto head = make_head(cfg);
      head->fit(b.X, b.y, 9);
      if (cfg.kind == "logistic")
        norms.push_back(dynamic_cast<LogisticHead&>(*head).weight_norm());
      else
        norms.push_back(dynamic_cast<MlpHead&>(*head).weight_norm());
    }
    CHECK(norms[0] >= norms[1]);
    CHECK(norms[1] >= norms[2]);
    CHECK(norms[2] < norms[0]); // strictly smaller end to end
  }
}

TEST_CASE("layer norm makes the mlp scale invariant through training") {
  const auto b = make_blob();
  const float scale = 7.3f;
  Blob scaled = b;
  scaled.X *= scale;

  MlpHead h1(cfg_of("mlp"));
  MlpHead h2(cfg_of("mlp"));
  h1.fit(b.X, b.y, 42);
  h2.fit(scaled.X, scaled.y, 42);

  for (Eigen::Index i = 0; i < b.X.rows(); ++i) {
    const VectorXf x = b.X.row(i).transpose();
    const VectorXf a1 = h1.first_layer_activations(x);
    const VectorXf a2 = h2.first_layer_activations(scale * x);
    REQUIRE(a1.size() == a2.size());
    for (Eigen::Index j = 0; j < a1.size(); ++j)
      CHECK(a1[j] == doctest::Approx(a2[j]).epsilon(1e-5));
    CHECK(h1.predict_proba(x) ==
          doctest::Approx(h2.predict_proba(scale * x)).epsilon(1e-4));
    CHECK(h1.predict(x) == h2.predict(scale * x));
  }
}

TEST_CASE("gbt structure and one dimensional splits") {
  HeadConfig cfg = cfg_of("gbt");
  cfg.n_trees = 25;
  GbtHead head(cfg);

  // One feature, clean separation around zero.
  RowMatrixXf X(10, 1);
  std::vector<int> y(10);
  for (int i = 0; i < 10; ++i) {
    const bool pos = i % 2 == 0;
    X(i, 0) = pos ? 1.0f + 0.1f * static_cast<float>(i)
                  : -1.0f - 0.1f * static_cast<float>(i);
    y[static_cast<std::size_t>(i)] = pos ? 1 : 0;
  }
  head.fit(X, y, 0);
  CHECK(head.tree_count() >= 1);
  CHECK(head.tree_count() <= 25);
  for (int i = 0; i < 10; ++i)
    CHECK(head.predict(X.row(i).transpose()) == y[static_cast<std::size_t>(i)]);
  CHECK(head.predict_proba(VectorXf::Constant(1, 3.0f)) > 0.9f);
  CHECK(head.predict_proba(VectorXf::Constant(1, -3.0f)) < 0.1f);

  // Boosting drives the training loss down.
  const auto& losses = head.training_losses();
  REQUIRE(losses.size() >= 2);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("joint training hooks expose parameters and gradients") {
  for (const auto& kind : {"logistic", "mlp"}) {
    CAPTURE(kind);
    auto owned = make_head(cfg_of(kind));
    auto* head = dynamic_cast<DifferentiableHead*>(owned.get());
    REQUIRE(head != nullptr);

    const std::size_t d = 6;
    head->init_joint(d, 77);
    CHECK(!head->fitted());
    CHECK(head->param_count() > 0);
    const auto blocks = head->param_blocks();
    REQUIRE(!blocks.empty());
    std::size_t total = 0;
    for (auto* blk : blocks) total += static_cast<std::size_t>(blk->size());
    CHECK(total == head->param_count());

    std::mt19937_64 rng(4);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    // Random parameters so gradients are informative.
    for (auto* blk : blocks)
      for (Eigen::Index i = 0; i < blk->size(); ++i)
        blk->data()[i] = 0.3f * dist(rng);

    VectorXf x(d);
    for (std::size_t i = 0; i < d; ++i) x[Eigen::Index(i)] = dist(rng);

    std::unique_ptr<HeadTrace> trace;
    const float base = head->logit(x, &trace);
    REQUIRE(trace != nullptr);
    std::vector<RowMatrixXf> grads;
    for (auto* blk : blocks)
      grads.push_back(RowMatrixXf::Zero(blk->rows(), blk->cols()));
    const VectorXf dx = head->backward(*trace, 1.0f, grads);
    REQUIRE(dx.size() == x.size());

    // Central finite differences over a few entries of each block.
    const float eps = 1e-2f;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      auto* blk = blocks[bi];
      const auto n = blk->size();
      for (Eigen::Index k = 0; k < n; k += std::max<Eigen::Index>(1, n / 3)) {
        const float saved = blk->data()[k];
        blk->data()[k] = saved + eps;
        const float up = head->logit(x, nullptr);
        blk->data()[k] = saved - eps;
        const float dn = head->logit(x, nullptr);
        blk->data()[k] = saved;
        const float fd = (up - dn) / (2.0f * eps);
        CHECK(grads[bi].data()[k] ==
              doctest::Approx(fd).epsilon(0.02).scale(0.05));
      }
    }
    for (Eigen::Index k = 0; k < x.size(); k += 2) {
      VectorXf xp = x, xm = x;
      xp[k] += eps;
      xm[k] -= eps;
      const float fd = (head->logit(xp, nullptr) - head->logit(xm, nullptr)) /
                       (2.0f * eps);
      CHECK(dx[k] == doctest::Approx(fd).epsilon(0.02).scale(0.05));
    }

    head->finalize_joint();
    CHECK(head->fitted());
    CHECK(head->predict_proba(x) ==
          doctest::Approx(1.0f / (1.0f + std::exp(-base))).epsilon(1e-5));
  }
}

TEST_CASE("persistence round trips exactly") {
  const auto b = make_blob();
  for (const auto& kind : {"logistic", "mlp", "gbt"}) {
    CAPTURE(kind);
    auto head = make_head(cfg_of(kind));
    head->set_threshold(0.37f);
    head->fit(b.X, b.y, 8);

    const auto dir = fresh_dir(std::string("head_") + kind);
    head->save(dir);
    CHECK(fs::exists(dir / "head.json"));
    CHECK(fs::exists(dir / "params.bin"));

    const auto back = load_head(dir);
    CHECK(back->kind() == kind);
    CHECK(back->fitted());
    CHECK(back->input_dim() == head->input_dim());
    CHECK(back->threshold() == 0.37f);
    for (Eigen::Index i = 0; i < b.X.rows(); ++i)
      CHECK(back->predict_proba(b.X.row(i).transpose()) ==
            head->predict_proba(b.X.row(i).transpose()));
  }
}

TEST_CASE("persistence failure modes") {
  const auto b = make_blob();
  auto head = make_head(cfg_of("mlp"));
  head->fit(b.X, b.y, 8);
  const auto dir = fresh_dir("head_corrupt");
  head->save(dir);

  SUBCASE("truncated parameters") {
    fs::resize_file(dir / "params.bin", 16);
    CHECK_THROWS_AS((void)load_head(dir), DataError);
  }
  SUBCASE("missing parameters") {
    fs::remove(dir / "params.bin");
    CHECK_THROWS_AS((void)load_head(dir), DataError);
  }
  SUBCASE("unknown kind") {
    std::ofstream(dir / "head.json", std::ios::trunc)
        << R"({"kind":"transformer","threshold":0.5})";
    CHECK_THROWS_AS((void)load_head(dir), DataError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS((void)load_head(dir / "nope"), DataError);
  }
}

} // TEST_SUITE
