#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "polygen/models.hpp"
#include "polygen/sequencing.hpp"
#include "test_util.hpp"

using namespace polygen;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.embed_dim = 16;
  c.fc_dim = 24;
  c.vertex_layers = 2;
  c.face_layers = 2;
  c.heads = 2;
  c.dropout = 0.2;
  c.bits = 5;
  c.max_vertices = 40;
  c.max_face_tokens = 200;
  return c;
}

// Replaces every parameter with noise so no output is trivially zero.
template <typename T>
void randomize(ParamStore<T>& store, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (int i = 0; i < store.size(); ++i) {
    for (std::size_t k = 0; k < store.value(i).size(); ++k) store.value(i)[k] = static_cast<T>(n(rng));
  }
}

QuantizedMesh sample_mesh(int bits, std::uint64_t seed, int max_vertices = 8) {
  std::mt19937_64 rng(seed);
  return polygen::testing::random_canonical(rng, bits, max_vertices);
}

double row_sum_softmax(const Tensor<float>& logits, int r) {
  double mx = -1e300, s = 0;
  for (int c = 0; c < logits.cols(); ++c) mx = std::max(mx, double(logits(r, c)));
  for (int c = 0; c < logits.cols(); ++c) s += std::exp(double(logits(r, c)) - mx);
  double total = 0;
  for (int c = 0; c < logits.cols(); ++c) total += std::exp(double(logits(r, c)) - mx) / s;
  return total;
}

}  // namespace

TEST_CASE("model config JSON round trip and validation") {
  ModelConfig c = tiny_config();
  c.condition_mode = ConditionMode::kClass;
  c.num_classes = 3;
  c.use_face_cross_attention = true;
  const ModelConfig back = model_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(model_config_from_json({{"embed_dims", 3}}), std::invalid_argument);
  ModelConfig bad = tiny_config();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config();
  bad.condition_mode = ConditionMode::kClass;
  CHECK_THROWS_AS(VertexModel{bad}, std::invalid_argument);
}

TEST_CASE("face token positions") {
  const std::vector<int> t{2, 3, 4, kNewFaceToken, 2, 4, 5, 6, kStopToken};
  std::vector<int> fi, pos;
  face_token_positions(t, fi, pos);
  CHECK(fi == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1, 1});
  CHECK(pos == std::vector<int>{0, 1, 2, 3, 0, 1, 2, 3, 4});
}

TEST_CASE("vertex model shapes and an untrained model is uniform") {
  const VertexModel model(tiny_config());
  ParamStore<float> store;
  Rng rng(1);
  model.init_params(store, rng);
  const auto q = sample_mesh(5, 2);
  const Tokens tokens = encode_vertices(q);
  Graph<float> g(&store);
  const std::span<const int> prefix(tokens.data(), tokens.size() - 1);
  const Var l = model.logits(g, prefix, std::nullopt);
  CHECK(g.value(l).rows() == static_cast<int>(tokens.size()));
  CHECK(g.value(l).cols() == 33);
  for (int r = 0; r < g.value(l).rows(); ++r) CHECK(row_sum_softmax(g.value(l), r) == doctest::Approx(1.0));
  const Var nll = model.nll(g, tokens, std::nullopt);
  const double bits = g.value(nll)[0] / std::log(2.0);
  CHECK(bits / tokens.size() == doctest::Approx(std::log2(33.0)).epsilon(1e-6));

  // Default alphabet: 257 classes, one vertex (4 tokens with stop) = 4 log2 257.
  ModelConfig full = tiny_config();
  full.bits = 8;
  const VertexModel big(full);
  ParamStore<float> store8;
  big.init_params(store8, rng);
  Graph<float> g8(&store8);
  const std::vector<int> one{1 + 10, 1 + 20, 1 + 30, kStopToken};
  const double per_vertex = g8.value(big.nll(g8, one, std::nullopt))[0] / std::log(2.0) / 1.0;
  CHECK(per_vertex == doctest::Approx(4 * std::log2(257.0)).epsilon(1e-6));
  CHECK(per_vertex == doctest::Approx(32.02).epsilon(1e-3));
}

TEST_CASE("face model shapes and an untrained pointer head is uniform") {
  const FaceModel model(tiny_config());
  ParamStore<float> store;
  Rng rng(3);
  model.init_params(store, rng);
  const auto q = sample_mesh(5, 4);
  const Tokens tokens = encode_faces(q);
  const int nv = static_cast<int>(q.vertices.size());
  Graph<float> g(&store);
  const Var l = model.logits(g, q.vertices, std::span<const int>(tokens).first(tokens.size() - 1),
                             std::nullopt);
  CHECK(g.value(l).rows() == static_cast<int>(tokens.size()));
  CHECK(g.value(l).cols() == nv + 2);
  for (int r = 0; r < g.value(l).rows(); ++r) CHECK(row_sum_softmax(g.value(l), r) == doctest::Approx(1.0));
  const double bits = g.value(model.nll(g, q.vertices, tokens, std::nullopt))[0] / std::log(2.0);
  CHECK(bits / tokens.size() == doctest::Approx(std::log2(nv + 2.0)).epsilon(1e-6));
}

TEST_CASE("zero output projections make a block the identity; zero class embedding is no-op") {
  ModelConfig c = tiny_config();
  ParamStore<double> store;
  {
    ParamStore<float> f;
    Rng rng(5);
    add_block_params(f, "b/", c.embed_dim, c.fc_dim, true, false, rng);
    f.add("class", Tensor<float>(1, c.embed_dim));
    store = f.cast<double>();
  }
  randomize(store, 6);
  std::mt19937_64 rng(7);
  const auto h0 = polygen::testing::random_tensor(5, c.embed_dim, rng);

  Graph<double> g1(&store), g2(&store);
  BlockContext<double> plain;
  plain.heads = c.heads;
  plain.causal = true;
  BlockContext<double> cond = plain;
  store.value(store.index("class")).fill(0.0);
  cond.cond = g2.param("class");
  const Var a = transformer_block(g1, g1.input(h0), "b/", plain);
  const Var b = transformer_block(g2, g2.input(h0), "b/", cond);
  CHECK(g1.value(a) == g2.value(b));

  for (const char* n : {"b/wo", "b/bo", "b/fc2_w", "b/fc2_b"}) store.value(store.index(n)).fill(0.0);
  Graph<double> g3(&store);
  const Var y = transformer_block(g3, g3.input(h0), "b/", plain);
  CHECK(g3.value(y) == h0);
}

TEST_CASE("both models are causal at every position") {
  const ModelConfig c = tiny_config();
  const VertexModel vm(c);
  const FaceModel fm(c);
  ParamStore<double> store;
  {
    ParamStore<float> f;
    Rng rng(8);
    vm.init_params(f, rng);
    fm.init_params(f, rng);
    store = f.cast<double>();
  }
  randomize(store, 9);
  const auto q = sample_mesh(5, 10);
  const Tokens vt = encode_vertices(q);
  const Tokens ft = encode_faces(q);
  Graph<double> base(&store);
  const Tensor<double> v0 = base.value(vm.logits(base, vt, std::nullopt));
  const Tensor<double> f0 = base.value(fm.logits(base, q.vertices, ft, std::nullopt));
  for (std::size_t j = 0; j < vt.size(); ++j) {
    Tokens t = vt;
    t[j] = (t[j] + 7) % 33;
    Graph<double> g(&store);
    const Tensor<double> v = g.value(vm.logits(g, t, std::nullopt));
    for (int r = 0; r <= static_cast<int>(j); ++r) {
      for (int col = 0; col < v.cols(); ++col) CHECK(v(r, col) == doctest::Approx(v0(r, col)).epsilon(1e-13));
    }
    bool changed = false;
    for (int col = 0; col < v.cols(); ++col) changed = changed || v(j + 1, col) != v0(j + 1, col);
    CHECK(changed);
  }
  const int nv = static_cast<int>(q.vertices.size());
  for (std::size_t j = 0; j < ft.size(); ++j) {
    Tokens t = ft;
    t[j] = (t[j] + 1) % (nv + 2);
    Graph<double> g(&store);
    const Tensor<double> f = g.value(fm.logits(g, q.vertices, t, std::nullopt));
    for (int r = 0; r <= static_cast<int>(j); ++r) {
      for (int col = 0; col < f.cols(); ++col) CHECK(f(r, col) == doctest::Approx(f0(r, col)).epsilon(1e-13));
    }
  }
}

TEST_CASE("face logits depend on vertex order and on each vertex") {
  const ModelConfig c = tiny_config();
  const FaceModel fm(c);
  ParamStore<double> store;
  {
    ParamStore<float> f;
    Rng rng(11);
    fm.init_params(f, rng);
    store = f.cast<double>();
  }
  randomize(store, 12);
  const auto q = sample_mesh(5, 13);
  const Tokens ft = encode_faces(q);
  Graph<double> g0(&store);
  const Tensor<double> base = g0.value(fm.logits(g0, q.vertices, ft, std::nullopt));
  auto swapped = q.vertices;
  std::swap(swapped[0], swapped[1]);
  Graph<double> g1(&store);
  CHECK_FALSE(g1.value(fm.logits(g1, swapped, ft, std::nullopt)) == base);
  for (std::size_t k = 0; k < q.vertices.size(); ++k) {
    auto moved = q.vertices;
    moved[k].x = (moved[k].x + 5) % 32;
    Graph<double> g(&store);
    const Tensor<double> l = g.value(fm.logits(g, moved, ft, std::nullopt));
    bool column_changed = false;
    for (int r = 0; r < l.rows(); ++r) column_changed = column_changed || l(r, k + 2) != base(r, k + 2);
    CHECK(column_changed);
  }
}

TEST_CASE("full losses pass finite differences at 64-bit") {
  for (bool conditioned : {false, true}) {
    ModelConfig c = tiny_config();
    c.use_face_cross_attention = conditioned;
    if (conditioned) {
      c.condition_mode = ConditionMode::kClass;
      c.num_classes = 3;
    }
    const VertexModel vm(c);
    const FaceModel fm(c);
    ParamStore<double> store;
    {
      ParamStore<float> f;
      Rng rng(14);
      vm.init_params(f, rng);
      fm.init_params(f, rng);
      store = f.cast<double>();
    }
    randomize(store, 15, 0.2);
    const auto q = sample_mesh(5, 16);
    const Tokens vt = encode_vertices(q);
    const Tokens ft = encode_faces(q);
    const std::optional<int> cls = conditioned ? std::optional<int>(2) : std::nullopt;

    for (int which = 0; which < 2; ++which) {
      auto loss = [&](std::vector<Tensor<double>>* grads) {
        Graph<double> g(&store);
        Rng drop(77);
        ForwardOptions opt;
        opt.train = true;
        opt.rng = &drop;
        const Var l = which == 0 ? vm.nll(g, vt, cls, opt) : fm.nll(g, q.vertices, ft, cls, opt);
        if (grads != nullptr) {
          g.backward(l);
          *grads = store.zeros_like();
          g.accumulate_param_grads(*grads);
        }
        return g.value(l)[0];
      };
      std::vector<Tensor<double>> grads;
      loss(&grads);
      // Sample coordinates among parameters this model actually uses.
      std::vector<std::pair<int, std::size_t>> coords;
      std::mt19937_64 rng(17 + which);
      const std::string prefix = which == 0 ? "vertex/" : "face/";
      std::vector<int> used;
      for (int i = 0; i < store.size(); ++i) {
        if (store.name(i).rfind(prefix, 0) == 0) used.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> pick(0, used.size() - 1);
      double worst = 0;
      int checked = 0;
      int nonzero = 0;
      while (checked < 40) {
        const int p = used[pick(rng)];
        const std::size_t k = std::uniform_int_distribution<std::size_t>(0, store.value(p).size() - 1)(rng);
        const double keep = store.value(p)[k];
        const double h = 1e-6;
        store.value(p)[k] = keep + h;
        const double up = loss(nullptr);
        store.value(p)[k] = keep - h;
        const double down = loss(nullptr);
        store.value(p)[k] = keep;
        const double numeric = (up - down) / (2 * h);
        worst = std::max(worst, polygen::testing::rel_error(grads[p][k], numeric));
        nonzero += grads[p][k] != 0.0;
        ++checked;
      }
      CAPTURE(which);
      CAPTURE(conditioned);
      CHECK(worst < 1e-4);
      CHECK(nonzero >= 20);
    }
  }
}

TEST_CASE("incremental decoders match the graph forward pass") {
  for (int variant = 0; variant < 3; ++variant) {
    ModelConfig c = tiny_config();
    if (variant >= 1) {
      c.condition_mode = ConditionMode::kClass;
      c.num_classes = 2;
    }
    c.use_face_cross_attention = variant == 2;
    const VertexModel vm(c);
    const FaceModel fm(c);
    ParamStore<float> store;
    Rng rng(18);
    vm.init_params(store, rng);
    fm.init_params(store, rng);
    randomize(store, 19);
    const std::optional<int> cls = c.conditioned() ? std::optional<int>(1) : std::nullopt;
    const auto q = sample_mesh(5, 20 + variant);
    const Tokens vt = encode_vertices(q);
    const Tokens ft = encode_faces(q);

    Graph<float> g(&store);
    const Tensor<float> vl = g.value(vm.logits(g, std::span<const int>(vt).first(vt.size() - 1), cls));
    VertexDecoder vd(vm, store, cls);
    for (std::size_t t = 0; t < vt.size(); ++t) {
      for (int col = 0; col < vl.cols(); ++col) {
        CHECK(vd.logits()[col] == doctest::Approx(vl(static_cast<int>(t), col)).epsilon(1e-4).scale(1.0));
      }
      if (t + 1 < vt.size()) vd.push(vt[t]);
    }
    CHECK(vd.length() == static_cast<int>(vt.size()) - 1);

    const Tensor<float> fl = g.value(fm.logits(g, q.vertices, std::span<const int>(ft).first(ft.size() - 1), cls));
    FaceDecoder fd(fm, store, q.vertices, cls);
    for (std::size_t t = 0; t < ft.size(); ++t) {
      for (int col = 0; col < fl.cols(); ++col) {
        CHECK(fd.logits()[col] == doctest::Approx(fl(static_cast<int>(t), col)).epsilon(1e-4).scale(1.0));
      }
      if (t + 1 < ft.size()) fd.push(ft[t]);
    }
  }
}

TEST_CASE("class embedding receives gradient and separates classes after a step") {
  ModelConfig c = tiny_config();
  c.condition_mode = ConditionMode::kClass;
  c.num_classes = 2;
  const VertexModel vm(c);
  ParamStore<float> store;
  Rng rng(21);
  vm.init_params(store, rng);
  const auto q = sample_mesh(5, 22);
  const Tokens vt = encode_vertices(q);
  auto logits_for = [&](int cls) {
    Graph<float> g(&store);
    return g.value(vm.logits(g, vt, cls));
  };
  CHECK(logits_for(0) == logits_for(1));  // zero output projection
  Graph<float> g(&store);
  g.backward(vm.nll(g, vt, 0));
  auto grads = store.zeros_like();
  g.accumulate_param_grads(grads);
  adam_step(store, grads, 1e-2);
  // The output projection moved, so now the class rows matter.
  Graph<float> g2(&store);
  g2.backward(vm.nll(g2, vt, 0));
  grads = store.zeros_like();
  g2.accumulate_param_grads(grads);
  const auto& cg = grads[store.index("vertex/class_emb")];
  double norm0 = 0, norm1 = 0;
  for (int k = 0; k < cg.cols(); ++k) {
    norm0 += std::abs(cg(0, k));
    norm1 += std::abs(cg(1, k));
  }
  CHECK(norm0 > 0);
  CHECK(norm1 == 0);
  adam_step(store, grads, 1e-2);
  CHECK_FALSE(logits_for(0) == logits_for(1));
  CHECK_THROWS_AS(logits_for(2), std::out_of_range);
  Graph<float> g3(&store);
  CHECK_THROWS_AS(vm.logits(g3, vt, std::nullopt), std::invalid_argument);
}

TEST_CASE("logits stay finite across random configurations") {
  std::mt19937_64 rng(23);
  int configs = 0;
  while (configs < 1000) {
    ModelConfig c;
    c.heads = std::uniform_int_distribution<int>(1, 3)(rng);
    c.embed_dim = c.heads * std::uniform_int_distribution<int>(1, 4)(rng);
    c.fc_dim = std::uniform_int_distribution<int>(1, 12)(rng);
    c.vertex_layers = std::uniform_int_distribution<int>(0, 2)(rng);
    c.face_layers = std::uniform_int_distribution<int>(0, 2)(rng);
    c.bits = std::uniform_int_distribution<int>(2, 8)(rng);
    c.max_vertices = 12;
    c.max_face_tokens = 120;
    c.use_face_cross_attention = rng() & 1;
    if (rng() & 1) {
      c.condition_mode = ConditionMode::kClass;
      c.num_classes = 3;
    }
    const VertexModel vm(c);
    const FaceModel fm(c);
    ParamStore<float> store;
    Rng init(rng());
    vm.init_params(store, init);
    fm.init_params(store, init);
    randomize(store, rng(), 1.0);
    const auto q = sample_mesh(c.bits, rng(), 10);
    const std::optional<int> cls = c.conditioned() ? std::optional<int>(static_cast<int>(rng() % 3)) : std::nullopt;
    Graph<float> g(&store);
    const Tensor<float> vl = g.value(vm.logits(g, encode_vertices(q), cls));
    const Tensor<float> fl = g.value(fm.logits(g, q.vertices, encode_faces(q), cls));
    bool finite = true;
    for (std::size_t i = 0; i < vl.size(); ++i) finite = finite && std::isfinite(vl[i]);
    for (std::size_t i = 0; i < fl.size(); ++i) finite = finite && std::isfinite(fl[i]);
    REQUIRE(finite);
    ++configs;
  }
  CHECK(configs == 1000);
}

TEST_CASE("over-long prefixes and out-of-range tokens are rejected") {
  ModelConfig c = tiny_config();
  c.max_vertices = 3;
  const VertexModel vm(c);
  const FaceModel fm(c);
  ParamStore<float> store;
  Rng rng(24);
  vm.init_params(store, rng);
  fm.init_params(store, rng);
  Graph<float> g(&store);
  CHECK_THROWS_AS(vm.logits(g, std::vector<int>(10, 1), std::nullopt), std::length_error);
  CHECK_THROWS_AS(vm.logits(g, std::vector<int>{40}, std::nullopt), std::out_of_range);
  const std::vector<QVertex> vs{{0, 0, 0}, {0, 0, 1}, {0, 1, 0}};
  CHECK_THROWS_AS(fm.logits(g, vs, std::vector<int>{5}, std::nullopt), std::out_of_range);
}
