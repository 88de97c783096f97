#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "polygen/augment.hpp"
#include "polygen/corpus.hpp"
#include "polygen/primitives.hpp"
#include "polygen/sequencing.hpp"

using namespace polygen;
namespace fs = std::filesystem;

namespace {

double surface_area(const Mesh& m) {
  double a = 0.0;
  for (const Face& f : m.faces) a += 0.5 * norm(polygon_normal(m, f));
  return a;
}

double diagonal(const Mesh& m) {
  Vec3 lo = m.vertices[0], hi = m.vertices[0];
  for (const Vec3& v : m.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  return norm(hi - lo);
}

std::set<int> covered(const Mesh& m) {
  std::set<int> s;
  for (const Face& f : m.faces) s.insert(f.begin(), f.end());
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("polygen_synth_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("axis_scale with a degenerate interval only re-normalizes") {
  Rng rng(3);
  const Mesh box = normalize(triangulated_box({0, 0, 0}, {1, 2, 3}));
  AugmentConfig cfg;
  cfg.scale_lo = cfg.scale_hi = 1.0;
  const Mesh out = axis_scale(box, rng, cfg);
  for (std::size_t i = 0; i < box.vertices.size(); ++i) {
    CHECK(out.vertices[i].x == doctest::Approx(box.vertices[i].x).epsilon(1e-12));
    CHECK(out.vertices[i].y == doctest::Approx(box.vertices[i].y).epsilon(1e-12));
    CHECK(out.vertices[i].z == doctest::Approx(box.vertices[i].z).epsilon(1e-12));
  }
}

TEST_CASE("axis_scale draws reproduce and keep a unit diagonal") {
  const Mesh box = normalize(triangulated_box({0, 0, 0}, {1, 0.5, 0.25}));
  AugmentConfig cfg;
  for (int seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    std::array<double, 3> da{}, db{};
    const Mesh ma = axis_scale(box, a, cfg, &da);
    const Mesh mb = axis_scale(box, b, cfg, &db);
    CHECK(da == db);
    for (double d : da) CHECK((d >= cfg.scale_lo && d <= cfg.scale_hi));
    CHECK(ma.vertices == mb.vertices);
    CHECK(diagonal(ma) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ma.faces == box.faces);
  }
  // Ratio of extents follows the recorded draws.
  Rng rng(11);
  std::array<double, 3> d{};
  const Mesh m = axis_scale(box, rng, cfg, &d);
  const double ex0 = box.vertices[1].x - box.vertices[0].x;
  const double ey0 = box.vertices[2].y - box.vertices[1].y;
  const double ex1 = m.vertices[1].x - m.vertices[0].x;
  const double ey1 = m.vertices[2].y - m.vertices[1].y;
  CHECK(ex1 / ey1 == doctest::Approx((ex0 * d[0]) / (ey0 * d[1])).epsilon(1e-12));
}

TEST_CASE("warp with equal gradients is the identity") {
  const auto w = PiecewiseWarp::from_gradients({2.0, 2.0, 2.0, 2.0, 2.0});
  const auto s = PiecewiseWarp::symmetric_from_gradients({0.7, 0.7, 0.7});
  for (double t = 0.0; t <= 1.0; t += 0.01) {
    CHECK(w(t) == doctest::Approx(t).epsilon(1e-12));
    CHECK(s(t) == doctest::Approx(t).epsilon(1e-12));
  }
}

TEST_CASE("warps are monotone, pinned, and the symmetric form is odd about 0.5") {
  Rng rng(5);
  std::lognormal_distribution<double> g(0.0, std::sqrt(0.5));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> five(5), three(3);
    for (double& x : five) x = g(rng);
    for (double& x : three) x = g(rng);
    const auto w = PiecewiseWarp::from_gradients(five);
    const auto s = PiecewiseWarp::symmetric_from_gradients(three);
    CHECK(w(0.0) == doctest::Approx(0.0));
    CHECK(w(1.0) == doctest::Approx(1.0));
    CHECK(s(0.5) == doctest::Approx(0.5));
    double prev_w = -1, prev_s = -1;
    for (int i = 0; i <= 200; ++i) {
      const double t = i / 200.0;
      CHECK(w(t) > prev_w);
      CHECK(s(t) > prev_s);
      prev_w = w(t);
      prev_s = s(t);
      const double x = t - 0.5;
      CHECK(s(x + 0.5) - 0.5 == doctest::Approx(-(s(-x + 0.5) - 0.5)).epsilon(1e-12));
    }
  }
}

TEST_CASE("piecewise_warp preserves topology and per-axis order") {
  Rng shape(1);
  const Mesh base = normalize(make_primitive({"t", PrimitiveFamily::kTable}, shape));
  AugmentConfig cfg;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Mesh out = piecewise_warp(base, rng, cfg);
    REQUIRE(out.vertices.size() == base.vertices.size());
    CHECK(out.faces == base.faces);
    CHECK(diagonal(out) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < base.vertices.size(); ++i) {
      for (std::size_t j = 0; j < base.vertices.size(); ++j) {
        if (base.vertices[i].x < base.vertices[j].x) CHECK(out.vertices[i].x < out.vertices[j].x);
        if (base.vertices[i].z < base.vertices[j].z) CHECK(out.vertices[i].z < out.vertices[j].z);
      }
    }
  }
}

TEST_CASE("planar_decimate merges two coplanar triangles into a quad") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  DecimateReport report;
  const Mesh out = planar_decimate(m, 1.0, &report);
  REQUIRE(out.faces.size() == 1);
  CHECK(out.faces[0].size() == 4);
  CHECK(covered(out) == std::set<int>{0, 1, 2, 3});
  CHECK(report.merges == 1);
  CHECK(surface_area(out) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("planar_decimate turns a triangulated cube into six quads") {
  const Mesh cube = triangulated_box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5});
  REQUIRE(cube.faces.size() == 12);
  const Mesh out = planar_decimate(cube, 1.0);
  REQUIRE(out.faces.size() == 6);
  std::set<std::set<int>> quads;
  for (const Face& f : out.faces) {
    CHECK(f.size() == 4);
    quads.insert(std::set<int>(f.begin(), f.end()));
    // Each merged face lies on one axis plane.
    const Vec3 n = polygon_normal(out, f);
    CHECK(std::abs(n.x) + std::abs(n.y) + std::abs(n.z) ==
          doctest::Approx(std::max({std::abs(n.x), std::abs(n.y), std::abs(n.z)})));
  }
  CHECK(quads.size() == 6);
  CHECK(covered(out).size() == 8);
  CHECK(surface_area(out) == doctest::Approx(6.0).epsilon(1e-12));
  // Every edge is shared by exactly two faces in opposite directions.
  std::map<std::pair<int, int>, int> directed;
  for (const Face& f : out.faces) {
    for (std::size_t i = 0; i < f.size(); ++i) ++directed[{f[i], f[(i + 1) % f.size()]}];
  }
  for (const auto& [e, c] : directed) {
    CHECK(c == 1);
    CHECK(directed.count({e.second, e.first}) == 1);
  }
}

TEST_CASE("planar_decimate leaves faces at 90 degrees alone") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 0, 1}};
  m.faces = {{0, 1, 2}, {1, 0, 3}};
  const Mesh out = planar_decimate(m, 20.0);
  CHECK(out.faces == m.faces);
}

TEST_CASE("planar_decimate skips non-manifold edges with a warning") {
  Mesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0.5, 1, 0}, {0.5, -1, 0}, {0.5, 0, 1}};
  m.faces = {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}};
  DecimateReport report;
  const Mesh out = planar_decimate(m, 10.0, &report);
  CHECK(out.faces.size() == 3);
  CHECK(report.non_manifold_edges == 1);
  CHECK(report.warnings.size() == 1);
}

TEST_CASE("planar_decimate conserves area and vertices on every primitive") {
  for (const ClassSpec& cls : CorpusSpec::default_classes()) {
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const Mesh m = make_primitive(cls, rng);
      const double before = surface_area(m);
      for (double tol : {1.0, 20.0}) {
        const Mesh out = planar_decimate(m, tol);
        CAPTURE(cls.name);
        CHECK(out.vertices == m.vertices);
        CHECK(surface_area(out) == doctest::Approx(before).epsilon(1e-9));
        CHECK(out.faces.size() < m.faces.size());
        CHECK(covered(out) == covered(m));
        for (const Face& f : out.faces) {
          std::set<int> s(f.begin(), f.end());
          CHECK(s.size() == f.size());
        }
      }
    }
  }
}

TEST_CASE("primitives are closed and outward oriented") {
  for (const ClassSpec& cls : CorpusSpec::default_classes()) {
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const Mesh m = make_primitive(cls, rng);
      CAPTURE(cls.name);
      // Divergence theorem: signed volume positive.
      double volume = 0.0;
      for (const Face& f : m.faces) {
        for (std::size_t i = 1; i + 1 < f.size(); ++i) {
          volume += dot(m.vertices[f[0]], cross(m.vertices[f[i]], m.vertices[f[i + 1]])) / 6.0;
        }
      }
      CHECK(volume > 0.0);
      std::map<std::pair<int, int>, int> directed;
      for (const Face& f : m.faces) {
        for (std::size_t i = 0; i < f.size(); ++i) ++directed[{f[i], f[(i + 1) % f.size()]}];
      }
      for (const auto& [e, c] : directed) {
        CHECK(c == 1);
        CHECK(directed.count({e.second, e.first}) == 1);
      }
    }
  }
}

TEST_CASE("augmented and quantized outputs satisfy the mesh invariants") {
  AugmentConfig aug;
  for (const ClassSpec& cls : CorpusSpec::default_classes()) {
    Rng shape(7);
    const Mesh base = make_primitive(cls, shape);
    for (int copy = 0; copy < 10; ++copy) {
      Rng rng(copy);
      const QuantizedMesh q = preprocess_example(base, true, rng, aug, 8);
      CAPTURE(cls.name);
      CHECK_FALSE(find_violation(q, 8).has_value());
      const auto faces = decode_faces(encode_faces(q), static_cast<int>(q.vertices.size()));
      CHECK(faces == q.faces);
    }
  }
}

TEST_CASE("split counts stay within one of the fractions") {
  for (int n = 1; n <= 200; ++n) {
    const SplitCounts c = split_counts(n, 0.025, 0.05);
    CHECK(c.train + c.val + c.test == n);
    CHECK(std::abs(c.train - 0.925 * n) <= 1.0);
    CHECK(std::abs(c.val - 0.025 * n) <= 1.0);
    CHECK(std::abs(c.test - 0.05 * n) <= 1.0);
  }
}

TEST_CASE("corpus spec validation") {
  CorpusSpec spec;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);  // no classes
  spec.classes = CorpusSpec::default_classes();
  spec.validate();
  spec.val_fraction = 0.1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  AugmentConfig aug;
  aug.decimate_tol_hi = 95;
  CHECK_THROWS_AS(aug.validate(), std::invalid_argument);
  aug = {};
  aug.scale_lo = 2.0;
  CHECK_THROWS_AS(aug.validate(), std::invalid_argument);
}

TEST_CASE("one box example with one copy is a canonical 8-vertex 6-face mesh") {
  const fs::path root = temp_dir("box");
  CorpusSpec spec;
  spec.classes = {{"box", PrimitiveFamily::kBox, 0.3, 1.0, 4, 4}};
  spec.examples_per_class = 1;
  spec.seed = 9;
  AugmentConfig aug;
  aug.copies_per_mesh = 1;
  const auto manifest = make_corpus(spec, aug, root);
  CHECK(manifest["counts"]["train"]["total"] == 1);
  const auto train = load_split(root, "train", spec.bits);
  REQUIRE(train.size() == 1);
  const QuantizedMesh& q = train[0].mesh;
  CHECK(q.vertices.size() == 8);
  CHECK(q.faces.size() == 6);
  for (const Face& f : q.faces) CHECK(f.size() == 4);
  CHECK_FALSE(find_violation(q, spec.bits).has_value());
  CHECK(train[0].class_name == "box");
  fs::remove_all(root);
}

TEST_CASE("same seed gives a byte-identical corpus and honors the split") {
  CorpusSpec spec;
  spec.classes = CorpusSpec::default_classes();
  spec.examples_per_class = 12;
  spec.seed = 42;
  AugmentConfig aug;
  aug.copies_per_mesh = 2;
  const fs::path a = temp_dir("a"), b = temp_dir("b");
  const auto ma = make_corpus(spec, aug, a);
  const auto mb = make_corpus(spec, aug, b);
  std::vector<std::string> files_a, files_b;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files_a.push_back(fs::relative(e.path(), a).string());
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) files_b.push_back(fs::relative(e.path(), b).string());
  }
  std::sort(files_a.begin(), files_a.end());
  std::sort(files_b.begin(), files_b.end());
  REQUIRE(files_a == files_b);
  for (const std::string& f : files_a) CHECK(read_file(a / f) == read_file(b / f));

  const SplitCounts expect = split_counts(12, 0.025, 0.05);
  for (const ClassSpec& c : spec.classes) {
    CAPTURE(c.name);
    CHECK(ma["counts"]["train"][c.name].get<int>() <= expect.train * aug.copies_per_mesh);
    CHECK(ma["counts"]["train"][c.name].get<int>() >= (expect.train - 1) * aug.copies_per_mesh);
    CHECK(ma["counts"]["val"][c.name].get<int>() == expect.val);
    CHECK(ma["counts"]["test"][c.name].get<int>() == expect.test);
  }
  // Loaded meshes match what the OBJ files describe.
  const auto test = load_split(a, "test", spec.bits);
  CHECK(test.size() == static_cast<std::size_t>(ma["counts"]["test"]["total"].get<int>()));
  for (const Example& ex : test) CHECK_FALSE(find_violation(ex.mesh, spec.bits).has_value());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("an empty class after filtering is an error") {
  CorpusSpec spec;
  spec.classes = {{"table", PrimitiveFamily::kTable, 0.5, 1.0, 4, 4}};
  spec.examples_per_class = 2;
  spec.max_vertices = 10;
  AugmentConfig aug;
  aug.copies_per_mesh = 1;
  const fs::path root = temp_dir("empty");
  CHECK_THROWS_AS(make_corpus(spec, aug, root), DataError);
  fs::remove_all(root);
}
