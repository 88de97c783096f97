#include "polygen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "polygen/parallel.hpp"

namespace polygen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<int> class_for(const ModelConfig& cfg, const SequenceExample& ex) {
  return cfg.conditioned() ? std::optional<int>(ex.class_id) : std::nullopt;
}

double unit_draw(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Predictor model_predictor(ModelKind kind, const ModelConfig& cfg, const ParamStore<float>& params) {
  return [kind, cfg, &params](const SequenceExample& ex) {
    Graph<float> g(&params);
    if (kind == ModelKind::kVertex) {
      std::span<const int> t(ex.vertex_tokens);
      return g.value(VertexModel(cfg).logits(g, t.first(t.size() - 1), class_for(cfg, ex)));
    }
    std::span<const int> t(ex.face_tokens);
    return g.value(
        FaceModel(cfg).logits(g, ex.mesh.vertices, t.first(t.size() - 1), class_for(cfg, ex)));
  };
}

Predictor uniform_predictor(ModelKind kind, int bits) {
  return [kind, bits](const SequenceExample& ex) {
    if (kind == ModelKind::kVertex) {
      return Tensor<float>(static_cast<int>(ex.vertex_tokens.size()), (1 << bits) + 1);
    }
    return Tensor<float>(static_cast<int>(ex.face_tokens.size()), ex.num_vertices() + 2);
  };
}

SequenceScore score_sequence(const Tensor<float>& logits, std::span<const int> targets,
                             const std::vector<MaskVector>* masks) {
  if (logits.rows() != static_cast<int>(targets.size())) {
    throw ShapeError("logits " + logits.shape_string() + " for " +
                     std::to_string(targets.size()) + " targets");
  }
  if (masks != nullptr && masks->size() != targets.size()) {
    throw std::invalid_argument("one mask per target required");
  }
  SequenceScore s;
  s.positions = static_cast<int>(targets.size());
  const int cols = logits.cols();
  double nats = 0.0, masked_nats = 0.0;
  for (int r = 0; r < logits.rows(); ++r) {
    const float* row = logits.row(r);
    const int t = targets[r];
    if (t < 0 || t >= cols) throw std::out_of_range("target " + std::to_string(t) + " out of range");
    const MaskVector* m = masks != nullptr ? &(*masks)[r] : nullptr;

    double top = -kInf, masked_top = -kInf;
    for (int c = 0; c < cols; ++c) {
      top = std::max(top, static_cast<double>(row[c]));
      if (m != nullptr && (*m)[c]) masked_top = std::max(masked_top, static_cast<double>(row[c]));
    }
    double sum = 0.0, masked_sum = 0.0;
    int ties = 0, masked_ties = 0;
    for (int c = 0; c < cols; ++c) {
      const double x = row[c];
      sum += std::exp(x - top);
      ties += x == top;
      if (m != nullptr && (*m)[c]) {
        masked_sum += std::exp(x - masked_top);
        masked_ties += x == masked_top;
      }
    }
    const double target = row[t];
    nats += top + std::log(sum) - target;
    if (target == top) s.correct += 1.0 / ties;
    if (m != nullptr && (*m)[t]) {
      masked_nats += masked_top + std::log(masked_sum) - target;
      if (target == masked_top) s.masked_correct += 1.0 / masked_ties;
    } else if (m != nullptr) {
      ++s.mask_violations;
      masked_nats = kInf;
    }
  }
  s.bits = nats / std::numbers::ln2;
  if (masks == nullptr) {
    s.masked_bits = kInf;
    s.mask_violations = std::max(s.mask_violations, 1);
  } else {
    s.masked_bits = masked_nats / std::numbers::ln2;
  }
  return s;
}

double uniform_vertex_bits(int num_vertices, int bits) {
  return (3.0 * num_vertices + 1.0) / num_vertices * std::log2(std::ldexp(1.0, bits) + 1.0);
}

EvalReport evaluate(const Predictor& vertex, const Predictor& face,
                    const std::vector<SequenceExample>& data, int bits, MaskRules rules) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty split");
  EvalReport report;
  report.examples.resize(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const SequenceExample& ex = data[i];
    ExampleEval& e = report.examples[i];
    e.id = ex.id;
    e.class_id = ex.class_id;
    e.num_vertices = ex.num_vertices();
    auto score = [&](const Predictor& p, const Tokens& tokens, auto masks_of) {
      std::optional<std::vector<MaskVector>> masks;
      try {
        masks = masks_of();
      } catch (const SequenceError&) {
      }
      return score_sequence(p(ex), tokens, masks ? &*masks : nullptr);
    };
    if (vertex) {
      e.vertices = score(vertex, ex.vertex_tokens,
                         [&] { return vertex_masks(ex.vertex_tokens, bits, rules); });
    }
    if (face) {
      e.faces = score(face, ex.face_tokens,
                      [&] { return face_masks(ex.face_tokens, ex.num_vertices(), rules); });
    }
  });

  auto reduce = [&](auto member) {
    ModelEval m;
    double correct = 0.0, masked_correct = 0.0;
    for (const ExampleEval& e : report.examples) {
      const SequenceScore& s = *(e.*member);
      m.bits_per_vertex += s.bits / e.num_vertices;
      m.masked_bits_per_vertex += s.masked_bits / e.num_vertices;
      correct += s.correct;
      masked_correct += s.masked_correct;
      m.positions += s.positions;
      m.mask_violations += s.mask_violations;
    }
    const double n = static_cast<double>(report.examples.size());
    m.bits_per_vertex /= n;
    m.masked_bits_per_vertex /= n;
    m.accuracy = correct / static_cast<double>(m.positions);
    m.masked_accuracy = masked_correct / static_cast<double>(m.positions);
    return m;
  };
  if (vertex) report.vertices = reduce(&ExampleEval::vertices);
  if (face) report.faces = reduce(&ExampleEval::faces);
  if (vertex && face) {
    report.bits_total = report.vertices->bits_per_vertex + report.faces->bits_per_vertex;
    report.masked_bits_total =
        report.vertices->masked_bits_per_vertex + report.faces->masked_bits_per_vertex;
  }
  return report;
}

namespace {

nlohmann::ordered_json number(double x) {
  return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json();
}

nlohmann::ordered_json to_json(const SequenceScore& s, int num_vertices) {
  return {{"bits", number(s.bits)},
          {"bits_per_vertex", number(s.bits / num_vertices)},
          {"masked_bits", number(s.masked_bits)},
          {"masked_bits_per_vertex", number(s.masked_bits / num_vertices)},
          {"correct", s.correct},
          {"masked_correct", s.masked_correct},
          {"positions", s.positions},
          {"mask_violations", s.mask_violations}};
}

}  // namespace

nlohmann::ordered_json to_json(const ModelEval& m) {
  return {{"bits_per_vertex", number(m.bits_per_vertex)},
          {"masked_bits_per_vertex", number(m.masked_bits_per_vertex)},
          {"accuracy", m.accuracy},
          {"masked_accuracy", m.masked_accuracy},
          {"positions", m.positions},
          {"mask_violations", m.mask_violations}};
}

nlohmann::ordered_json to_json(const EvalReport& r, bool per_example) {
  nlohmann::ordered_json j;
  j["vertices"] = r.vertices ? to_json(*r.vertices) : nlohmann::ordered_json();
  j["faces"] = r.faces ? to_json(*r.faces) : nlohmann::ordered_json();
  j["bits_total"] = r.bits_total ? number(*r.bits_total) : nlohmann::ordered_json();
  j["masked_bits_total"] =
      r.masked_bits_total ? number(*r.masked_bits_total) : nlohmann::ordered_json();
  j["num_examples"] = r.examples.size();
  if (per_example) {
    auto& list = j["examples"] = nlohmann::ordered_json::array();
    for (const ExampleEval& e : r.examples) {
      nlohmann::ordered_json x = {
          {"id", e.id}, {"class_id", e.class_id}, {"num_vertices", e.num_vertices}};
      if (e.vertices) x["vertices"] = to_json(*e.vertices, e.num_vertices);
      if (e.faces) x["faces"] = to_json(*e.faces, e.num_vertices);
      list.push_back(std::move(x));
    }
  }
  return j;
}

// ---------------------------------------------------------------------------

std::vector<Vec3> sample_surface_points(const Mesh& mesh, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("negative point count");
  struct Tri {
    Vec3 a, b, c;
  };
  std::vector<Tri> tris;
  std::vector<double> cum;
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    for (std::size_t i = 1; i + 1 < f.size(); ++i) {
      const Tri t{mesh.vertices[f[0]], mesh.vertices[f[i]], mesh.vertices[f[i + 1]]};
      const double area = 0.5 * norm(cross(t.b - t.a, t.c - t.a));
      if (!(area > 0.0)) continue;
      tris.push_back(t);
      total += area;
      cum.push_back(total);
    }
  }
  if (tris.empty()) throw MeshError("cannot sample points on a mesh of zero area");
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pick = unit_draw(rng) * total;
    const auto it = std::upper_bound(cum.begin(), cum.end(), pick);
    const Tri& t = tris[std::min<std::size_t>(it - cum.begin(), tris.size() - 1)];
    const double r1 = std::sqrt(unit_draw(rng));
    const double r2 = unit_draw(rng);
    out.push_back(t.a * (1.0 - r1) + t.b * (r1 * (1.0 - r2)) + t.c * (r1 * r2));
  }
  return out;
}

namespace {

double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

double nearest(const Vec3& p, std::span<const Vec3> q) {
  double best = kInf;
  for (const Vec3& x : q) best = std::min(best, squared_distance(p, x));
  return best;
}

void check_nonempty(std::span<const Vec3> p, std::span<const Vec3> q) {
  if (p.empty() || q.empty()) throw std::invalid_argument("chamfer of an empty point set");
}

}  // namespace

double chamfer(std::span<const Vec3> p, std::span<const Vec3> q) {
  check_nonempty(p, q);
  const int np = static_cast<int>(p.size()), nq = static_cast<int>(q.size());
  std::vector<double> dp(p.size()), dq(q.size());
  const bool wide = static_cast<long long>(np) * nq >= 65536;
#pragma omp parallel if (wide)
  {
#pragma omp for schedule(static) nowait
    for (int i = 0; i < np; ++i) dp[i] = nearest(p[i], q);
#pragma omp for schedule(static)
    for (int i = 0; i < nq; ++i) dq[i] = nearest(q[i], p);
  }
  double sp = 0.0, sq = 0.0;
  for (double d : dp) sp += d;
  for (double d : dq) sq += d;
  return sp + sq;
}

namespace reference {

double chamfer(std::span<const Vec3> p, std::span<const Vec3> q) {
  check_nonempty(p, q);
  double sp = 0.0, sq = 0.0;
  for (const Vec3& a : p) sp += nearest(a, q);
  for (const Vec3& b : q) sq += nearest(b, p);
  return sp + sq;
}

}  // namespace reference

BestOfK best_of_k_chamfer(const VertexModel& vertex_model, const ParamStore<float>& vertex_params,
                          const FaceModel& face_model, const ParamStore<float>& face_params,
                          const Mesh& target, std::optional<int> class_id, int k,
                          const SamplerConfig& cfg, int n_points) {
  if (k < 1) throw std::invalid_argument("best-of-k needs k >= 1");
  Rng target_rng = make_rng(cfg.seed, {0xda7a, 0});
  Rng floor_rng = make_rng(cfg.seed, {0xda7a, 1});
  const auto target_points = sample_surface_points(target, n_points, target_rng);
  BestOfK out;
  out.data_floor = chamfer(target_points, sample_surface_points(target, n_points, floor_rng));
  const auto samples = generate_meshes(vertex_model, vertex_params, face_model, face_params, k,
                                       class_id, cfg);
  double best = kInf;
  for (int i = 0; i < k; ++i) {
    double value = kInf;
    if (samples[i].report.valid) {
      try {
        Rng rng = make_rng(cfg.seed, {0x5a3b, static_cast<std::uint64_t>(i)});
        value = chamfer(sample_surface_points(samples[i].mesh, n_points, rng), target_points);
      } catch (const MeshError&) {
      }
    }
    if (!std::isfinite(value)) ++out.invalid;
    best = std::min(best, value);
    out.values.push_back(value);
    out.running_minimum.push_back(best);
  }
  if (out.invalid == k) throw std::runtime_error("best-of-k: no valid sample among " + std::to_string(k));
  return out;
}

nlohmann::ordered_json to_json(const BestOfK& b) {
  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  nlohmann::ordered_json mins = nlohmann::ordered_json::array();
  for (double v : b.values) values.push_back(number(v));
  for (double v : b.running_minimum) mins.push_back(number(v));
  return {{"values", values},
          {"running_minimum", mins},
          {"data_floor", b.data_floor},
          {"invalid", b.invalid}};
}

// ---------------------------------------------------------------------------

MeshStats mesh_statistics(const Mesh& mesh) {
  MeshStats s;
  s.num_vertices = static_cast<int>(mesh.vertices.size());
  s.num_faces = static_cast<int>(mesh.faces.size());
  s.degrees.assign(mesh.vertices.size(), 0);
  std::set<std::pair<int, int>> edges;
  double area = 0.0;
  for (const Face& f : mesh.faces) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      const int a = f[i], b = f[(i + 1) % f.size()];
      if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
    }
    for (std::size_t i = 1; i + 1 < f.size(); ++i) {
      const Vec3& o = mesh.vertices[f[0]];
      area += 0.5 * norm(cross(mesh.vertices[f[i]] - o, mesh.vertices[f[i + 1]] - o));
    }
  }
  double length = 0.0;
  for (const auto& [a, b] : edges) {
    ++s.degrees[a];
    ++s.degrees[b];
    length += norm(mesh.vertices[a] - mesh.vertices[b]);
  }
  if (s.num_faces > 0) s.average_face_area = area / s.num_faces;
  if (!edges.empty()) s.average_edge_length = length / static_cast<double>(edges.size());
  return s;
}

namespace {

Histogram integer_histogram(const std::string& name, const std::vector<int>& model,
                            const std::vector<int>& data) {
  Histogram h;
  h.statistic = name;
  if (model.empty() && data.empty()) return h;
  int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
  for (const auto* v : {&model, &data}) {
    for (int x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  const std::size_t n = static_cast<std::size_t>(hi - lo + 1);
  h.model.assign(n, 0);
  h.data.assign(n, 0);
  for (int b = lo; b <= hi; ++b) h.bins.push_back(b);
  for (int x : model) ++h.model[static_cast<std::size_t>(x - lo)];
  for (int x : data) ++h.data[static_cast<std::size_t>(x - lo)];
  return h;
}

Histogram real_histogram(const std::string& name, const std::vector<double>& model,
                         const std::vector<double>& data, int bins) {
  Histogram h;
  h.statistic = name;
  if (model.empty() && data.empty()) return h;
  double lo = kInf, hi = -kInf;
  for (const auto* v : {&model, &data}) {
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  const int n = hi > lo ? bins : 1;
  const double width = hi > lo ? (hi - lo) / n : 1.0;
  h.model.assign(static_cast<std::size_t>(n), 0);
  h.data.assign(static_cast<std::size_t>(n), 0);
  for (int b = 0; b < n; ++b) h.bins.push_back(lo + b * width);
  auto bin = [&](double x) {
    return static_cast<std::size_t>(std::clamp(static_cast<int>((x - lo) / width), 0, n - 1));
  };
  for (double x : model) ++h.model[bin(x)];
  for (double x : data) ++h.data[bin(x)];
  return h;
}

}  // namespace

std::vector<Histogram> stats_summary(std::span<const MeshStats> model,
                                     std::span<const MeshStats> data, int continuous_bins) {
  if (continuous_bins < 1) throw std::invalid_argument("continuous_bins must be >= 1");
  auto ints = [](std::span<const MeshStats> s, auto field) {
    std::vector<int> out;
    for (const MeshStats& m : s) out.push_back(m.*field);
    return out;
  };
  auto reals = [](std::span<const MeshStats> s, auto field) {
    std::vector<double> out;
    for (const MeshStats& m : s) out.push_back(m.*field);
    return out;
  };
  auto degrees = [](std::span<const MeshStats> s) {
    std::vector<int> out;
    for (const MeshStats& m : s) out.insert(out.end(), m.degrees.begin(), m.degrees.end());
    return out;
  };
  return {
      integer_histogram("num_vertices", ints(model, &MeshStats::num_vertices),
                        ints(data, &MeshStats::num_vertices)),
      integer_histogram("num_faces", ints(model, &MeshStats::num_faces),
                        ints(data, &MeshStats::num_faces)),
      integer_histogram("node_degree", degrees(model), degrees(data)),
      real_histogram("average_face_area", reals(model, &MeshStats::average_face_area),
                     reals(data, &MeshStats::average_face_area), continuous_bins),
      real_histogram("average_edge_length", reals(model, &MeshStats::average_edge_length),
                     reals(data, &MeshStats::average_edge_length), continuous_bins),
  };
}

std::string histograms_csv(const std::vector<Histogram>& hists) {
  std::ostringstream out;
  out << "statistic,bin,model_count,data_count\n";
  char buf[64];
  for (const Histogram& h : hists) {
    for (std::size_t i = 0; i < h.bins.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", h.bins[i]);
      out << h.statistic << ',' << buf << ',' << h.model[i] << ',' << h.data[i] << '\n';
    }
  }
  return out.str();
}

double total_variation(std::span<const long long> a, std::span<const long long> b) {
  if (a.size() != b.size()) throw std::invalid_argument("histograms differ in size");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (sa <= 0 || sb <= 0) throw std::invalid_argument("empty histogram");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] / sa - b[i] / sb);
  return 0.5 * tv;
}

}  // namespace polygen
