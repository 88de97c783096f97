#include "polygen/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "polygen/obj_io.hpp"
#include "polygen/parallel.hpp"
#include "polygen/sequencing.hpp"

namespace polygen {

namespace fs = std::filesystem;

std::vector<ClassSpec> CorpusSpec::default_classes() {
  return {
      {"box", PrimitiveFamily::kBox, 0.3, 1.0, 4, 4},
      {"pyramid", PrimitiveFamily::kPyramid, 0.3, 1.0, 4, 8},
      {"prism", PrimitiveFamily::kPrism, 0.3, 1.0, 5, 12},
      {"l_extrusion", PrimitiveFamily::kLExtrusion, 0.3, 1.0, 6, 6},
      {"table", PrimitiveFamily::kTable, 0.5, 1.0, 4, 4},
      {"stool", PrimitiveFamily::kStool, 0.4, 1.0, 3, 3},
  };
}

void CorpusSpec::validate() const {
  if (classes.empty()) throw std::invalid_argument("corpus: no classes");
  if (examples_per_class < 1) throw std::invalid_argument("corpus: examples_per_class < 1");
  const double sum = train_fraction + val_fraction + test_fraction;
  if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("corpus: split fractions must be non-negative and sum to 1");
  }
  if (bits < 1 || bits > 16) throw std::invalid_argument("corpus: bits must be in [1, 16]");
  for (const ClassSpec& c : classes) {
    if (c.name.empty()) throw std::invalid_argument("corpus: class without a name");
    if (!(c.size_lo > 0) || c.size_lo > c.size_hi) {
      throw std::invalid_argument("corpus: bad size range for " + c.name);
    }
  }
}

nlohmann::ordered_json to_json(const ClassSpec& spec) {
  return {{"name", spec.name},       {"family", std::string(family_name(spec.family))},
          {"size_lo", spec.size_lo}, {"size_hi", spec.size_hi},
          {"sides_lo", spec.sides_lo}, {"sides_hi", spec.sides_hi}};
}

ClassSpec class_spec_from_json(const nlohmann::json& j) {
  ClassSpec c;
  c.name = j.at("name").get<std::string>();
  const std::string family = j.value("family", c.name);
  const auto parsed = parse_family(family);
  if (!parsed) throw std::invalid_argument("corpus: unknown primitive family '" + family + "'");
  c.family = *parsed;
  // Family defaults first, then explicit overrides.
  for (const ClassSpec& d : CorpusSpec::default_classes()) {
    if (d.family == c.family) {
      c.size_lo = d.size_lo;
      c.size_hi = d.size_hi;
      c.sides_lo = d.sides_lo;
      c.sides_hi = d.sides_hi;
    }
  }
  c.size_lo = j.value("size_lo", c.size_lo);
  c.size_hi = j.value("size_hi", c.size_hi);
  c.sides_lo = j.value("sides_lo", c.sides_lo);
  c.sides_hi = j.value("sides_hi", c.sides_hi);
  return c;
}

nlohmann::ordered_json to_json(const CorpusSpec& spec) {
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const ClassSpec& c : spec.classes) classes.push_back(to_json(c));
  return {{"classes", classes},
          {"examples_per_class", spec.examples_per_class},
          {"train_fraction", spec.train_fraction},
          {"val_fraction", spec.val_fraction},
          {"test_fraction", spec.test_fraction},
          {"bits", spec.bits},
          {"max_vertices", spec.max_vertices},
          {"max_face_tokens", spec.max_face_tokens},
          {"seed", spec.seed}};
}

nlohmann::ordered_json to_json(const AugmentConfig& cfg) {
  return {{"scale_lo", cfg.scale_lo},
          {"scale_hi", cfg.scale_hi},
          {"warp_segments", cfg.warp_segments},
          {"warp_log_variance", cfg.warp_log_variance},
          {"decimate_tol_lo", cfg.decimate_tol_lo},
          {"decimate_tol_hi", cfg.decimate_tol_hi},
          {"copies_per_mesh", cfg.copies_per_mesh},
          {"seed", cfg.seed}};
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec c;
  c.classes = CorpusSpec::default_classes();
  for (const auto& [key, value] : j.items()) {
    if (key == "classes") {
      c.classes.clear();
      for (const auto& cls : value) c.classes.push_back(class_spec_from_json(cls));
    } else if (key == "examples_per_class") c.examples_per_class = value.get<int>();
    else if (key == "train_fraction") c.train_fraction = value.get<double>();
    else if (key == "val_fraction") c.val_fraction = value.get<double>();
    else if (key == "test_fraction") c.test_fraction = value.get<double>();
    else if (key == "bits") c.bits = value.get<int>();
    else if (key == "max_vertices") c.max_vertices = value.get<int>();
    else if (key == "max_face_tokens") c.max_face_tokens = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("corpus: unknown key '" + key + "'");
  }
  return c;
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  AugmentConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "scale_lo") c.scale_lo = value.get<double>();
    else if (key == "scale_hi") c.scale_hi = value.get<double>();
    else if (key == "warp_segments") c.warp_segments = value.get<int>();
    else if (key == "warp_log_variance") c.warp_log_variance = value.get<double>();
    else if (key == "decimate_tol_lo") c.decimate_tol_lo = value.get<double>();
    else if (key == "decimate_tol_hi") c.decimate_tol_hi = value.get<double>();
    else if (key == "copies_per_mesh") c.copies_per_mesh = value.get<int>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("augment: unknown key '" + key + "'");
  }
  return c;
}

SplitCounts split_counts(int n, double val_fraction, double test_fraction) {
  SplitCounts c;
  c.test = static_cast<int>(std::llround(test_fraction * n));
  c.val = static_cast<int>(std::llround(val_fraction * n));
  c.test = std::min(c.test, n);
  c.val = std::min(c.val, n - c.test);
  c.train = n - c.val - c.test;
  return c;
}

QuantizedMesh preprocess_example(const Mesh& base, bool augment, Rng& rng,
                                 const AugmentConfig& aug, int bits) {
  Mesh m = normalize(base);
  if (augment) {
    m = axis_scale(m, rng, aug);
    m = piecewise_warp(m, rng, aug);
  }
  std::uniform_real_distribution<double> tol(aug.decimate_tol_lo, aug.decimate_tol_hi);
  m = planar_decimate(m, tol(rng));
  m = normalize(m);
  return quantize(m, bits);
}

std::string config_hash(const nlohmann::ordered_json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

struct WorkItem {
  int class_index;
  int example;
  std::string split;
};

struct WorkResult {
  int written = 0;
  int filtered = 0;
};

std::string example_id(const std::string& class_name, int example) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%04d", example);
  return class_name + buf;
}

}  // namespace

nlohmann::ordered_json make_corpus(const CorpusSpec& spec, const AugmentConfig& aug,
                                   const fs::path& root) {
  spec.validate();
  aug.validate();

  std::vector<WorkItem> items;
  for (int c = 0; c < static_cast<int>(spec.classes.size()); ++c) {
    const int n = spec.examples_per_class;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      keys[i] = derive_seed(spec.seed, {0x5917u, static_cast<std::uint64_t>(c),
                                        static_cast<std::uint64_t>(i)});
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::tie(keys[a], a) < std::tie(keys[b], b);
    });
    const SplitCounts counts = split_counts(n, spec.val_fraction, spec.test_fraction);
    for (int r = 0; r < n; ++r) {
      const char* split = r < counts.train ? "train" : r < counts.train + counts.val ? "val" : "test";
      items.push_back({c, order[r], split});
    }
  }
  std::sort(items.begin(), items.end(), [](const WorkItem& a, const WorkItem& b) {
    return std::tie(a.class_index, a.example) < std::tie(b.class_index, b.example);
  });

  for (const char* split : {"train", "val", "test"}) fs::remove_all(root / split);
  fs::remove(root / "manifest.json");
  for (const char* split : {"train", "val", "test"}) {
    for (const ClassSpec& c : spec.classes) fs::create_directories(root / split / c.name);
  }

  std::vector<WorkResult> results(items.size());
  parallel_for(items.size(), [&](std::size_t k) {
    const WorkItem& item = items[k];
    const ClassSpec& cls = spec.classes[item.class_index];
    const auto ci = static_cast<std::uint64_t>(item.class_index);
    const auto ei = static_cast<std::uint64_t>(item.example);
    Rng shape_rng = make_rng(spec.seed, {0xba5eu, ci, ei});
    Mesh base = make_primitive(cls, shape_rng);
    base.class_id = item.class_index;
    const bool train = item.split == "train";
    const int copies = train ? aug.copies_per_mesh : 1;
    const std::string id = example_id(cls.name, item.example);
    for (int copy = 0; copy < copies; ++copy) {
      Rng rng = make_rng(aug.seed, {spec.seed, ci, ei, static_cast<std::uint64_t>(copy)});
      QuantizedMesh q;
      try {
        q = preprocess_example(base, train, rng, aug, spec.bits);
      } catch (const MeshError&) {
        ++results[k].filtered;
        continue;
      }
      if (static_cast<int>(q.vertices.size()) > spec.max_vertices ||
          static_cast<int>(encode_faces(q).size()) > spec.max_face_tokens) {
        ++results[k].filtered;
        continue;
      }
      char suffix[16] = "";
      if (train) std::snprintf(suffix, sizeof(suffix), "_a%02d", copy);
      const std::string name = id + suffix;
      const fs::path dir = root / item.split / cls.name;
      save_obj(dequantize(q, spec.bits), dir / (name + ".obj"));
      save_label({item.class_index, cls.name}, dir / (name + ".json"));
      ++results[k].written;
    }
  });

  std::map<std::string, std::map<std::string, int>> counts;
  int filtered = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    counts[items[k].split][spec.classes[items[k].class_index].name] += results[k].written;
    filtered += results[k].filtered;
  }
  for (const ClassSpec& c : spec.classes) {
    int total = 0;
    for (const char* split : {"train", "val", "test"}) total += counts[split][c.name];
    if (total == 0) throw DataError("class '" + c.name + "' is empty after filtering");
  }

  nlohmann::ordered_json config{{"corpus", to_json(spec)}, {"augment", to_json(aug)}};
  nlohmann::ordered_json manifest;
  manifest["format"] = "polygen-corpus";
  manifest["version"] = 1;
  manifest["seed"] = spec.seed;
  manifest["bits"] = spec.bits;
  manifest["config_hash"] = config_hash(config);
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (int c = 0; c < static_cast<int>(spec.classes.size()); ++c) {
    classes.push_back({{"id", c},
                       {"name", spec.classes[c].name},
                       {"family", std::string(family_name(spec.classes[c].family))}});
  }
  manifest["classes"] = classes;
  nlohmann::ordered_json count_json;
  for (const char* split : {"train", "val", "test"}) {
    nlohmann::ordered_json per_class;
    int total = 0;
    for (const ClassSpec& c : spec.classes) {
      per_class[c.name] = counts[split][c.name];
      total += counts[split][c.name];
    }
    per_class["total"] = total;
    count_json[split] = per_class;
  }
  manifest["counts"] = count_json;
  manifest["filtered"] = filtered;
  manifest["config"] = config;

  std::ofstream out(root / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  return manifest;
}

std::vector<Example> load_split(const fs::path& root, std::string_view split, int bits) {
  const fs::path dir = root / std::string(split);
  if (!fs::is_directory(dir)) throw DataError("missing split directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".obj") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Example> out(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    const fs::path& path = files[i];
    Example& ex = out[i];
    ex.id = path.stem().string();
    ex.class_name = path.parent_path().filename().string();
    fs::path label_path = path;
    label_path.replace_extension(".json");
    if (const auto label = load_label(label_path)) {
      ex.class_id = label->class_id;
      ex.class_name = label->class_name;
    }
    Mesh m = load_obj(path);
    m.class_id = ex.class_id;
    ex.mesh = quantize(m, bits);
  });
  return out;
}

nlohmann::json load_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw DataError("no manifest.json in " + root.string());
  return nlohmann::json::parse(in);
}

}  // namespace polygen
