#include "polygen/obj_io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace polygen {

namespace {

double parse_real(const std::string& token, std::size_t line) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ParseError("bad number '" + token + "'", line);
  return value;
}

int parse_index(const std::string& token, long long vertex_count, std::size_t line) {
  const std::string head = token.substr(0, token.find('/'));
  long long value = 0;
  const char* first = head.data();
  const char* last = head.data() + head.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (head.empty() || ec != std::errc() || ptr != last) {
    throw ParseError("bad face index '" + token + "'", line);
  }
  const long long zero_based = value > 0 ? value - 1 : vertex_count + value;
  if (value == 0 || zero_based < 0 || zero_based >= vertex_count) {
    throw ParseError("face index " + head + " out of range (" + std::to_string(vertex_count) +
                         " vertices)",
                     line);
  }
  return static_cast<int>(zero_based);
}

std::string format_real(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

}  // namespace

Mesh read_obj(std::istream& in) {
  Mesh mesh;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream fields(raw);
    std::string tag;
    if (!(fields >> tag)) continue;
    if (tag == "v") {
      std::vector<std::string> parts;
      for (std::string p; fields >> p;) parts.push_back(p);
      if (parts.size() < 3 || parts.size() > 4) throw ParseError("vertex needs 3 coordinates", line);
      mesh.vertices.push_back(
          {parse_real(parts[0], line), parse_real(parts[1], line), parse_real(parts[2], line)});
    } else if (tag == "f") {
      Face face;
      for (std::string p; fields >> p;) {
        face.push_back(parse_index(p, static_cast<long long>(mesh.vertices.size()), line));
      }
      if (face.size() < 3) throw ParseError("face needs at least 3 indices", line);
      for (std::size_t i = 0; i < face.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          if (face[i] == face[j]) throw ParseError("face repeats a vertex index", line);
        }
      }
      mesh.faces.push_back(std::move(face));
    }
  }
  return mesh;
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_obj(in);
}

void write_obj(std::ostream& out, const Mesh& mesh) {
  for (const Vec3& v : mesh.vertices) {
    out << "v " << format_real(v.x) << ' ' << format_real(v.y) << ' ' << format_real(v.z) << '\n';
  }
  for (const Face& face : mesh.faces) {
    out << 'f';
    for (int idx : face) out << ' ' << idx + 1;
    out << '\n';
  }
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  validate(mesh);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_obj(out, mesh);
}

void save_label(const ClassLabel& label, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["class_id"] = label.class_id;
  j["class_name"] = label.class_name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::optional<ClassLabel> load_label(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  const auto j = nlohmann::json::parse(in);
  return ClassLabel{j.at("class_id").get<int>(), j.value("class_name", std::string())};
}

}  // namespace polygen
