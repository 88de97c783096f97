#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "polygen/mesh.hpp"

namespace polygen {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads `v` and `f` records; n-gon faces keep their winding. Face tokens of
/// the form `i/t/n` use the vertex component; negative indices are relative.
Mesh read_obj(std::istream& in);
Mesh load_obj(const std::filesystem::path& path);

/// One `v x y z` per vertex, one 1-based `f ...` per face. Coordinates are
/// written in shortest round-trip form.
void write_obj(std::ostream& out, const Mesh& mesh);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);

struct ClassLabel {
  int class_id = 0;
  std::string class_name;
};

void save_label(const ClassLabel& label, const std::filesystem::path& path);
std::optional<ClassLabel> load_label(const std::filesystem::path& path);

}  // namespace polygen
