#include <random>

#include "doctest.h"
#include "polygen/sequencing.hpp"
#include "test_util.hpp"

using namespace polygen;

namespace {

SequenceErrorCode vertex_error(const Tokens& tokens, int bits = 8) {
  try {
    decode_vertices(tokens, bits);
  } catch (const SequenceError& e) {
    return e.code();
  }
  FAIL("expected decode_vertices to fail");
  return SequenceErrorCode::kEmpty;
}

SequenceErrorCode face_error(const Tokens& tokens, int n) {
  try {
    decode_faces(tokens, n);
  } catch (const SequenceError& e) {
    return e.code();
  }
  FAIL("expected decode_faces to fail");
  return SequenceErrorCode::kEmpty;
}

std::vector<int> allowed_tokens(const MaskVector& m) {
  std::vector<int> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

TEST_CASE("vertex encoding") {
  QuantizedMesh q;
  q.vertices = {{10, 20, 30}};
  CHECK(encode_vertices(q) == Tokens{11, 21, 31, 0});
  q.vertices = {{1, 2, 3}, {4, 5, 6}};
  CHECK(encode_vertices(q).size() == 7);
  const auto decoded = decode_vertices(Tokens{11, 21, 31, 0}, 8);
  REQUIRE(decoded.size() == 1);
  CHECK(decoded[0] == QVertex{10, 20, 30});
}

TEST_CASE("vertex decode errors carry distinct codes") {
  using E = SequenceErrorCode;
  CHECK(vertex_error({11, 21, 0}) == E::kStopMidVertex);
  CHECK(vertex_error({11, 21, 31, 5, 1, 1, 0}) == E::kZDecreased);
  CHECK(vertex_error({11, 21, 31, 11, 20, 1, 0}) == E::kYDecreased);
  CHECK(vertex_error({11, 21, 31, 11, 21, 31, 0}) == E::kXNotIncreasing);
  CHECK(vertex_error({11, 21, 300, 0}) == E::kTokenOutOfRange);
  CHECK(vertex_error({11, 21, 31}) == E::kMissingStop);
  CHECK(vertex_error({11, 21, 31, 0, 5}) == E::kTokenAfterStop);
  CHECK(vertex_error({0}) == E::kEmpty);
}

TEST_CASE("face encoding and decode errors") {
  using E = SequenceErrorCode;
  QuantizedMesh q;
  q.vertices = {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
  q.faces = {{0, 1, 2}, {0, 2, 3}};
  CHECK(encode_faces(q) == Tokens{2, 3, 4, 1, 2, 4, 5, 0});
  CHECK(decode_faces(Tokens{2, 3, 4, 1, 2, 4, 5, 0}, 4) == q.faces);

  try {
    decode_faces(Tokens{2, 3, 4, 0}, 4);
    FAIL("expected unreferenced vertex");
  } catch (const SequenceError& e) {
    CHECK(e.code() == E::kUnreferencedVertex);
    CHECK(std::string(e.what()).find("vertex 3 unreferenced") != std::string::npos);
  }
  CHECK(face_error({2, 3, 9, 0}, 4) == E::kUnknownIndex);
  CHECK(face_error({2, 3, 3, 4, 5, 0}, 4) == E::kDuplicateIndex);
  CHECK(face_error({2, 3, 1, 2, 3, 4, 5, 0}, 4) == E::kFaceTooShort);
  CHECK(face_error({2, 3, 4, 1, 1, 2, 4, 5, 0}, 4) == E::kRepeatedNewFace);
  CHECK(face_error({2, 3, 4, 5, 1, 0}, 4) == E::kTrailingNewFace);
  CHECK(face_error({3, 2, 4, 5, 0}, 4) == E::kFirstNotMinimum);
  CHECK(face_error({3, 4, 5, 1, 2, 3, 4, 0}, 4) == E::kFaceOrder);
  CHECK(face_error({2, 3, 4, 5}, 4) == E::kMissingStop);
  CHECK(face_error({2, 3, 4, 5, 0, 2}, 4) == E::kTokenAfterStop);
  CHECK(face_error({0}, 4) == E::kEmpty);
}

TEST_CASE("round trips over random canonical meshes") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const QuantizedMesh q = testing::random_canonical(rng);
    CHECK(decode_vertices(encode_vertices(q), 8) == q.vertices);
    const auto faces = decode_faces(encode_faces(q), static_cast<int>(q.vertices.size()));
    CHECK(faces == q.faces);
    CHECK(faces_in_canonical_order(faces));
  }
}

TEST_CASE("vertex mask examples") {
  const MaskVector empty = vertex_mask(Tokens{}, 8, MaskRules::kBasic);
  CHECK(empty.size() == 257);
  CHECK(!empty[kStopToken]);
  CHECK(allowed_tokens(empty).size() == 256);
  CHECK(allowed_tokens(vertex_mask(Tokens{}, 8)).size() == 256);

  const Tokens one{6, 8, 10};  // vertex (5, 7, 9)
  const MaskVector next_z = vertex_mask(one, 8, MaskRules::kBasic);
  CHECK(next_z[kStopToken]);
  for (int v = 0; v < 5; ++v) CHECK(!next_z[v + 1]);
  for (int v = 5; v < 256; ++v) CHECK(next_z[v + 1]);
  // With lookahead a single vertex cannot end the mesh.
  CHECK(!vertex_mask(one, 8)[kStopToken]);

  const MaskVector next_x = vertex_mask(Tokens{6, 8, 10, 6, 8}, 8, MaskRules::kBasic);
  for (int v = 0; v <= 9; ++v) CHECK(!next_x[v + 1]);
  for (int v = 10; v < 256; ++v) CHECK(next_x[v + 1]);
  CHECK(!next_x[kStopToken]);

  const MaskVector next_y = vertex_mask(Tokens{6, 8, 10, 6}, 8, MaskRules::kBasic);
  for (int v = 0; v < 7; ++v) CHECK(!next_y[v + 1]);
  CHECK(next_y[7 + 1]);
  CHECK(vertex_mask(Tokens{6, 8, 10, 7}, 8, MaskRules::kBasic)[1]);
}

TEST_CASE("lookahead vertex mask removes dead ends") {
  // Previous vertex (3, 3, 3) at bits = 2 has no successor.
  const Tokens corner{4, 4, 4};
  const MaskVector basic = vertex_mask(corner, 2, MaskRules::kBasic);
  CHECK(basic[4]);  // z = 3 allowed by the per-token rule
  const Tokens stuck{4, 4, 4, 4, 4};
  CHECK(allowed_tokens(vertex_mask(stuck, 2, MaskRules::kBasic)).empty());
  // A first vertex at the top corner leaves no room for two more.
  CHECK(!vertex_mask(Tokens{4, 4}, 2)[4]);
  CHECK(vertex_mask(Tokens{4, 4}, 2)[2]);
}

TEST_CASE("face mask examples") {
  const MaskVector first = face_mask(Tokens{2, 3, 4, 1}, 4, MaskRules::kBasic);
  CHECK(allowed_tokens(first) == std::vector<int>{2, 3, 4, 5});
  CHECK(allowed_tokens(face_mask(Tokens{2, 3, 4, 1}, 4)) == std::vector<int>{2, 3});

  const MaskVector inside = face_mask(Tokens{2, 3}, 4, MaskRules::kBasic);
  CHECK(!inside[3]);
  CHECK(!inside[2]);
  CHECK(!inside[kNewFaceToken]);
  CHECK(!inside[kStopToken]);
  CHECK(inside[4]);
  CHECK(inside[5]);

  const MaskVector done = face_mask(Tokens{2, 3, 4}, 3, MaskRules::kBasic);
  CHECK(done[kStopToken]);
  CHECK(done[kNewFaceToken]);
  CHECK(!face_mask(Tokens{2, 3, 4}, 4)[kStopToken]);

  const MaskVector start = face_mask(Tokens{}, 5, MaskRules::kBasic);
  CHECK(allowed_tokens(start) == std::vector<int>{2});
  CHECK_THROWS_AS(face_mask(Tokens{2, 2}, 4), SequenceError);
  CHECK_THROWS_AS(vertex_mask(Tokens{0}, 8), SequenceError);
}

TEST_CASE("masks are sound on every prefix of random canonical meshes") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int bits = std::uniform_int_distribution<int>(2, 8)(rng);
    const QuantizedMesh q = testing::random_canonical(rng, bits, bits <= 2 ? 12 : 30);
    for (MaskRules rules : {MaskRules::kBasic, MaskRules::kLookahead}) {
      VertexMaskState vstate(bits, rules);
      for (int t : encode_vertices(q)) {
        REQUIRE(vstate.allows(t));
        vstate.push(t);
      }
      FaceMaskState fstate(static_cast<int>(q.vertices.size()), rules);
      for (int t : encode_faces(q)) {
        REQUIRE(fstate.allows(t));
        fstate.push(t);
      }
      CHECK(allowed_tokens(fstate.mask()).empty());
    }
  }
}

TEST_CASE("masks are pure and incremental state agrees with replay") {
  std::mt19937_64 rng(5);
  const QuantizedMesh q = testing::random_canonical(rng);
  const Tokens faces = encode_faces(q);
  const int n = static_cast<int>(q.vertices.size());
  FaceMaskState state(n);
  for (std::size_t p = 0; p < faces.size(); ++p) {
    const std::span<const int> prefix(faces.data(), p);
    CHECK(face_mask(prefix, n) == face_mask(prefix, n));
    CHECK(face_mask(prefix, n) == state.mask());
    state.push(faces[p]);
  }
}

TEST_CASE("lookahead masks never dead-end on random walks") {
  std::mt19937_64 rng(17);
  for (int walk = 0; walk < 500; ++walk) {
    VertexMaskState v(2);
    while (!v.finished()) {
      const auto allowed = allowed_tokens(v.mask());
      REQUIRE(!allowed.empty());
      v.push(allowed[std::uniform_int_distribution<std::size_t>(0, allowed.size() - 1)(rng)]);
    }
    const int n = std::uniform_int_distribution<int>(3, 9)(rng);
    FaceMaskState f(n);
    Tokens seq;
    while (!f.finished() && seq.size() < 400) {
      const auto allowed = allowed_tokens(f.mask());
      REQUIRE(!allowed.empty());
      const int t = allowed[std::uniform_int_distribution<std::size_t>(0, allowed.size() - 1)(rng)];
      f.push(t);
      seq.push_back(t);
    }
    if (f.finished()) CHECK_NOTHROW(decode_faces(seq, n));
  }
}

TEST_CASE("token JSON") { CHECK(tokens_to_json(Tokens{11, 21, 31, 0}) == "[11,21,31,0]"); }
