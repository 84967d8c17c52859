#include <cstring>

#include "doctest.h"
#include "revdict/container.hpp"
#include "revdict/error.hpp"
#include "revdict/projection.hpp"
#include "support.hpp"

using namespace revdict;
using revdict::testing::TempDir;

namespace {

Container sample() {
  Container c;
  c.header = {{"arch", "test"}, {"note", "ünïcode"}, {"n", 3}};
  c.tensors = {{1.0, -0.0, 1e-308, 0.1}, {}, {3.141592653589793}};
  return c;
}

}  // namespace

TEST_CASE("container: encode/decode preserves header and exact values") {
  const Container c = sample();
  const Container back = decode_container(encode_container(c));
  CHECK(back.header == c.header);
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    REQUIRE(back.tensors[t].size() == c.tensors[t].size());
    for (std::size_t i = 0; i < c.tensors[t].size(); ++i) {
      CHECK(std::memcmp(&back.tensors[t][i], &c.tensors[t][i], sizeof(double)) == 0);
    }
  }
  CHECK(encode_container(back) == encode_container(c));
}

TEST_CASE("container: every truncation is reported as corrupt") {
  const std::string bytes = encode_container(sample());
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    CAPTURE(len);
    CHECK_THROWS_AS(decode_container(std::string_view(bytes).substr(0, len)), DataError);
  }
}

TEST_CASE("container: flipped bytes, bad magic and version are rejected") {
  const std::string bytes = encode_container(sample());
  for (std::size_t pos = 0; pos < bytes.size(); pos += 7) {
    std::string bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x40);
    CAPTURE(pos);
    CHECK_THROWS_AS(decode_container(bad), DataError);
  }
  std::string wrong_version = bytes;
  wrong_version[8] = 2;
  try {
    decode_container(wrong_version);
    FAIL("expected a version error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_container(bytes + "x"), DataError);
}

TEST_CASE("container: file round-trip and missing file") {
  TempDir dir("ctr");
  write_container(dir / "sub" / "c.bin", sample());
  CHECK(read_container(dir / "sub" / "c.bin").header == sample().header);
  CHECK_THROWS_AS(read_container(dir / "none.bin"), DataError);
}

TEST_CASE("container: stack description round-trip") {
  const ProjectionHead h = init_head(5, 3, 4, 17);
  std::vector<std::vector<double>> tensors;
  const auto layers = describe_stack(h.stack, tensors);
  std::size_t next = 0;
  const FeedForwardStack back = restore_stack(layers, tensors, next);
  CHECK(next == tensors.size());
  REQUIRE(back.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(back.layer(l).weights == h.stack.layer(l).weights);
    CHECK(back.layer(l).bias == h.stack.layer(l).bias);
    CHECK(back.layer(l).activation == h.stack.layer(l).activation);
  }
  std::size_t bad = 1;
  CHECK_THROWS_AS(restore_stack(layers, tensors, bad), DataError);
}
