#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "neuvis/common.hpp"
#include "neuvis/errors.hpp"
#include "neuvis/tensor_file.hpp"

using namespace neuvis;

TEST_SUITE_BEGIN("common");

TEST_CASE("fnv1a matches reference vectors") {
  // published FNV-1a 64-bit test vectors
  CHECK(fnv1a("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("hasher is order sensitive and deterministic") {
  Hasher a;
  a.str("x").u64(1);
  Hasher b;
  b.str("x").u64(1);
  CHECK(a.digest() == b.digest());
  Hasher c;
  c.u64(1).str("x");
  CHECK(a.digest() != c.digest());
}

TEST_CASE("rng determinism and fork independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng root(7);
  Rng f1 = root.fork(1);
  Rng f2 = root.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
  Rng f1b = Rng(7).fork(1);
  CHECK(Rng(7).fork(1).next_u64() == f1b.next_u64());
}

TEST_CASE("rng uniform stays in range and gaussian has sane moments") {
  Rng r(3);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = r.gaussian();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("uniform_int is within bounds and covers values") {
  Rng r(11);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.uniform_int(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("shuffle is a permutation and seed dependent") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto w = v;
  Rng r(5);
  r.shuffle(w);
  std::set<int> s(w.begin(), w.end());
  CHECK(s.size() == v.size());
  auto w2 = v;
  Rng r2(5);
  r2.shuffle(w2);
  CHECK(w == w2);
}

TEST_CASE("strict number parsing") {
  CHECK(parse_double("2.5") == 2.5);
  CHECK(parse_int("-42") == -42);
  CHECK(parse_bool("true"));
  CHECK_FALSE(parse_bool("off"));
  CHECK_THROWS_AS(parse_double("2.5x"), DataError);
  CHECK_THROWS_AS(parse_int("1.5"), DataError);
  CHECK_THROWS_AS(parse_bool("maybe"), DataError);
}

TEST_CASE("kv file round trip") {
  const std::string path = "kv_roundtrip_test.txt";
  KvList kv{{"alpha", "0.5"}, {"name", "run one"}};
  write_kv_file(path, kv);
  KvList back = read_kv_file(path);
  CHECK(back == kv);
  CHECK(kv_get(back, "alpha") == "0.5");
  CHECK(kv_find(back, "missing") == nullptr);
  std::filesystem::remove(path);
}

TEST_CASE("tensor container round trip preserves bytes") {
  const std::string path = "tensor_roundtrip_test.nvt";
  TensorFile tf;
  tf.set_meta("purpose", "test");
  Mat m(2, 3);
  m << 1.5, -2.25, 3.0, 0.0, 1e-300, -7.125;
  tf.add_matrix("weights", m);
  MatF f(1, 2);
  f << 0.25f, -8.5f;
  tf.add_matrix_f32("signal", f);
  tf.add_i64("ids", {10, 20, 30});
  tf.save(path);

  TensorFile back = TensorFile::load(path);
  CHECK(back.meta_get("purpose") == "test");
  CHECK(back.get("weights").as_matrix() == m);
  CHECK(back.get("signal").as_matrix() == f.cast<double>());
  CHECK(back.get("ids").as_i64() == std::vector<std::int64_t>{10, 20, 30});
  CHECK_THROWS_AS(back.get("nope"), DataError);

  // byte-identical rewrite
  back.save(path + ".2");
  CHECK(hash_file(path) == hash_file(path + ".2"));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".2");
}

TEST_CASE("tensor container rejects malformed files") {
  const std::string path = "tensor_bad_test.nvt";
  write_file_atomic(path, "WRONG\nend\n");
  CHECK_THROWS_AS(TensorFile::load(path), DataError);
  write_file_atomic(path, "NVTC1\ntensor a f64 1 4\nend\nxx");
  CHECK_THROWS_AS(TensorFile::load(path), DataError);
  std::filesystem::remove(path);
}

TEST_SUITE_END();
