#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"
#include "spikewarp/config.hpp"
#include "spikewarp/synthetic.hpp"
#include "spikewarp/volume_io.hpp"

using namespace spikewarp;

namespace {

template <class T>
void put_bytes(std::vector<char>& buf, std::size_t off, T v, bool swap) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  if (swap) std::reverse(tmp, tmp + sizeof(T));
  std::memcpy(buf.data() + off, tmp, sizeof(T));
}

// 2x2x3 int16 fixture with scl_slope 2, scl_inter 1; payload is 0..11
std::vector<char> make_nifti_fixture(bool swap) {
  std::vector<char> f(352 + 12 * 2, 0);
  put_bytes(f, 0, std::int32_t{348}, swap);
  put_bytes(f, 40, std::int16_t{3}, swap);
  put_bytes(f, 42, std::int16_t{3}, swap);  // nx (fastest)
  put_bytes(f, 44, std::int16_t{2}, swap);  // ny
  put_bytes(f, 46, std::int16_t{2}, swap);  // nz
  put_bytes(f, 70, std::int16_t{4}, swap);  // int16
  put_bytes(f, 72, std::int16_t{16}, swap);
  put_bytes(f, 80, 0.5f, swap);   // x spacing
  put_bytes(f, 84, 0.75f, swap);  // y spacing
  put_bytes(f, 88, 1.25f, swap);  // z spacing
  put_bytes(f, 108, 352.0f, swap);
  put_bytes(f, 112, 2.0f, swap);
  put_bytes(f, 116, 1.0f, swap);
  std::memcpy(f.data() + 344, "n+1", 4);
  for (std::int16_t i = 0; i < 12; ++i)
    put_bytes(f, 352 + static_cast<std::size_t>(i) * 2, i, swap);
  return f;
}

void dump(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("nifti fixture parses with scaling, spacing, and axis order") {
  TempFile f("io_fixture.nii");
  dump(f.path, make_nifti_fixture(false));
  auto v = read_nifti1(f.path);
  CHECK(v.dims[0] == 2);  // D = nz
  CHECK(v.dims[1] == 2);
  CHECK(v.dims[2] == 3);
  CHECK(v.spacing[0] == doctest::Approx(1.25));
  CHECK(v.spacing[2] == doctest::Approx(0.5));
  REQUIRE(v.data.numel() == 12);
  for (std::int64_t i = 0; i < 12; ++i)
    CHECK(v.data[i] == doctest::Approx(2.0 * i + 1.0));  // slope 2, inter 1
}

TEST_CASE("byte-swapped twin reads back identically") {
  TempFile le("io_le.nii"), be("io_be.nii");
  dump(le.path, make_nifti_fixture(false));
  dump(be.path, make_nifti_fixture(true));
  auto a = read_nifti1(le.path);
  auto b = read_nifti1(be.path);
  CHECK(a.data.data == b.data.data);
  CHECK(a.dims[2] == b.dims[2]);
  CHECK(a.spacing[1] == doctest::Approx(b.spacing[1]));
}

TEST_CASE("nifti rejects malformed files with specific messages") {
  auto bad_magic = make_nifti_fixture(false);
  std::memcpy(bad_magic.data() + 344, "xxx", 4);
  TempFile f1("io_badmagic.nii");
  dump(f1.path, bad_magic);
  CHECK_THROWS_WITH_AS(read_nifti1(f1.path), doctest::Contains("magic"), std::runtime_error);

  auto bad_size = make_nifti_fixture(false);
  put_bytes(bad_size, 0, std::int32_t{999}, false);
  TempFile f2("io_badsize.nii");
  dump(f2.path, bad_size);
  CHECK_THROWS_WITH_AS(read_nifti1(f2.path), doctest::Contains("348"), std::runtime_error);

  auto bad_dim = make_nifti_fixture(false);
  put_bytes(bad_dim, 40, std::int16_t{0}, false);
  TempFile f3("io_baddim.nii");
  dump(f3.path, bad_dim);
  CHECK_THROWS_WITH_AS(read_nifti1(f3.path), doctest::Contains("dim[0]"), std::runtime_error);

  auto bad_type = make_nifti_fixture(false);
  put_bytes(bad_type, 70, std::int16_t{128}, false);
  TempFile f4("io_badtype.nii");
  dump(f4.path, bad_type);
  CHECK_THROWS_WITH_AS(read_nifti1(f4.path), doctest::Contains("datatype"), std::runtime_error);

  auto truncated = make_nifti_fixture(false);
  truncated.resize(352 + 6);
  TempFile f5("io_trunc.nii");
  dump(f5.path, truncated);
  CHECK_THROWS_WITH_AS(read_nifti1(f5.path), doctest::Contains("truncated"), std::runtime_error);

  CHECK_THROWS_WITH_AS(read_nifti1("io_does_not_exist.nii"), doctest::Contains("cannot open"),
                       std::runtime_error);
}

TEST_CASE("nifti writer round trip") {
  Tensor<double> vol(Shape{1, 3, 4, 5});
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2, 2);
  for (auto& v : vol.data) v = static_cast<float>(u(rng));  // f32-representable
  const double spacing[3] = {2.0, 1.5, 1.0};
  TempFile f("io_roundtrip.nii");
  write_nifti1(f.path, vol, spacing);
  auto back = read_nifti1(f.path);
  CHECK(back.dims[0] == 3);
  CHECK(back.dims[1] == 4);
  CHECK(back.dims[2] == 5);
  CHECK(back.spacing[0] == doctest::Approx(2.0));
  CHECK(back.data.data == vol.data);
}

TEST_CASE("native format round trip is bitwise") {
  Tensor<double> vol(Shape{1, 2, 3, 4});
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0, 1);
  for (auto& v : vol.data) v = g(rng);
  write_native("io_native_test", vol);
  TempFile h("io_native_test.hdr"), r("io_native_test.raw");
  auto back = read_native("io_native_test");
  CHECK(back.data.data == vol.data);
  CHECK(back.dims[2] == 4);

  // corrupt the sidecar with an unknown key
  std::ofstream hs(h.path, std::ios::app);
  hs << "frobnicate 3\n";
  hs.close();
  CHECK_THROWS_WITH_AS(read_native("io_native_test"), doctest::Contains("unknown header key"),
                       std::runtime_error);
}

TEST_CASE("preprocess maps the clipped range onto the unit interval") {
  Tensor<double> vol(Shape{1, 1, 10, 100});
  for (std::int64_t i = 0; i < 1000; ++i) vol[i] = static_cast<double>(i);
  vol[0] = -1e6;   // outliers beyond the half-percent tails
  vol[999] = 1e6;
  auto out = preprocess(vol, 0.5, 99.5);
  for (std::int64_t i = 0; i < 1000; ++i) {
    CHECK(out[i] >= 0.0);
    CHECK(out[i] <= 1.0);
  }
  CHECK(out[0] == 0.0);
  CHECK(out[999] == 1.0);
  // interior ordering is preserved
  CHECK(out[400] < out[600]);
  // the median lands mid-range
  CHECK(out[500] == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("preprocess flags constant volumes instead of dividing by zero") {
  Tensor<double> vol(Shape{1, 2, 2, 2}, 3.7);
  bool warned = false;
  auto out = preprocess(vol, 0.5, 99.5, &warned);
  CHECK(warned);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("synthetic pairs are deterministic in the seed") {
  SyntheticConfig cfg;
  cfg.dim = 16;
  cfg.seed = 11;
  auto a = generate_pair<double>(cfg);
  auto b = generate_pair<double>(cfg);
  CHECK(a.fixed.data == b.fixed.data);
  CHECK(a.moving.data == b.moving.data);
  CHECK(a.velocity.data == b.velocity.data);
  cfg.seed = 12;
  auto c = generate_pair<double>(cfg);
  CHECK(a.fixed.data != c.fixed.data);
}

TEST_CASE("zero amplitude gives an identical pair and a zero field") {
  SyntheticConfig cfg;
  cfg.dim = 16;
  cfg.amplitude = 0.0;
  cfg.seed = 3;
  auto p = generate_pair<double>(cfg);
  CHECK(p.fixed.data == p.moving.data);
  CHECK(p.fixed_labels.data == p.moving_labels.data);
  for (double v : p.displacement.data) CHECK(v == 0.0);
}

TEST_CASE("generating displacement is fold-free and bounded by the amplitude") {
  SyntheticConfig cfg;
  cfg.dim = 16;
  cfg.amplitude = 2.0;
  cfg.seed = 21;
  auto p = generate_pair<double>(cfg);
  auto jac = jacobian_analysis(p.displacement);
  CHECK(jac.fold_percent == 0.0);
  double vmax = 0;
  for (double v : p.velocity.data) vmax = std::max(vmax, std::abs(v));
  CHECK(vmax <= 2.0 + 1e-12);
  CHECK(vmax > 0.1);
}

TEST_CASE("ground-truth field carries the moving labels exactly onto the fixed labels") {
  SyntheticConfig cfg;
  cfg.dim = 16;
  cfg.classes = 3;
  cfg.seed = 5;
  auto p = generate_pair<double>(cfg);
  auto carried = warp_nearest(p.moving_labels, p.displacement);
  CHECK(carried.data == p.fixed_labels.data);
  // labels stay in range and every class is present somewhere
  std::vector<int> seen(4, 0);
  for (double v : p.moving_labels.data) {
    const auto lab = static_cast<std::int64_t>(v);
    REQUIRE(lab >= 0);
    REQUIRE(lab <= 3);
    seen[static_cast<std::size_t>(lab)] = 1;
  }
  CHECK(seen[1] + seen[2] + seen[3] >= 2);  // blobs may overlap, most survive
}

TEST_CASE("config parses sections, types, and comments") {
  auto cfg = Config::from_string(
      "# registration settings\n"
      "[data]\n"
      "dim = 32\n"
      "amplitude = 2.5  ; voxels\n"
      "classes=4\n"
      "[train]\n"
      "lr = 1e-3\n"
      "freeze_bn = true\n"
      "channels = 8, 16, 32, 64\n"
      "name = run a\n");
  CHECK(cfg.get_i64("data", "dim", 0) == 32);
  CHECK(cfg.get_f64("data", "amplitude", 0) == doctest::Approx(2.5));
  CHECK(cfg.get_i64("data", "classes", 0) == 4);
  CHECK(cfg.get_f64("train", "lr", 0) == doctest::Approx(1e-3));
  CHECK(cfg.get_bool("train", "freeze_bn", false));
  CHECK(cfg.get_i64_list("train", "channels", {}) ==
        std::vector<std::int64_t>{8, 16, 32, 64});
  CHECK(cfg.get_str("train", "name", "") == "run a");
  CHECK(cfg.get_i64("train", "missing", 99) == 99);
  CHECK(cfg.has("data", "dim"));
  CHECK(!cfg.has("data", "nope"));
  cfg.reject_unknown();
}

TEST_CASE("config rejects keys nobody asked about") {
  auto cfg = Config::from_string("[data]\ndim = 32\ntypo_key = 5\n");
  CHECK(cfg.get_i64("data", "dim", 0) == 32);
  CHECK_THROWS_WITH_AS(cfg.reject_unknown(), doctest::Contains("data.typo_key"),
                       std::runtime_error);
}

TEST_CASE("config type errors and malformed lines are loud") {
  auto cfg = Config::from_string("[a]\nx = banana\nb = maybe\nl = 1,two\n");
  CHECK_THROWS_WITH_AS(cfg.get_i64("a", "x", 0), doctest::Contains("integer"), std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.get_f64("a", "x", 0), doctest::Contains("number"), std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.get_bool("a", "b", false), doctest::Contains("bool"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(cfg.get_i64_list("a", "l", {}), doctest::Contains("integers"),
                       std::runtime_error);
  CHECK_THROWS(Config::from_string("[a]\nkey with no equals\n"));
  CHECK_THROWS(Config::from_string("[unclosed\nx = 1\n"));
  CHECK_THROWS_WITH_AS(Config::from_string("[a]\nx = 1\nx = 2\n"), doctest::Contains("duplicate"),
                       std::runtime_error);
}

TEST_CASE("config reads from a file") {
  TempFile f("io_cfg_test.cfg");
  {
    std::ofstream os(f.path);
    os << "[run]\nseed = 7\n";
  }
  auto cfg = Config::from_file(f.path);
  CHECK(cfg.get_i64("run", "seed", 0) == 7);
  CHECK_THROWS(Config::from_file("io_cfg_missing.cfg"));
}
