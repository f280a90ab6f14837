#include <random>

#include "doctest.h"
#include "spikewarp/conversion.hpp"
#include "spikewarp/lif.hpp"

using namespace spikewarp;

namespace {

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.encoder_channels = {4, 8};
  s.decoder_channels = {4, 4};
  s.timesteps = 4;
  return s;
}

Tensor<double> random_volume(std::int64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> t(Shape{1, n, n, n});
  for (auto& v : t.data) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("percentile with linear interpolation") {
  std::vector<double> v{1, 2, 3, 4};
  CHECK(percentile(v, 50) == doctest::Approx(2.5));
  CHECK(percentile(v, 0) == doctest::Approx(1.0));
  CHECK(percentile(v, 100) == doctest::Approx(4.0));
  CHECK(percentile(v, 25) == doctest::Approx(1.75));
  CHECK(percentile({7.0}, 99.0) == doctest::Approx(7.0));
  CHECK_THROWS_AS(percentile({}, 50), std::invalid_argument);
  CHECK_THROWS_AS(percentile(v, 101), std::invalid_argument);
  CHECK_THROWS_AS(percentile(v, -1), std::invalid_argument);
}

TEST_CASE("percentile is order independent and monotone in p") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<double> v;
  for (int i = 0; i < 57; ++i) v.push_back(u(rng));
  auto shuffled = v;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(percentile(v, 73.2) == doctest::Approx(percentile(shuffled, 73.2)));
  double prev = percentile(v, 0);
  for (double p = 2.5; p <= 100; p += 2.5) {
    const double cur = percentile(v, p);
    CHECK(cur >= prev);
    prev = cur;
  }
}

TEST_CASE("reservoir keeps only strictly positive samples") {
  CalibrationSet cal(1, 100, 0);
  cal.add(0, 0.5);
  cal.add(0, 0.0);
  cal.add(0, -1.0);
  cal.add(0, 2.5);
  CHECK(cal.seen(0) == 2);
  REQUIRE(cal.samples(0).size() == 2);
  CHECK(cal.samples(0)[0] == 0.5);
  CHECK(cal.samples(0)[1] == 2.5);
}

TEST_CASE("reservoir at capacity stays an unbiased subsample") {
  const std::size_t cap = 200;
  CalibrationSet cal(1, cap, 17);
  const int n = 5000;
  for (int i = 1; i <= n; ++i) cal.add(0, static_cast<double>(i));
  CHECK(cal.seen(0) == static_cast<std::uint64_t>(n));
  REQUIRE(cal.samples(0).size() == cap);
  double mean = 0;
  for (double v : cal.samples(0)) {
    CHECK(v >= 1.0);
    CHECK(v <= n);
    mean += v;
  }
  mean /= cap;
  // stream mean is (n+1)/2; sd of the subsample mean is about n/sqrt(12*cap)
  const double se = n / std::sqrt(12.0 * cap);
  CHECK(std::abs(mean - 0.5 * (n + 1)) < 4.0 * se);
}

TEST_CASE("thresholds rise with the percentile and flag silent layers") {
  CalibrationSet cal(2, 1000, 0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int i = 0; i < 500; ++i) cal.add(0, u(rng));
  CHECK_THROWS_WITH_AS(calibrate_thresholds(cal, 99.0),
                       doctest::Contains("layer 1"), std::runtime_error);
  for (int i = 0; i < 500; ++i) cal.add(1, u(rng));
  auto t99 = calibrate_thresholds(cal, 99.0);
  auto t95 = calibrate_thresholds(cal, 95.0);
  REQUIRE(t99.size() == 2);
  CHECK(t99[0] > t95[0]);
  CHECK(t99[1] > t95[1]);
}

TEST_CASE("recording collects positive activations at every spiking site") {
  auto spec = tiny_spec();
  std::mt19937_64 rng(1);
  auto teacher = build_network<double>(spec, Flavor::ann, rng);
  teacher.bn_training = true;  // recording must run in eval mode and restore this
  std::vector<std::pair<Tensor<double>, Tensor<double>>> pairs;
  pairs.emplace_back(random_volume(8, 2), random_volume(8, 3));
  auto cal = record_activations(teacher, pairs, 100000, 0);
  CHECK(cal.layers() == teacher.blocks.size());
  for (std::size_t l = 0; l < cal.layers(); ++l) {
    INFO("layer ", l);
    CHECK(cal.seen(l) > 0);
    for (double v : cal.samples(l)) CHECK(v > 0.0);
  }
  CHECK(teacher.bn_training);
  CHECK_THROWS_AS(record_activations(teacher, {}, 100, 0), std::invalid_argument);
}

TEST_CASE("weight transfer is bitwise and freezes normalization") {
  auto spec = tiny_spec();
  std::mt19937_64 rng(9);
  auto teacher = build_network<double>(spec, Flavor::ann, rng);
  std::vector<double> thetas;
  for (std::size_t i = 0; i < teacher.blocks.size(); ++i) thetas.push_back(0.5 + 0.1 * i);
  auto student = transfer_weights(teacher, thetas, 6);
  CHECK(student.flavor == Flavor::snn);
  CHECK(student.spec.timesteps == 6);
  CHECK(student.bn_frozen);
  for (std::size_t i = 0; i < teacher.blocks.size(); ++i) {
    CHECK(student.blocks[i].w.data == teacher.blocks[i].w.data);
    CHECK(student.blocks[i].b.data == teacher.blocks[i].b.data);
    CHECK(student.blocks[i].gamma.data == teacher.blocks[i].gamma.data);
    CHECK(student.blocks[i].beta.data == teacher.blocks[i].beta.data);
    CHECK(student.blocks[i].bn.mean.data == teacher.blocks[i].bn.mean.data);
    CHECK(student.blocks[i].bn.var.data == teacher.blocks[i].bn.var.data);
    CHECK(student.blocks[i].theta[0] == doctest::Approx(thetas[i]));
  }
  CHECK(student.head_w.data == teacher.head_w.data);
  CHECK(student.head_b.data == teacher.head_b.data);

  std::vector<double> short_list{1.0};
  CHECK_THROWS_AS(transfer_weights(teacher, short_list, 4), std::invalid_argument);
  CHECK_THROWS_AS(transfer_weights(student, thetas, 4), std::invalid_argument);
}

TEST_CASE("leak-free neuron under constant drive fires at the reset-period rate") {
  // with tau = 1, zero-reset dynamics, and constant current a, the neuron
  // fires every ceil(theta / a) steps; stronger drive saturates at rate 1,
  // which is what percentile threshold calibration relies on
  for (double a : {0.37, 0.61, 1.4, 0.0}) {
    LifParams<double> p;
    p.tau = Tensor<double>(Shape{1});
    p.tau[0] = 1.0;
    p.theta = Tensor<double>(Shape{1});
    p.theta[0] = 1.0;
    LifState<double> st;
    st.v = Tensor<double>(Shape{1, 1, 1, 1});
    Tensor<double> I(Shape{1, 1, 1, 1});
    I[0] = a;
    const std::int64_t T = 2000;
    double spikes = 0;
    for (std::int64_t t = 0; t < T; ++t) spikes += lif_step(st, I, p)[0];
    const double expect = a > 0 ? 1.0 / std::ceil(1.0 / a) : 0.0;
    CHECK(spikes / static_cast<double>(T) == doctest::Approx(expect).epsilon(2e-3));
  }
}

TEST_CASE("calibration report is one csv line per layer") {
  CalibrationSet cal(2, 100, 0);
  for (int i = 1; i <= 10; ++i) {
    cal.add(0, i);
    cal.add(1, 0.1 * i);
  }
  auto thetas = calibrate_thresholds(cal, 99.0);
  auto rep = calibration_report(cal, thetas);
  CHECK(rep.rfind("layer,samples,min,median,max,theta\n", 0) == 0);
  CHECK(std::count(rep.begin(), rep.end(), '\n') == 3);
}
