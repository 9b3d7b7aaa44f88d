// Quick finite-difference coverage; the acceptance suite runs the full
// 20-probe version across every network and loss.

#include <catch2/catch_amalgamated.hpp>

#include "support/fd_check.hpp"
#include "support/fixtures.hpp"

using namespace facemanip;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.resolution = 32;
  return cfg;
}

}  // namespace

TEST_CASE("loss gradients match central finite differences", "[gradients]") {
  Rng rng(101);
  Rng data(7);

  SECTION("pixel boundary loss") {
    auto a = Var<double>::param(fixtures::random_tensor({2, 3, 8, 8}, data, 0, 1));
    auto b = Var<double>::constant(fixtures::random_tensor({2, 3, 8, 8}, data, 0, 1));
    auto res = fdtest::fd_check(
        [&] { return losses::pixel_boundary_loss(a, b); }, a, 8, rng);
    INFO("worst rel " << res.worst_rel);
    REQUIRE(res.ok);
  }
  SECTION("conditional regression loss") {
    auto p = Var<double>::param(fixtures::random_tensor({4, 3}, data));
    auto pr = Var<double>::constant(fixtures::random_tensor({4, 3}, data));
    auto e = Var<double>::param(fixtures::random_tensor({4, 17}, data, 0, 1));
    auto er = Var<double>::constant(fixtures::random_tensor({4, 17}, data, 0, 1));
    auto res = fdtest::fd_check(
        [&] { return losses::conditional_regression_loss(p, pr, e, er); }, p, 8, rng);
    REQUIRE(res.ok);
    auto res_e = fdtest::fd_check(
        [&] { return losses::conditional_regression_loss(p, pr, e, er); }, e, 8, rng);
    REQUIRE(res_e.ok);
  }
  SECTION("feature threshold loss away from the kink") {
    auto f = Var<double>::param(fixtures::random_tensor({2, 16}, data, 1.0, 2.0));
    auto fp = Var<double>::constant(fixtures::random_tensor({2, 16}, data, -0.2, 0.2));
    auto res = fdtest::fd_check(
        [&] { return losses::feature_threshold_loss(f, fp, 7.0); }, f, 8, rng);
    REQUIRE(res.ok);
  }
  SECTION("multiscale pixel loss") {
    auto a = Var<double>::param(fixtures::random_tensor({1, 3, 8, 8}, data));
    auto b = Var<double>::constant(fixtures::random_tensor({1, 3, 8, 8}, data));
    auto res = fdtest::fd_check(
        [&] { return losses::multiscale_pixel_loss(a, b); }, a, 8, rng);
    REQUIRE(res.ok);
  }
  SECTION("adversarial losses") {
    std::vector<Var<double>> real, fake;
    for (std::size_t sz : {4u, 2u, 1u}) {
      real.push_back(Var<double>::constant(
          fixtures::random_tensor({1, 1, sz, sz}, data, 0.1, 0.9)));
      fake.push_back(
          Var<double>::param(fixtures::random_tensor({1, 1, sz, sz}, data, 0.1, 0.9)));
    }
    auto res_d = fdtest::fd_check(
        [&] { return losses::adversarial_losses(real, fake).d_loss; }, fake[0], 6, rng);
    REQUIRE(res_d.ok);
    auto res_g = fdtest::fd_check(
        [&] { return losses::adversarial_losses(real, fake).g_loss; }, fake[1], 6, rng);
    REQUIRE(res_g.ok);
  }
  SECTION("identity preserving loss") {
    auto pool = Var<double>::param(fixtures::random_tensor({2, 16}, data));
    auto fc = Var<double>::param(fixtures::random_tensor({2, 4}, data));
    auto pool_r = Var<double>::constant(fixtures::random_tensor({2, 16}, data));
    auto fc_r = Var<double>::constant(fixtures::random_tensor({2, 4}, data));
    auto res = fdtest::fd_check(
        [&] { return losses::identity_preserving_loss(pool, fc, pool_r, fc_r); }, pool,
        8, rng);
    REQUIRE(res.ok);
  }
}

TEST_CASE("network input gradients match finite differences", "[gradients]") {
  auto bundle = init_networks<double>(small_cfg(), 55);
  Rng rng(202);
  Rng data(8);
  auto probe_weights = [&](const std::vector<std::size_t>& shape) {
    return Var<double>::constant(fixtures::random_tensor(shape, data));
  };

  SECTION("boundary encoder") {
    auto x = Var<double>::param(fixtures::random_tensor({1, 3, 32, 32}, data, 0, 1));
    auto w = probe_weights({1, 128});
    auto res = fdtest::fd_check(
        [&] { return nn::mean_all(nn::mul(bundle.enc(x), w)); }, x, 6, rng);
    INFO("worst rel " << res.worst_rel);
    REQUIRE(res.ok);
  }
  SECTION("texture encoder + face decoder") {
    auto b = Var<double>::param(fixtures::random_tensor({1, 3, 32, 32}, data, 0, 1));
    auto face = Var<double>::param(fixtures::random_tensor({1, 3, 32, 32}, data));
    auto w = probe_weights({1, 3, 32, 32});
    auto build = [&] {
      auto out = forward_synthesis(bundle.g_enc_b, bundle.g_enc_i, bundle.g_dec_i, b, face);
      return nn::mean_all(nn::mul(out.i_hat, w));
    };
    auto res_face = fdtest::fd_check(build, face, 5, rng);
    INFO("worst rel " << res_face.worst_rel);
    REQUIRE(res_face.ok);
    auto res_b = fdtest::fd_check(build, b, 5, rng);
    REQUIRE(res_b.ok);
  }
  SECTION("discriminator") {
    auto img = Var<double>::param(fixtures::random_tensor({1, 3, 32, 32}, data));
    auto bnd = Var<double>::constant(fixtures::random_tensor({1, 3, 32, 32}, data, 0, 1));
    auto w0 = probe_weights({1, 1, 8, 8});
    auto res = fdtest::fd_check(
        [&] {
          auto maps = forward_discriminators(bundle.d, img, bnd);
          return nn::mean_all(nn::mul(maps[0], w0));
        },
        img, 5, rng);
    REQUIRE(res.ok);
  }
  SECTION("proxy classifier through softmax cross entropy") {
    auto img = Var<double>::param(fixtures::random_tensor({2, 3, 32, 32}, data));
    std::vector<std::size_t> labels = {1, 4};
    auto res = fdtest::fd_check(
        [&] { return nn::softmax_cross_entropy(bundle.proxy(img).fc, labels); }, img, 5,
        rng);
    REQUIRE(res.ok);
  }
}

TEST_CASE("parameter gradients flow through the decoder stack", "[gradients]") {
  auto bundle = init_networks<double>(small_cfg(), 77);
  Rng rng(303);
  Rng data(9);
  auto b = Var<double>::constant(fixtures::random_tensor({1, 3, 32, 32}, data, 0, 1));
  auto p = Var<double>::constant(fixtures::random_tensor({1, 3}, data, -0.3, 0.3));
  auto e = Var<double>::constant(fixtures::random_tensor({1, 17}, data, 0, 1));
  auto target = Var<double>::constant(fixtures::random_tensor({1, 3, 32, 32}, data, 0, 1));
  auto build = [&] {
    auto out = forward_boundary_autoencoder(bundle.enc, bundle.dec, b, p, e);
    return losses::pixel_boundary_loss(out.b_hat, target);
  };
  auto res_w = fdtest::fd_check(build, bundle.dec.fc_.w_, 6, rng);
  INFO("worst rel " << res_w.worst_rel);
  REQUIRE(res_w.ok);
  auto res_conv = fdtest::fd_check(build, bundle.enc.c1_.w_, 6, rng);
  REQUIRE(res_conv.ok);
  auto res_gamma = fdtest::fd_check(build, bundle.dec.n1_.gamma_, 6, rng);
  REQUIRE(res_gamma.ok);
}
