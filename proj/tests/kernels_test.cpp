#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "ikshana/kernels.hpp"
#include "oracles.hpp"

using namespace ikshana;
using namespace ikshana::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Gemm, BlockedMatchesReferenceForAllTransposes) {
  std::mt19937_64 rng(1);
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, std::tuple{7, 45, 13}, std::tuple{50, 70, 300},
                         std::tuple{13, 3100, 5}, std::tuple{100, 33, 600}}) {
    for (bool ta : {false, true}) {
      for (bool tb : {false, true}) {
        const int lda = (ta ? m : k) + 3, ldb = (tb ? k : n) + 2, ldc = n + 1;
        auto a = random_vec(static_cast<std::size_t>(lda * (ta ? k : m)), rng);
        auto b = random_vec(static_cast<std::size_t>(ldb * (tb ? n : k)), rng);
        auto c0 = random_vec(static_cast<std::size_t>(ldc * m), rng);
        for (bool acc : {false, true}) {
          auto c1 = c0, c2 = c0;
          parallel::gemm<double>(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc, acc);
          reference::gemm<double>(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c2.data(), ldc, acc);
          EXPECT_LT(max_abs_diff(c1, c2), 1e-11) << m << "x" << n << "x" << k << " ta=" << ta << " tb=" << tb;
        }
      }
    }
  }
}

TEST(ConvKernels, ParallelReferenceAndOracleAgree) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ch(1, 6), ext(3, 12);
  for (int trial = 0; trial < 30; ++trial) {
    const bool pointwise = trial % 4 == 0;
    const int dilation = pointwise ? 1 : 1 + trial % 3;
    ConvGeometry g{2, ch(rng), ext(rng), ext(rng), ch(rng), pointwise ? 1 : 3, dilation,
                   pointwise ? 0 : dilation};
    auto in = oracle::random_tensor({g.batch, g.in_channels, g.in_h, g.in_w}, rng);
    auto w = oracle::random_tensor({g.out_channels, g.in_channels, g.kernel, g.kernel}, rng);
    auto bias = random_vec(static_cast<std::size_t>(g.out_channels), rng);
    const auto out_n = static_cast<std::size_t>(g.batch * g.out_channels * g.out_h() * g.out_w());
    std::vector<double> fast(out_n), ref(out_n);
    parallel::conv2d_forward(g, in.data().data(), w.data().data(), bias.data(), fast.data());
    reference::conv2d_forward(g, in.data().data(), w.data().data(), bias.data(), ref.data());
    auto want = oracle::direct_conv(in, w, bias, dilation, static_cast<int>(g.padding));
    EXPECT_LT(max_abs_diff(fast, want), 1e-6);
    EXPECT_LT(max_abs_diff(ref, want), 1e-6);

    auto go = random_vec(out_n, rng);
    std::vector<double> gi_fast(in.data().size(), 0.0), gi_ref(in.data().size(), 0.0);
    parallel::conv2d_backward_input(g, go.data(), w.data().data(), gi_fast.data());
    reference::conv2d_backward_input(g, go.data(), w.data().data(), gi_ref.data());
    EXPECT_LT(max_abs_diff(gi_fast, gi_ref), 1e-9);

    std::vector<double> gw_fast(w.data().size(), 0.0), gw_ref(w.data().size(), 0.0);
    std::vector<double> gb_fast(bias.size(), 0.0), gb_ref(bias.size(), 0.0);
    parallel::conv2d_backward_weight(g, in.data().data(), go.data(), gw_fast.data(), gb_fast.data());
    reference::conv2d_backward_weight(g, in.data().data(), go.data(), gw_ref.data(), gb_ref.data());
    EXPECT_LT(max_abs_diff(gw_fast, gw_ref), 1e-9);
    EXPECT_LT(max_abs_diff(gb_fast, gb_ref), 1e-9);
  }
}

TEST(ConvKernels, ChunkedPathMatchesReferenceOnLargePlanes) {
  // Wide enough that the unfolded buffer is split into several pixel chunks.
  std::mt19937_64 rng(9);
  ConvGeometry g{1, 70, 64, 80, 5, 3, 2, 2};
  std::vector<float> in(static_cast<std::size_t>(g.in_channels * g.in_h * g.in_w));
  std::vector<float> w(static_cast<std::size_t>(g.out_channels * g.patch_size()));
  std::uniform_real_distribution<float> d(-1, 1);
  for (auto& v : in) v = d(rng);
  for (auto& v : w) v = d(rng);
  const auto out_n = static_cast<std::size_t>(g.out_channels * g.out_h() * g.out_w());
  std::vector<float> fast(out_n), ref(out_n);
  parallel::conv2d_forward<float>(g, in.data(), w.data(), nullptr, fast.data());
  reference::conv2d_forward<float>(g, in.data(), w.data(), nullptr, ref.data());
  for (std::size_t i = 0; i < out_n; ++i) ASSERT_NEAR(fast[i], ref[i], 2e-4);
  std::vector<float> gi_fast(in.size(), 0.f), gi_ref(in.size(), 0.f);
  parallel::conv2d_backward_input<float>(g, ref.data(), w.data(), gi_fast.data());
  reference::conv2d_backward_input<float>(g, ref.data(), w.data(), gi_ref.data());
  for (std::size_t i = 0; i < in.size(); ++i) ASSERT_NEAR(gi_fast[i], gi_ref[i], 2e-3);
}

TEST(ResizeKernels, ParallelMatchesReference) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> ext(1, 17);
  for (int trial = 0; trial < 40; ++trial) {
    ResizeGeometry g{3, ext(rng), ext(rng), ext(rng), ext(rng)};
    auto in = random_vec(static_cast<std::size_t>(g.planes * g.in_h * g.in_w), rng);
    std::vector<double> a(static_cast<std::size_t>(g.planes * g.out_h * g.out_w)), b(a.size());
    parallel::bilinear_forward(g, in.data(), a.data());
    reference::bilinear_forward(g, in.data(), b.data());
    EXPECT_LT(max_abs_diff(a, b), 1e-12);
    std::vector<double> ga(in.size(), 0.0), gb(in.size(), 0.0);
    parallel::bilinear_backward(g, a.data(), ga.data());
    reference::bilinear_backward(g, a.data(), gb.data());
    EXPECT_LT(max_abs_diff(ga, gb), 1e-12);
  }
}

TEST(PoolKernels, ParallelMatchesReference) {
  std::mt19937_64 rng(4);
  auto in = random_vec(5 * 8 * 6, rng);
  std::vector<double> a(5 * 4 * 3), b(a.size());
  parallel::avgpool2x2_forward(5, 8, 6, in.data(), a.data());
  reference::avgpool2x2_forward(5, 8, 6, in.data(), b.data());
  EXPECT_LT(max_abs_diff(a, b), 1e-15);
  std::vector<double> ga(in.size(), 0.0), gb(in.size(), 0.0);
  parallel::avgpool2x2_backward(5, 8, 6, a.data(), ga.data());
  reference::avgpool2x2_backward(5, 8, 6, a.data(), gb.data());
  EXPECT_LT(max_abs_diff(ga, gb), 1e-15);
}
