// Blocked GEMM: packs op(A) into MR-row panels and op(B) into NR-column
// panels, then runs a register-tiled micro-kernel over the packed blocks.
// The k-loop order inside each C tile is fixed, so the result is
// independent of how column panels are split across threads.

#include <algorithm>
#include <cstring>
#include <vector>

#include "ikshana/kernels.hpp"

namespace ikshana::kernels::parallel {

namespace {

constexpr std::int64_t kMR = 6;
constexpr std::int64_t kKC = 256;
constexpr std::int64_t kMC = 96;
constexpr std::int64_t kNC = 3072;

template <typename T>
struct Lanes {
  static constexpr std::int64_t kWidth = 64 / sizeof(T);
  typedef T Vec __attribute__((vector_size(64)));
};

template <typename T>
constexpr std::int64_t nr() {
  return 2 * Lanes<T>::kWidth;
}

template <typename T>
inline typename Lanes<T>::Vec load(const T* p) {
  typename Lanes<T>::Vec v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <typename T>
inline void store(T* p, typename Lanes<T>::Vec v) {
  std::memcpy(p, &v, sizeof(v));
}

inline std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

// Ap layout: [panel][k][MR]
template <typename T>
void pack_a(bool trans, const T* a, std::int64_t lda, std::int64_t i0, std::int64_t mc,
            std::int64_t k0, std::int64_t kc, T* out) {
  for (std::int64_t p = 0; p < mc; p += kMR) {
    const std::int64_t rows = std::min(kMR, mc - p);
    T* dst = out + p * kc;
    for (std::int64_t k = 0; k < kc; ++k) {
      std::int64_t r = 0;
      for (; r < rows; ++r) {
        const std::int64_t i = i0 + p + r;
        dst[k * kMR + r] = trans ? a[(k0 + k) * lda + i] : a[i * lda + k0 + k];
      }
      for (; r < kMR; ++r) dst[k * kMR + r] = T(0);
    }
  }
}

// Bp layout: [panel][k][NR]
template <typename T>
void pack_b(bool trans, const T* b, std::int64_t ldb, std::int64_t k0, std::int64_t kc,
            std::int64_t j0, std::int64_t nc, T* out) {
  constexpr std::int64_t NR = nr<T>();
  const std::int64_t panels = (nc + NR - 1) / NR;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < panels; ++p) {
    const std::int64_t cols = std::min(NR, nc - p * NR);
    T* dst = out + p * NR * kc;
    if (!trans && cols == NR) {
      for (std::int64_t k = 0; k < kc; ++k) {
        std::memcpy(dst + k * NR, b + (k0 + k) * ldb + j0 + p * NR, NR * sizeof(T));
      }
      continue;
    }
    for (std::int64_t k = 0; k < kc; ++k) {
      std::int64_t c = 0;
      for (; c < cols; ++c) {
        const std::int64_t j = j0 + p * NR + c;
        dst[k * NR + c] = trans ? b[j * ldb + k0 + k] : b[(k0 + k) * ldb + j];
      }
      for (; c < NR; ++c) dst[k * NR + c] = T(0);
    }
  }
}

template <typename T>
void micro_kernel(std::int64_t kc, const T* a, const T* b, T* c, std::int64_t ldc,
                  std::int64_t rows, std::int64_t cols) {
  using Vec = typename Lanes<T>::Vec;
  constexpr std::int64_t L = Lanes<T>::kWidth;
  constexpr std::int64_t NR = nr<T>();
  Vec acc[kMR][2];
  for (auto& row : acc) row[0] = row[1] = Vec{};
  for (std::int64_t k = 0; k < kc; ++k) {
    const Vec b0 = load<T>(b);
    const Vec b1 = load<T>(b + L);
    for (std::int64_t r = 0; r < kMR; ++r) {
      const Vec ar = Vec{} + a[r];
      acc[r][0] += ar * b0;
      acc[r][1] += ar * b1;
    }
    a += kMR;
    b += NR;
  }
  if (rows == kMR && cols == NR) {
    for (std::int64_t r = 0; r < kMR; ++r) {
      T* crow = c + r * ldc;
      store<T>(crow, load<T>(crow) + acc[r][0]);
      store<T>(crow + L, load<T>(crow + L) + acc[r][1]);
    }
    return;
  }
  alignas(64) T tile[kMR][NR];
  for (std::int64_t r = 0; r < kMR; ++r) {
    store<T>(tile[r], acc[r][0]);
    store<T>(tile[r] + L, acc[r][1]);
  }
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r][j];
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T* c, std::int64_t ldc,
          bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (!accumulate) {
    for (std::int64_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, T(0));
  }
  if (k <= 0) return;
  constexpr std::int64_t NR = nr<T>();
  const std::int64_t nc_max = std::min(kNC, round_up(n, NR));
  const std::int64_t kc_max = std::min(kKC, k);
  const std::int64_t mc_max = std::min(kMC, round_up(m, kMR));
  std::vector<T> packed_b(static_cast<std::size_t>(nc_max * kc_max));
  std::vector<T> packed_a(static_cast<std::size_t>(round_up(mc_max, kMR) * kc_max));

  for (std::int64_t jc = 0; jc < n; jc += kNC) {
    const std::int64_t nc = std::min(kNC, n - jc);
    const std::int64_t b_panels = (nc + NR - 1) / NR;
    for (std::int64_t pc = 0; pc < k; pc += kKC) {
      const std::int64_t kc = std::min(kKC, k - pc);
      pack_b(trans_b, b, ldb, pc, kc, jc, nc, packed_b.data());
      for (std::int64_t ic = 0; ic < m; ic += kMC) {
        const std::int64_t mc = std::min(kMC, m - ic);
        pack_a(trans_a, a, lda, ic, mc, pc, kc, packed_a.data());
        const std::int64_t a_panels = (mc + kMR - 1) / kMR;
#pragma omp parallel for schedule(static)
        for (std::int64_t jp = 0; jp < b_panels; ++jp) {
          const std::int64_t cols = std::min(NR, nc - jp * NR);
          for (std::int64_t ip = 0; ip < a_panels; ++ip) {
            const std::int64_t rows = std::min(kMR, mc - ip * kMR);
            micro_kernel<T>(kc, packed_a.data() + ip * kMR * kc, packed_b.data() + jp * NR * kc,
                            c + (ic + ip * kMR) * ldc + jc + jp * NR, ldc, rows, cols);
          }
        }
      }
    }
  }
}

template void gemm<float>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const float*,
                          std::int64_t, const float*, std::int64_t, float*, std::int64_t, bool);
template void gemm<double>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const double*,
                           std::int64_t, const double*, std::int64_t, double*, std::int64_t,
                           bool);

}  // namespace ikshana::kernels::parallel
