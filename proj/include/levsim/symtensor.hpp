#pragma once

#include <array>
#include <cstdint>

namespace levsim {

// Fully symmetric rank-3 and rank-4 tensors on 3 indices, stored as the
// independent entries (10 and 15). Accessors expand index permutations;
// multiplicity tables give the number of distinct orderings of each multiset,
// as needed when summing over all index tuples.

/// Rank-3 symmetric tensor, 10 independent entries indexed by sorted (i<=j<=k).
struct Sym3 {
  std::array<double, 10> v{};

  static constexpr int pack(int i, int j, int k) {
    if (i > j) { const int t = i; i = j; j = t; }
    if (j > k) { const int t = j; j = k; k = t; }
    if (i > j) { const int t = i; i = j; j = t; }
    int idx = 0;
    for (int x = 0; x <= 2; ++x)
      for (int y = x; y <= 2; ++y)
        for (int z = y; z <= 2; ++z) {
          if (x == i && y == j && z == k) return idx;
          ++idx;
        }
    return -1;
  }

  double operator()(int i, int j, int k) const { return v[pack(i, j, k)]; }
  double& at(int i, int j, int k) { return v[pack(i, j, k)]; }

  /// Number of distinct orderings of the index multiset {i,j,k}.
  static constexpr int multiplicity(int i, int j, int k) {
    if (i == j && j == k) return 1;
    if (i == j || j == k || i == k) return 3;
    return 6;
  }
};

/// Rank-4 symmetric tensor, 15 independent entries indexed by sorted (i<=j<=k<=l).
struct Sym4 {
  std::array<double, 15> v{};

  static constexpr int pack(int i, int j, int k, int l) {
    int a[4] = {i, j, k, l};
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3 - p; ++q)
        if (a[q] > a[q + 1]) { const int t = a[q]; a[q] = a[q + 1]; a[q + 1] = t; }
    int idx = 0;
    for (int w = 0; w <= 2; ++w)
      for (int x = w; x <= 2; ++x)
        for (int y = x; y <= 2; ++y)
          for (int z = y; z <= 2; ++z) {
            if (w == a[0] && x == a[1] && y == a[2] && z == a[3]) return idx;
            ++idx;
          }
    return -1;
  }

  double operator()(int i, int j, int k, int l) const { return v[pack(i, j, k, l)]; }
  double& at(int i, int j, int k, int l) { return v[pack(i, j, k, l)]; }

  /// Number of distinct orderings of the index multiset {i,j,k,l}.
  static constexpr int multiplicity(int i, int j, int k, int l) {
    int c[3] = {0, 0, 0};
    ++c[i]; ++c[j]; ++c[k]; ++c[l];
    int fact[5] = {1, 1, 2, 6, 24};
    return fact[4] / (fact[c[0]] * fact[c[1]] * fact[c[2]]);
  }
};

} // namespace levsim
