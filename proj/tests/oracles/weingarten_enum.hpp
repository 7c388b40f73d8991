#pragma once

// Brute-force expansion of E|(r^2)_{ba}|^2 for r = U* sqrt(R) U^dagger over all
// (P, P') pairs in S4 x S4. Each pair contributes
//   V(P^-1 P') * N^{free rows} * prod_classes Tr(R^{size/2}).
// Terms are kept symbolic: an integer coefficient, a power of N and the
// number of Tr R and Tr R^2 factors.

#include <algorithm>
#include <cmath>
#include <array>
#include <numeric>
#include <vector>

namespace oracle {

using Perm = std::array<int, 4>;

inline std::vector<Perm> all_perms() {
  std::vector<Perm> out;
  Perm p{0, 1, 2, 3};
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

inline std::vector<int> cycle_type(const Perm& p) {
  std::array<bool, 4> seen{};
  std::vector<int> ct;
  for (int i = 0; i < 4; ++i) {
    if (seen[i]) continue;
    int len = 0;
    for (int j = i; !seen[j]; j = p[j]) {
      seen[j] = true;
      ++len;
    }
    ct.push_back(len);
  }
  std::sort(ct.begin(), ct.end());
  return ct;
}

struct Uf {
  std::array<int, 4> parent{0, 1, 2, 3};
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

struct WeingartenTerm {
  Perm p{}, pp{};
  std::vector<int> cycles;
  long long coef = 0;  // integer prefactor of the weight
  int n_power = 0;     // total power of N (rows minus weight)
  int free_rows = 0;
  int tr_count = 0;    // Tr R factors
  int tr2_count = 0;   // Tr R^2 factors
  bool vanishes = false;
};

// Row variables: 0 = b, 1 = a, 2 = a', 3 = b'.
// U factors (row, col): (b,p) (b',p) (b',p') (a,p');  U* factors: (b,n) (a',n) (a',n') (a,n').
// Column variables: 0 = n, 1 = n', 2 = p, 3 = p'.
inline WeingartenTerm expand_pair(const Perm& p, const Perm& pp, bool diagonal) {
  constexpr int u_row[4] = {0, 3, 3, 1};
  constexpr int us_row[4] = {0, 2, 2, 1};
  constexpr int u_col[4] = {2, 2, 3, 3};
  constexpr int us_col[4] = {0, 0, 1, 1};

  WeingartenTerm t;
  t.p = p;
  t.pp = pp;
  Perm inv{};
  for (int i = 0; i < 4; ++i) inv[p[i]] = i;
  Perm comp{};
  for (int i = 0; i < 4; ++i) comp[i] = inv[pp[i]];
  t.cycles = cycle_type(comp);

  long long coef = 1;
  int wpow = 0;
  for (int c : t.cycles) {
    long long cat = 1;
    for (int i = 0; i < c - 1; ++i) cat = cat * 2 * (2 * i + 1) / (i + 2);
    coef *= (c % 2 == 1) ? cat : -cat;
    wpow += 2 * c - 1;
  }

  Uf rows;
  if (diagonal) rows.unite(0, 1);
  for (int j = 0; j < 4; ++j) rows.unite(u_row[j], us_row[p[j]]);
  if (!diagonal && rows.find(0) == rows.find(1)) {
    t.vanishes = true;
    return t;
  }
  for (int v : {2, 3}) {
    const int root = rows.find(v);
    if (root == rows.find(0) || root == rows.find(1)) continue;
    bool counted = false;
    for (int w : {2, 3})
      if (w < v && rows.find(w) == root) counted = true;
    if (!counted) ++t.free_rows;
  }

  Uf cols;
  for (int j = 0; j < 4; ++j) cols.unite(u_col[j], us_col[pp[j]]);
  std::array<int, 4> size{};
  for (int v = 0; v < 4; ++v) ++size[cols.find(v)];
  for (int s : size) {
    if (s == 2) ++t.tr_count;
    if (s == 4) ++t.tr2_count;
  }
  t.coef = coef;
  t.n_power = t.free_rows - wpow;
  return t;
}

inline std::vector<WeingartenTerm> expand_all(bool diagonal) {
  std::vector<WeingartenTerm> out;
  const auto perms = all_perms();
  for (const auto& p : perms)
    for (const auto& pp : perms) out.push_back(expand_pair(p, pp, diagonal));
  return out;
}

// Numeric value of a term for given N, Tr R, Tr R^2.
inline double term_value(const WeingartenTerm& t, double n, double tr, double tr2) {
  if (t.vanishes) return 0.0;
  double v = static_cast<double>(t.coef) * std::pow(n, t.n_power);
  for (int i = 0; i < t.tr_count; ++i) v *= tr;
  for (int i = 0; i < t.tr2_count; ++i) v *= tr2;
  return v;
}

}  // namespace oracle
