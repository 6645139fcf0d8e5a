// Copyright 2026 The Surrogate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// CSV export for tables, reports and moments; atomic file output.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "surrogate/diagnostics.hpp"
#include "surrogate/sampler.hpp"

namespace surrogate::io {

using io_detail::format_double;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Writes `content` to a sibling temporary file, then renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// t_1..t_k, xi_1..xi_k, zeta_1..zeta_k, re_q, im_q, p, re_dq, im_dq.
inline void write_table_csv(std::ostream& os, const QuasiProbTable& table) {
  const int k = table.k;
  for (int l = 1; l <= k; ++l) os << "t_" << l << ',';
  for (int l = 1; l <= k; ++l) os << "xi_" << l << ',';
  for (int l = 1; l <= k; ++l) os << "zeta_" << l << ',';
  os << "re_q,im_q,p,re_dq,im_dq\n";
  std::string times;
  for (int l = 0; l < k; ++l) times += format_double(table.grid[l]) + ',';
  const std::size_t seqs = table.sequences();
  for (std::size_t xi = 0; xi < seqs; ++xi) {
    const std::vector<int> xd = table.decode(xi);
    for (std::size_t zeta = 0; zeta < seqs; ++zeta) {
      const std::vector<int> zd = table.decode(zeta);
      os << times;
      for (int d : xd) os << format_double(table.values[d]) << ',';
      for (int d : zd) os << format_double(table.values[d]) << ',';
      const Complex q = table.q_at(xi, zeta);
      const Complex dq = table.dq_at(xi, zeta);
      os << format_double(q.real()) << ',' << format_double(q.imag()) << ','
         << format_double(xi == zeta ? table.p[xi] : 0.0) << ','
         << format_double(dq.real()) << ',' << format_double(dq.imag()) << '\n';
    }
  }
}

/// t, exact_re_ij, exact_im_ij..., surrogate_re_ij, surrogate_im_ij...,
/// distance, stderr. Entries run row-major.
inline void write_report_csv(std::ostream& os, const SimulationReport& r) {
  const int d = r.rho_exact.empty() ? 0 : int(r.rho_exact.front().rows());
  os << 't';
  for (const char* half : {"exact", "surrogate"}) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        os << ',' << half << "_re_" << i << j << ',' << half << "_im_" << i << j;
      }
    }
  }
  os << ",distance,stderr\n";
  for (std::size_t s = 0; s < r.times.size(); ++s) {
    os << format_double(r.times[s]);
    for (const Matrix* m : {&r.rho_exact[s], &r.rho_surrogate[s]}) {
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          os << ',' << format_double((*m)(i, j).real()) << ','
             << format_double((*m)(i, j).imag());
        }
      }
    }
    os << ',' << format_double(r.distance[s]) << ','
       << format_double(r.stderr_estimate[s]) << '\n';
  }
}

/// One row per (entry, bin): k, t_1..t_kmax (blank past k), phi_1..phi_kmax,
/// re_f, im_f, p, re_F, im_F.
inline void write_moments_csv(std::ostream& os, const MomentTable& m) {
  const int kmax = m.orders.empty() ? 0 : m.orders.back();
  os << 'k';
  for (int l = 1; l <= kmax; ++l) os << ",t_" << l;
  for (int l = 1; l <= kmax; ++l) os << ",phi_" << l;
  os << ",re_f,im_f,p,re_F,im_F\n";
  const std::size_t nb = m.midpoints.size();
  for (const auto& e : m.entries) {
    for (std::size_t code = 0; code < e.density.size(); ++code) {
      os << e.k;
      for (int l = 0; l < kmax; ++l) {
        os << ',';
        if (l < e.k) os << format_double(e.grid[l]);
      }
      std::vector<std::size_t> digits(e.k);
      std::size_t c = code;
      for (int l = e.k - 1; l >= 0; --l) {
        digits[l] = c % nb;
        c /= nb;
      }
      for (int l = 0; l < kmax; ++l) {
        os << ',';
        if (l < e.k) os << format_double(m.midpoints[digits[l]]);
      }
      os << ',' << format_double(e.density[code].real()) << ','
         << format_double(e.density[code].imag()) << ','
         << format_double(e.p_rebinned[code]) << ','
         << format_double(e.moment.real()) << ',' << format_double(e.moment.imag())
         << '\n';
    }
  }
}

template <class Writer, class... Args>
std::string to_csv(Writer&& writer, const Args&... args) {
  std::ostringstream os;
  writer(os, args...);
  return os.str();
}

}  // namespace surrogate::io
