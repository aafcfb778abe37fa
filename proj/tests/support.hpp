#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "recg/tensor.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("recg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline recg::DVec random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  recg::DVec v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline recg::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  recg::Matrix m(r, c);
  for (auto& x : m.flat()) x = static_cast<float>(g(rng));
  return m;
}

}  // namespace testing
