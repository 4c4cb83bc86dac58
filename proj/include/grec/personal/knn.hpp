#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "grec/error.hpp"
#include "grec/numeric/matrix.hpp"

namespace grec {

template <typename T>
struct Neighbor {
  std::uint32_t index = 0;
  T squared_distance = T{0};
  bool operator==(const Neighbor&) const = default;
};

// Exact scan. Ordered by (squared distance, catalog index); rows for which
// `excluded(index)` holds are skipped.
template <typename T, typename Excluded>
std::vector<Neighbor<T>> nearest_k(const DenseMatrix<T>& catalog, std::span<const T> query,
                                   std::size_t k, Excluded&& excluded) {
  if (query.size() != catalog.cols()) throw InputError("nearest_k: query dim mismatch");
  auto before = [](const Neighbor<T>& a, const Neighbor<T>& b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.index < b.index);
  };
  std::vector<Neighbor<T>> heap;  // max-heap on `before`
  if (k == 0) return heap;
  heap.reserve(k + 1);
  const auto rows = static_cast<std::uint32_t>(catalog.rows());
  for (std::uint32_t r = 0; r < rows; ++r) {
    if (excluded(r)) continue;
    const Neighbor<T> cand{r, squared_distance<T>(catalog.row(r), query)};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), before);
    } else if (before(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), before);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), before);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), before);
  return heap;
}

template <typename T>
std::vector<Neighbor<T>> nearest_k(const DenseMatrix<T>& catalog, std::span<const T> query,
                                   std::size_t k) {
  return nearest_k(catalog, query, k, [](std::uint32_t) { return false; });
}

}  // namespace grec
