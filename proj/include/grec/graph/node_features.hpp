#pragma once

#include <string>
#include <vector>

#include "grec/graph/features.hpp"
#include "grec/graph/hetero_graph.hpp"

namespace grec {

template <typename T>
struct AlignedFeatures {
  DenseMatrix<T> rows;               // row n = features of graph node n
  std::vector<std::string> missing;  // zero-filled items (ZeroWithWarning only)
};

// Resolves every graph node to its feature row. Under the default policy a
// node without features is an error naming the item.
template <typename T>
AlignedFeatures<T> align_features(const HeteroGraph& graph, const FeatureStore<T>& store,
                                  MissingFeaturePolicy policy = MissingFeaturePolicy::Error) {
  AlignedFeatures<T> out{DenseMatrix<T>(graph.num_nodes(), store.dim()), {}};
  for (NodeId n = 0; n < graph.num_nodes(); ++n) {
    const auto& id = graph.item_id(n);
    const auto row = store.find(id);
    if (!row) {
      if (policy == MissingFeaturePolicy::Error) {
        throw InputError("item '" + id + "' has events but no feature vector");
      }
      out.missing.push_back(id);
      continue;
    }
    const auto src = store.row(*row);
    std::copy(src.begin(), src.end(), out.rows.row(n).begin());
  }
  return out;
}

}  // namespace grec
